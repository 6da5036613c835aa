#include "raftlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string_view>

#include "raftlab/error.hpp"

namespace raftlab {

namespace {

constexpr std::string_view kMagic = "RAFTCKPT";

class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    template <typename T>
    void little(T value) {
        static_assert(std::is_unsigned_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
        }
    }
    void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::span<const std::uint8_t> bytes(std::size_t n) {
        require(n <= in_.size() - pos_, ErrorKind::Format, "checkpoint truncated");
        auto out = in_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    template <typename T>
    T little() {
        auto b = bytes(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(b[i]) << (8 * i);
        }
        return value;
    }
    double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }
    bool done() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

// Rebuilds an MLP from "<prefix>.<i>.weight" / ".bias" entries.
Mlp take_mlp(std::map<std::string, Tensor>& table, const std::string& prefix) {
    Mlp mlp;
    for (std::size_t i = 0;; ++i) {
        const std::string base = prefix + "." + std::to_string(i);
        auto w = table.find(base + ".weight");
        if (w == table.end()) {
            break;
        }
        DenseLayer layer;
        layer.weight = std::move(w->second);
        table.erase(w);
        require(layer.weight.rank() == 2, ErrorKind::Format, base + ".weight is not a matrix");
        if (auto b = table.find(base + ".bias"); b != table.end()) {
            layer.bias = std::move(b->second);
            table.erase(b);
            require(layer.bias.rank() == 1 && layer.bias.size() == layer.weight.shape()[1],
                    ErrorKind::Format, base + ".bias does not match its weight");
        }
        if (!mlp.empty()) {
            require(mlp.back().weight.shape()[1] == layer.weight.shape()[0], ErrorKind::Format,
                    base + ".weight does not chain with the previous layer");
        }
        mlp.push_back(std::move(layer));
    }
    return mlp;
}

bool same_structure(const Mlp& a, const Mlp& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].weight.same_shape(b[i].weight) || a[i].bias.shape() != b[i].bias.shape()) {
            return false;
        }
    }
    return true;
}

NetworkSpec infer_spec(const ModelParams& p) {
    const Mlp& bb = p.online.backbone;
    const Mlp& pj = p.online.projector;
    require(!bb.empty() && !pj.empty(), ErrorKind::Format, "checkpoint lacks encoder layers");
    require(pj.size() <= 2, ErrorKind::Format, "projector has more than two layers");
    NetworkSpec spec;
    spec.input_dim = bb.front().weight.shape()[0];
    spec.backbone_hidden.clear();
    for (std::size_t i = 0; i + 1 < bb.size(); ++i) {
        spec.backbone_hidden.push_back(bb[i].weight.shape()[1]);
    }
    spec.representation_dim = bb.back().weight.shape()[1];
    require(pj.front().weight.shape()[0] == spec.representation_dim, ErrorKind::Format,
            "projector input does not match backbone output");
    spec.projector_hidden = pj.size() == 2 ? pj[0].weight.shape()[1] : 0;
    spec.projection_dim = pj.back().weight.shape()[1];

    const std::size_t m = spec.projection_dim;
    if (p.predictor.empty()) {
        spec.predictor = PredictorKind::Identity;
    } else if (p.predictor.size() == 1) {
        spec.predictor = PredictorKind::Linear;
        require(p.predictor[0].weight.shape() == Shape{m, m} && !p.predictor[0].has_bias(),
                ErrorKind::Format, "linear predictor must be an unbiased [m x m] matrix");
    } else {
        require(p.predictor.size() == 2, ErrorKind::Format, "predictor has more than two layers");
        spec.predictor = PredictorKind::Mlp;
        spec.predictor_hidden = p.predictor[0].weight.shape()[1];
        require(p.predictor[0].weight.shape()[0] == m && p.predictor[1].weight.shape()[1] == m,
                ErrorKind::Format, "MLP predictor must map projection_dim to itself");
    }
    return spec;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
    const std::vector<NamedTensor> named = params.named();
    Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.little(kCheckpointVersion);
    w.little(static_cast<std::uint64_t>(named.size()));
    for (const NamedTensor& t : named) {
        w.little(static_cast<std::uint32_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.little(static_cast<std::uint32_t>(t.value.rank()));
        for (std::size_t e : t.value.shape()) {
            w.little(static_cast<std::uint64_t>(e));
        }
        for (double v : t.value.values()) {
            w.f64(v);
        }
    }
    return w.take();
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.bytes(kMagic.size());
    require(std::memcmp(magic.data(), kMagic.data(), kMagic.size()) == 0, ErrorKind::Format,
            "bad checkpoint magic (expected RAFTCKPT)");
    const auto version = r.little<std::uint32_t>();
    require(version == kCheckpointVersion, ErrorKind::Format,
            "unsupported checkpoint version " + std::to_string(version));
    const auto count = r.little<std::uint64_t>();

    std::map<std::string, Tensor> table;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.little<std::uint32_t>();
        const auto name_bytes = r.bytes(name_len);
        std::string name(name_bytes.begin(), name_bytes.end());
        const auto rank = r.little<std::uint32_t>();
        require(rank <= 8, ErrorKind::Format, "implausible rank for " + name);
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape.push_back(static_cast<std::size_t>(r.little<std::uint64_t>()));
        }
        const std::size_t n = shape_size(shape);
        require(n <= bytes.size() / 8, ErrorKind::Format, "extent overflow for " + name);
        std::vector<double> values(n);
        for (double& v : values) {
            v = r.f64();
        }
        require(table.emplace(name, Tensor(shape, std::move(values))).second, ErrorKind::Format,
                "duplicate parameter " + name);
    }
    require(r.done(), ErrorKind::Format, "trailing bytes after checkpoint");

    ModelParams params;
    params.online.backbone = take_mlp(table, "online.backbone");
    params.online.projector = take_mlp(table, "online.projector");
    params.predictor = take_mlp(table, "predictor");
    params.target.backbone = take_mlp(table, "target.backbone");
    params.target.projector = take_mlp(table, "target.projector");
    require(table.empty(), ErrorKind::Format,
            "unrecognized parameter " + (table.empty() ? std::string() : table.begin()->first));
    require(same_structure(params.online.backbone, params.target.backbone) &&
                same_structure(params.online.projector, params.target.projector),
            ErrorKind::Format, "target parameters do not mirror the online encoder");
    params.spec = infer_spec(params);
    return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace raftlab
