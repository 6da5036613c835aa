#include "raftlab/model.hpp"

#include <cmath>
#include <cstring>

#include "raftlab/error.hpp"
#include "raftlab/rng.hpp"

namespace raftlab {

namespace {

constexpr std::uint64_t kEncoderStream = 1;
constexpr std::uint64_t kPredictorStream = 2;

// Uniform weights with variance gain^2 / fan_in; biases start at zero so the
// initial representation is driven by the input rather than by offsets.
DenseLayer random_layer(std::size_t in, std::size_t out, bool with_bias, double gain, Rng& rng) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
    DenseLayer layer{Tensor(Shape{in, out}), Tensor()};
    for (double& w : layer.weight.values()) {
        w = rng.uniform(-bound, bound);
    }
    if (with_bias) {
        layer.bias = Tensor(Shape{out});
    }
    return layer;
}

Mlp random_mlp(const std::vector<std::size_t>& widths, bool with_bias, Rng& rng) {
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool feeds_relu = i + 2 < widths.size();
        mlp.push_back(random_layer(widths[i], widths[i + 1], with_bias,
                                   (feeds_relu ? std::sqrt(2.0) : 1.0), rng));
    }
    return mlp;
}

void push_mlp(std::vector<Tensor*>& out, Mlp& mlp) {
    for (DenseLayer& layer : mlp) {
        out.push_back(&layer.weight);
        if (layer.has_bias()) {
            out.push_back(&layer.bias);
        }
    }
}

void push_mlp(std::vector<const Tensor*>& out, const Mlp& mlp) {
    for (const DenseLayer& layer : mlp) {
        out.push_back(&layer.weight);
        if (layer.has_bias()) {
            out.push_back(&layer.bias);
        }
    }
}

void name_mlp(std::vector<NamedTensor>& out, const std::string& prefix, const Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        const std::string base = prefix + "." + std::to_string(i);
        out.push_back({base + ".weight", mlp[i].weight});
        if (mlp[i].has_bias()) {
            out.push_back({base + ".bias", mlp[i].bias});
        }
    }
}

BoundMlp bind_mlp(Tape& tape, const Mlp& mlp, bool as_variables) {
    BoundMlp bound;
    for (const DenseLayer& layer : mlp) {
        BoundLayer b;
        b.weight = as_variables ? tape.variable(layer.weight) : tape.constant(layer.weight);
        if (layer.has_bias()) {
            b.bias = as_variables ? tape.variable(layer.bias) : tape.constant(layer.bias);
            b.has_bias = true;
        }
        bound.push_back(b);
    }
    return bound;
}

void collect(std::vector<Var>& out, const BoundMlp& mlp) {
    for (const BoundLayer& layer : mlp) {
        out.push_back(layer.weight);
        if (layer.has_bias) {
            out.push_back(layer.bias);
        }
    }
}

Var normalize(const Var& u, NormalizationGradient mode) {
    return mode == NormalizationGradient::Full ? l2_normalize(u) : l2_normalize_frozen_norm(u);
}

std::vector<std::size_t> backbone_widths(const NetworkSpec& spec) {
    std::vector<std::size_t> widths{spec.input_dim};
    widths.insert(widths.end(), spec.backbone_hidden.begin(), spec.backbone_hidden.end());
    widths.push_back(spec.representation_dim);
    return widths;
}

std::vector<std::size_t> projector_widths(const NetworkSpec& spec) {
    if (spec.projector_hidden == 0) {
        return {spec.representation_dim, spec.projection_dim};
    }
    return {spec.representation_dim, spec.projector_hidden, spec.projection_dim};
}

}  // namespace

void NetworkSpec::validate() const {
    require(input_dim >= 1, ErrorKind::Spec, "input_dim must be positive");
    require(representation_dim >= 1, ErrorKind::Spec, "representation_dim must be positive");
    require(projection_dim >= 1, ErrorKind::Spec, "projection_dim must be positive");
    for (std::size_t w : backbone_hidden) {
        require(w >= 1, ErrorKind::Spec, "backbone_hidden widths must be positive");
    }
    if (predictor == PredictorKind::Mlp) {
        require(predictor_hidden >= 1, ErrorKind::Spec, "predictor_hidden must be positive");
    }
    if (predictor_init == PredictorInit::Identity) {
        require(predictor == PredictorKind::Linear, ErrorKind::Spec,
                "identity init needs a square linear predictor");
    }
    if (predictor_init == PredictorInit::Mirrored) {
        require(predictor == PredictorKind::Linear, ErrorKind::Spec,
                "mirrored init needs a linear predictor");
    }
}

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out;
    push_mlp(out, online.backbone);
    push_mlp(out, online.projector);
    push_mlp(out, predictor);
    return out;
}

std::vector<const Tensor*> ModelParams::trainable() const {
    std::vector<const Tensor*> out;
    push_mlp(out, online.backbone);
    push_mlp(out, online.projector);
    push_mlp(out, predictor);
    return out;
}

std::vector<const Tensor*> ModelParams::target_tensors() const {
    std::vector<const Tensor*> out;
    push_mlp(out, target.backbone);
    push_mlp(out, target.projector);
    return out;
}

const Tensor& ModelParams::predictor_matrix() const {
    require(spec.predictor == PredictorKind::Linear && predictor.size() == 1, ErrorKind::Precondition,
            "condition ii: predictor must be linear");
    return predictor[0].weight;
}

Tensor& ModelParams::predictor_matrix() {
    require(spec.predictor == PredictorKind::Linear && predictor.size() == 1, ErrorKind::Precondition,
            "condition ii: predictor must be linear");
    return predictor[0].weight;
}

std::vector<NamedTensor> ModelParams::named() const {
    std::vector<NamedTensor> out;
    name_mlp(out, "online.backbone", online.backbone);
    name_mlp(out, "online.projector", online.projector);
    name_mlp(out, "predictor", predictor);
    name_mlp(out, "target.backbone", target.backbone);
    name_mlp(out, "target.projector", target.projector);
    return out;
}

ModelParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelParams params;
    params.spec = spec;

    Rng encoder_rng(derive_seed(seed, kEncoderStream));
    params.online.backbone = random_mlp(backbone_widths(spec), true, encoder_rng);
    params.online.projector = random_mlp(projector_widths(spec), true, encoder_rng);
    params.target = params.online;

    // Separate stream: the encoder draw is the same for every predictor kind.
    Rng predictor_rng(derive_seed(seed, kPredictorStream));
    const std::size_t m = spec.projection_dim;
    switch (spec.predictor) {
        case PredictorKind::Identity:
            break;
        case PredictorKind::Mlp:
            params.predictor = random_mlp({m, spec.predictor_hidden, m}, true, predictor_rng);
            break;
        case PredictorKind::Linear: {
            DenseLayer layer = random_layer(m, m, false, 1.0, predictor_rng);
            if (spec.predictor_init == PredictorInit::Identity) {
                layer.weight = Tensor::identity(m);
            } else if (spec.predictor_init == PredictorInit::Mirrored) {
                layer.weight = -layer.weight;
            }
            params.predictor.push_back(std::move(layer));
            break;
        }
    }
    return params;
}

std::uint64_t checksum(const ModelParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const NamedTensor& t : params.named()) {
        feed(t.name.data(), t.name.size());
        feed(t.value.values().data(), t.value.size() * sizeof(double));
    }
    return h;
}

BoundOnline bind_online(Tape& tape, const ModelParams& params) {
    BoundOnline bound;
    bound.backbone = bind_mlp(tape, params.online.backbone, true);
    bound.projector = bind_mlp(tape, params.online.projector, true);
    bound.predictor = bind_mlp(tape, params.predictor, true);
    collect(bound.variables, bound.backbone);
    collect(bound.variables, bound.projector);
    collect(bound.variables, bound.predictor);
    return bound;
}

BoundMlp bind_constant(Tape& tape, const Mlp& mlp) { return bind_mlp(tape, mlp, false); }

Var apply_mlp(const BoundMlp& mlp, Var x) {
    for (std::size_t i = 0; i < mlp.size(); ++i) {
        x = matmul(x, mlp[i].weight);
        if (mlp[i].has_bias) {
            x = add_bias(x, mlp[i].bias);
        }
        if (i + 1 < mlp.size()) {
            x = relu(x);
        }
    }
    return x;
}

OnlineOutput forward_online(const BoundOnline& bound, const NetworkSpec& spec, const Var& x,
                            ForwardOptions options) {
    require(x.value().rank() == 2 && x.value().cols() == spec.input_dim, ErrorKind::Dimension,
            "input batch " + shape_string(x.shape()) + " for input_dim " +
                std::to_string(spec.input_dim));
    OnlineOutput out;
    out.h = apply_mlp(bound.backbone, x);
    const Var projected = apply_mlp(bound.projector, out.h);
    out.z = normalize(projected, spec.normalization_gradient);
    if (options.tangential_filter) {
        out.z = tangential_grad(out.z);
    }
    if (spec.predictor == PredictorKind::Identity) {
        out.p = out.z;
        return out;
    }
    out.p = normalize(apply_mlp(bound.predictor, projected), spec.normalization_gradient);
    if (options.tangential_filter) {
        out.p = tangential_grad(out.p);
    }
    return out;
}

Var forward_target(Tape& tape, const ModelParams& params, const Var& x) {
    require(x.value().rank() == 2 && x.value().cols() == params.spec.input_dim,
            ErrorKind::Dimension, "input batch " + shape_string(x.shape()) + " for target network");
    const Var h = apply_mlp(bind_constant(tape, params.target.backbone), x);
    const Var u = apply_mlp(bind_constant(tape, params.target.projector), h);
    return stop_gradient(l2_normalize(u));
}

void ema_update(Tensor& target, const Tensor& online, double tau) {
    require(tau >= 0.0 && tau <= 1.0, ErrorKind::Config,
            "tau must lie in [0, 1], got " + std::to_string(tau));
    require(target.same_shape(online), ErrorKind::Dimension, "ema_update shape mismatch");
    auto xi = target.values();
    auto theta = online.values();
    for (std::size_t i = 0; i < xi.size(); ++i) {
        xi[i] = tau * xi[i] + (1.0 - tau) * theta[i];
    }
}

void ema_update(Encoder& target, const Encoder& online, double tau) {
    require(tau >= 0.0 && tau <= 1.0, ErrorKind::Config,
            "tau must lie in [0, 1], got " + std::to_string(tau));
    auto update = [tau](Mlp& dst, const Mlp& src) {
        require(dst.size() == src.size(), ErrorKind::Dimension, "ema_update layer count mismatch");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            ema_update(dst[i].weight, src[i].weight, tau);
            if (dst[i].has_bias()) {
                ema_update(dst[i].bias, src[i].bias, tau);
            }
        }
    };
    update(target.backbone, online.backbone);
    update(target.projector, online.projector);
}

Representations encode(const ModelParams& params, const Tensor& x) {
    Tape tape;
    const BoundOnline bound = bind_online(tape, params);
    const OnlineOutput out = forward_online(bound, params.spec, tape.constant(x));
    return {out.h.value(), out.z.value(), out.p.value()};
}

Tensor encode_target(const ModelParams& params, const Tensor& x) {
    Tape tape;
    return forward_target(tape, params, tape.constant(x)).value();
}

std::string to_string(PredictorKind kind) {
    switch (kind) {
        case PredictorKind::Mlp: return "mlp";
        case PredictorKind::Linear: return "linear";
        case PredictorKind::Identity: return "identity";
    }
    return "?";
}

std::string to_string(PredictorInit init) {
    switch (init) {
        case PredictorInit::Random: return "random";
        case PredictorInit::Identity: return "identity";
        case PredictorInit::Mirrored: return "mirrored";
    }
    return "?";
}

std::string to_string(NormalizationGradient mode) {
    return mode == NormalizationGradient::Full ? "full" : "radial_pass";
}

PredictorKind predictor_kind_from_string(const std::string& s) {
    if (s == "mlp") return PredictorKind::Mlp;
    if (s == "linear") return PredictorKind::Linear;
    if (s == "identity") return PredictorKind::Identity;
    fail(ErrorKind::Config, "predictor: unknown value '" + s + "' (expected mlp, linear, identity)");
}

PredictorInit predictor_init_from_string(const std::string& s) {
    if (s == "random") return PredictorInit::Random;
    if (s == "identity") return PredictorInit::Identity;
    if (s == "mirrored") return PredictorInit::Mirrored;
    fail(ErrorKind::Config,
         "predictor_init: unknown value '" + s + "' (expected random, identity, mirrored)");
}

NormalizationGradient normalization_gradient_from_string(const std::string& s) {
    if (s == "full") return NormalizationGradient::Full;
    if (s == "radial_pass") return NormalizationGradient::RadialPass;
    fail(ErrorKind::Config,
         "normalization_gradient: unknown value '" + s + "' (expected full, radial_pass)");
}

}  // namespace raftlab
