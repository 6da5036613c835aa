#include "raftlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "raftlab/error.hpp"

namespace raftlab {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
    fail(ErrorKind::Config, path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> known) {
    if (!obj.is_object()) {
        field_error(path.empty() ? "config" : path, "expected an object");
    }
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            field_error(join(path, key), "unknown key");
        }
    }
}

void read(const json& obj, const std::string& path, const char* key, double& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) field_error(join(path, key), "expected a number");
    out = v.get<double>();
}

template <typename Int>
void read_uint(const json& obj, const std::string& path, const char* key, Int& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) field_error(join(path, key), "expected a non-negative integer");
    out = static_cast<Int>(v.get<std::uint64_t>());
}

void read(const json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) field_error(join(path, key), "expected true or false");
    out = v.get<bool>();
}

template <typename Enum, typename Parse>
void read_enum(const json& obj, const std::string& path, const char* key, Enum& out, Parse parse) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) field_error(join(path, key), "expected a string");
    try {
        out = parse(v.get<std::string>());
    } catch (const Error& e) {
        // Parsers name the bare field; report the full key path instead.
        std::string msg = e.what();
        const auto pos = msg.find("unknown value");
        field_error(join(path, key), pos == std::string::npos ? msg : msg.substr(pos));
    }
}

void read_schedule(const json& obj, const std::string& path, const char* key, Schedule& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string where = join(path, key);
    if (v.is_number()) {
        out = Schedule::constant_value(v.get<double>());
        return;
    }
    if (!v.is_array()) field_error(where, "expected a number or a list of numbers");
    std::vector<double> values;
    for (const json& e : v) {
        if (!e.is_number()) field_error(where, "schedule list entries must be numbers");
        values.push_back(e.get<double>());
    }
    out = Schedule::list(std::move(values));
}

void read_view(const json& obj, const std::string& path, const char* key, ViewAugmentation& out) {
    if (!obj.contains(key)) return;
    const std::string where = join(path, key);
    const json& v = obj.at(key);
    reject_unknown(v, where, {"noise", "scale_lo", "scale_hi", "mask_prob"});
    read(v, where, "noise", out.noise);
    read(v, where, "scale_lo", out.scale_lo);
    read(v, where, "scale_hi", out.scale_hi);
    read(v, where, "mask_prob", out.mask_prob);
    try {
        out.validate();
    } catch (const Error& e) {
        field_error(where, e.what());
    }
}

void read_network(const json& v, NetworkSpec& s) {
    const std::string path = "network";
    reject_unknown(v, path,
                   {"input_dim", "backbone_hidden", "representation_dim", "projector_hidden",
                    "projection_dim", "predictor", "predictor_hidden", "predictor_init",
                    "normalization_gradient"});
    read_uint(v, path, "input_dim", s.input_dim);
    if (v.contains("backbone_hidden")) {
        const json& b = v.at("backbone_hidden");
        if (!b.is_array()) field_error("network.backbone_hidden", "expected a list of integers");
        s.backbone_hidden.clear();
        for (const json& w : b) {
            if (!w.is_number_unsigned()) {
                field_error("network.backbone_hidden", "expected a list of integers");
            }
            s.backbone_hidden.push_back(w.get<std::size_t>());
        }
    }
    read_uint(v, path, "representation_dim", s.representation_dim);
    read_uint(v, path, "projector_hidden", s.projector_hidden);
    read_uint(v, path, "projection_dim", s.projection_dim);
    read_enum(v, path, "predictor", s.predictor, predictor_kind_from_string);
    read_uint(v, path, "predictor_hidden", s.predictor_hidden);
    read_enum(v, path, "predictor_init", s.predictor_init, predictor_init_from_string);
    read_enum(v, path, "normalization_gradient", s.normalization_gradient,
              normalization_gradient_from_string);
}

void read_loss(const json& v, LossConfig& l) {
    const std::string path = "loss";
    reject_unknown(v, path, {"objective", "alpha", "beta", "t", "symmetrize", "tangential"});
    read_enum(v, path, "objective", l.objective, objective_from_string);
    read(v, path, "alpha", l.alpha);
    read(v, path, "beta", l.beta);
    read(v, path, "t", l.t);
    read(v, path, "symmetrize", l.symmetrize);
    read_enum(v, path, "tangential", l.tangential, tangential_mode_from_string);
}

void read_data(const json& v, DataConfig& d) {
    const std::string path = "data";
    reject_unknown(v, path, {"kind", "dim", "classes", "per_class", "seed", "noise", "path"});
    read_enum(v, path, "kind", d.kind, [](const std::string& s) {
        if (s == "blobs") return DataKind::Blobs;
        if (s == "cifar10") return DataKind::Cifar10;
        fail(ErrorKind::Config, "unknown value '" + s + "' (expected blobs, cifar10)");
    });
    read_uint(v, path, "dim", d.blobs.dim);
    read_uint(v, path, "classes", d.blobs.classes);
    read_uint(v, path, "per_class", d.blobs.per_class);
    read_uint(v, path, "seed", d.blobs.seed);
    read(v, path, "noise", d.blobs.noise);
    if (v.contains("path")) {
        if (!v.at("path").is_string()) field_error("data.path", "expected a string");
        d.cifar_path = v.at("path").get<std::string>();
    }
    if (d.kind == DataKind::Cifar10 && d.cifar_path.empty()) {
        field_error("data.path", "required when kind is cifar10");
    }
}

void read_probe(const json& v, ProbeConfig& p) {
    const std::string path = "probe";
    reject_unknown(v, path,
                   {"lr", "epochs", "batch_size", "train_fraction", "standardize", "seed"});
    read(v, path, "lr", p.lr);
    read_uint(v, path, "epochs", p.epochs);
    read_uint(v, path, "batch_size", p.batch_size);
    read(v, path, "train_fraction", p.train_fraction);
    read(v, path, "standardize", p.standardize);
    read_uint(v, path, "seed", p.seed);
}

ordered_json schedule_json(const Schedule& s) {
    if (s.constant) {
        return s.values.empty() ? ordered_json(nullptr) : ordered_json(s.values.front());
    }
    return ordered_json(s.values);
}

ordered_json view_json(const ViewAugmentation& v) {
    ordered_json j;
    j["noise"] = v.noise;
    j["scale_lo"] = v.scale_lo;
    j["scale_hi"] = v.scale_hi;
    j["mask_prob"] = v.mask_prob;
    return j;
}

}  // namespace

Dataset load_dataset(const DataConfig& cfg) {
    if (cfg.kind == DataKind::Cifar10) {
        return load_cifar10(cfg.cifar_path);
    }
    return make_blobs(cfg.blobs);
}

RunConfig parse_run_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Config, std::string("malformed JSON: ") + e.what());
    }
    reject_unknown(doc, "",
                   {"seed", "steps", "batch_size", "optimizer", "lr", "tau", "log_every",
                    "checkpoint_every", "record_wall_time", "loss", "network", "augmentation",
                    "data", "probe", "eval_samples"});
    RunConfig cfg;
    TrainConfig& t = cfg.train;
    read_uint(doc, "", "seed", t.seed);
    read_uint(doc, "", "steps", t.steps);
    read_uint(doc, "", "batch_size", t.batch_size);
    read_enum(doc, "", "optimizer", t.optimizer, optimizer_kind_from_string);
    read_schedule(doc, "", "lr", t.lr);
    read_schedule(doc, "", "tau", t.tau);
    read_uint(doc, "", "log_every", t.log_every);
    read_uint(doc, "", "checkpoint_every", t.checkpoint_every);
    read(doc, "", "record_wall_time", t.record_wall_time);
    if (doc.contains("loss")) read_loss(doc.at("loss"), t.loss);
    if (doc.contains("network")) read_network(doc.at("network"), t.network);
    if (doc.contains("augmentation")) {
        const json& a = doc.at("augmentation");
        reject_unknown(a, "augmentation", {"view1", "view2"});
        read_view(a, "augmentation", "view1", t.view1);
        read_view(a, "augmentation", "view2", t.view2);
    }
    if (doc.contains("data")) read_data(doc.at("data"), cfg.data);
    if (doc.contains("probe")) read_probe(doc.at("probe"), cfg.probe);
    read_uint(doc, "", "eval_samples", cfg.eval_samples);
    if (!doc.contains("network") || !doc.at("network").contains("input_dim")) {
        if (cfg.data.kind == DataKind::Blobs) {
            t.network.input_dim = cfg.data.blobs.dim;
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& cfg, int indent) {
    const TrainConfig& t = cfg.train;
    ordered_json j;
    j["seed"] = t.seed;
    j["steps"] = t.steps;
    j["batch_size"] = t.batch_size;
    j["optimizer"] = to_string(t.optimizer);
    j["lr"] = schedule_json(t.lr);
    j["tau"] = schedule_json(t.tau);
    j["log_every"] = t.log_every;
    j["checkpoint_every"] = t.checkpoint_every;
    j["record_wall_time"] = t.record_wall_time;
    j["loss"] = {{"objective", to_string(t.loss.objective)},
                 {"alpha", t.loss.alpha},
                 {"beta", t.loss.beta},
                 {"t", t.loss.t},
                 {"symmetrize", t.loss.symmetrize},
                 {"tangential", to_string(t.loss.tangential)}};
    const NetworkSpec& n = t.network;
    ordered_json net;
    net["input_dim"] = n.input_dim;
    net["backbone_hidden"] = n.backbone_hidden;
    net["representation_dim"] = n.representation_dim;
    net["projector_hidden"] = n.projector_hidden;
    net["projection_dim"] = n.projection_dim;
    net["predictor"] = to_string(n.predictor);
    net["predictor_hidden"] = n.predictor_hidden;
    net["predictor_init"] = to_string(n.predictor_init);
    net["normalization_gradient"] = to_string(n.normalization_gradient);
    j["network"] = net;
    j["augmentation"] = {{"view1", view_json(t.view1)}, {"view2", view_json(t.view2)}};
    ordered_json data;
    if (cfg.data.kind == DataKind::Blobs) {
        data["kind"] = "blobs";
        data["dim"] = cfg.data.blobs.dim;
        data["classes"] = cfg.data.blobs.classes;
        data["per_class"] = cfg.data.blobs.per_class;
        data["seed"] = cfg.data.blobs.seed;
        data["noise"] = cfg.data.blobs.noise;
    } else {
        data["kind"] = "cifar10";
        data["path"] = cfg.data.cifar_path.string();
    }
    j["data"] = data;
    j["probe"] = {{"lr", cfg.probe.lr},
                  {"epochs", cfg.probe.epochs},
                  {"batch_size", cfg.probe.batch_size},
                  {"train_fraction", cfg.probe.train_fraction},
                  {"standardize", cfg.probe.standardize},
                  {"seed", cfg.probe.seed}};
    j["eval_samples"] = cfg.eval_samples;
    return j.dump(indent);
}

}  // namespace raftlab
