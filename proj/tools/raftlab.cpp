// raftlab command-line tool. Every command writes manifest.json into the
// output directory; exit status is 0 only when everything the command
// checks has passed.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "raftlab/checkpoint.hpp"
#include "raftlab/config.hpp"
#include "raftlab/error.hpp"
#include "raftlab/eval.hpp"
#include "raftlab/train.hpp"
#include "raftlab/verify.hpp"
#include "raftlab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace raftlab;

namespace {

enum class Level { Error = 0, Info = 1, Debug = 2 };

Level log_level() {
    const char* v = std::getenv("RAFTLAB_LOG");
    if (v == nullptr) return Level::Info;
    const std::string s(v);
    if (s == "error") return Level::Error;
    if (s == "debug") return Level::Debug;
    return Level::Info;
}

void log(Level level, const std::string& msg) {
    static const Level threshold = log_level();
    if (level > threshold) return;
    static const char* names[] = {"error", "info", "debug"};
    std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << text << '\n';
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

/// Collected while a command runs, written once at exit.
struct Manifest {
    std::string command;
    ordered_json config = ordered_json::object();
    std::uint64_t seed = 0;
    std::map<std::string, std::vector<std::string>> artifacts;
    std::string started = utc_now();
    std::string status = "ok";
    std::string message;

    void add(const std::string& kind, const fs::path& p) { artifacts[kind].push_back(p.string()); }

    void write(const fs::path& dir) const {
        ordered_json j;
        j["command"] = command;
        j["config"] = config;
        j["seed"] = seed;
        j["artifacts"] = artifacts;
        j["version"] = kVersion;
        j["started_at"] = started;
        j["finished_at"] = utc_now();
        j["status"] = status;
        if (!message.empty()) j["message"] = message;
        write_text(dir / "manifest.json", j.dump(2));
    }
};

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out_dir = "raftlab-out";
    std::string config;
};

RunConfig base_config(const Globals& g) {
    RunConfig cfg = g.config.empty() ? parse_run_config("{}") : load_run_config(g.config);
    if (g.seed) cfg.train.seed = *g.seed;
    return cfg;
}

ordered_json as_json(const std::string& text) { return ordered_json::parse(text); }

// --- train ------------------------------------------------------------------

struct TrainFlags {
    std::optional<std::uint64_t> steps;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<double> tau;
    std::optional<std::string> objective;
    std::optional<std::string> predictor;
    std::optional<std::string> optimizer;
    std::optional<std::uint64_t> checkpoint_every;
};

int cmd_train(const Globals& g, const TrainFlags& f, Manifest& m) {
    RunConfig cfg = base_config(g);
    TrainConfig& t = cfg.train;
    if (f.steps) t.steps = *f.steps;
    if (f.batch_size) t.batch_size = *f.batch_size;
    if (f.lr) t.lr = Schedule::constant_value(*f.lr);
    if (f.tau) t.tau = Schedule::constant_value(*f.tau);
    if (f.objective) t.loss.objective = objective_from_string(*f.objective);
    if (f.predictor) t.network.predictor = predictor_kind_from_string(*f.predictor);
    if (f.optimizer) t.optimizer = optimizer_kind_from_string(*f.optimizer);
    if (f.checkpoint_every) t.checkpoint_every = *f.checkpoint_every;
    m.config = as_json(to_json(cfg));
    m.seed = t.seed;

    const Dataset dataset = load_dataset(cfg.data);
    log(Level::Info, "training " + to_string(t.loss.objective) + " on " +
                         std::to_string(dataset.size()) + " samples for " +
                         std::to_string(t.steps) + " steps");
    TrainOptions opts;
    opts.out_dir = fs::path(g.out_dir);
    opts.on_record = [](const MetricsRecord& r) { log(Level::Debug, to_json_line(r)); };
    const TrainResult result = train_run(t, dataset, opts);
    if (result.metrics_path) m.add("metrics", *result.metrics_path);
    for (const auto& c : result.checkpoints) m.add("checkpoints", c);
    if (!result.log.empty()) log(Level::Info, "last record " + to_json_line(result.log.back()));
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalFlags {
    std::string checkpoint;
    std::string export_path;
    std::optional<std::size_t> samples;
};

int cmd_eval(const Globals& g, const EvalFlags& f, Manifest& m) {
    RunConfig cfg = base_config(g);
    if (f.samples) cfg.eval_samples = *f.samples;
    m.config = as_json(to_json(cfg));
    m.seed = cfg.train.seed;

    const ModelParams params = load_checkpoint(f.checkpoint);
    const Dataset dataset = load_dataset(cfg.data);
    require(dataset.dim() == params.spec.input_dim, ErrorKind::Dimension,
            "dataset dimension " + std::to_string(dataset.dim()) + " does not match checkpoint input_dim " +
                std::to_string(params.spec.input_dim));
    const EvalReport report = metrics_report(params, dataset, cfg.train.augmentation(),
                                             cfg.eval_samples, cfg.train.loss.t, cfg.probe);
    const std::string text = to_json(report);
    std::cout << text << '\n';
    const fs::path report_path = fs::path(g.out_dir) / "eval.json";
    write_text(report_path, text);
    m.add("reports", report_path);
    if (!f.export_path.empty()) {
        export_representations(params, dataset, f.export_path);
        m.add("representations", f.export_path);
    }
    return 0;
}

// --- verify -----------------------------------------------------------------

int finish_verify(const std::string& name, const std::string& text, bool passed, const Globals& g,
                  Manifest& m) {
    const fs::path path = fs::path(g.out_dir) / (name + ".json");
    write_text(path, text);
    m.add("reports", path);
    std::cout << text << '\n';
    log(passed ? Level::Info : Level::Error, name + (passed ? ": passed" : ": FAILED"));
    if (!passed) m.status = "failed";
    return passed ? 0 : 1;
}

struct UpperBoundFlags {
    std::size_t trials = 1000;
    bool no_symmetrize = false;
};

int cmd_upper_bound(const Globals& g, const UpperBoundFlags& f, Manifest& m) {
    UpperBoundSweepConfig c;
    c.trials = f.trials;
    c.symmetrize = !f.no_symmetrize;
    c.seed = g.seed.value_or(0);
    m.seed = c.seed;
    m.config = {{"trials", c.trials}, {"grid", c.grid}, {"symmetrize", c.symmetrize},
                {"tolerance", c.tolerance}};
    const UpperBoundSweepReport r = upper_bound_sweep(c);
    return finish_verify("upper_bound", to_json(r), r.passed, g, m);
}

struct CorrespondenceFlags {
    std::size_t trials = 100;
    std::uint64_t steps = 200;
    std::string predictor = "linear";
    std::string optimizer = "sgd";
    std::string normalization = "radial_pass";
    double lr = 1e-2;
};

int cmd_correspondence(const Globals& g, const CorrespondenceFlags& f, Manifest& m) {
    const std::uint64_t seed = g.seed.value_or(0);
    m.seed = seed;
    m.config = {{"trials", f.trials}, {"steps", f.steps}, {"predictor", f.predictor},
                {"optimizer", f.optimizer}, {"normalization", f.normalization}, {"lr", f.lr}};

    TrajectoryConfig tc;
    tc.network.predictor = predictor_kind_from_string(f.predictor);
    tc.network.normalization_gradient = normalization_gradient_from_string(f.normalization);
    tc.steps = f.steps;
    tc.optimizer = optimizer_kind_from_string(f.optimizer);
    tc.lr = f.lr;
    tc.seed = seed;
    // Fails with the violated condition before any work for non-linear predictors.
    const CorrespondenceReport traj = trajectory_correspondence_experiment(tc);

    CorrespondenceTrialsConfig gc;
    gc.trials = f.trials;
    gc.predictor = tc.network.predictor;
    gc.normalization = tc.network.normalization_gradient;
    gc.seed = seed;
    const CorrespondenceTrialsReport grads = gradient_correspondence_trials(gc);

    const fs::path csv = fs::path(g.out_dir) / "correspondence.csv";
    write_deviation_csv(traj, csv);
    m.add("series", csv);
    ordered_json j;
    j["gradients"] = as_json(to_json(grads));
    j["trajectory"] = as_json(to_json(traj));
    j["passed"] = grads.passed && traj.passed;
    return finish_verify("correspondence", j.dump(2), grads.passed && traj.passed, g, m);
}

struct SylvesterFlags {
    std::size_t max_n = 8;
    std::size_t samples = 20000;
    std::string matrices;
};

Tensor matrix_from_json(const ordered_json& j, const std::string& name) {
    require(j.contains(name) && j.at(name).is_array() && !j.at(name).empty(), ErrorKind::Config,
            name + ": expected a non-empty array of rows");
    const auto& rows = j.at(name);
    const std::size_t r = rows.size();
    const std::size_t c = rows.at(0).size();
    std::vector<double> v;
    for (const auto& row : rows) {
        require(row.is_array() && row.size() == c, ErrorKind::Config, name + ": ragged rows");
        for (const auto& x : row) {
            require(x.is_number(), ErrorKind::Config, name + ": expected numbers");
            v.push_back(x.get<double>());
        }
    }
    return Tensor::matrix(r, c, std::move(v));
}

int cmd_sylvester(const Globals& g, const SylvesterFlags& f, Manifest& m) {
    const std::uint64_t seed = g.seed.value_or(0);
    m.seed = seed;
    if (!f.matrices.empty()) {
        // Analysis of user-supplied W, A, B; nothing to assert beyond validity.
        std::ifstream in(f.matrices);
        require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + f.matrices);
        ordered_json j;
        try {
            j = ordered_json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Config, f.matrices + ": " + e.what());
        }
        m.config = {{"matrices", f.matrices}};
        const SylvesterReport r =
            sylvester_null_space(matrix_from_json(j, "w"), matrix_from_json(j, "a"), matrix_from_json(j, "b"));
        return finish_verify("sylvester", to_json(r), true, g, m);
    }
    SylvesterSuiteConfig c;
    c.max_n = f.max_n;
    c.moment_samples = f.samples;
    c.seed = seed;
    m.config = {{"max_n", c.max_n}, {"moment_samples", c.moment_samples}, {"pivot_tol", c.pivot_tol}};
    const SylvesterSuiteReport r = sylvester_suite(c);
    return finish_verify("sylvester", to_json(r), r.passed, g, m);
}

struct GradcheckFlags {
    double step = 1e-5;
    double tol = 1e-4;
};

int cmd_gradcheck(const Globals& g, const GradcheckFlags& f, Manifest& m) {
    const std::uint64_t seed = g.seed.value_or(0);
    m.seed = seed;
    m.config = {{"step", f.step}, {"tolerance", f.tol}};
    std::vector<NamedGradcheck> checks = primitive_gradchecks(f.step, seed);
    for (auto& c : loss_gradchecks(f.step, seed)) checks.push_back(std::move(c));
    bool passed = true;
    for (const auto& c : checks) passed = passed && c.report.max_rel_err <= f.tol;
    return finish_verify("gradcheck", to_json(checks, f.tol), passed, g, m);
}

// --- make-data ----------------------------------------------------------------

struct DataFlags {
    std::optional<std::size_t> dim;
    std::optional<std::size_t> classes;
    std::optional<std::size_t> per_class;
    std::optional<double> noise;
};

int cmd_make_data(const Globals& g, const DataFlags& f, Manifest& m) {
    RunConfig cfg = base_config(g);
    if (f.dim) cfg.data.blobs.dim = *f.dim;
    if (f.classes) cfg.data.blobs.classes = *f.classes;
    if (f.per_class) cfg.data.blobs.per_class = *f.per_class;
    if (f.noise) cfg.data.blobs.noise = *f.noise;
    if (g.seed) cfg.data.blobs.seed = *g.seed;
    m.config = as_json(to_json(cfg))["data"];
    m.seed = cfg.data.blobs.seed;
    const Dataset ds = load_dataset(cfg.data);
    const fs::path path = fs::path(g.out_dir) / "data.csv";
    write_dataset_csv(ds, path);
    m.add("data", path);
    log(Level::Info, "wrote " + std::to_string(ds.size()) + " rows to " + path.string());
    return 0;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonFiniteLoss:
        case ErrorKind::Io:
            return 3;
        default:
            return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"raftlab: mean-teacher self-supervised learning experiments"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Base seed (overrides the config file)");
    app.add_option("--out-dir", g.out_dir, "Directory for every artifact and manifest.json")
        ->capture_default_str();
    app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train one configuration");
    train->add_option("--steps", tf.steps);
    train->add_option("--batch-size", tf.batch_size);
    train->add_option("--lr", tf.lr, "Constant learning rate");
    train->add_option("--tau", tf.tau, "Constant EMA rate");
    train->add_option("--objective", tf.objective, "byol | byol_prime | raft");
    train->add_option("--predictor", tf.predictor, "mlp | linear | identity");
    train->add_option("--optimizer", tf.optimizer, "sgd | adam");
    train->add_option("--checkpoint-every", tf.checkpoint_every);

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", ef.checkpoint)->required()->check(CLI::ExistingFile);
    eval->add_option("--export", ef.export_path, "Write h, z and labels as CSV");
    eval->add_option("--samples", ef.samples, "Positive pairs for align and uniformity");

    auto* verify = app.add_subcommand("verify", "Run a verification suite");
    verify->require_subcommand(1);
    verify->fallthrough();

    UpperBoundFlags uf;
    auto* ub = verify->add_subcommand("upper-bound", "Random-state sweep of the BYOL' bound");
    ub->add_option("--trials", uf.trials)->capture_default_str();
    ub->add_flag("--no-symmetrize", uf.no_symmetrize);

    CorrespondenceFlags cf;
    auto* corr = verify->add_subcommand("correspondence", "Mirrored BYOL'/RAFT gradients and trajectories");
    corr->add_option("--trials", cf.trials)->capture_default_str();
    corr->add_option("--steps", cf.steps)->capture_default_str();
    corr->add_option("--predictor", cf.predictor)->capture_default_str();
    corr->add_option("--optimizer", cf.optimizer)->capture_default_str();
    corr->add_option("--normalization", cf.normalization, "full | radial_pass")->capture_default_str();
    corr->add_option("--lr", cf.lr)->capture_default_str();

    SylvesterFlags sf;
    auto* syl = verify->add_subcommand("sylvester", "Null space of the predictor fixed-point equation");
    syl->add_option("--max-n", sf.max_n)->capture_default_str();
    syl->add_option("--samples", sf.samples, "Monte-Carlo pairs for the moment checks")->capture_default_str();
    syl->add_option("--matrices", sf.matrices, "JSON file with w, a, b to analyse instead of the suite")
        ->check(CLI::ExistingFile);

    GradcheckFlags gf;
    auto* gc = verify->add_subcommand("gradcheck", "Central finite differences on primitives and losses");
    gc->add_option("--step", gf.step)->capture_default_str();
    gc->add_option("--tol", gf.tol)->capture_default_str();

    DataFlags df;
    auto* data = app.add_subcommand("make-data", "Write the configured dataset as CSV");
    data->add_option("--dim", df.dim);
    data->add_option("--classes", df.classes);
    data->add_option("--per-class", df.per_class);
    data->add_option("--noise", df.noise);

    CLI11_PARSE(app, argc, argv);

    Manifest manifest;
    for (int i = 0; i < argc; ++i) {
        manifest.command += (i ? " " : "") + std::string(argv[i]);
    }
    int code = 0;
    try {
        fs::create_directories(g.out_dir);
        if (*train) code = cmd_train(g, tf, manifest);
        else if (*eval) code = cmd_eval(g, ef, manifest);
        else if (*ub) code = cmd_upper_bound(g, uf, manifest);
        else if (*corr) code = cmd_correspondence(g, cf, manifest);
        else if (*syl) code = cmd_sylvester(g, sf, manifest);
        else if (*gc) code = cmd_gradcheck(g, gf, manifest);
        else if (*data) code = cmd_make_data(g, df, manifest);
    } catch (const Error& e) {
        log(Level::Error, e.what());
        manifest.status = "error";
        manifest.message = e.what();
        code = exit_code(e.kind());
    } catch (const std::exception& e) {
        log(Level::Error, e.what());
        manifest.status = "error";
        manifest.message = e.what();
        code = 3;
    }
    try {
        manifest.write(g.out_dir);
    } catch (const std::exception& e) {
        log(Level::Error, e.what());
        return code == 0 ? 3 : code;
    }
    return code;
}
