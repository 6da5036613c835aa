#include "raftlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "raftlab/autodiff.hpp"
#include "raftlab/error.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/optim.hpp"
#include "raftlab/rng.hpp"
#include "raftlab/train.hpp"

namespace raftlab {

namespace {

constexpr std::uint64_t kSplitStream = 201;
constexpr std::uint64_t kProbeShuffleStream = 202;
constexpr std::uint64_t kPairStream = 203;

void standardize_columns(Tensor& train, Tensor& test) {
    const std::size_t d = train.cols();
    const double n = static_cast<double>(train.rows());
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            mean += train.at(r, c);
        }
        mean /= n;
        double var = 0.0;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            var += (train.at(r, c) - mean) * (train.at(r, c) - mean);
        }
        const double sd = std::sqrt(var / n);
        // Constant columns carry no information; centre them and leave scale.
        const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            train.at(r, c) = (train.at(r, c) - mean) * inv;
        }
        for (std::size_t r = 0; r < test.rows(); ++r) {
            test.at(r, c) = (test.at(r, c) - mean) * inv;
        }
    }
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
    Tensor out(Shape{idx.size(), m.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = m.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace

void ProbeConfig::validate() const {
    require(lr > 0.0, ErrorKind::Config, "probe.lr must be positive");
    require(epochs >= 1, ErrorKind::Config, "probe.epochs must be at least 1");
    require(batch_size >= 1, ErrorKind::Config, "probe.batch_size must be at least 1");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Config,
            "probe.train_fraction must lie in (0, 1)");
}

ProbeResult probe_accuracy(const Tensor& features, std::span<const int> labels,
                           std::size_t classes, const ProbeConfig& cfg) {
    cfg.validate();
    require(features.rank() == 2 && features.rows() == labels.size(), ErrorKind::Dimension,
            "features and labels disagree in length");
    const std::set<int> distinct(labels.begin(), labels.end());
    require(distinct.size() >= 2, ErrorKind::Eval, "linear evaluation needs at least two classes");
    for (int l : labels) {
        require(l >= 0 && static_cast<std::size_t>(l) < classes, ErrorKind::Eval,
                "label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }

    const std::size_t n = features.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(derive_seed(cfg.seed, kSplitStream));
    split_rng.shuffle(std::span<std::size_t>(order));
    const std::size_t n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n))), 1,
        n - 1);
    const std::span<const std::size_t> train_idx(order.data(), n_train);
    const std::span<const std::size_t> test_idx(order.data() + n_train, n - n_train);

    Tensor train_x = gather_rows(features, train_idx);
    Tensor test_x = gather_rows(features, test_idx);
    if (cfg.standardize) {
        standardize_columns(train_x, test_x);
    }
    std::vector<int> train_y, test_y;
    for (std::size_t i : train_idx) train_y.push_back(labels[i]);
    for (std::size_t i : test_idx) test_y.push_back(labels[i]);

    const std::size_t d = features.cols();
    Tensor weight(Shape{d, classes});
    Tensor bias(Shape{classes});
    Optimizer adam(OptimizerKind::Adam);
    Rng shuffle_rng(derive_seed(cfg.seed, kProbeShuffleStream));
    std::vector<std::size_t> perm(n_train);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(perm));
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(n_train, start + cfg.batch_size);
            const std::span<const std::size_t> idx(perm.data() + start, stop - start);
            std::vector<int> y;
            for (std::size_t i : idx) y.push_back(train_y[i]);

            Tape tape;
            const Var w = tape.variable(weight);
            const Var b = tape.variable(bias);
            const Var x = tape.constant(gather_rows(train_x, idx));
            const Var loss = softmax_cross_entropy(add_bias(matmul(x, w), b), y);
            const Gradients g = tape.backward(loss);
            const std::vector<Tensor> grads{g.wrt(w), g.wrt(b)};
            const std::vector<Tensor*> ps{&weight, &bias};
            adam.step(ps, grads, cfg.lr);
        }
    }

    const Tensor logits = matmul_values(test_x, weight);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test_x.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (logits.at(r, c) + bias[c] > logits.at(r, best) + bias[best]) {
                best = c;
            }
        }
        correct += static_cast<int>(best) == test_y[r];
    }
    return ProbeResult{static_cast<double>(correct) / static_cast<double>(test_x.rows()), n_train,
                       test_x.rows()};
}

ProbeResult linear_evaluation(const ModelParams& params, const Dataset& dataset,
                              const ProbeConfig& cfg) {
    const Representations reps = encode(params, dataset.samples);
    return probe_accuracy(reps.h, dataset.labels, dataset.classes, cfg);
}

EvalReport metrics_report(const ModelParams& params, const Dataset& dataset,
                          const AugmentationSpec& aug, std::size_t sample_count, double t,
                          const ProbeConfig& probe) {
    require(sample_count >= 2, ErrorKind::Precondition, "metrics need at least two samples");
    AugmentationSpec pair_aug = aug;
    pair_aug.seed = derive_seed(aug.seed, kPairStream);
    const std::size_t count = std::min(sample_count, dataset.size());
    const PositiveBatch batch = sample_positive_batch(dataset, pair_aug, count, 0);
    const Representations r1 = encode(params, batch.x1);
    const Representations r2 = encode(params, batch.x2);

    EvalReport report;
    report.samples = count;
    report.probe = probe;
    Tape tape;
    report.align = align_loss(tape.constant(r1.p), tape.constant(r2.p)).value().item();
    report.uniformity = uniformity(r1.z, t);
    report.collapse = report.uniformity > kCollapseThreshold;
    report.probe_accuracy = linear_evaluation(params, dataset, probe).accuracy;
    return report;
}

std::string to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["probe_accuracy"] = r.probe_accuracy;
    j["align"] = r.align;
    j["uniformity"] = r.uniformity;
    j["collapse"] = r.collapse;
    j["samples"] = r.samples;
    j["probe"] = {{"lr", r.probe.lr},
                  {"epochs", r.probe.epochs},
                  {"batch_size", r.probe.batch_size},
                  {"train_fraction", r.probe.train_fraction},
                  {"standardize", r.probe.standardize},
                  {"seed", r.probe.seed}};
    return j.dump(2);
}

void export_representations(const ModelParams& params, const Dataset& dataset,
                            const std::filesystem::path& path) {
    const Representations reps = encode(params, dataset.samples);
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    for (std::size_t k = 0; k < reps.h.cols(); ++k) out << 'h' << k << ',';
    for (std::size_t k = 0; k < reps.z.cols(); ++k) out << 'z' << k << ',';
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double v : reps.h.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        for (double v : reps.z.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        out << dataset.labels[i] << '\n';
    }
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

namespace {

nlohmann::ordered_json report_json(const EvalReport& r) {
    return nlohmann::ordered_json{{"probe_accuracy", r.probe_accuracy},
                                  {"align", r.align},
                                  {"uniformity", r.uniformity},
                                  {"collapse", r.collapse}};
}

}  // namespace

CollapseStudyReport collapse_study(const CollapseStudyConfig& cfg) {
    const Dataset dataset = make_blobs(cfg.data);
    CollapseStudyReport out;

    TrainConfig np = cfg.base;
    np.network.input_dim = dataset.dim();
    np.network.predictor = PredictorKind::Identity;
    np.loss.objective = Objective::ByolPrime;

    TrainConfig lp = cfg.base;
    lp.network.input_dim = dataset.dim();
    lp.network.predictor = PredictorKind::Linear;
    lp.loss.objective = Objective::Raft;
    lp.loss.beta = cfg.raft_beta;
    lp.tau = Schedule::constant_value(cfg.raft_tau);

    // Fresh pairs for the metrics, independent of the training stream.
    const AugmentationSpec eval_aug{cfg.base.view1, cfg.base.view2,
                                    derive_seed(cfg.base.seed, kPairStream, 1)};
    auto run = [&](const std::string& name, const TrainConfig& tc) {
        const TrainResult r = train_run(tc, dataset);
        return CollapseArm{name, tc,
                           metrics_report(r.params, dataset, eval_aug, cfg.eval_samples,
                                          tc.loss.t, cfg.probe)};
    };
    out.byol_prime_np = run("byol_prime_np", np);
    out.raft_lp = run("raft_lp", lp);
    out.random_init = metrics_report(init_params(lp.network, init_seed(lp)), dataset, eval_aug,
                                     cfg.eval_samples, lp.loss.t, cfg.probe);

    const EvalReport& a = out.byol_prime_np.report;
    const EvalReport& b = out.raft_lp.report;
    out.byol_prime_collapsed = a.align < 1e-6 && a.uniformity > -0.5;
    out.raft_spread = b.uniformity < -1.0;
    out.raft_probe_gain = b.probe_accuracy >= out.random_init.probe_accuracy + 0.10;
    out.uniformity_ordered = a.uniformity > b.uniformity;
    return out;
}

std::string to_json(const CollapseStudyReport& r) {
    nlohmann::ordered_json j;
    j["byol_prime_np"] = report_json(r.byol_prime_np.report);
    j["raft_lp"] = report_json(r.raft_lp.report);
    j["random_init"] = report_json(r.random_init);
    j["byol_prime_collapsed"] = r.byol_prime_collapsed;
    j["raft_spread"] = r.raft_spread;
    j["raft_probe_gain"] = r.raft_probe_gain;
    j["uniformity_ordered"] = r.uniformity_ordered;
    j["passed"] = r.passed();
    return j.dump(2);
}

}  // namespace raftlab
