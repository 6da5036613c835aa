#include "raftlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "raftlab/error.hpp"
#include "raftlab/linalg.hpp"
#include "raftlab/rng.hpp"
#include "raftlab/train.hpp"

namespace raftlab {

namespace {

constexpr std::uint64_t kSweepParamStream = 301;
constexpr std::uint64_t kSweepBatchStream = 302;
constexpr std::uint64_t kSweepTargetStream = 303;
constexpr std::uint64_t kTrialParamStream = 311;
constexpr std::uint64_t kTrialBatchStream = 312;
constexpr std::uint64_t kTrialTargetStream = 313;
constexpr std::uint64_t kTrajectoryDataStream = 321;
constexpr std::uint64_t kGradcheckCoordStream = 331;
constexpr std::uint64_t kSylvesterStream = 341;
constexpr std::uint64_t kTrickStream = 351;

using ordered_json = nlohmann::ordered_json;

NetworkSpec small_spec(std::size_t input_dim, PredictorKind predictor,
                       NormalizationGradient normalization) {
    NetworkSpec s;
    s.input_dim = input_dim;
    s.backbone_hidden = {16};
    s.representation_dim = 12;
    s.projector_hidden = 16;
    s.projection_dim = 8;
    s.predictor = predictor;
    s.predictor_hidden = 16;
    s.normalization_gradient = normalization;
    return s;
}

Tensor random_normal(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = rng.normal();
    }
    return t;
}

/// x2 is a noisy copy of x1 so that the two views are correlated.
std::pair<Tensor, Tensor> random_views(std::size_t batch, std::size_t dim, Rng& rng) {
    Tensor x1 = random_normal(Shape{batch, dim}, rng);
    Tensor x2 = x1;
    for (double& v : x2.values()) {
        v += 0.5 * rng.normal();
    }
    return {std::move(x1), std::move(x2)};
}

double mean_row_sq_dist(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape() && a.rank() == 2, ErrorKind::Dimension,
            "representation shapes differ: " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
    double total = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto x = a.row(r);
        auto y = b.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
            s += (x[c] - y[c]) * (x[c] - y[c]);
        }
        total += s;
    }
    return total / static_cast<double>(a.rows());
}

double max_abs_sum(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] + b[i]));
    }
    return m;
}

ordered_json matrix_json(const Tensor& m) {
    ordered_json rows = ordered_json::array();
    if (m.empty()) {
        return rows;
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

}  // namespace

// --- upper bound --------------------------------------------------------------

UpperBoundResult check_upper_bound(double alpha, double beta, const Tensor& p1, const Tensor& p2,
                                   const Tensor& zbar1, const Tensor& zbar2, bool symmetrize) {
    require(alpha > 0.0 && beta > 0.0, ErrorKind::Config, "alpha and beta must be positive");
    const double align = mean_row_sq_dist(p1, p2);
    UpperBoundResult r;
    if (symmetrize) {
        r.byol = 0.5 * (mean_row_sq_dist(p1, zbar2) + mean_row_sq_dist(p2, zbar1));
        r.byol_prime =
            alpha * align + beta * 0.5 * (mean_row_sq_dist(p1, zbar1) + mean_row_sq_dist(p2, zbar2));
    } else {
        r.byol = mean_row_sq_dist(p1, zbar2);
        r.byol_prime = alpha * align + beta * mean_row_sq_dist(p2, zbar2);
    }
    r.bound = (1.0 / alpha + 1.0 / beta) * r.byol_prime;
    r.margin = r.bound - r.byol;
    return r;
}

UpperBoundResult check_upper_bound(double alpha, double beta, const ModelParams& params,
                                   const Tensor& x1, const Tensor& x2, bool symmetrize) {
    const Representations r1 = encode(params, x1);
    const Representations r2 = encode(params, x2);
    return check_upper_bound(alpha, beta, r1.p, r2.p, encode_target(params, x1),
                             encode_target(params, x2), symmetrize);
}

UpperBoundSweepReport upper_bound_sweep(const UpperBoundSweepConfig& cfg) {
    require(cfg.trials >= 1, ErrorKind::Config, "trials must be at least 1");
    require(!cfg.grid.empty(), ErrorKind::Config, "weight grid is empty");
    const PredictorKind kinds[] = {PredictorKind::Mlp, PredictorKind::Linear,
                                   PredictorKind::Identity};
    UpperBoundSweepReport report;
    report.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const NetworkSpec spec =
            small_spec(cfg.input_dim, kinds[trial % 3], NormalizationGradient::Full);
        ModelParams params = init_params(spec, derive_seed(cfg.seed, kSweepParamStream, trial));
        perturb_target(params, cfg.target_noise, derive_seed(cfg.seed, kSweepTargetStream, trial));
        Rng rng(derive_seed(cfg.seed, kSweepBatchStream, trial));
        const auto [x1, x2] = random_views(cfg.batch_size, cfg.input_dim, rng);

        const Representations r1 = encode(params, x1);
        const Representations r2 = encode(params, x2);
        const Tensor zbar1 = encode_target(params, x1);
        const Tensor zbar2 = encode_target(params, x2);
        for (double alpha : cfg.grid) {
            for (double beta : cfg.grid) {
                const UpperBoundResult r =
                    check_upper_bound(alpha, beta, r1.p, r2.p, zbar1, zbar2, cfg.symmetrize);
                ++report.evaluations;
                if (r.margin < report.min_margin) {
                    report.min_margin = r.margin;
                    report.worst_alpha = alpha;
                    report.worst_beta = beta;
                    report.worst_trial = trial;
                }
            }
        }
    }
    report.trials = cfg.trials;
    report.passed = report.min_margin >= -cfg.tolerance;
    return report;
}

// --- correspondence -------------------------------------------------------------

ModelParams mirror_predictor(const ModelParams& params) {
    ModelParams mirrored = params;
    Tensor& w = mirrored.predictor_matrix();
    w = -w;
    return mirrored;
}

void perturb_biases(ModelParams& params, double noise, std::uint64_t seed) {
    Rng rng(seed);
    for (Mlp* mlp : {&params.online.backbone, &params.online.projector, &params.predictor}) {
        for (DenseLayer& layer : *mlp) {
            for (double& v : layer.bias.values()) v += noise * rng.normal();
        }
    }
}

void perturb_target(ModelParams& params, double noise, std::uint64_t seed) {
    if (noise == 0.0) {
        return;
    }
    Rng rng(seed);
    auto perturb = [&](Mlp& mlp) {
        for (DenseLayer& layer : mlp) {
            for (double& v : layer.weight.values()) v += noise * rng.normal();
            for (double& v : layer.bias.values()) v += noise * rng.normal();
        }
    };
    perturb(params.target.backbone);
    perturb(params.target.projector);
}

namespace {

std::vector<Tensor> objective_grads(const ModelParams& params, const Tensor& x1, const Tensor& x2,
                                    Objective objective, double alpha, double beta, bool filter) {
    Tape tape;
    const BoundOnline bound = bind_online(tape, params);
    const ForwardOptions fwd{filter};
    const OnlineOutput o1 = forward_online(bound, params.spec, tape.constant(x1), fwd);
    const OnlineOutput o2 = forward_online(bound, params.spec, tape.constant(x2), fwd);
    const ViewPair views{o1.p, o2.p, forward_target(tape, params, tape.constant(x1)),
                         forward_target(tape, params, tape.constant(x2))};
    LossConfig cfg;
    cfg.objective = objective;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.tangential = filter ? TangentialMode::GradientFilter : TangentialMode::Off;
    const Gradients g = tape.backward(total_loss(cfg, views).total);
    std::vector<Tensor> out;
    for (const Var& v : bound.variables) {
        out.push_back(g.wrt(v));
    }
    return out;
}

}  // namespace

GradientDeviation gradient_correspondence_check(const ModelParams& params, const Tensor& x1,
                                                const Tensor& x2, double alpha, double beta,
                                                bool filter) {
    const ModelParams mirrored = mirror_predictor(params);
    const std::vector<Tensor> ga =
        objective_grads(params, x1, x2, Objective::ByolPrime, alpha, beta, filter);
    const std::vector<Tensor> gb =
        objective_grads(mirrored, x1, x2, Objective::Raft, alpha, beta, filter);
    // The linear predictor is the last trainable tensor.
    GradientDeviation dev;
    for (std::size_t i = 0; i + 1 < ga.size(); ++i) {
        dev.theta = std::max(dev.theta, max_abs_diff(ga[i], gb[i]));
    }
    dev.w = max_abs_sum(ga.back(), gb.back());
    return dev;
}

CorrespondenceTrialsReport gradient_correspondence_trials(const CorrespondenceTrialsConfig& cfg) {
    require(cfg.trials >= 1, ErrorKind::Config, "trials must be at least 1");
    CorrespondenceTrialsReport report;
    report.normalization = cfg.normalization;
    report.min_theta_unfiltered = std::numeric_limits<double>::infinity();
    const NetworkSpec spec = small_spec(cfg.input_dim, cfg.predictor, cfg.normalization);
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        ModelParams params = init_params(spec, derive_seed(cfg.seed, kTrialParamStream, trial));
        perturb_target(params, cfg.target_noise, derive_seed(cfg.seed, kTrialTargetStream, trial));
        Rng rng(derive_seed(cfg.seed, kTrialBatchStream, trial));
        const auto [x1, x2] = random_views(cfg.batch_size, cfg.input_dim, rng);

        const GradientDeviation on =
            gradient_correspondence_check(params, x1, x2, cfg.alpha, cfg.beta, true);
        const GradientDeviation off =
            gradient_correspondence_check(params, x1, x2, cfg.alpha, cfg.beta, false);
        report.max_theta_filtered = std::max(report.max_theta_filtered, on.theta);
        report.max_w_filtered = std::max(report.max_w_filtered, on.w);
        report.min_theta_unfiltered = std::min(report.min_theta_unfiltered, off.theta);
        report.control_exceeding += off.theta > cfg.control_threshold;
    }
    report.trials = cfg.trials;
    const double needed = std::ceil(cfg.control_fraction * static_cast<double>(cfg.trials));
    report.passed = report.max_theta_filtered <= cfg.tolerance &&
                    report.max_w_filtered <= cfg.tolerance &&
                    static_cast<double>(report.control_exceeding) >= needed;
    return report;
}

bool grows_at_most_linearly(std::span<const double> series, double floor) {
    // series[k-1] holds dev(k).
    for (std::size_t k = 2; k <= series.size(); k += 2) {
        if (series[k - 1] > 4.0 * series[k / 2 - 1] + floor) {
            return false;
        }
    }
    return true;
}

CorrespondenceReport trajectory_correspondence_experiment(const TrajectoryConfig& cfg) {
    require(cfg.network.predictor == PredictorKind::Linear, ErrorKind::Precondition,
            "condition ii: predictor must be linear");
    require(cfg.samples >= 4, ErrorKind::Config, "samples must be at least 4");

    BlobsSpec blobs;
    blobs.dim = cfg.network.input_dim;
    blobs.classes = 4;
    blobs.per_class = (cfg.samples + 3) / 4;
    blobs.seed = derive_seed(cfg.seed, kTrajectoryDataStream);
    const Dataset ds = make_blobs(blobs);

    CorrespondenceReport report;
    report.steps = cfg.steps;
    report.optimizer = cfg.optimizer;
    report.normalization = cfg.network.normalization_gradient;
    if (cfg.steps == 0) {
        report.passed = true;
        return report;
    }

    TrainConfig prime;
    prime.loss.objective = Objective::ByolPrime;
    prime.loss.alpha = cfg.alpha;
    prime.loss.beta = cfg.beta;
    prime.loss.tangential = TangentialMode::GradientFilter;
    prime.network = cfg.network;
    prime.steps = cfg.steps;
    prime.batch_size = ds.size();
    prime.optimizer = cfg.optimizer;
    prime.lr = Schedule::constant_value(cfg.lr);
    prime.tau = Schedule::constant_value(cfg.tau);
    prime.seed = cfg.seed;
    prime.view1 = cfg.view1;
    prime.view2 = cfg.view2;
    prime.validate();
    TrainConfig raft = prime;
    raft.loss.objective = Objective::Raft;

    TrainState a = make_train_state(prime);
    TrainState b{mirror_predictor(a.params), Optimizer(cfg.optimizer), 0, 0};
    const AugmentationSpec aug = prime.augmentation();

    for (std::uint64_t k = 1; k <= cfg.steps; ++k) {
        const PositiveBatch batch = sample_positive_batch(ds, aug, ds.size(), k - 1);
        const StepOutcome oa = train_step(a, prime, batch, k);
        const StepOutcome ob = train_step(b, raft, batch, k);

        double g_theta = 0.0;
        for (std::size_t i = 0; i + 1 < oa.grads.size(); ++i) {
            g_theta = std::max(g_theta, max_abs_diff(oa.grads[i], ob.grads[i]));
        }
        report.grad_theta_dev.push_back(g_theta);
        report.grad_w_sum.push_back(max_abs_sum(oa.grads.back(), ob.grads.back()));

        const auto ta = a.params.trainable();
        const auto tb = b.params.trainable();
        double theta = 0.0;
        for (std::size_t i = 0; i + 1 < ta.size(); ++i) {
            theta = std::max(theta, max_abs_diff(*ta[i], *tb[i]));
            report.max_abs_theta = std::max(report.max_abs_theta, ta[i]->max_abs());
        }
        report.theta_dev.push_back(theta);
        report.w_dev.push_back(max_abs_sum(*ta.back(), *tb.back()));
        report.max_abs_w = std::max(report.max_abs_w, ta.back()->max_abs());

        const auto xa = a.params.target_tensors();
        const auto xb = b.params.target_tensors();
        double target = 0.0;
        for (std::size_t i = 0; i < xa.size(); ++i) {
            target = std::max(target, max_abs_diff(*xa[i], *xb[i]));
        }
        report.target_dev.push_back(target);
    }

    report.max_theta_dev = *std::max_element(report.theta_dev.begin(), report.theta_dev.end());
    report.max_w_dev = *std::max_element(report.w_dev.begin(), report.w_dev.end());
    const double eps = std::numeric_limits<double>::epsilon();
    report.linear_growth =
        grows_at_most_linearly(report.theta_dev, 1e3 * eps * report.max_abs_theta) &&
        grows_at_most_linearly(report.w_dev, 1e3 * eps * report.max_abs_w);
    report.passed = report.max_theta_dev <= cfg.tolerance * report.max_abs_theta &&
                    report.max_w_dev <= cfg.tolerance * report.max_abs_w && report.linear_growth;
    return report;
}

void write_deviation_csv(const CorrespondenceReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << "step,theta_dev,w_dev\n";
    char buf[80];
    for (std::size_t i = 0; i < report.theta_dev.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i + 1, report.theta_dev[i],
                      report.w_dev[i]);
        out << buf;
    }
    require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

// --- Sylvester ------------------------------------------------------------------

SylvesterReport sylvester_null_space(const Tensor& w, const Tensor& a, const Tensor& b,
                                     double pivot_tol) {
    require(pivot_tol > 0.0 && pivot_tol < 1.0, ErrorKind::Config, "pivot_tol must lie in (0, 1)");
    require(w.rank() == 2 && w.rows() == w.cols(), ErrorKind::Dimension, "W must be square");
    require(a.rank() == 2 && a.rows() == a.cols(), ErrorKind::Dimension, "A must be square");
    require(b.shape() == a.shape(), ErrorKind::Dimension, "A and B must have the same shape");
    const std::size_t n = w.rows();
    const std::size_t m = a.rows();
    require(n <= kSylvesterMaxDim && m <= kSylvesterMaxDim, ErrorKind::Precondition,
            "Sylvester analysis is limited to n, m <= " + std::to_string(kSylvesterMaxDim));

    SylvesterReport r;
    r.a = a;
    r.b = b;
    r.ba_inv = matmul_values(b, invert(a, pivot_tol));
    r.n = n;
    r.m = m;
    r.system_dim = n * m;
    r.pivot_tol = pivot_tol;
    const Tensor lhs = kron(Tensor::identity(m), w);
    const Tensor rhs = kron(transpose(r.ba_inv), Tensor::identity(n));
    Tensor system(lhs.shape());
    for (std::size_t i = 0; i < system.size(); ++i) {
        system[i] = lhs[i] - rhs[i];
    }
    r.rank = numerical_rank(system, pivot_tol);
    r.null_dim = r.system_dim - r.rank;
    r.nontrivial = r.null_dim > 0;
    return r;
}

// --- finite differences ---------------------------------------------------------

SylvesterSuiteReport sylvester_suite(const SylvesterSuiteConfig& cfg) {
    require(cfg.max_n >= 1 && cfg.max_n <= kSylvesterMaxDim, ErrorKind::Config,
            "max_n must lie in [1, " + std::to_string(kSylvesterMaxDim) + "]");
    SylvesterSuiteReport out;
    auto add_case = [&](std::string name, const Tensor& w, const Tensor& a, const Tensor& b,
                        std::size_t expected) {
        const SylvesterReport r = sylvester_null_space(w, a, b, cfg.pivot_tol);
        out.cases.push_back(
            SylvesterCase{std::move(name), w.rows(), expected, r.null_dim, r.null_dim == expected});
    };
    auto diag = [](const std::vector<double>& d) {
        Tensor t(Shape{d.size(), d.size()});
        for (std::size_t i = 0; i < d.size(); ++i) t.at(i, i) = d[i];
        return t;
    };

    Rng rng(derive_seed(cfg.seed, kSylvesterStream));
    for (std::size_t n = 1; n <= cfg.max_n; ++n) {
        const Tensor eye = Tensor::identity(n);
        const std::string tag = "n=" + std::to_string(n);
        add_case("W=I " + tag, eye, eye, eye, n * n);
        Tensor two = eye;
        for (double& v : two.values()) v *= 2.0;
        add_case("W=2I " + tag, two, eye, eye, 0);
        std::vector<double> ramp(n);
        std::iota(ramp.begin(), ramp.end(), 1.0);
        add_case("W=diag(1..n) " + tag, diag(ramp), eye, eye, n);

        // Null dimension equals the number of (i, j) with w_i = c_j.
        for (std::size_t trial = 0; trial < cfg.eigen_trials; ++trial) {
            std::vector<double> w(n), c(n);
            for (double& v : w) v = static_cast<double>(1 + rng.below(4));
            for (double& v : c) v = static_cast<double>(1 + rng.below(4));
            std::size_t matches = 0;
            for (double wi : w) {
                matches += static_cast<std::size_t>(std::count(c.begin(), c.end(), wi));
            }
            add_case("diag eigen " + tag + " trial " + std::to_string(trial), diag(w), eye, diag(c),
                     matches);
        }
    }

    const double bound = 5.0 / std::sqrt(static_cast<double>(cfg.moment_samples));
    const AugmentationSpec identity_views{ViewAugmentation{}, ViewAugmentation{},
                                          derive_seed(cfg.seed, kSylvesterStream, 1)};
    {
        BlobsSpec spec;
        spec.per_class = std::max<std::size_t>(spec.per_class, cfg.moment_samples / spec.classes);
        spec.seed = derive_seed(cfg.seed, kSylvesterStream, 2);
        const AugmentationMoments mom = estimate_aug_moments(
            make_blobs(spec), identity_views, cfg.moment_samples, derive_seed(cfg.seed, kSylvesterStream, 3));
        const double dev = max_abs_diff(mom.a, mom.b);
        out.moments.push_back(MomentCheck{"identity views: A = B", mom.samples, dev, bound, dev <= bound});
    }
    {
        const std::size_t d = 4;
        Tensor x = random_normal(Shape{cfg.moment_samples, d}, rng);
        const Dataset ds = make_dataset(std::move(x), std::vector<int>(cfg.moment_samples, 0), 1);
        const AugmentationMoments mom = estimate_aug_moments(
            ds, identity_views, cfg.moment_samples, derive_seed(cfg.seed, kSylvesterStream, 4));
        const double dev = max_abs_diff(mom.a, Tensor::identity(d));
        out.moments.push_back(MomentCheck{"standard normal: A = I", mom.samples, dev, bound, dev <= bound});
    }

    out.passed = std::all_of(out.cases.begin(), out.cases.end(), [](const auto& c) { return c.passed; }) &&
                 std::all_of(out.moments.begin(), out.moments.end(), [](const auto& m) { return m.passed; });
    return out;
}

TangentialTrickReport tangential_trick_trials(const TangentialTrickConfig& cfg) {
    require(cfg.trials >= 1 && cfg.batch_size >= 1 && cfg.dim >= 2, ErrorKind::Config,
            "tangential trick trials need trials, batch and dim >= 1, 2");
    TangentialTrickReport out;
    out.trials = cfg.trials;
    Rng rng(derive_seed(cfg.seed, kTrickStream));
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const Tensor u = random_normal(Shape{cfg.batch_size, cfg.dim}, rng);
        // zbar is a noisy copy of the normalized u so <p, zbar> stays away from 0.
        Tensor zbar = u;
        for (double& v : zbar.values()) v += 0.5 * rng.normal();
        for (std::size_t r = 0; r < zbar.rows(); ++r) {
            auto row = zbar.row(r);
            const double norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
            for (double& v : row) v /= norm;
        }
        Tensor p = u;
        for (std::size_t r = 0; r < p.rows(); ++r) {
            auto row = p.row(r);
            const double norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
            for (double& v : row) v /= norm;
        }

        // At the unit rows p.
        {
            Tape tape;
            const Var pv = tape.variable(p);
            const Var zv = tape.constant(zbar);
            const Tensor g_trick = tape.backward(tangential_cross_model_trick(pv, zv)).wrt(pv);
            const Tensor g_filter = tape.backward(cross_model_loss(tangential_grad(pv), zv)).wrt(pv);
            out.max_deviation_p = std::max(out.max_deviation_p, max_abs_diff(g_trick, g_filter));
        }
        // Through a normalization that leaves radial components in place.
        {
            Tape tape;
            const Var uv = tape.variable(u);
            const Var zv = tape.constant(zbar);
            const Var pv = l2_normalize_frozen_norm(uv);
            const Tensor g_trick = tape.backward(tangential_cross_model_trick(pv, zv)).wrt(uv);
            const Tensor g_filter = tape.backward(cross_model_loss(tangential_grad(pv), zv)).wrt(uv);
            out.max_deviation_u = std::max(out.max_deviation_u, max_abs_diff(g_trick, g_filter));
        }
    }
    out.passed = out.max_deviation_p <= cfg.tolerance && out.max_deviation_u <= cfg.tolerance;
    return out;
}

namespace {

struct Evaluation {
    double value;
    std::vector<bool> pattern;
};

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
    return std::abs(analytic - numeric) / denom;
}

Evaluation evaluate(const TapedFunction& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) {
        vars.push_back(tape.variable(t));
    }
    const Var out = f(tape, vars);
    return {out.value().item(), relu_pattern(tape)};
}

Var model_loss(Tape& tape, const ModelParams& params, const Tensor& x1, const Tensor& x2,
               GradcheckLoss loss, const LossConfig& cfg, BoundOnline* bound_out) {
    BoundOnline bound = bind_online(tape, params);
    const OnlineOutput o1 = forward_online(bound, params.spec, tape.constant(x1));
    const OnlineOutput o2 = forward_online(bound, params.spec, tape.constant(x2));
    const ViewPair v{o1.p, o2.p, forward_target(tape, params, tape.constant(x1)),
                     forward_target(tape, params, tape.constant(x2))};
    if (bound_out) {
        *bound_out = bound;
    }
    switch (loss) {
        case GradcheckLoss::Align: return align_loss(v.p1, v.p2);
        case GradcheckLoss::Uniform: return uniform_loss(o1.z, cfg.t);
        case GradcheckLoss::CrossModel: return cross_model_loss(v.p1, v.zbar1);
        case GradcheckLoss::SymmetrizedCross: return symmetrized_cross_model(v);
        case GradcheckLoss::Byol: return byol_loss(v, cfg.symmetrize);
        case GradcheckLoss::ByolPrime: return byol_prime_loss(cfg, v);
        case GradcheckLoss::Raft: return raft_loss(cfg, v);
    }
    fail(ErrorKind::Config, "unknown gradcheck loss");
}

}  // namespace

GradcheckReport finite_difference_check(const TapedFunction& f, const std::vector<Tensor>& inputs,
                                        double step) {
    require(step > 0.0, ErrorKind::Precondition, "finite-difference step must be positive");
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) {
        vars.push_back(tape.variable(t));
    }
    const Var out = f(tape, vars);
    const Gradients g = tape.backward(out);
    const std::vector<bool> base = relu_pattern(tape);

    GradcheckReport report;
    report.step = step;
    std::vector<Tensor> probe = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor analytic = g.wrt(vars[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            probe[i][j] = inputs[i][j] + step;
            const Evaluation plus = evaluate(f, probe);
            probe[i][j] = inputs[i][j] - step;
            const Evaluation minus = evaluate(f, probe);
            probe[i][j] = inputs[i][j];
            if (plus.pattern != base || minus.pattern != base) {
                ++report.skipped_kinks;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * step);
            report.max_rel_err = std::max(report.max_rel_err, relative_error(analytic[j], numeric));
            ++report.checked;
        }
    }
    return report;
}

GradcheckReport finite_difference_gradcheck(GradcheckLoss loss, const ModelParams& params,
                                            const Tensor& x1, const Tensor& x2,
                                            const LossConfig& cfg, double step, std::uint64_t seed,
                                            std::size_t max_coords) {
    require(step > 0.0, ErrorKind::Precondition, "finite-difference step must be positive");
    require(params.spec.normalization_gradient == NormalizationGradient::Full,
            ErrorKind::Precondition, "gradcheck needs normalization_gradient = full");
    cfg.validate();

    Tape tape;
    BoundOnline bound;
    const Var out = model_loss(tape, params, x1, x2, loss, cfg, &bound);
    const Gradients g = tape.backward(out);
    const std::vector<bool> base = relu_pattern(tape);
    std::vector<Tensor> analytic;
    for (const Var& v : bound.variables) {
        analytic.push_back(g.wrt(v));
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    const auto tensors = params.trainable();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        for (std::size_t j = 0; j < tensors[i]->size(); ++j) {
            coords.emplace_back(i, j);
        }
    }
    if (coords.size() > max_coords) {
        Rng rng(derive_seed(seed, kGradcheckCoordStream));
        rng.shuffle(std::span<std::pair<std::size_t, std::size_t>>(coords));
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }

    auto eval_at = [&](const ModelParams& p) {
        Tape t;
        const Var v = model_loss(t, p, x1, x2, loss, cfg, nullptr);
        return Evaluation{v.value().item(), relu_pattern(t)};
    };

    GradcheckReport report;
    report.step = step;
    ModelParams probe = params;
    const auto probe_tensors = probe.trainable();
    for (const auto& [i, j] : coords) {
        const double original = (*probe_tensors[i])[j];
        (*probe_tensors[i])[j] = original + step;
        const Evaluation plus = eval_at(probe);
        (*probe_tensors[i])[j] = original - step;
        const Evaluation minus = eval_at(probe);
        (*probe_tensors[i])[j] = original;
        if (plus.pattern != base || minus.pattern != base) {
            ++report.skipped_kinks;
            continue;
        }
        const double numeric = (plus.value - minus.value) / (2.0 * step);
        report.max_rel_err = std::max(report.max_rel_err, relative_error(analytic[i][j], numeric));
        ++report.checked;
    }
    return report;
}

namespace {

Tensor random_positive(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = rng.uniform(0.5, 2.0);
    }
    return t;
}

Var contract(Tape& tape, const Var& out, Rng& rng) {
    if (out.value().rank() == 0) {
        return out;
    }
    return sum(mul(out, tape.constant(random_normal(out.shape(), rng))));
}

}  // namespace

std::vector<NamedGradcheck> primitive_gradchecks(double step, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<NamedGradcheck> out;
    auto check = [&](const std::string& name, std::vector<Tensor> inputs,
                     std::function<Var(std::span<const Var>)> op) {
        Rng weights(rng.next());
        const std::uint64_t wseed = weights.next();
        const TapedFunction f = [op, wseed](Tape& tape, std::span<const Var> v) {
            Rng w(wseed);
            return contract(tape, op(v), w);
        };
        out.push_back({name, finite_difference_check(f, inputs, step)});
    };
    const std::vector<int> labels{0, 2, 1, 2};

    check("matmul", {random_normal({3, 4}, rng), random_normal({4, 2}, rng)},
          [](auto v) { return matmul(v[0], v[1]); });
    check("add_bias", {random_normal({3, 4}, rng), random_normal({4}, rng)},
          [](auto v) { return add_bias(v[0], v[1]); });
    check("add", {random_normal({3, 4}, rng), random_normal({3, 4}, rng)},
          [](auto v) { return add(v[0], v[1]); });
    check("sub", {random_normal({3, 4}, rng), random_normal({3, 4}, rng)},
          [](auto v) { return sub(v[0], v[1]); });
    check("mul", {random_normal({3, 4}, rng), random_normal({3, 4}, rng)},
          [](auto v) { return mul(v[0], v[1]); });
    check("div", {random_normal({3, 4}, rng), random_positive({3, 4}, rng)},
          [](auto v) { return div(v[0], v[1]); });
    check("scale", {random_normal({3, 4}, rng)}, [](auto v) { return scale(v[0], -1.7); });
    check("relu", {random_normal({4, 5}, rng)}, [](auto v) { return relu(v[0]); });
    check("exp", {random_normal({3, 4}, rng)}, [](auto v) { return exp(v[0]); });
    check("log", {random_positive({3, 4}, rng)}, [](auto v) { return log(v[0]); });
    check("l2_normalize", {random_normal({4, 5}, rng)},
          [](auto v) { return l2_normalize(v[0]); });
    check("squared_distance", {random_normal({4, 3}, rng), random_normal({4, 3}, rng)},
          [](auto v) { return squared_distance(v[0], v[1]); });
    check("row_dot", {random_normal({4, 3}, rng), random_normal({4, 3}, rng)},
          [](auto v) { return row_dot(v[0], v[1]); });
    check("scale_rows", {random_normal({4, 3}, rng), random_normal({4}, rng)},
          [](auto v) { return scale_rows(v[0], v[1]); });
    check("sum", {random_normal({3, 4}, rng)}, [](auto v) { return sum(v[0]); });
    check("batch_mean", {random_normal({5}, rng)}, [](auto v) { return batch_mean(v[0]); });
    check("pairwise_squared_distance", {random_normal({5, 3}, rng)},
          [](auto v) { return pairwise_squared_distance(v[0]); });
    check("offdiag_mean", {random_normal({4, 4}, rng)},
          [](auto v) { return offdiag_mean(v[0]); });
    check("softmax_cross_entropy", {random_normal({4, 3}, rng)},
          [labels](auto v) { return softmax_cross_entropy(v[0], labels); });
    check("uniform_loss", {random_normal({6, 4}, rng)},
          [](auto v) { return uniform_loss(l2_normalize(v[0]), 2.0); });
    return out;
}

std::vector<NamedGradcheck> loss_gradchecks(double step, std::uint64_t seed) {
    NetworkSpec spec = small_spec(6, PredictorKind::Linear, NormalizationGradient::Full);
    ModelParams params = init_params(spec, derive_seed(seed, 1));
    perturb_target(params, 0.3, derive_seed(seed, 2));
    // Non-zero biases so that every parameter has a generic gradient.
    perturb_biases(params, 0.1, derive_seed(seed, 3));
    Rng rng(derive_seed(seed, 4));
    const auto [x1, x2] = random_views(8, spec.input_dim, rng);
    LossConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 1.3;
    std::vector<NamedGradcheck> out;
    for (GradcheckLoss l : {GradcheckLoss::Align, GradcheckLoss::Uniform, GradcheckLoss::CrossModel,
                            GradcheckLoss::SymmetrizedCross, GradcheckLoss::Byol,
                            GradcheckLoss::ByolPrime, GradcheckLoss::Raft}) {
        out.push_back({to_string(l), finite_difference_gradcheck(l, params, x1, x2, cfg, step, seed)});
    }
    NetworkSpec mlp_spec = spec;
    mlp_spec.predictor = PredictorKind::Mlp;
    ModelParams mlp = init_params(mlp_spec, derive_seed(seed, 5));
    perturb_target(mlp, 0.3, derive_seed(seed, 6));
    perturb_biases(mlp, 0.1, derive_seed(seed, 7));
    out.push_back({"raft_mlp_predictor",
                   finite_difference_gradcheck(GradcheckLoss::Raft, mlp, x1, x2, cfg, step, seed)});
    return out;
}

// --- reports --------------------------------------------------------------------

std::string to_json(const UpperBoundSweepReport& r) {
    ordered_json j;
    j["trials"] = r.trials;
    j["evaluations"] = r.evaluations;
    j["min_margin"] = r.min_margin;
    j["worst_alpha"] = r.worst_alpha;
    j["worst_beta"] = r.worst_beta;
    j["worst_trial"] = r.worst_trial;
    j["passed"] = r.passed;
    return j.dump(2);
}

std::string to_json(const CorrespondenceTrialsReport& r) {
    ordered_json j;
    j["trials"] = r.trials;
    j["normalization_gradient"] = to_string(r.normalization);
    j["max_theta_dev_filtered"] = r.max_theta_filtered;
    j["max_w_sum_filtered"] = r.max_w_filtered;
    j["control_exceeding"] = r.control_exceeding;
    j["min_theta_dev_unfiltered"] = r.min_theta_unfiltered;
    j["passed"] = r.passed;
    return j.dump(2);
}

std::string to_json(const CorrespondenceReport& r) {
    ordered_json j;
    j["steps"] = r.steps;
    j["optimizer"] = to_string(r.optimizer);
    j["normalization_gradient"] = to_string(r.normalization);
    j["max_theta_dev"] = r.max_theta_dev;
    j["max_w_dev"] = r.max_w_dev;
    j["max_abs_theta"] = r.max_abs_theta;
    j["max_abs_w"] = r.max_abs_w;
    j["linear_growth"] = r.linear_growth;
    j["passed"] = r.passed;
    j["theta_dev"] = r.theta_dev;
    j["w_dev"] = r.w_dev;
    j["target_dev"] = r.target_dev;
    j["grad_theta_dev"] = r.grad_theta_dev;
    j["grad_w_sum"] = r.grad_w_sum;
    return j.dump(2);
}

std::string to_json(const SylvesterReport& r) {
    ordered_json j;
    j["n"] = r.n;
    j["m"] = r.m;
    j["system_dim"] = r.system_dim;
    j["rank"] = r.rank;
    j["null_dim"] = r.null_dim;
    j["nontrivial"] = r.nontrivial;
    j["pivot_tol"] = r.pivot_tol;
    j["a"] = matrix_json(r.a);
    j["b"] = matrix_json(r.b);
    j["ba_inv"] = matrix_json(r.ba_inv);
    return j.dump(2);
}

std::string to_json(const SylvesterSuiteReport& r) {
    ordered_json j;
    j["passed"] = r.passed;
    ordered_json cases = ordered_json::array();
    for (const auto& c : r.cases) {
        cases.push_back({{"name", c.name},
                         {"n", c.n},
                         {"expected_null_dim", c.expected_null_dim},
                         {"null_dim", c.null_dim},
                         {"passed", c.passed}});
    }
    j["cases"] = std::move(cases);
    ordered_json moments = ordered_json::array();
    for (const auto& m : r.moments) {
        moments.push_back({{"name", m.name},
                           {"samples", m.samples},
                           {"max_deviation", m.max_deviation},
                           {"bound", m.bound},
                           {"passed", m.passed}});
    }
    j["moments"] = std::move(moments);
    return j.dump(2);
}

std::string to_json(const TangentialTrickReport& r) {
    ordered_json j;
    j["trials"] = r.trials;
    j["max_deviation_p"] = r.max_deviation_p;
    j["max_deviation_u"] = r.max_deviation_u;
    j["passed"] = r.passed;
    return j.dump(2);
}

std::string to_json(const GradcheckReport& r) {
    ordered_json j;
    j["max_rel_err"] = r.max_rel_err;
    j["checked"] = r.checked;
    j["skipped_kinks"] = r.skipped_kinks;
    j["step"] = r.step;
    return j.dump(2);
}

std::string to_json(const std::vector<NamedGradcheck>& checks, double tolerance) {
    ordered_json j;
    j["tolerance"] = tolerance;
    bool passed = true;
    ordered_json list = ordered_json::array();
    for (const NamedGradcheck& c : checks) {
        ordered_json e;
        e["name"] = c.name;
        e["max_rel_err"] = c.report.max_rel_err;
        e["checked"] = c.report.checked;
        e["skipped_kinks"] = c.report.skipped_kinks;
        e["step"] = c.report.step;
        list.push_back(e);
        passed = passed && c.report.max_rel_err <= tolerance && c.report.checked > 0;
    }
    j["checks"] = list;
    j["passed"] = passed;
    return j.dump(2);
}

std::string to_string(GradcheckLoss loss) {
    switch (loss) {
        case GradcheckLoss::Align: return "align";
        case GradcheckLoss::Uniform: return "uniform";
        case GradcheckLoss::CrossModel: return "cross_model";
        case GradcheckLoss::SymmetrizedCross: return "symmetrized_cross_model";
        case GradcheckLoss::Byol: return "byol";
        case GradcheckLoss::ByolPrime: return "byol_prime";
        case GradcheckLoss::Raft: return "raft";
    }
    return "?";
}

GradcheckLoss gradcheck_loss_from_string(const std::string& s) {
    for (GradcheckLoss l : {GradcheckLoss::Align, GradcheckLoss::Uniform, GradcheckLoss::CrossModel,
                            GradcheckLoss::SymmetrizedCross, GradcheckLoss::Byol,
                            GradcheckLoss::ByolPrime, GradcheckLoss::Raft}) {
        if (to_string(l) == s) {
            return l;
        }
    }
    fail(ErrorKind::Config, "loss: unknown value '" + s +
                                "' (expected align, uniform, cross_model, "
                                "symmetrized_cross_model, byol, byol_prime, raft)");
}

}  // namespace raftlab
