#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "raftlab/data.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/model.hpp"
#include "raftlab/optim.hpp"

namespace raftlab {

// --- upper bound --------------------------------------------------------------

struct UpperBoundResult {
    double byol = 0.0;
    double byol_prime = 0.0;
    /// (1/alpha + 1/beta) * byol_prime
    double bound = 0.0;
    double margin = 0.0;
};

/// Without symmetrization the BYOL side is |p1 - zbar2|^2 and the cross-model
/// term of BYOL' uses view 2 only.
UpperBoundResult check_upper_bound(double alpha, double beta, const Tensor& p1, const Tensor& p2,
                                   const Tensor& zbar1, const Tensor& zbar2, bool symmetrize = true);

/// Same, with representations produced by one forward pass of `params`.
UpperBoundResult check_upper_bound(double alpha, double beta, const ModelParams& params,
                                   const Tensor& x1, const Tensor& x2, bool symmetrize = true);

struct UpperBoundSweepConfig {
    std::size_t trials = 1000;
    std::vector<double> grid{0.1, 0.5, 1.0, 2.0, 10.0};
    std::size_t batch_size = 16;
    std::size_t input_dim = 8;
    /// Std of the noise added to the target copy so that zbar differs from z.
    double target_noise = 0.3;
    bool symmetrize = true;
    double tolerance = 1e-9;
    std::uint64_t seed = 0;
};

struct UpperBoundSweepReport {
    std::size_t trials = 0;
    std::size_t evaluations = 0;
    double min_margin = 0.0;
    double worst_alpha = 0.0;
    double worst_beta = 0.0;
    std::size_t worst_trial = 0;
    bool passed = false;
};

/// Random states cycle through MLP, linear and identity predictors.
UpperBoundSweepReport upper_bound_sweep(const UpperBoundSweepConfig& cfg);

// --- BYOL' / RAFT correspondence ---------------------------------------------

/// Copy of params with the linear predictor negated.
ModelParams mirror_predictor(const ModelParams& params);

/// Adds N(0, noise^2) to every target parameter.
void perturb_target(ModelParams& params, double noise, std::uint64_t seed);
/// Adds N(0, noise^2) to every online bias.
void perturb_biases(ModelParams& params, double noise, std::uint64_t seed);

struct GradientDeviation {
    /// max |g_theta(BYOL', W) - g_theta(RAFT, -W)|
    double theta = 0.0;
    /// max |g_W(BYOL', W) + g_W(RAFT, -W)|
    double w = 0.0;
};

/// `filter` selects the tangential gradient filter on both runs.
GradientDeviation gradient_correspondence_check(const ModelParams& params, const Tensor& x1,
                                                const Tensor& x2, double alpha, double beta,
                                                bool filter);

struct CorrespondenceTrialsConfig {
    std::size_t trials = 100;
    std::size_t batch_size = 32;
    std::size_t input_dim = 8;
    double alpha = 1.0;
    double beta = 1.0;
    double target_noise = 0.3;
    double tolerance = 1e-10;
    double control_threshold = 1e-4;
    /// Fraction of trials whose unfiltered deviation must exceed the threshold.
    double control_fraction = 0.95;
    PredictorKind predictor = PredictorKind::Linear;
    NormalizationGradient normalization = NormalizationGradient::RadialPass;
    std::uint64_t seed = 0;
};

struct CorrespondenceTrialsReport {
    std::size_t trials = 0;
    double max_theta_filtered = 0.0;
    double max_w_filtered = 0.0;
    std::size_t control_exceeding = 0;
    double min_theta_unfiltered = 0.0;
    NormalizationGradient normalization = NormalizationGradient::RadialPass;
    bool passed = false;
};

CorrespondenceTrialsReport gradient_correspondence_trials(const CorrespondenceTrialsConfig& cfg);

struct TrajectoryConfig {
    NetworkSpec network = [] {
        NetworkSpec s;
        s.normalization_gradient = NormalizationGradient::RadialPass;
        return s;
    }();
    /// Full-batch: every step uses the whole dataset.
    std::size_t samples = 64;
    std::uint64_t steps = 200;
    double lr = 1e-2;
    double tau = 0.996;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    double alpha = 1.0;
    double beta = 1.0;
    ViewAugmentation view1{0.1, 0.8, 1.2, 0.0};
    ViewAugmentation view2{0.1, 0.8, 1.2, 0.0};
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
};

struct CorrespondenceReport {
    std::uint64_t steps = 0;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    NormalizationGradient normalization = NormalizationGradient::RadialPass;
    /// Entry k-1 is measured after step k.
    std::vector<double> theta_dev;
    std::vector<double> w_dev;
    std::vector<double> target_dev;
    /// Filtered gradient deviations at step k (before the update).
    std::vector<double> grad_theta_dev;
    std::vector<double> grad_w_sum;
    double max_theta_dev = 0.0;
    double max_w_dev = 0.0;
    double max_abs_theta = 0.0;
    double max_abs_w = 0.0;
    bool linear_growth = true;
    bool passed = false;
};

/// Runs BYOL' from (theta, W) and RAFT from (theta, -W) in lockstep on the
/// same batches with the gradient filter on.
CorrespondenceReport trajectory_correspondence_experiment(const TrajectoryConfig& cfg);

/// dev(k) <= 4 dev(k/2) + floor for every even k.
bool grows_at_most_linearly(std::span<const double> series, double floor);

void write_deviation_csv(const CorrespondenceReport& report, const std::filesystem::path& path);

// --- Sylvester fixed points -----------------------------------------------------

inline constexpr std::size_t kSylvesterMaxDim = 12;

struct SylvesterReport {
    Tensor a;
    Tensor b;
    Tensor ba_inv;
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t system_dim = 0;
    std::size_t rank = 0;
    std::size_t null_dim = 0;
    bool nontrivial = false;
    double pivot_tol = 0.0;
};

/// Null space of I_m (x) W - (B A^-1)^T (x) I_n, the vectorized form of
/// W theta = theta B A^-1 with W [n x n] and A, B [m x m].
SylvesterReport sylvester_null_space(const Tensor& w, const Tensor& a, const Tensor& b,
                                     double pivot_tol = 1e-10);

struct SylvesterCase {
    std::string name;
    std::size_t n = 0;
    std::size_t expected_null_dim = 0;
    std::size_t null_dim = 0;
    bool passed = false;
};

struct MomentCheck {
    std::string name;
    std::size_t samples = 0;
    /// max |A - reference| entrywise, reference being B or I.
    double max_deviation = 0.0;
    double bound = 0.0;
    bool passed = false;
};

struct SylvesterSuiteConfig {
    std::size_t max_n = 8;
    /// Random diagonal W and B A^-1 with small integer entries per n.
    std::size_t eigen_trials = 5;
    std::size_t moment_samples = 20000;
    double pivot_tol = 1e-10;
    std::uint64_t seed = 0;
};

struct SylvesterSuiteReport {
    std::vector<SylvesterCase> cases;
    std::vector<MomentCheck> moments;
    bool passed = false;
};

/// Analytic cases W = I, W = 2I, W = diag(1..n) with B A^-1 = I for every
/// n <= max_n, diagonal cases where the null dimension is the number of
/// matching eigenvalue pairs, and Monte-Carlo moment checks (identity views
/// give A = B; standard normal data gives A = I) within 5 / sqrt(samples).
SylvesterSuiteReport sylvester_suite(const SylvesterSuiteConfig& cfg);

// --- tangential trick -----------------------------------------------------------

struct TangentialTrickConfig {
    std::size_t trials = 100;
    std::size_t batch_size = 16;
    std::size_t dim = 8;
    double tolerance = 1e-10;
    std::uint64_t seed = 0;
};

struct TangentialTrickReport {
    std::size_t trials = 0;
    /// max over trials of max |grad(trick) - grad(filtered plain loss)|,
    /// measured at the unit rows p and at the unnormalized rows u.
    double max_deviation_p = 0.0;
    double max_deviation_u = 0.0;
    bool passed = false;
};

TangentialTrickReport tangential_trick_trials(const TangentialTrickConfig& cfg);

// --- finite differences ---------------------------------------------------------

struct GradcheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    /// Coordinates where a +-step perturbation crossed a ReLU kink.
    std::size_t skipped_kinks = 0;
    double step = 0.0;
};

/// Denominator floor in |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline constexpr double kGradcheckFloor = 1e-6;

using TapedFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Central differences of a scalar function of several tensor inputs.
GradcheckReport finite_difference_check(const TapedFunction& f, const std::vector<Tensor>& inputs,
                                        double step);

enum class GradcheckLoss { Align, Uniform, CrossModel, SymmetrizedCross, Byol, ByolPrime, Raft };

/// Central differences over the online parameters (a random subset of
/// `max_coords` when there are more). Requires the full normalization
/// gradient, since the other modes do not report true derivatives.
GradcheckReport finite_difference_gradcheck(GradcheckLoss loss, const ModelParams& params,
                                            const Tensor& x1, const Tensor& x2,
                                            const LossConfig& cfg, double step,
                                            std::uint64_t seed = 0,
                                            std::size_t max_coords = 10000);

struct NamedGradcheck {
    std::string name;
    GradcheckReport report;
};

/// Every differentiable primitive on random inputs. Non-scalar outputs are
/// contracted with a fixed random tensor so the whole Jacobian is exercised.
std::vector<NamedGradcheck> primitive_gradchecks(double step, std::uint64_t seed);

/// Every GradcheckLoss through a small network with a perturbed target.
std::vector<NamedGradcheck> loss_gradchecks(double step, std::uint64_t seed);

// --- reports --------------------------------------------------------------------

std::string to_json(const UpperBoundSweepReport& r);
std::string to_json(const CorrespondenceTrialsReport& r);
std::string to_json(const CorrespondenceReport& r);
std::string to_json(const SylvesterReport& r);
std::string to_json(const GradcheckReport& r);
std::string to_json(const SylvesterSuiteReport& r);
std::string to_json(const TangentialTrickReport& r);
std::string to_json(const std::vector<NamedGradcheck>& checks, double tolerance);

std::string to_string(GradcheckLoss loss);
GradcheckLoss gradcheck_loss_from_string(const std::string& s);

}  // namespace raftlab
