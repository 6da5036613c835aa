#include <Eigen/Dense>

#include "helpers.hpp"
#include "raftlab/error.hpp"
#include "raftlab/linalg.hpp"
#include "raftlab/verify.hpp"

using namespace raftlab;
using testutil::mat;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
    return m;
}

/// Null dimension of I (x) W - (B A^-1)^T (x) I from an independent LU.
std::size_t eigen_null_dim(const Tensor& w, const Tensor& a, const Tensor& b) {
    const Eigen::MatrixXd W = to_eigen(w);
    const Eigen::MatrixXd C = to_eigen(b) * to_eigen(a).inverse();
    const auto n = W.rows();
    const auto m = C.rows();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * m, n * m);
    for (Eigen::Index i = 0; i < m; ++i) {
        M.block(i * n, i * n, n, n) += W;
        for (Eigen::Index j = 0; j < m; ++j) {
            M.block(i * n, j * n, n, n) -= C(j, i) * Eigen::MatrixXd::Identity(n, n);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    lu.setThreshold(1e-10);
    return static_cast<std::size_t>(M.cols() - lu.rank());
}

}  // namespace

TEST_CASE("upper bound at perfect alignment") {
    const Tensor e1 = mat(1, 2, {1, 0});
    const Tensor e2 = mat(1, 2, {0, 1});
    const UpperBoundResult r = check_upper_bound(1.0, 1.0, e1, e1, e2, e2);
    CHECK(r.byol == doctest::Approx(2.0));
    CHECK(r.bound == doctest::Approx(4.0));
    CHECK(r.margin == doctest::Approx(2.0));
    const UpperBoundResult z = check_upper_bound(1.0, 1.0, e1, e1, e1, e1);
    CHECK(z.margin == 0.0);
    CHECK(z.byol == 0.0);
}

TEST_CASE("upper bound sweep, both symmetrization modes") {
    for (bool sym : {true, false}) {
        UpperBoundSweepConfig c;
        c.trials = 200;
        c.symmetrize = sym;
        const UpperBoundSweepReport r = upper_bound_sweep(c);
        CHECK(r.evaluations == 200 * 25);
        CHECK(r.min_margin >= -1e-9);
        CHECK(r.passed);
    }
}

TEST_CASE("mirrored gradients agree with the filter and differ without it") {
    CorrespondenceTrialsConfig c;
    c.trials = 20;
    const CorrespondenceTrialsReport r = gradient_correspondence_trials(c);
    CHECK(r.max_theta_filtered <= 1e-10);
    CHECK(r.max_w_filtered <= 1e-10);
    CHECK(r.control_exceeding >= 19);
    CHECK(r.passed);
}

TEST_CASE("zero predictor is its own mirror") {
    NetworkSpec s;
    s.normalization_gradient = NormalizationGradient::RadialPass;
    ModelParams p = init_params(s, 4);
    for (double& v : p.predictor_matrix().values()) v = 0.0;
    Rng rng(2);
    const Tensor x1 = testutil::normal({8, 8}, rng);
    const Tensor x2 = testutil::normal({8, 8}, rng);
    // With W = 0 every p row is degenerate, so only the W-gradient is defined;
    // check instead at a tiny W that both deviations vanish.
    for (double& v : p.predictor_matrix().values()) v = 1e-3 * rng.normal();
    const GradientDeviation d = gradient_correspondence_check(p, x1, x2, 1.0, 1.0, true);
    CHECK(d.theta <= 1e-10);
    CHECK(d.w <= 1e-10);
}

TEST_CASE("trajectory correspondence") {
    TrajectoryConfig c;
    c.steps = 50;
    const CorrespondenceReport r = trajectory_correspondence_experiment(c);
    CHECK(r.theta_dev.size() == 50);
    CHECK(r.max_theta_dev <= 1e-6 * r.max_abs_theta);
    CHECK(r.max_w_dev <= 1e-6 * r.max_abs_w);
    CHECK(r.passed);

    c.steps = 0;
    const CorrespondenceReport none = trajectory_correspondence_experiment(c);
    CHECK(none.max_theta_dev == 0.0);
    CHECK(none.max_w_dev == 0.0);

    c.network.predictor = PredictorKind::Mlp;
    try {
        trajectory_correspondence_experiment(c);
        FAIL("mlp predictor accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Precondition);
        CHECK(std::string(e.what()).find("condition ii") != std::string::npos);
    }
}

TEST_CASE("linear growth test") {
    const std::vector<double> linear{1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(grows_at_most_linearly(linear, 0.0));
    const std::vector<double> exploding{1, 10, 100, 1000, 1e4, 1e5, 1e6, 1e7};
    CHECK_FALSE(grows_at_most_linearly(exploding, 0.0));
}

TEST_CASE("sylvester analytic cases") {
    const Tensor eye2 = Tensor::identity(2);
    CHECK(sylvester_null_space(eye2, eye2, eye2).null_dim == 4);
    CHECK(sylvester_null_space(mat(2, 2, {2, 0, 0, 2}), eye2, eye2).null_dim == 0);
    CHECK(sylvester_null_space(mat(2, 2, {1, 0, 0, 2}), eye2, eye2).null_dim == 2);
    const Tensor big = Tensor::identity(kSylvesterMaxDim + 1);
    CHECK_THROWS_AS(sylvester_null_space(big, eye2, eye2), Error);
    const SylvesterSuiteReport suite = sylvester_suite(SylvesterSuiteConfig{});
    CHECK(suite.passed);
}

TEST_CASE("sylvester rank agrees with a full-pivot LU") {
    Rng rng(8);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 1 + rng.below(4);
        const std::size_t m = 1 + rng.below(4);
        // Integer spectra make exact coincidences likely.
        Tensor w(Shape{n, n}), a(Shape{m, m}), b(Shape{m, m});
        for (std::size_t i = 0; i < n; ++i) w.at(i, i) = static_cast<double>(1 + rng.below(3));
        for (std::size_t i = 0; i < m; ++i) {
            a.at(i, i) = 1.0 + rng.uniform();
            b.at(i, i) = a.at(i, i) * static_cast<double>(1 + rng.below(3));
        }
        // Random similarity on W keeps its eigenvalues.
        Tensor q = testutil::normal({n, n}, rng);
        for (std::size_t i = 0; i < n; ++i) q.at(i, i) += 3.0;
        const Tensor wq = matmul_values(matmul_values(q, w), invert(q, 1e-12));
        INFO("trial " << trial);
        CHECK(sylvester_null_space(wq, a, b, 1e-8).null_dim == eigen_null_dim(wq, a, b));
    }
}

TEST_CASE("kron and vec") {
    const Tensor a = mat(2, 2, {1, 2, 3, 4});
    const Tensor k = kron(Tensor::identity(2), a);
    CHECK(k.at(0, 0) == 1.0);
    CHECK(k.at(3, 3) == 4.0);
    CHECK(k.at(0, 2) == 0.0);
    CHECK(vec(a) == Tensor::vector({1, 3, 2, 4}));
}

TEST_CASE("gradcheck requires the exact normalization gradient") {
    NetworkSpec s;
    s.normalization_gradient = NormalizationGradient::RadialPass;
    const ModelParams p = init_params(s, 0);
    Rng rng(1);
    const Tensor x = testutil::normal({4, 8}, rng);
    CHECK_THROWS_AS(finite_difference_gradcheck(GradcheckLoss::Align, p, x, x, LossConfig{}, 1e-5), Error);
}
