// Randomized invariants. Each case draws many inputs from a fixed seed.

#include <cmath>

#include "helpers.hpp"
#include "raftlab/autodiff.hpp"
#include "raftlab/data.hpp"
#include "raftlab/linalg.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/model.hpp"
#include "raftlab/train.hpp"

using namespace raftlab;

namespace {

Tensor random_unit(Rng& rng, std::size_t b, std::size_t d) {
    return testutil::unit_rows(testutil::normal({b, d}, rng));
}

std::size_t small_int(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

}  // namespace

TEST_CASE("normalized rows have unit norm") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor x = testutil::normal({small_int(rng, 1, 6), small_int(rng, 1, 9)}, rng);
        for (double& v : x.values()) v *= std::pow(10.0, rng.uniform(-6, 6));
        Tape tape;
        const Tensor z = l2_normalize(tape.constant(x)).value();
        for (std::size_t r = 0; r < z.rows(); ++r) {
            double n = 0.0;
            for (double v : z.row(r)) n += v * v;
            CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("tangential filter output is orthogonal") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = small_int(rng, 1, 6), d = small_int(rng, 2, 9);
        const Tensor z = random_unit(rng, b, d);
        const Tensor out = tangential_filter(testutil::normal({b, d}, rng), z);
        for (std::size_t r = 0; r < b; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += out.at(r, c) * z.at(r, c);
            CHECK(std::abs(dot) <= 1e-10);
        }
    }
}

TEST_CASE("stop_gradient is exact") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        const Var a = tape.variable(testutil::normal({3, 4}, rng));
        const Var s = stop_gradient(a);
        CHECK(s.value() == a.value());
        const Tensor g = tape.backward(sum(mul(exp(s), s))).wrt(a);
        CHECK(g.max_abs() == 0.0);
    }
}

TEST_CASE("loss ranges, symmetry, homogeneity and the cosine identity") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = small_int(rng, 2, 8), d = small_int(rng, 2, 6);
        Tape tape;
        const Var u = tape.constant(random_unit(rng, b, d));
        const Var v = tape.constant(random_unit(rng, b, d));
        const double al = align_loss(u, v).value().item();
        const double cr = cross_model_loss(u, v).value().item();
        CHECK(al >= 0.0);
        CHECK(al <= 4.0);
        CHECK(cr == cross_model_loss(v, u).value().item());
        const double t = rng.uniform(0.5, 4.0);
        const double un = uniform_loss(u, t).value().item();
        CHECK(un <= 0.0);
        CHECK(un >= -4.0 * t);

        const Tensor dist = squared_distance(u, v).value();
        const Tensor dot = row_dot(u, v).value();
        for (std::size_t r = 0; r < b; ++r) CHECK(std::abs(dist[r] - (2.0 - 2.0 * dot[r])) <= 1e-12);

        const ViewPair pair{u, v, tape.constant(random_unit(rng, b, d)), tape.constant(random_unit(rng, b, d))};
        LossConfig c;
        c.objective = Objective::ByolPrime;
        c.alpha = rng.uniform(0.1, 10.0);
        c.beta = rng.uniform(0.1, 10.0);
        const double scale = rng.uniform(0.1, 10.0);
        LossConfig scaled = c;
        scaled.alpha *= scale;
        scaled.beta *= scale;
        const double base = byol_prime_loss(c, pair).value().item();
        CHECK(std::abs(byol_prime_loss(scaled, pair).value().item() - scale * base) <= 1e-12 * std::max(1.0, std::abs(scale * base)));
    }
}

TEST_CASE("ema converges geometrically") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor theta = testutil::normal({4, 3}, rng);
        Tensor xi = testutil::normal({4, 3}, rng);
        const double tau = rng.uniform(0.5, 0.999);
        const double d0 = std::sqrt([&] {
            double s = 0.0;
            for (std::size_t i = 0; i < xi.size(); ++i) s += (xi[i] - theta[i]) * (xi[i] - theta[i]);
            return s;
        }());
        const int k = 1 + static_cast<int>(rng.below(50));
        for (int i = 0; i < k; ++i) ema_update(xi, theta, tau);
        double s = 0.0;
        for (std::size_t i = 0; i < xi.size(); ++i) s += (xi[i] - theta[i]) * (xi[i] - theta[i]);
        CHECK(std::abs(std::sqrt(s) - std::pow(tau, k) * d0) <= 1e-10);
    }
}

TEST_CASE("augmentation moments are symmetric positive semi-definite") {
    Rng rng(6);
    const Dataset ds = make_blobs(BlobsSpec{});
    for (int trial = 0; trial < 5; ++trial) {
        ViewAugmentation v{rng.uniform(0, 0.3), 0.8, 1.2, rng.uniform(0, 0.3)};
        const AugmentationMoments m = estimate_aug_moments(ds, AugmentationSpec{v, v, rng.next()}, 500, rng.next());
        CHECK(max_abs_diff(m.a, transpose(m.a)) <= 1e-10);
        for (int probe = 0; probe < 20; ++probe) {
            const Tensor x = testutil::normal({8, 1}, rng);
            CHECK(matmul_values(transpose(x), matmul_values(m.a, x)).item() >= -1e-10);
        }
    }
}

TEST_CASE("the two views use independent streams") {
    const Dataset ds = make_blobs(BlobsSpec{});
    const ViewAugmentation v{0.2, 1.0, 1.0, 0.0};
    const PositiveBatch b = sample_positive_batch(ds, AugmentationSpec{v, v, 3}, 32, 0);
    // Same distribution, different draws: the noise added to each view differs.
    CHECK(!(b.x1 == b.x2));
}

TEST_CASE("metrics are logged at multiples of log_every only") {
    TrainConfig c;
    c.steps = 23;
    c.batch_size = 8;
    c.log_every = 4;
    c.network.backbone_hidden = {8};
    BlobsSpec s;
    s.per_class = 10;
    const TrainResult r = train_run(c, make_blobs(s));
    std::vector<std::uint64_t> steps;
    for (const auto& m : r.log) steps.push_back(m.step);
    CHECK(steps == std::vector<std::uint64_t>{4, 8, 12, 16, 20});
}

TEST_CASE("the target never receives gradient during training") {
    TrainConfig c;
    c.steps = 1;
    c.network.backbone_hidden = {8};
    TrainState state = make_train_state(c);
    const ModelParams before = state.params;
    const Dataset ds = make_blobs(BlobsSpec{});
    const PositiveBatch batch = sample_positive_batch(ds, c.augmentation(), 16, 0);
    // With tau = 1 the EMA is frozen, so any change to the target would have
    // come from a gradient step.
    c.tau = Schedule::constant_value(1.0);
    train_step(state, c, batch, 1);
    for (std::size_t i = 0; i < before.target_tensors().size(); ++i) {
        CHECK(*state.params.target_tensors()[i] == *before.target_tensors()[i]);
    }
    CHECK(checksum(state.params) != checksum(before));
}
