#include <cmath>

#include "helpers.hpp"
#include "raftlab/error.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/model.hpp"
#include "raftlab/verify.hpp"

using namespace raftlab;
using testutil::mat;

namespace {

struct Fixture {
    Tape tape;
    Var e1 = tape.constant(mat(1, 2, {1, 0}));
    Var e2 = tape.constant(mat(1, 2, {0, 1}));
};

double value(const Var& v) { return v.value().item(); }

ViewPair random_pair(Tape& tape, Rng& rng, std::size_t b, std::size_t d) {
    auto u = [&] { return tape.constant(testutil::unit_rows(testutil::normal({b, d}, rng))); };
    return ViewPair{u(), u(), u(), u()};
}

}  // namespace

TEST_CASE("align loss") {
    Fixture f;
    CHECK(value(align_loss(f.e1, f.e1)) == 0.0);
    CHECK(value(align_loss(f.e1, f.e2)) == doctest::Approx(2.0));
    const Var minus = f.tape.constant(mat(1, 2, {-1, 0}));
    CHECK(value(align_loss(f.e1, minus)) == doctest::Approx(4.0));
}

TEST_CASE("uniform loss") {
    Tape tape;
    CHECK(value(uniform_loss(tape.constant(mat(3, 2, {1, 0, 1, 0, 1, 0})), 2.0)) == 0.0);
    CHECK(value(uniform_loss(tape.constant(mat(2, 2, {1, 0, -1, 0})), 2.0)) ==
          doctest::Approx(-8.0).epsilon(1e-14));
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Var z = tape.constant(testutil::unit_rows(testutil::normal({5, 3}, rng)));
        const double u = value(uniform_loss(z, 2.0));
        CHECK(u <= 0.0);
        CHECK(u >= -8.0);
    }
}

TEST_CASE("cross-model loss") {
    Fixture f;
    CHECK(value(cross_model_loss(f.e1, f.e1)) == 0.0);
    CHECK(value(cross_model_loss(f.e1, f.e2)) == doctest::Approx(2.0));
    CHECK(value(cross_model_loss(f.e2, f.e1)) == value(cross_model_loss(f.e1, f.e2)));
}

TEST_CASE("symmetrized cross-model loss") {
    Fixture f;
    CHECK(value(symmetrized_cross_model({f.e1, f.e2, f.e1, f.e2})) == 0.0);
    CHECK(value(symmetrized_cross_model({f.e1, f.e2, f.e2, f.e2})) == doctest::Approx(1.0));
    CHECK(value(symmetrized_cross_model({f.e1, f.e1, f.e2, f.e2})) ==
          value(cross_model_loss(f.e1, f.e2)));
}

TEST_CASE("byol loss") {
    Fixture f;
    CHECK(value(byol_loss({f.e1, f.e2, f.e1, f.e1}, false)) == 0.0);
    CHECK(value(byol_loss({f.e1, f.e2, f.e1, f.e2}, false)) == doctest::Approx(2.0));
    Rng rng(2);
    const ViewPair v = random_pair(f.tape, rng, 6, 4);
    const Tensor dots = row_dot(v.p1, v.zbar2).value();
    double mean = 0.0;
    for (double d : dots.values()) mean += 2.0 - 2.0 * d;
    CHECK(value(byol_loss(v, false)) == doctest::Approx(mean / 6.0).epsilon(1e-13));
}

TEST_CASE("byol prime and raft arithmetic") {
    Fixture f;
    LossConfig c;
    // align 2 and cross 2
    const ViewPair v{f.e1, f.e2, f.e2, f.e1};
    c.objective = Objective::ByolPrime;
    CHECK(value(byol_prime_loss(c, v)) == doctest::Approx(4.0));
    LossConfig scaled = c;
    scaled.alpha = 3.0;
    scaled.beta = 3.0;
    CHECK(value(byol_prime_loss(scaled, v)) == doctest::Approx(12.0));
    c.objective = Objective::Raft;
    CHECK(value(raft_loss(c, v)) == doctest::Approx(0.0));
    // align 0 and cross 2
    const ViewPair w{f.e1, f.e1, f.e2, f.e2};
    CHECK(value(raft_loss(c, w)) == doctest::Approx(-2.0));
    const ViewPair same{f.e1, f.e1, f.e1, f.e1};
    CHECK(value(byol_prime_loss(c, same)) == 0.0);
    CHECK(value(raft_loss(c, same)) == 0.0);
}

TEST_CASE("raft equals byol prime minus twice the weighted cross term") {
    Tape tape;
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const ViewPair v = random_pair(tape, rng, 5, 4);
        LossConfig c;
        c.alpha = 0.5 + rng.uniform();
        c.beta = 0.5 + rng.uniform();
        const double cross = value(symmetrized_cross_model(v));
        CHECK(value(raft_loss(c, v)) ==
              doctest::Approx(value(byol_prime_loss(c, v)) - 2.0 * c.beta * cross).epsilon(1e-13));
        c.objective = Objective::ByolPrime;
        CHECK(value(total_loss(c, v).total) == value(byol_prime_loss(c, v)));
    }
}

TEST_CASE("raft loss stays above -4 beta") {
    Tape tape;
    Rng rng(4);
    LossConfig c;
    c.beta = 2.5;
    for (int trial = 0; trial < 50; ++trial) {
        CHECK(value(raft_loss(c, random_pair(tape, rng, 4, 3))) >= -4.0 * c.beta);
    }
}

TEST_CASE("tangential trick") {
    Fixture f;
    CHECK(value(tangential_cross_model_trick(f.e1, f.e1)) == 0.0);
    try {
        tangential_cross_model_trick(f.e1, f.e2);
        FAIL("orthogonal rows accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NearOrthogonal);
    }
    Tape tape;
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor pt = testutil::unit_rows(testutil::normal({4, 5}, rng));
        Tensor zt = pt;
        for (double& x : zt.values()) x += 0.3 * rng.normal();
        const Var p = tape.variable(pt);
        const Var zbar = tape.constant(testutil::unit_rows(zt));
        const Tensor g = tape.backward(tangential_cross_model_trick(p, zbar)).wrt(p);
        for (std::size_t r = 0; r < 4; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < 5; ++c) dot += g.at(r, c) * pt.at(r, c);
            CHECK(std::abs(dot) <= 1e-10);
        }
    }
}

TEST_CASE("tangential trick matches the filtered gradient") {
    TangentialTrickConfig c;
    c.trials = 100;
    const TangentialTrickReport r = tangential_trick_trials(c);
    CHECK(r.max_deviation_p <= 1e-10);
    CHECK(r.max_deviation_u <= 1e-10);
    CHECK(r.passed);
}

TEST_CASE("gradient filter leaves only tangential representation gradients") {
    NetworkSpec s;
    s.input_dim = 5;
    s.backbone_hidden = {8};
    s.representation_dim = 6;
    s.projector_hidden = 8;
    s.projection_dim = 4;
    s.normalization_gradient = NormalizationGradient::RadialPass;
    const ModelParams params = init_params(s, 3);
    Rng rng(6);
    Tape tape;
    const BoundOnline bound = bind_online(tape, params);
    const Var x1 = tape.constant(testutil::normal({6, 5}, rng));
    const Var x2 = tape.constant(testutil::normal({6, 5}, rng));
    const OnlineOutput o1 = forward_online(bound, s, x1, {true});
    const OnlineOutput o2 = forward_online(bound, s, x2, {true});
    LossConfig c;
    c.tangential = TangentialMode::GradientFilter;
    const ViewPair v{o1.p, o2.p, forward_target(tape, params, x1), forward_target(tape, params, x2)};
    const Gradients g = tape.backward(total_loss(c, v).total);
    for (const Var* rep : {&o1.p, &o2.p}) {
        // Gradient leaving the filter, i.e. arriving at the normalized rows.
        const Var before(&tape, tape.inputs(rep->id())[0]);
        const Tensor gr = g.wrt(before);
        const Tensor& z = rep->value();
        for (std::size_t r = 0; r < z.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t k = 0; k < z.cols(); ++k) dot += gr.at(r, k) * z.at(r, k);
            CHECK(std::abs(dot) <= 1e-12);
        }
    }
}

TEST_CASE("composed losses match central differences") {
    for (const auto& c : loss_gradchecks(1e-5, 3)) {
        INFO(c.name);
        CHECK(c.report.checked > 0);
        CHECK(c.report.max_rel_err <= 1e-4);
    }
}

TEST_CASE("config validation") {
    LossConfig c;
    c.alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(objective_from_string(to_string(Objective::ByolPrime)) == Objective::ByolPrime);
    CHECK_THROWS_AS(objective_from_string("simclr"), Error);
}
