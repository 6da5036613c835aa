#include <cmath>

#include "helpers.hpp"
#include "raftlab/autodiff.hpp"
#include "raftlab/error.hpp"
#include "raftlab/optim.hpp"
#include "raftlab/verify.hpp"

using namespace raftlab;
using testutil::mat;

TEST_CASE("matmul values and shape checks") {
    Tape tape;
    const Var eye = tape.constant(Tensor::identity(2));
    const Var m = tape.constant(mat(2, 2, {1, 2, 3, 4}));
    CHECK(matmul(eye, m).value() == mat(2, 2, {1, 2, 3, 4}));
    const Var a = tape.constant(mat(1, 2, {1, 2}));
    const Var b = tape.constant(mat(2, 1, {3, 4}));
    CHECK(matmul(a, b).value().item() == 11.0);
    CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("relu forward and subgradient") {
    Tape tape;
    CHECK(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value() == Tensor::vector({0, 0, 2}));
    CHECK(relu(tape.constant(Tensor::vector({1, 2}))).value() == Tensor::vector({1, 2}));
    const Var a = tape.variable(Tensor::vector({-1, 2}));
    CHECK(tape.backward(sum(relu(a))).wrt(a) == Tensor::vector({0, 1}));
}

TEST_CASE("l2_normalize rows") {
    Tape tape;
    CHECK(l2_normalize(tape.constant(mat(1, 2, {1, 0}))).value() == mat(1, 2, {1, 0}));
    const Tensor z = l2_normalize(tape.constant(mat(1, 2, {3, 4}))).value();
    CHECK(z[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(z[1] == doctest::Approx(0.8).epsilon(1e-15));
    try {
        l2_normalize(tape.constant(mat(1, 2, {0, 0})));
        FAIL("zero row accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateRepresentation);
    }
}

TEST_CASE("squared distance on the sphere") {
    Tape tape;
    const Var a = tape.constant(mat(1, 2, {1, 0}));
    const Var b = tape.constant(mat(1, 2, {0, 1}));
    CHECK(squared_distance(a, a).value()[0] == 0.0);
    CHECK(squared_distance(a, b).value()[0] == doctest::Approx(2.0));
    const Var u = tape.constant(mat(1, 3, {0.6, 0.0, 0.8}));
    const Var minus_u = tape.constant(mat(1, 3, {-0.6, -0.0, -0.8}));
    CHECK(squared_distance(u, minus_u).value()[0] == doctest::Approx(4.0));
}

TEST_CASE("batch_mean") {
    Tape tape;
    CHECK(batch_mean(tape.constant(Tensor::vector({2, 4}))).value().item() == 3.0);
    CHECK(batch_mean(tape.constant(Tensor::vector({7.5}))).value().item() == 7.5);
    try {
        batch_mean(tape.constant(Tensor::vector({})));
        FAIL("empty batch accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyBatch);
    }
}

TEST_CASE("exp and log") {
    Tape tape;
    CHECK(exp(tape.constant(Tensor::vector({0.0}))).value()[0] == 1.0);
    CHECK(log(tape.constant(Tensor::vector({1.0}))).value()[0] == 0.0);
    CHECK(log(tape.constant(Tensor::vector({std::exp(-8.0)}))).value()[0] ==
          doctest::Approx(-8.0).epsilon(1e-14));
}

TEST_CASE("stop_gradient freezes its factor") {
    Tape tape;
    const Var a = tape.variable(Tensor::vector({2.0}));
    CHECK(tape.backward(sum(stop_gradient(a))).wrt(a)[0] == 0.0);
    CHECK(tape.backward(sum(mul(a, stop_gradient(a)))).wrt(a)[0] == 2.0);
    CHECK(stop_gradient(a).value() == a.value());
}

TEST_CASE("tangential_filter projection") {
    CHECK(tangential_filter(mat(1, 2, {1, 1}), mat(1, 2, {1, 0})) == mat(1, 2, {0, 1}));
    CHECK(tangential_filter(mat(1, 2, {3, 0}), mat(1, 2, {1, 0})).max_abs() == 0.0);
    CHECK(tangential_filter(mat(1, 2, {0, 5}), mat(1, 2, {1, 0})) == mat(1, 2, {0, 5}));
}

TEST_CASE("backward of linear and quadratic losses") {
    Tape tape;
    const Var a = tape.variable(Tensor::vector({1, 2, 3}));
    CHECK(tape.backward(sum(a)).wrt(a) == Tensor::vector({1, 1, 1}));
    const Var b = tape.variable(Tensor::vector({1, 2}));
    CHECK(tape.backward(sum(mul(b, b))).wrt(b) == Tensor::vector({2, 4}));
}

TEST_CASE("backward is repeatable") {
    Tape tape;
    const Var a = tape.variable(Tensor::vector({0.3, -1.2}));
    const Var loss = sum(exp(a));
    CHECK(tape.backward(loss).wrt(a) == tape.backward(loss).wrt(a));
}

TEST_CASE("every primitive matches central differences") {
    for (const auto& c : primitive_gradchecks(1e-5, 7)) {
        INFO(c.name);
        CHECK(c.report.checked > 0);
        CHECK(c.report.max_rel_err <= 1e-4);
    }
}

TEST_CASE("finite difference step must be positive") {
    const TapedFunction f = [](Tape&, std::span<const Var> in) { return sum(in[0]); };
    CHECK_THROWS_AS(finite_difference_check(f, {Tensor::vector({1.0})}, 0.0), Error);
}

TEST_CASE("sgd and adam steps") {
    Tensor p = Tensor::vector({1.0});
    Tensor* ps[] = {&p};
    Optimizer sgd(OptimizerKind::Sgd);
    sgd.step(ps, std::vector<Tensor>{Tensor::vector({2.0})}, 0.1);
    CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
    sgd.step(ps, std::vector<Tensor>{Tensor::vector({0.0})}, 0.1);
    CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));

    Tensor q = Tensor::vector({1.0});
    Tensor* qs[] = {&q};
    Optimizer adam(OptimizerKind::Adam);
    adam.step(qs, std::vector<Tensor>{Tensor::vector({3.0})}, 0.01);
    // Bias-corrected first step is lr * g / (|g| + eps).
    CHECK(1.0 - q[0] == doctest::Approx(0.01).epsilon(1e-6));
}
