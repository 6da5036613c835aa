#include <cmath>

#include "helpers.hpp"
#include "raftlab/checkpoint.hpp"
#include "raftlab/error.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/model.hpp"

using namespace raftlab;

namespace {

NetworkSpec small() {
    NetworkSpec s;
    s.input_dim = 5;
    s.backbone_hidden = {7};
    s.representation_dim = 6;
    s.projector_hidden = 9;
    s.projection_dim = 4;
    return s;
}

}  // namespace

TEST_CASE("init is deterministic in the seed") {
    const NetworkSpec s = small();
    CHECK(checksum(init_params(s, 3)) == checksum(init_params(s, 3)));
    CHECK(checksum(init_params(s, 3)) != checksum(init_params(s, 4)));
}

TEST_CASE("identity and mirrored predictor init") {
    NetworkSpec s = small();
    s.predictor_init = PredictorInit::Identity;
    CHECK(init_params(s, 1).predictor_matrix() == Tensor::identity(4));

    s.predictor_init = PredictorInit::Random;
    const Tensor w0 = init_params(s, 1).predictor_matrix();
    s.predictor_init = PredictorInit::Mirrored;
    CHECK(init_params(s, 1).predictor_matrix() == -w0);
}

TEST_CASE("non-linear predictors reject identity or mirrored init") {
    NetworkSpec s = small();
    s.predictor = PredictorKind::Mlp;
    s.predictor_init = PredictorInit::Mirrored;
    CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("identity predictor gives p equal to z") {
    NetworkSpec s = small();
    s.predictor = PredictorKind::Identity;
    Rng rng(2);
    const Representations r = encode(init_params(s, 0), testutil::normal({6, 5}, rng));
    CHECK(r.p == r.z);
}

TEST_CASE("rows are encoded independently of the batch") {
    const ModelParams p = init_params(small(), 5);
    Rng rng(3);
    const Tensor x = testutil::normal({2, 5}, rng);
    const Representations both = encode(p, x);
    for (std::size_t r = 0; r < 2; ++r) {
        Tensor one(Shape{1, 5});
        std::copy(x.row(r).begin(), x.row(r).end(), one.row(0).begin());
        const Representations single = encode(p, one);
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(single.p.at(0, c) == both.p.at(r, c));
            CHECK(single.z.at(0, c) == both.z.at(r, c));
        }
    }
}

TEST_CASE("all-zero weights give a degenerate representation") {
    ModelParams p = init_params(small(), 0);
    for (Tensor* t : p.trainable()) {
        for (double& v : t->values()) v = 0.0;
    }
    Rng rng(1);
    CHECK_THROWS_AS(encode(p, testutil::normal({3, 5}, rng)), Error);
}

TEST_CASE("target equals online at init and representations are unit rows") {
    const ModelParams p = init_params(small(), 9);
    Rng rng(4);
    const Tensor x = testutil::normal({8, 5}, rng);
    const Representations r = encode(p, x);
    const Tensor zbar = encode_target(p, x);
    CHECK(zbar == r.z);
    for (std::size_t i = 0; i < 8; ++i) {
        double n = 0.0;
        for (double v : r.p.row(i)) n += v * v;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
    }
}

TEST_CASE("no gradient reaches the target path") {
    const ModelParams p = init_params(small(), 2);
    Rng rng(5);
    Tape tape;
    const BoundOnline bound = bind_online(tape, p);
    const Var x = tape.constant(testutil::normal({4, 5}, rng));
    const Var zbar = forward_target(tape, p, x);
    const Gradients g = tape.backward(sum(zbar));
    for (const Var& v : bound.variables) {
        CHECK(g.wrt(v).max_abs() == 0.0);
    }
}

TEST_CASE("ema update arithmetic") {
    Tensor xi = Tensor::vector({0.0});
    const Tensor theta = Tensor::vector({1.0});
    Tensor frozen = xi;
    ema_update(frozen, theta, 1.0);
    CHECK(frozen[0] == 0.0);
    Tensor copy = xi;
    ema_update(copy, theta, 0.0);
    CHECK(copy[0] == 1.0);
    ema_update(xi, theta, 0.996);
    CHECK(xi[0] == doctest::Approx(0.004).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip and corruption") {
    for (PredictorKind k : {PredictorKind::Mlp, PredictorKind::Linear, PredictorKind::Identity}) {
        NetworkSpec s = small();
        s.predictor = k;
        const ModelParams p = init_params(s, 11);
        const auto bytes = encode_checkpoint(p);
        const ModelParams back = decode_checkpoint(bytes);
        CHECK(back.spec.predictor == k);
        CHECK(checksum(back) == checksum(p));
        CHECK(encode_checkpoint(back) == bytes);

        auto bad = bytes;
        bad[0] = 'X';
        try {
            decode_checkpoint(bad);
            FAIL("bad magic accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Format);
        }
        auto truncated = bytes;
        truncated.resize(bytes.size() - 3);
        CHECK_THROWS_AS(decode_checkpoint(truncated), Error);
    }
}

TEST_CASE("checkpoint files") {
    const auto dir = testutil::scratch_dir("ckpt");
    const ModelParams p = init_params(small(), 1);
    save_checkpoint(p, dir / "a.ckpt");
    CHECK(checksum(load_checkpoint(dir / "a.ckpt")) == checksum(p));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}
