#include <cmath>

#include "helpers.hpp"
#include "raftlab/checkpoint.hpp"
#include "raftlab/error.hpp"
#include "raftlab/train.hpp"

using namespace raftlab;

namespace {

TrainConfig quick(std::uint64_t steps) {
    TrainConfig c;
    c.steps = steps;
    c.batch_size = 16;
    c.log_every = 5;
    c.network.backbone_hidden = {16};
    c.network.representation_dim = 8;
    c.network.projector_hidden = 16;
    c.network.projection_dim = 4;
    return c;
}

Dataset small_blobs() {
    BlobsSpec s;
    s.per_class = 20;
    return make_blobs(s);
}

}  // namespace

TEST_CASE("schedules") {
    CHECK(schedule_value(Schedule::constant_value(0.996), 1) == 0.996);
    CHECK(schedule_value(Schedule::constant_value(0.996), 12345) == 0.996);
    CHECK(schedule_value(Schedule::list({0.9, 0.99}), 2) == 0.99);
    CHECK_THROWS_AS(schedule_value(Schedule::list({0.9, 0.99}), 0), Error);
    CHECK_THROWS_AS(schedule_value(Schedule::list({0.9, 0.99}), 3), Error);
}

TEST_CASE("config validation") {
    TrainConfig c = quick(0);
    CHECK_THROWS_AS(c.validate(), Error);
    c = quick(3);
    c.lr = Schedule::list({1e-3, 1e-3});
    CHECK_THROWS_AS(c.validate(), Error);
    c = quick(3);
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("one step means one update of each kind") {
    TrainConfig c = quick(1);
    c.log_every = 1;
    const TrainResult r = train_run(c, small_blobs());
    CHECK(r.optimizer_steps == 1);
    CHECK(r.ema_updates == 1);
    CHECK(r.log.size() == 1);
    CHECK(r.log.front().step == 1);
}

TEST_CASE("zero learning rate leaves every parameter in place") {
    TrainConfig c = quick(10);
    c.lr = Schedule::constant_value(0.0);
    const TrainResult r = train_run(c, small_blobs());
    CHECK(checksum(r.params) == checksum(init_params(c.network, init_seed(c))));
}

TEST_CASE("identical runs write identical bytes") {
    const auto a = testutil::scratch_dir("train_a");
    const auto b = testutil::scratch_dir("train_b");
    TrainConfig c = quick(20);
    c.checkpoint_every = 10;
    const Dataset ds = small_blobs();
    TrainOptions oa, ob;
    oa.out_dir = a;
    ob.out_dir = b;
    const TrainResult ra = train_run(c, ds, oa);
    const TrainResult rb = train_run(c, ds, ob);
    CHECK(ra.checkpoints.size() == 3);
    CHECK(testutil::slurp(a / "metrics.jsonl") == testutil::slurp(b / "metrics.jsonl"));
    for (const char* f : {"step_00000010.ckpt", "step_00000020.ckpt", "final.ckpt"}) {
        INFO(f);
        CHECK(std::filesystem::exists(a / f));
        CHECK(testutil::slurp(a / f) == testutil::slurp(b / f));
    }
    CHECK(checksum(load_checkpoint(a / "final.ckpt")) == checksum(ra.params));
}

TEST_CASE("metrics lines") {
    MetricsRecord m;
    m.step = 3;
    m.epoch = 1;
    m.loss_total = -1.5;
    CHECK(to_json_line(m) ==
          "{\"step\":3,\"epoch\":1,\"loss_total\":-1.5,\"loss_align\":0.0,\"loss_cross_model\":0.0,"
          "\"uniformity\":null,\"collapse\":false}");
}

TEST_CASE("initial parameters must match the network") {
    TrainConfig c = quick(2);
    NetworkSpec other = c.network;
    other.projection_dim = 5;
    TrainOptions o;
    o.initial_params = init_params(other, 0);
    CHECK_THROWS_AS(train_run(c, small_blobs(), o), Error);
}

TEST_CASE("input dimension must match the dataset") {
    TrainConfig c = quick(2);
    c.network.input_dim = 3;
    CHECK_THROWS_AS(train_run(c, small_blobs()), Error);
}

TEST_CASE("divergence stops before the update and dumps the state") {
    TrainConfig c = quick(5);
    const auto dir = testutil::scratch_dir("nonfinite");
    TrainOptions o;
    o.out_dir = dir;
    ModelParams p = init_params(c.network, 0);
    p.online.projector.back().bias[0] = std::nan("");
    o.initial_params = p;
    try {
        train_run(c, small_blobs(), o);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonFiniteLoss);
        CHECK(std::string(e.what()).find("nonfinite_step_") != std::string::npos);
        CHECK(std::filesystem::exists(dir / "nonfinite_step_00000001.ckpt"));
    }
}
