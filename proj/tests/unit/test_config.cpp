#include "helpers.hpp"
#include "raftlab/config.hpp"
#include "raftlab/error.hpp"

using namespace raftlab;

namespace {

std::string message_of(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("empty config gives the defaults") {
    const RunConfig c = parse_run_config("{}");
    CHECK(c.train.steps == 2000);
    CHECK(c.train.batch_size == 64);
    CHECK(c.train.lr == Schedule::constant_value(3e-4));
    CHECK(c.train.tau == Schedule::constant_value(0.996));
    CHECK(c.train.optimizer == OptimizerKind::Adam);
    CHECK(c.probe.lr == 5e-4);
    CHECK(c.probe.epochs == 100);
    CHECK(c.data.blobs.dim == 8);
    CHECK(c.train.network.input_dim == 8);
}

TEST_CASE("fields are read and echoed") {
    const RunConfig c = parse_run_config(R"({
        "seed": 3, "steps": 10, "lr": [0.1, 0.2, 0.3],
        "loss": {"objective": "byol_prime", "beta": 2.0, "tangential": "gradient_filter"},
        "network": {"predictor": "identity", "backbone_hidden": [4, 4]},
        "augmentation": {"view1": {"mask_prob": 0.2}},
        "data": {"dim": 5, "classes": 3}
    })");
    CHECK(c.train.seed == 3);
    CHECK(c.train.lr == Schedule::list({0.1, 0.2, 0.3}));
    CHECK(c.train.loss.objective == Objective::ByolPrime);
    CHECK(c.train.loss.beta == 2.0);
    CHECK(c.train.loss.tangential == TangentialMode::GradientFilter);
    CHECK(c.train.network.predictor == PredictorKind::Identity);
    CHECK(c.train.network.backbone_hidden == std::vector<std::size_t>{4, 4});
    CHECK(c.train.view1.mask_prob == 0.2);
    CHECK(c.train.network.input_dim == 5);
    const RunConfig again = parse_run_config(to_json(c));
    CHECK(to_json(again) == to_json(c));
}

TEST_CASE("errors name the field") {
    CHECK(message_of(R"({"loss": {"objective": "foo"}})").find("loss.objective") != std::string::npos);
    CHECK(message_of(R"({"network": {"width": 3}})").find("network.width") != std::string::npos);
    CHECK(message_of(R"({"steps": "many"})").find("steps") != std::string::npos);
    CHECK(message_of(R"({"augmentation": {"view2": {"noise": true}}})").find("augmentation.view2.noise") !=
          std::string::npos);
    CHECK(message_of("not json") != "");
}
