#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "raftlab/error.hpp"
#include "raftlab/eval.hpp"

using namespace raftlab;

TEST_CASE("probe is near chance on shuffled labels") {
    const Dataset ds = make_blobs(BlobsSpec{});
    std::vector<int> labels = ds.labels;
    Rng rng(5);
    rng.shuffle(std::span<int>(labels));
    const ProbeResult r = probe_accuracy(ds.samples, labels, 4, ProbeConfig{});
    CHECK(r.test_size == 80);
    // chance 1/4, three binomial standard deviations over 80 test rows
    const double sd = std::sqrt(0.25 * 0.75 / 80.0);
    CHECK(std::abs(r.accuracy - 0.25) <= 3.0 * sd);
}

TEST_CASE("probe separates one-hot features") {
    const Dataset ds = make_blobs(BlobsSpec{});
    Tensor onehot(Shape{ds.size(), 4});
    for (std::size_t i = 0; i < ds.size(); ++i) onehot.at(i, static_cast<std::size_t>(ds.labels[i])) = 1.0;
    CHECK(probe_accuracy(onehot, ds.labels, 4, ProbeConfig{}).accuracy >= 0.99);
}

TEST_CASE("probe needs two classes") {
    Rng rng(1);
    CHECK_THROWS_AS(probe_accuracy(testutil::normal({10, 3}, rng), std::vector<int>(10, 0), 1, ProbeConfig{}),
                    Error);
}

TEST_CASE("linear evaluation leaves the parameters alone") {
    const Dataset ds = make_blobs(BlobsSpec{});
    const ModelParams p = init_params(NetworkSpec{}, 0);
    const std::uint64_t before = checksum(p);
    ProbeConfig c;
    c.epochs = 5;
    linear_evaluation(p, ds, c);
    CHECK(checksum(p) == before);
}

TEST_CASE("random init is spread and reports are deterministic") {
    const Dataset ds = make_blobs(BlobsSpec{});
    const ModelParams p = init_params(NetworkSpec{}, 0);
    AugmentationSpec aug{ViewAugmentation{0.1, 0.8, 1.2, 0.0}, ViewAugmentation{0.1, 0.8, 1.2, 0.0}, 3};
    ProbeConfig c;
    c.epochs = 10;
    const EvalReport r = metrics_report(p, ds, aug, 256, 2.0, c);
    CHECK(r.uniformity < -0.3);
    CHECK(!r.collapse);
    CHECK(to_json(r) == to_json(metrics_report(p, ds, aug, 256, 2.0, c)));
    CHECK_THROWS_AS(metrics_report(p, ds, aug, 1, 2.0, c), Error);
}

TEST_CASE("collapsed representations have zero uniformity") {
    Tensor z(Shape{5, 3});
    for (std::size_t r = 0; r < 5; ++r) z.at(r, 1) = 1.0;
    CHECK(uniformity(z, 2.0) == 0.0);
    CHECK(uniformity(z, 2.0) > kCollapseThreshold);
}

TEST_CASE("representation export") {
    const auto dir = testutil::scratch_dir("export");
    const Dataset ds = make_blobs(BlobsSpec{});
    const ModelParams p = init_params(NetworkSpec{}, 2);
    export_representations(p, ds, dir / "a.csv");
    export_representations(p, ds, dir / "b.csv");
    const std::string text = testutil::slurp(dir / "a.csv");
    CHECK(text == testutil::slurp(dir / "b.csv"));
    CHECK(std::count(text.begin(), text.end(), '\n') == 401);

    // z columns are unit rows
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::vector<double> v;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
    double n = 0.0;
    for (std::size_t k = 32; k < 48; ++k) n += v[k] * v[k];
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
}
