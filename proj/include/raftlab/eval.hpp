#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "raftlab/data.hpp"
#include "raftlab/model.hpp"
#include "raftlab/train.hpp"

namespace raftlab {

/// Multinomial logistic regression trained with Adam on frozen features.
struct ProbeConfig {
    double lr = 5e-4;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double train_fraction = 0.8;
    /// z-score features with statistics of the training split.
    bool standardize = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ProbeResult {
    double accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
};

/// Deterministic train/test split of the rows, fit on train, accuracy on test.
ProbeResult probe_accuracy(const Tensor& features, std::span<const int> labels,
                           std::size_t classes, const ProbeConfig& cfg);

/// Probe on backbone outputs h of every sample in the dataset.
ProbeResult linear_evaluation(const ModelParams& params, const Dataset& dataset,
                              const ProbeConfig& cfg);

struct EvalReport {
    double probe_accuracy = 0.0;
    /// Mean |p1 - p2|^2 over fresh positive pairs.
    double align = 0.0;
    /// Uniformity of view-1 z over the same pairs.
    double uniformity = 0.0;
    bool collapse = false;
    std::size_t samples = 0;
    ProbeConfig probe;
};

/// Fresh positive pairs (at most one per dataset row) are drawn from `aug`.
EvalReport metrics_report(const ModelParams& params, const Dataset& dataset,
                          const AugmentationSpec& aug, std::size_t sample_count, double t,
                          const ProbeConfig& probe);

std::string to_json(const EvalReport& report);

/// CSV rows h..., z..., label with a header.
void export_representations(const ModelParams& params, const Dataset& dataset,
                            const std::filesystem::path& path);

// --- collapse study -------------------------------------------------------------

/// BYOL' without predictor against RAFT with a linear predictor, both trained
/// on the same blobs and views, plus the untrained network as a baseline.
struct CollapseStudyConfig {
    BlobsSpec data;
    /// Shared by both arms; the per-arm fields below override it.
    TrainConfig base = [] {
        TrainConfig c;
        c.view1 = ViewAugmentation{0.0, 0.8, 1.2, 0.1};
        c.view2 = c.view1;
        c.log_every = 100;
        return c;
    }();
    double raft_beta = 10.0;
    double raft_tau = 0.999;
    std::size_t eval_samples = 256;
    ProbeConfig probe;
};

struct CollapseArm {
    std::string name;
    TrainConfig train;
    EvalReport report;
};

struct CollapseStudyReport {
    CollapseArm byol_prime_np;
    CollapseArm raft_lp;
    EvalReport random_init;
    bool byol_prime_collapsed = false;   // align < 1e-6 and uniformity > -0.5
    bool raft_spread = false;            // uniformity < -1
    bool raft_probe_gain = false;        // probe >= random + 0.10
    bool uniformity_ordered = false;     // byol' uniformity > raft uniformity
    bool passed() const {
        return byol_prime_collapsed && raft_spread && raft_probe_gain && uniformity_ordered;
    }
};

CollapseStudyReport collapse_study(const CollapseStudyConfig& cfg);

std::string to_json(const CollapseStudyReport& report);

}  // namespace raftlab
