#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "raftlab/data.hpp"
#include "raftlab/losses.hpp"
#include "raftlab/model.hpp"
#include "raftlab/optim.hpp"

namespace raftlab {

/// Either a single constant or one value per step (1-based).
struct Schedule {
    std::vector<double> values;
    bool constant = true;

    static Schedule constant_value(double v) { return Schedule{{v}, true}; }
    static Schedule list(std::vector<double> v) { return Schedule{std::move(v), false}; }

    friend bool operator==(const Schedule&, const Schedule&) = default;
};

double schedule_value(const Schedule& schedule, std::uint64_t k);

inline constexpr double kCollapseThreshold = -0.2;

struct TrainConfig {
    LossConfig loss;
    NetworkSpec network;
    std::uint64_t steps = 2000;
    std::size_t batch_size = 64;
    OptimizerKind optimizer = OptimizerKind::Adam;
    Schedule lr = Schedule::constant_value(3e-4);
    Schedule tau = Schedule::constant_value(0.996);
    std::uint64_t seed = 0;
    std::uint64_t log_every = 10;
    /// 0 writes only the final checkpoint.
    std::uint64_t checkpoint_every = 0;
    /// View distributions; the sampling seed is derived from `seed`.
    ViewAugmentation view1{0.1, 0.8, 1.2, 0.0};
    ViewAugmentation view2{0.1, 0.8, 1.2, 0.0};
    /// Adds wall_ms to metrics records. Off by default because it makes logs
    /// differ between otherwise identical runs.
    bool record_wall_time = false;

    void validate() const;
    AugmentationSpec augmentation() const;
};

struct MetricsRecord {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    double loss_total = 0.0;
    double loss_align = 0.0;
    double loss_cross_model = 0.0;
    /// Absent when the batch has a single row.
    std::optional<double> uniformity;
    std::optional<double> wall_ms;
    bool collapse = false;
};

/// One JSON object, keys in declaration order, no trailing newline.
std::string to_json_line(const MetricsRecord& record);

/// Uniformity of a batch of unit rows without building a gradient tape.
double uniformity(const Tensor& z, double t);

struct TrainState {
    ModelParams params;
    Optimizer optimizer;
    std::uint64_t steps_done = 0;
    std::uint64_t ema_updates = 0;
};

TrainState make_train_state(const TrainConfig& cfg);

struct StepOutcome {
    double loss_total = 0.0;
    double loss_align = 0.0;
    double loss_cross_model = 0.0;
    /// Uniformity of the view-1 online z (batches of two or more rows).
    std::optional<double> uniformity;
    /// Gradients in ModelParams::trainable() order.
    std::vector<Tensor> grads;
};

/// Forward both views through online and target networks, backward, one
/// optimizer step, one EMA update. `k` is the 1-based step index used for the
/// schedules. Throws NonFiniteLoss before touching parameters.
StepOutcome train_step(TrainState& state, const TrainConfig& cfg, const PositiveBatch& batch,
                       std::uint64_t k);

struct TrainOptions {
    /// When set, metrics.jsonl and checkpoints are written here.
    std::optional<std::filesystem::path> out_dir;
    /// Start from these parameters instead of init_params(cfg.network, ...).
    std::optional<ModelParams> initial_params;
    std::function<void(const MetricsRecord&)> on_record;
};

struct TrainResult {
    ModelParams params;
    std::vector<MetricsRecord> log;
    std::uint64_t optimizer_steps = 0;
    std::uint64_t ema_updates = 0;
    std::optional<std::filesystem::path> metrics_path;
    std::vector<std::filesystem::path> checkpoints;
};

/// Seed stream used for parameter initialization in train_run.
std::uint64_t init_seed(const TrainConfig& cfg);

TrainResult train_run(const TrainConfig& cfg, const Dataset& dataset, const TrainOptions& options = {});

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

}  // namespace raftlab
