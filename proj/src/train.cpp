#include "raftlab/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "raftlab/checkpoint.hpp"
#include "raftlab/error.hpp"
#include "raftlab/rng.hpp"

namespace raftlab {

namespace {

constexpr std::uint64_t kInitStream = 101;
constexpr std::uint64_t kAugmentStream = 102;

std::string checkpoint_name(std::uint64_t step) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "step_%08llu.ckpt", static_cast<unsigned long long>(step));
    return buf;
}

void check_schedule(const Schedule& s, std::uint64_t steps, const char* field) {
    if (s.constant) {
        require(s.values.size() == 1, ErrorKind::Config,
                std::string(field) + ": constant schedule needs exactly one value");
    } else {
        require(s.values.size() == steps, ErrorKind::Config,
                std::string(field) + ": schedule list has " + std::to_string(s.values.size()) +
                    " entries but steps is " + std::to_string(steps));
    }
    for (double v : s.values) {
        require(std::isfinite(v), ErrorKind::Config, std::string(field) + ": non-finite value");
    }
}

}  // namespace

double schedule_value(const Schedule& schedule, std::uint64_t k) {
    require(k >= 1, ErrorKind::Schedule, "schedule index must be at least 1");
    if (schedule.constant) {
        require(!schedule.values.empty(), ErrorKind::Schedule, "empty constant schedule");
        return schedule.values.front();
    }
    require(k <= schedule.values.size(), ErrorKind::Schedule,
            "schedule index " + std::to_string(k) + " beyond list of length " +
                std::to_string(schedule.values.size()));
    return schedule.values[k - 1];
}

void TrainConfig::validate() const {
    loss.validate();
    network.validate();
    require(steps >= 1, ErrorKind::Config, "steps must be at least 1");
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be at least 1");
    require(log_every >= 1, ErrorKind::Config, "log_every must be at least 1");
    check_schedule(lr, steps, "lr");
    check_schedule(tau, steps, "tau");
    for (double v : tau.values) {
        require(v >= 0.0 && v <= 1.0, ErrorKind::Config, "tau: values must lie in [0, 1]");
    }
    for (double v : lr.values) {
        require(v >= 0.0, ErrorKind::Config, "lr: values must be non-negative");
    }
    augmentation().validate();
}

AugmentationSpec TrainConfig::augmentation() const {
    return AugmentationSpec{view1, view2, derive_seed(seed, kAugmentStream)};
}

std::uint64_t init_seed(const TrainConfig& cfg) { return derive_seed(cfg.seed, kInitStream); }

std::string to_json_line(const MetricsRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    j["loss_align"] = r.loss_align;
    j["loss_cross_model"] = r.loss_cross_model;
    j["uniformity"] = r.uniformity ? nlohmann::ordered_json(*r.uniformity) : nullptr;
    if (r.wall_ms) {
        j["wall_ms"] = *r.wall_ms;
    }
    j["collapse"] = r.collapse;
    return j.dump();
}

double uniformity(const Tensor& z, double t) {
    Tape tape;
    return uniform_loss(tape.constant(z), t).value().item();
}

TrainState make_train_state(const TrainConfig& cfg) {
    return TrainState{init_params(cfg.network, init_seed(cfg)), Optimizer(cfg.optimizer), 0, 0};
}

StepOutcome train_step(TrainState& state, const TrainConfig& cfg, const PositiveBatch& batch,
                       std::uint64_t k) {
    ModelParams& params = state.params;
    Tape tape;
    const BoundOnline bound = bind_online(tape, params);
    const Var x1 = tape.constant(batch.x1);
    const Var x2 = tape.constant(batch.x2);
    const ForwardOptions fwd{cfg.loss.tangential == TangentialMode::GradientFilter};
    const OnlineOutput o1 = forward_online(bound, params.spec, x1, fwd);
    const OnlineOutput o2 = forward_online(bound, params.spec, x2, fwd);
    const ViewPair views{o1.p, o2.p, forward_target(tape, params, x1),
                         forward_target(tape, params, x2)};
    const LossTerms terms = total_loss(cfg.loss, views);

    StepOutcome out;
    out.loss_total = terms.total.value().item();
    out.loss_align = terms.align.value().item();
    out.loss_cross_model = terms.cross_model.value().item();
    if (!std::isfinite(out.loss_total)) {
        fail(ErrorKind::NonFiniteLoss, "loss is " + std::to_string(out.loss_total) + " at step " +
                                           std::to_string(k));
    }
    if (o1.z.value().rows() >= 2) {
        out.uniformity = uniformity(o1.z.value(), cfg.loss.t);
    }

    const Gradients grads = tape.backward(terms.total);
    out.grads.reserve(bound.variables.size());
    for (const Var& v : bound.variables) {
        out.grads.push_back(grads.wrt(v));
    }
    const std::vector<Tensor*> trainable = params.trainable();
    state.optimizer.step(trainable, out.grads, schedule_value(cfg.lr, k));
    ++state.steps_done;
    ema_update(params.target, params.online, schedule_value(cfg.tau, k));
    ++state.ema_updates;
    return out;
}

TrainResult train_run(const TrainConfig& cfg, const Dataset& dataset, const TrainOptions& options) {
    cfg.validate();
    require(cfg.network.input_dim == dataset.dim(), ErrorKind::Config,
            "network.input_dim " + std::to_string(cfg.network.input_dim) +
                " does not match dataset dimension " + std::to_string(dataset.dim()));
    require(cfg.batch_size <= dataset.size(), ErrorKind::Config,
            "batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                std::to_string(dataset.size()));

    TrainState state = make_train_state(cfg);
    if (options.initial_params) {
        require(options.initial_params->spec == cfg.network, ErrorKind::Config,
                "initial parameters do not match the configured network");
        state.params = *options.initial_params;
    }
    const AugmentationSpec aug = cfg.augmentation();

    TrainResult result;
    std::ofstream metrics;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        result.metrics_path = *options.out_dir / "metrics.jsonl";
        metrics.open(*result.metrics_path, std::ios::trunc);
        require(static_cast<bool>(metrics), ErrorKind::Io,
                "cannot open " + result.metrics_path->string());
    }

    const auto start = std::chrono::steady_clock::now();
    for (std::uint64_t k = 1; k <= cfg.steps; ++k) {
        const PositiveBatch batch = sample_positive_batch(dataset, aug, cfg.batch_size, k - 1);
        StepOutcome outcome;
        try {
            outcome = train_step(state, cfg, batch, k);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NonFiniteLoss || !options.out_dir) {
                throw;
            }
            const auto dump = *options.out_dir / ("nonfinite_" + checkpoint_name(k));
            save_checkpoint(state.params, dump);
            fail(ErrorKind::NonFiniteLoss,
                 std::string(e.what()) + "; parameters before the step dumped to " + dump.string());
        }

        if (k % cfg.log_every == 0) {
            MetricsRecord rec;
            rec.step = k;
            rec.epoch = epoch_of(dataset.size(), cfg.batch_size, k - 1);
            rec.loss_total = outcome.loss_total;
            rec.loss_align = outcome.loss_align;
            rec.loss_cross_model = outcome.loss_cross_model;
            rec.uniformity = outcome.uniformity;
            rec.collapse = outcome.uniformity && *outcome.uniformity > kCollapseThreshold;
            if (cfg.record_wall_time) {
                rec.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
            }
            if (metrics.is_open()) {
                metrics << to_json_line(rec) << '\n';
            }
            if (options.on_record) {
                options.on_record(rec);
            }
            result.log.push_back(rec);
        }
        if (options.out_dir && cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) {
            const auto path = *options.out_dir / checkpoint_name(k);
            save_checkpoint(state.params, path);
            result.checkpoints.push_back(path);
        }
    }

    if (options.out_dir) {
        metrics.flush();
        require(static_cast<bool>(metrics), ErrorKind::Io, "failed writing metrics.jsonl");
        const auto path = *options.out_dir / "final.ckpt";
        save_checkpoint(state.params, path);
        result.checkpoints.push_back(path);
    }
    result.optimizer_steps = state.steps_done;
    result.ema_updates = state.ema_updates;
    result.params = std::move(state.params);
    return result;
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    fail(ErrorKind::Config, "optimizer: unknown value '" + s + "' (expected sgd, adam)");
}

}  // namespace raftlab
