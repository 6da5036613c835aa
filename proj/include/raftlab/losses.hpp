#pragma once

#include <string>

#include "raftlab/autodiff.hpp"

namespace raftlab {

enum class Objective { Byol, ByolPrime, Raft };

enum class TangentialMode {
    Off,
    /// Distance terms rewritten as |b - lambda a|^2 / lambda, lambda = sg(<a, b>).
    LossTrick,
    /// Loss unchanged; representation gradients are projected during backward.
    GradientFilter,
};

struct LossConfig {
    Objective objective = Objective::Raft;
    double alpha = 1.0;
    double beta = 1.0;
    /// Uniformity temperature.
    double t = 2.0;
    bool symmetrize = true;
    TangentialMode tangential = TangentialMode::Off;

    void validate() const;
    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Online predictions p1/p2 for the two views and target representations
/// zbar1/zbar2 of the same views. All rows unit-norm.
struct ViewPair {
    Var p1;
    Var p2;
    Var zbar1;
    Var zbar2;
};

/// Mean over the batch of |p1 - p2|^2.
Var align_loss(const Var& p1, const Var& p2);
/// log of the mean over ordered pairs i != j of exp(-t |z_i - z_j|^2).
Var uniform_loss(const Var& z, double t);
/// Mean over the batch of |p - zbar|^2.
Var cross_model_loss(const Var& p, const Var& zbar);
/// (cross(p1, zbar1) + cross(p2, zbar2)) / 2.
Var symmetrized_cross_model(const ViewPair& v);
/// Mean |p1 - zbar2|^2, averaged with |p2 - zbar1|^2 when symmetrizing.
Var byol_loss(const ViewPair& v, bool symmetrize);
Var byol_prime_loss(const LossConfig& cfg, const ViewPair& v);
Var raft_loss(const LossConfig& cfg, const ViewPair& v);

inline constexpr double kLambdaEpsilon = 1e-6;

/// Mean over rows of |zbar - lambda p|^2 / lambda with lambda = sg(<p, zbar>).
/// Its gradient in p is -2 (zbar - <p, zbar> p) per row, the tangential part
/// of the plain squared-distance gradient.
Var tangential_cross_model_trick(const Var& p, const Var& zbar);

struct LossTerms {
    Var total;
    /// Plain (untransformed) terms, for logging.
    Var align;
    Var cross_model;
};

/// Objective dispatch. In LossTrick mode every distance term that carries
/// gradient is replaced by its tangential form; in GradientFilter mode the
/// caller must have built p1/p2 with the filter enabled.
LossTerms total_loss(const LossConfig& cfg, const ViewPair& v);

std::string to_string(Objective o);
std::string to_string(TangentialMode m);
Objective objective_from_string(const std::string& s);
TangentialMode tangential_mode_from_string(const std::string& s);

}  // namespace raftlab
