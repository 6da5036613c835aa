#include "raftlab/losses.hpp"

#include <cmath>

#include "raftlab/error.hpp"

namespace raftlab {

void LossConfig::validate() const {
    require(alpha > 0.0, ErrorKind::Config, "alpha must be positive");
    require(beta > 0.0, ErrorKind::Config, "beta must be positive");
    require(t > 0.0, ErrorKind::Config, "t must be positive");
}

Var align_loss(const Var& p1, const Var& p2) { return batch_mean(squared_distance(p1, p2)); }

Var uniform_loss(const Var& z, double t) {
    require(z.value().rank() == 2 && z.value().rows() >= 2, ErrorKind::InsufficientBatch,
            "uniformity needs at least two representations");
    return log(offdiag_mean(exp(scale(pairwise_squared_distance(z), -t))));
}

Var cross_model_loss(const Var& p, const Var& zbar) {
    return batch_mean(squared_distance(p, zbar));
}

Var symmetrized_cross_model(const ViewPair& v) {
    return 0.5 * (cross_model_loss(v.p1, v.zbar1) + cross_model_loss(v.p2, v.zbar2));
}

Var byol_loss(const ViewPair& v, bool symmetrize) {
    const Var forward = cross_model_loss(v.p1, v.zbar2);
    if (!symmetrize) {
        return forward;
    }
    return 0.5 * (forward + cross_model_loss(v.p2, v.zbar1));
}

Var byol_prime_loss(const LossConfig& cfg, const ViewPair& v) {
    cfg.validate();
    return cfg.alpha * align_loss(v.p1, v.p2) + cfg.beta * symmetrized_cross_model(v);
}

Var raft_loss(const LossConfig& cfg, const ViewPair& v) {
    cfg.validate();
    return cfg.alpha * align_loss(v.p1, v.p2) - cfg.beta * symmetrized_cross_model(v);
}

Var tangential_cross_model_trick(const Var& p, const Var& zbar) {
    const Var lambda = stop_gradient(row_dot(p, zbar));
    for (std::size_t r = 0; r < lambda.value().size(); ++r) {
        require(std::abs(lambda.value()[r]) >= kLambdaEpsilon, ErrorKind::NearOrthogonal,
                "<p, zbar> = " + std::to_string(lambda.value()[r]) + " in row " +
                    std::to_string(r));
    }
    return batch_mean(div(squared_distance(zbar, scale_rows(p, lambda)), lambda));
}

namespace {

// Tangential form of |a - b|^2 where both sides carry gradient: each side is
// pulled along the sphere at its own location.
Var trick_align(const Var& a, const Var& b) {
    return tangential_cross_model_trick(a, stop_gradient(b)) +
           tangential_cross_model_trick(b, stop_gradient(a));
}

Var trick_symmetrized_cross(const ViewPair& v) {
    return 0.5 * (tangential_cross_model_trick(v.p1, v.zbar1) +
                  tangential_cross_model_trick(v.p2, v.zbar2));
}

}  // namespace

LossTerms total_loss(const LossConfig& cfg, const ViewPair& v) {
    cfg.validate();
    LossTerms terms;
    terms.align = align_loss(v.p1, v.p2);
    terms.cross_model = symmetrized_cross_model(v);

    if (cfg.tangential != TangentialMode::LossTrick) {
        switch (cfg.objective) {
            case Objective::Byol: terms.total = byol_loss(v, cfg.symmetrize); break;
            case Objective::ByolPrime: terms.total = byol_prime_loss(cfg, v); break;
            case Objective::Raft: terms.total = raft_loss(cfg, v); break;
        }
        return terms;
    }

    switch (cfg.objective) {
        case Objective::Byol: {
            const Var forward = tangential_cross_model_trick(v.p1, v.zbar2);
            terms.total = cfg.symmetrize
                              ? 0.5 * (forward + tangential_cross_model_trick(v.p2, v.zbar1))
                              : forward;
            break;
        }
        case Objective::ByolPrime:
            terms.total = cfg.alpha * trick_align(v.p1, v.p2) + cfg.beta * trick_symmetrized_cross(v);
            break;
        case Objective::Raft:
            terms.total = cfg.alpha * trick_align(v.p1, v.p2) - cfg.beta * trick_symmetrized_cross(v);
            break;
    }
    return terms;
}

std::string to_string(Objective o) {
    switch (o) {
        case Objective::Byol: return "byol";
        case Objective::ByolPrime: return "byol_prime";
        case Objective::Raft: return "raft";
    }
    return "?";
}

std::string to_string(TangentialMode m) {
    switch (m) {
        case TangentialMode::Off: return "off";
        case TangentialMode::LossTrick: return "loss_trick";
        case TangentialMode::GradientFilter: return "gradient_filter";
    }
    return "?";
}

Objective objective_from_string(const std::string& s) {
    if (s == "byol") return Objective::Byol;
    if (s == "byol_prime") return Objective::ByolPrime;
    if (s == "raft") return Objective::Raft;
    fail(ErrorKind::Config, "objective: unknown value '" + s + "' (expected byol, byol_prime, raft)");
}

TangentialMode tangential_mode_from_string(const std::string& s) {
    if (s == "off") return TangentialMode::Off;
    if (s == "loss_trick") return TangentialMode::LossTrick;
    if (s == "gradient_filter") return TangentialMode::GradientFilter;
    fail(ErrorKind::Config,
         "tangential: unknown value '" + s + "' (expected off, loss_trick, gradient_filter)");
}

}  // namespace raftlab
