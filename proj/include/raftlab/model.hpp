#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raftlab/autodiff.hpp"
#include "raftlab/tensor.hpp"

namespace raftlab {

enum class PredictorKind { Mlp, Linear, Identity };
enum class PredictorInit { Random, Identity, Mirrored };

/// How gradients pass through the row normalization that puts
/// representations on the unit sphere.
enum class NormalizationGradient {
    Full,        // exact Jacobian (I - zz^T)/|u|
    RadialPass,  // norm held constant: g/|u|
};

struct NetworkSpec {
    std::size_t input_dim = 8;
    std::vector<std::size_t> backbone_hidden{64, 64};
    std::size_t representation_dim = 32;
    /// Width of the projector's hidden layer; 0 makes the projector a single
    /// linear map.
    std::size_t projector_hidden = 64;
    std::size_t projection_dim = 16;
    PredictorKind predictor = PredictorKind::Linear;
    /// Hidden width of the MLP predictor (ignored for other kinds).
    std::size_t predictor_hidden = 64;
    PredictorInit predictor_init = PredictorInit::Random;
    NormalizationGradient normalization_gradient = NormalizationGradient::Full;

    void validate() const;
    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// y = x W + b with W stored [in x out]. An empty bias means no bias.
struct DenseLayer {
    Tensor weight;
    Tensor bias;
    bool has_bias() const noexcept { return !bias.empty(); }
};

/// Dense layers with ReLU between consecutive layers (none after the last).
using Mlp = std::vector<DenseLayer>;

struct Encoder {
    Mlp backbone;   // x -> h
    Mlp projector;  // h -> projector output (unnormalized)
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Online encoder (theta), predictor (w / W) and the mean-teacher copy (xi)
/// of the encoder. The predictor has no target counterpart.
struct ModelParams {
    NetworkSpec spec;
    Encoder online;
    Mlp predictor;
    Encoder target;

    /// Online encoder followed by predictor, in a fixed order.
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
    std::vector<const Tensor*> target_tensors() const;

    /// Linear predictor matrix W (as stored, [m x m]).
    const Tensor& predictor_matrix() const;
    Tensor& predictor_matrix();

    std::vector<NamedTensor> named() const;
};

ModelParams init_params(const NetworkSpec& spec, std::uint64_t seed);

/// FNV-1a over every parameter's bytes in named() order.
std::uint64_t checksum(const ModelParams& params);

// --- taped forward passes ---------------------------------------------------

struct BoundLayer {
    Var weight;
    Var bias;
    bool has_bias = false;
};
using BoundMlp = std::vector<BoundLayer>;

struct BoundOnline {
    BoundMlp backbone;
    BoundMlp projector;
    BoundMlp predictor;
    /// Same order as ModelParams::trainable().
    std::vector<Var> variables;
};

/// Registers the online encoder and predictor as tape variables.
BoundOnline bind_online(Tape& tape, const ModelParams& params);
/// Registers an MLP as tape constants.
BoundMlp bind_constant(Tape& tape, const Mlp& mlp);
Var apply_mlp(const BoundMlp& mlp, Var x);

struct OnlineOutput {
    Var h;  // backbone output
    Var z;  // normalized projector output
    Var p;  // normalized predictor output
};

struct ForwardOptions {
    /// Keep only the tangential component of the gradients arriving at z and p.
    bool tangential_filter = false;
};

OnlineOutput forward_online(const BoundOnline& bound, const NetworkSpec& spec, const Var& x,
                            ForwardOptions options = {});

/// Normalized target representation, wrapped in stop_gradient.
Var forward_target(Tape& tape, const ModelParams& params, const Var& x);

// --- mean teacher -------------------------------------------------------------

/// xi <- tau xi + (1 - tau) theta, elementwise.
void ema_update(Tensor& target, const Tensor& online, double tau);
void ema_update(Encoder& target, const Encoder& online, double tau);

// --- untaped convenience ----------------------------------------------------

struct Representations {
    Tensor h;
    Tensor z;
    Tensor p;
};

Representations encode(const ModelParams& params, const Tensor& x);
Tensor encode_target(const ModelParams& params, const Tensor& x);

std::string to_string(PredictorKind kind);
std::string to_string(PredictorInit init);
std::string to_string(NormalizationGradient mode);
PredictorKind predictor_kind_from_string(const std::string& s);
PredictorInit predictor_init_from_string(const std::string& s);
NormalizationGradient normalization_gradient_from_string(const std::string& s);

}  // namespace raftlab
