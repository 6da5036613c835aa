#include "raftlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "raftlab/error.hpp"

namespace raftlab {

namespace {

void require_same_tape(const Var& a, const Var& b) {
    require(a.valid() && b.valid() && &a.tape() == &b.tape(), ErrorKind::Contract,
            "operands live on different tapes");
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.value().same_shape(b.value()), ErrorKind::Dimension,
            std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
}

void require_matrix(const Var& a, const char* op) {
    require(a.value().rank() == 2, ErrorKind::Dimension,
            std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

double row_norm(std::span<const double> row) {
    double s = 0.0;
    for (double v : row) {
        s += v * v;
    }
    return std::sqrt(s);
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
    Tensor out = a;
    for (double& v : out.values()) {
        v = f(v);
    }
    return out;
}

Tensor normalize_rows_checked(const Tensor& a, std::vector<double>& norms) {
    Tensor out = a;
    norms.resize(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double n = row_norm(a.row(r));
        // NaN rows pass through so that training reports a non-finite loss.
        require(!(n < kNormEpsilon), ErrorKind::DegenerateRepresentation,
                "row " + std::to_string(r) + " has norm " + std::to_string(n) + " below 1e-12");
        norms[r] = n;
        for (double& v : out.row(r)) {
            v /= n;
        }
    }
    return out;
}

}  // namespace

// --- Var / Gradients / Tape ------------------------------------------------

const Tensor& Var::value() const {
    require(valid(), ErrorKind::Contract, "use of an unbound Var");
    return tape_->value(id_);
}

Tensor Gradients::wrt(const Var& v) const {
    if (reached(v)) {
        return *grads_[v.id()];
    }
    return Tensor::zeros_like(v.value());
}

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{OpKind::Variable, std::move(value), {}, nullptr, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{OpKind::Constant, std::move(value), {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node node{kind, std::move(value), {}, std::move(backward), false};
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        require(&in.tape() == this, ErrorKind::Contract, "input recorded on another tape");
        node.inputs.push_back(in.id());
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (kind == OpKind::StopGradient) {
        node.requires_grad = false;
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const {
    require(&loss.tape() == this, ErrorKind::Contract, "loss is not on this tape");
    require(loss.value().rank() == 0, ErrorKind::Contract,
            "backward needs a scalar loss, got shape " + shape_string(loss.shape()));

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    if (!nodes_[loss.id()].requires_grad) {
        return Gradients(this, std::move(grads));
    }
    grads[loss.id()] = Tensor::scalar(1.0);

    std::vector<Tensor> scratch;
    for (NodeId id = loss.id() + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!grads[id] || !node.requires_grad || !node.backward) {
            continue;
        }
        scratch.clear();
        for (NodeId in : node.inputs) {
            scratch.emplace_back(nodes_[in].value.shape());
        }
        node.backward(*this, *grads[id], scratch);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const NodeId in = node.inputs[k];
            if (!nodes_[in].requires_grad) {
                continue;
            }
            if (!grads[in]) {
                grads[in] = std::move(scratch[k]);
            } else {
                auto dst = grads[in]->values();
                auto src = scratch[k].values();
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    dst[i] += src[i];
                }
            }
        }
    }
    return Gradients(this, std::move(grads));
}

// --- primitives ------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    Tensor out = matmul_values(a.value(), b.value());
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.tape().record(OpKind::MatMul, std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               const Tensor& bv = t.value(ib);
                               if (t.requires_grad(ia)) {
                                   in[0] = matmul_values(g, transpose(bv));
                               }
                               if (t.requires_grad(ib)) {
                                   in[1] = matmul_values(transpose(av), g);
                               }
                           });
}

Var add_bias(const Var& x, const Var& bias) {
    require_same_tape(x, bias);
    require_matrix(x, "add_bias");
    require(bias.value().rank() == 1 && bias.value().size() == x.value().cols(),
            ErrorKind::Dimension,
            "add_bias: bias " + shape_string(bias.shape()) + " for input " +
                shape_string(x.shape()));
    Tensor out = x.value();
    const Tensor& b = bias.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += b[c];
        }
    }
    return x.tape().record(OpKind::AddBias, std::move(out), {x, bias},
                           [](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               in[0] = g;
                               for (std::size_t r = 0; r < g.rows(); ++r) {
                                   auto row = g.row(r);
                                   for (std::size_t c = 0; c < row.size(); ++c) {
                                       in[1][c] += row[c];
                                   }
                               }
                           });
}

Var add(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b.value()[i];
    }
    return a.tape().record(OpKind::Add, std::move(out), {a, b},
                           [](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               in[0] = g;
                               in[1] = g;
                           });
}

Var sub(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b.value()[i];
    }
    return a.tape().record(OpKind::Sub, std::move(out), {a, b},
                           [](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               in[0] = g;
                               in[1] = -g;
                           });
}

Var mul(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b.value()[i];
    }
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.tape().record(OpKind::Mul, std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               const Tensor& bv = t.value(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   in[0][i] = g[i] * bv[i];
                                   in[1][i] = g[i] * av[i];
                               }
                           });
}

Var div(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_same_shape(a, b, "div");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        require(b.value()[i] != 0.0, ErrorKind::Domain, "division by zero");
        out[i] /= b.value()[i];
    }
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.tape().record(OpKind::Div, std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               const Tensor& bv = t.value(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   in[0][i] = g[i] / bv[i];
                                   in[1][i] = -g[i] * av[i] / (bv[i] * bv[i]);
                               }
                           });
}

Var scale(const Var& a, double factor) {
    Tensor out = map_values(a.value(), [factor](double v) { return v * factor; });
    return a.tape().record(OpKind::Scale, std::move(out), {a},
                           [factor](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   in[0][i] = g[i] * factor;
                               }
                           });
}

Var relu(const Var& a) {
    Tensor out = map_values(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
    const NodeId ia = a.id();
    return a.tape().record(OpKind::Relu, std::move(out), {a},
                           [ia](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   in[0][i] = av[i] > 0.0 ? g[i] : 0.0;
                               }
                           });
}

Var exp(const Var& a) {
    Tensor out = map_values(a.value(), [](double v) { return std::exp(v); });
    Tensor saved = out;
    return a.tape().record(OpKind::Exp, std::move(out), {a},
                           [saved = std::move(saved)](const Tape&, const Tensor& g,
                                                      std::span<Tensor> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   in[0][i] = g[i] * saved[i];
                               }
                           });
}

Var log(const Var& a) {
    for (double v : a.value().values()) {
        require(v > 0.0, ErrorKind::Domain, "log of non-positive value " + std::to_string(v));
    }
    Tensor out = map_values(a.value(), [](double v) { return std::log(v); });
    const NodeId ia = a.id();
    return a.tape().record(OpKind::Log, std::move(out), {a},
                           [ia](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   in[0][i] = g[i] / av[i];
                               }
                           });
}

Var l2_normalize(const Var& a) {
    require_matrix(a, "l2_normalize");
    std::vector<double> norms;
    Tensor out = normalize_rows_checked(a.value(), norms);
    Tensor z = out;
    return a.tape().record(
        OpKind::L2Normalize, std::move(out), {a},
        [norms = std::move(norms), z = std::move(z)](const Tape&, const Tensor& g,
                                                     std::span<Tensor> in) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto gr = g.row(r);
                auto zr = z.row(r);
                double dot = 0.0;
                for (std::size_t c = 0; c < gr.size(); ++c) {
                    dot += gr[c] * zr[c];
                }
                auto dst = in[0].row(r);
                for (std::size_t c = 0; c < gr.size(); ++c) {
                    dst[c] = (gr[c] - dot * zr[c]) / norms[r];
                }
            }
        });
}

Var l2_normalize_frozen_norm(const Var& a) {
    require_matrix(a, "l2_normalize_frozen_norm");
    std::vector<double> norms;
    Tensor out = normalize_rows_checked(a.value(), norms);
    return a.tape().record(OpKind::L2NormalizeFrozenNorm, std::move(out), {a},
                           [norms](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               for (std::size_t r = 0; r < g.rows(); ++r) {
                                   auto gr = g.row(r);
                                   auto dst = in[0].row(r);
                                   for (std::size_t c = 0; c < gr.size(); ++c) {
                                       dst[c] = gr[c] / norms[r];
                                   }
                               }
                           });
}

Var squared_distance(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_matrix(a, "squared_distance");
    require_same_shape(a, b, "squared_distance");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(Shape{av.rows()});
    for (std::size_t r = 0; r < av.rows(); ++r) {
        double s = 0.0;
        auto ar = av.row(r);
        auto br = bv.row(r);
        for (std::size_t c = 0; c < ar.size(); ++c) {
            const double d = ar[c] - br[c];
            s += d * d;
        }
        out[r] = s;
    }
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.tape().record(OpKind::SquaredDistance, std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               const Tensor& bv = t.value(ib);
                               for (std::size_t r = 0; r < av.rows(); ++r) {
                                   auto ar = av.row(r);
                                   auto br = bv.row(r);
                                   auto da = in[0].row(r);
                                   auto db = in[1].row(r);
                                   for (std::size_t c = 0; c < ar.size(); ++c) {
                                       const double d = 2.0 * g[r] * (ar[c] - br[c]);
                                       da[c] = d;
                                       db[c] = -d;
                                   }
                               }
                           });
}

Var row_dot(const Var& a, const Var& b) {
    require_same_tape(a, b);
    require_matrix(a, "row_dot");
    require_same_shape(a, b, "row_dot");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(Shape{av.rows()});
    for (std::size_t r = 0; r < av.rows(); ++r) {
        double s = 0.0;
        auto ar = av.row(r);
        auto br = bv.row(r);
        for (std::size_t c = 0; c < ar.size(); ++c) {
            s += ar[c] * br[c];
        }
        out[r] = s;
    }
    const NodeId ia = a.id();
    const NodeId ib = b.id();
    return a.tape().record(OpKind::RowDot, std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               const Tensor& bv = t.value(ib);
                               for (std::size_t r = 0; r < av.rows(); ++r) {
                                   auto ar = av.row(r);
                                   auto br = bv.row(r);
                                   auto da = in[0].row(r);
                                   auto db = in[1].row(r);
                                   for (std::size_t c = 0; c < ar.size(); ++c) {
                                       da[c] = g[r] * br[c];
                                       db[c] = g[r] * ar[c];
                                   }
                               }
                           });
}

Var scale_rows(const Var& a, const Var& s) {
    require_same_tape(a, s);
    require_matrix(a, "scale_rows");
    require(s.value().rank() == 1 && s.value().size() == a.value().rows(), ErrorKind::Dimension,
            "scale_rows: factors " + shape_string(s.shape()) + " for " + shape_string(a.shape()));
    Tensor out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (double& v : out.row(r)) {
            v *= s.value()[r];
        }
    }
    const NodeId ia = a.id();
    const NodeId is = s.id();
    return a.tape().record(OpKind::ScaleRows, std::move(out), {a, s},
                           [ia, is](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& av = t.value(ia);
                               const Tensor& sv = t.value(is);
                               for (std::size_t r = 0; r < av.rows(); ++r) {
                                   auto gr = g.row(r);
                                   auto ar = av.row(r);
                                   auto da = in[0].row(r);
                                   double acc = 0.0;
                                   for (std::size_t c = 0; c < gr.size(); ++c) {
                                       da[c] = gr[c] * sv[r];
                                       acc += gr[c] * ar[c];
                                   }
                                   in[1][r] = acc;
                               }
                           });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    return a.tape().record(OpKind::Sum, Tensor::scalar(s), {a},
                           [](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               for (double& v : in[0].values()) {
                                   v = g.item();
                               }
                           });
}

Var batch_mean(const Var& a) {
    require(a.value().rank() == 1, ErrorKind::Dimension,
            "batch_mean expects a rank-1 tensor, got " + shape_string(a.shape()));
    const std::size_t n = a.value().size();
    require(n >= 1, ErrorKind::EmptyBatch, "batch_mean of an empty batch");
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    const double inv = 1.0 / static_cast<double>(n);
    return a.tape().record(OpKind::BatchMean, Tensor::scalar(s * inv), {a},
                           [inv](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               for (double& v : in[0].values()) {
                                   v = g.item() * inv;
                               }
                           });
}

Var pairwise_squared_distance(const Var& z) {
    require_matrix(z, "pairwise_squared_distance");
    const Tensor& zv = z.value();
    const std::size_t b = zv.rows();
    Tensor out(Shape{b, b});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            double s = 0.0;
            auto zi = zv.row(i);
            auto zj = zv.row(j);
            for (std::size_t c = 0; c < zi.size(); ++c) {
                const double d = zi[c] - zj[c];
                s += d * d;
            }
            out.at(i, j) = s;
            out.at(j, i) = s;
        }
    }
    const NodeId iz = z.id();
    return z.tape().record(OpKind::PairwiseSqDist, std::move(out), {z},
                           [iz](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               const Tensor& zv = t.value(iz);
                               const std::size_t b = zv.rows();
                               for (std::size_t i = 0; i < b; ++i) {
                                   for (std::size_t j = 0; j < b; ++j) {
                                       if (i == j) {
                                           continue;
                                       }
                                       const double w = 2.0 * (g.at(i, j) + g.at(j, i));
                                       auto zi = zv.row(i);
                                       auto zj = zv.row(j);
                                       auto di = in[0].row(i);
                                       for (std::size_t c = 0; c < zi.size(); ++c) {
                                           di[c] += w * (zi[c] - zj[c]);
                                       }
                                   }
                               }
                           });
}

Var offdiag_mean(const Var& m) {
    require_matrix(m, "offdiag_mean");
    const std::size_t b = m.value().rows();
    require(m.value().cols() == b, ErrorKind::Dimension, "offdiag_mean needs a square matrix");
    require(b >= 2, ErrorKind::InsufficientBatch, "need at least two rows for distinct pairs");
    double s = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i != j) {
                s += m.value().at(i, j);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(b * (b - 1));
    return m.tape().record(OpKind::OffDiagMean, Tensor::scalar(s * inv), {m},
                           [inv, b](const Tape&, const Tensor& g, std::span<Tensor> in) {
                               for (std::size_t i = 0; i < b; ++i) {
                                   for (std::size_t j = 0; j < b; ++j) {
                                       in[0].at(i, j) = i == j ? 0.0 : g.item() * inv;
                                   }
                               }
                           });
}

Var stop_gradient(const Var& a) {
    return a.tape().record(OpKind::StopGradient, a.value(), {a}, nullptr);
}

Var tangential_grad(const Var& z) {
    require_matrix(z, "tangential_grad");
    for (std::size_t r = 0; r < z.value().rows(); ++r) {
        const double n = row_norm(z.value().row(r));
        require(std::abs(n - 1.0) <= kUnitNormTolerance, ErrorKind::Precondition,
                "tangential filter needs unit rows; row " + std::to_string(r) + " has norm " +
                    std::to_string(n));
    }
    const NodeId iz = z.id();
    return z.tape().record(OpKind::TangentialGrad, z.value(), {z},
                           [iz](const Tape& t, const Tensor& g, std::span<Tensor> in) {
                               in[0] = tangential_filter(g, t.value(iz));
                           });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    require_matrix(logits, "softmax_cross_entropy");
    const Tensor& lv = logits.value();
    const std::size_t b = lv.rows();
    const std::size_t k = lv.cols();
    require(b >= 1, ErrorKind::EmptyBatch, "softmax_cross_entropy of an empty batch");
    require(labels.size() == b, ErrorKind::Dimension, "label count does not match batch");
    Tensor probs(lv.shape());
    double loss = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < k, ErrorKind::Domain,
                "label out of range");
        auto row = lv.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            z += std::exp(row[c] - mx);
        }
        for (std::size_t c = 0; c < k; ++c) {
            probs.at(r, c) = std::exp(row[c] - mx) / z;
        }
        loss += -(row[static_cast<std::size_t>(labels[r])] - mx - std::log(z));
    }
    const double inv = 1.0 / static_cast<double>(b);
    std::vector<int> owned(labels.begin(), labels.end());
    return logits.tape().record(
        OpKind::SoftmaxCrossEntropy, Tensor::scalar(loss * inv), {logits},
        [probs = std::move(probs), owned = std::move(owned), inv](
            const Tape&, const Tensor& g, std::span<Tensor> in) {
            for (std::size_t r = 0; r < probs.rows(); ++r) {
                for (std::size_t c = 0; c < probs.cols(); ++c) {
                    const double target = static_cast<std::size_t>(owned[r]) == c ? 1.0 : 0.0;
                    in[0].at(r, c) = g.item() * inv * (probs.at(r, c) - target);
                }
            }
        });
}

// --- untaped helpers -------------------------------------------------------

Tensor tangential_filter(const Tensor& g, const Tensor& z) {
    require(g.rank() == 2 && g.same_shape(z), ErrorKind::Dimension,
            "tangential_filter: shapes " + shape_string(g.shape()) + " and " +
                shape_string(z.shape()));
    Tensor out = g;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto zr = z.row(r);
        const double n = row_norm(zr);
        require(std::abs(n - 1.0) <= kUnitNormTolerance, ErrorKind::Precondition,
                "tangential filter needs unit rows; row " + std::to_string(r) + " has norm " +
                    std::to_string(n));
        auto gr = g.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < gr.size(); ++c) {
            dot += gr[c] * zr[c];
        }
        auto dst = out.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) {
            dst[c] = gr[c] - dot * zr[c];
        }
    }
    return out;
}

std::vector<bool> relu_pattern(const Tape& tape) {
    std::vector<bool> bits;
    for (NodeId id = 0; id < tape.size(); ++id) {
        if (tape.kind(id) != OpKind::Relu) {
            continue;
        }
        for (double v : tape.value(tape.inputs(id)[0]).values()) {
            bits.push_back(v > 0.0);
        }
    }
    return bits;
}

}  // namespace raftlab
