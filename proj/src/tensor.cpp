#include "uda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uda/error.hpp"

namespace uda {

Tensor2::Tensor2(std::size_t r, std::size_t c, double fill)
    : rows(r), cols(c), values(r * c, fill) {}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> data) {
    Tensor2 t;
    t.rows = data.size();
    t.cols = data.size() ? data.begin()->size() : 0;
    t.values.reserve(t.rows * t.cols);
    for (const auto& row : data) {
        if (row.size() != t.cols)
            throw DimensionError("from_rows: ragged rows");
        t.values.insert(t.values.end(), row.begin(), row.end());
    }
    return t;
}

void Tensor2::accumulate_grad(std::span<const double> g) {
    if (g.size() != values.size())
        throw DimensionError("accumulate_grad: gradient size " +
                             std::to_string(g.size()) + " != value size " +
                             std::to_string(values.size()));
    if (!grad) grad.emplace(values.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) (*grad)[i] += g[i];
}

std::string Tensor2::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

// ---------------------------------------------------------------------------
// Value kernels

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows)
        throw DimensionError("matmul: inner dimensions differ: " + a.shape_str() +
                             " vs " + b.shape_str());
    Tensor2 out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j)
                out.at(i, j) += aik * b.at(k, j);
        }
    }
    return out;
}

Tensor2 add_bias(const Tensor2& x, const Tensor2& bias) {
    if (bias.rows != 1 || bias.cols != x.cols)
        throw DimensionError("add_bias: bias " + bias.shape_str() +
                             " does not broadcast over " + x.shape_str());
    Tensor2 out = x;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j)
            out.at(i, j) += bias.at(0, j);
    return out;
}

Tensor2 relu(const Tensor2& x) {
    Tensor2 out = x;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor2 softmax_rows(const Tensor2& logits) {
    Tensor2 out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double max_logit = logits.at(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j)
            max_logit = std::max(max_logit, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            const double e = std::exp(logits.at(i, j) - max_logit);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < logits.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor2 value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr});
    return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor2& tensor) {
    nodes_.push_back(Node{tensor, {}, nullptr, &tensor});
    return Var{nodes_.size() - 1};
}

Var Tape::emit(Tensor2 value, PullFn pull) {
    nodes_.push_back(Node{std::move(value), {}, std::move(pull), nullptr});
    return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node_at(Var v) const {
    if (!v.valid() || v.id >= nodes_.size())
        throw StateError("tape: variable does not belong to this tape");
    return nodes_[v.id];
}

Tape::Node& Tape::node_at(Var v) {
    if (!v.valid() || v.id >= nodes_.size())
        throw StateError("tape: variable does not belong to this tape");
    return nodes_[v.id];
}

const Tensor2& Tape::value(Var v) const { return node_at(v).value; }

std::span<const double> Tape::adjoint(Var v) const {
    const Node& n = node_at(v);
    return {n.adj.data(), n.adj.size()};
}

void Tape::add_to_adjoint(Var v, std::span<const double> g) {
    Node& n = node_at(v);
    for (std::size_t i = 0; i < g.size(); ++i) n.adj[i] += g[i];
}

void Tape::scatter_adjoint(Var v, std::size_t offset, double g) {
    node_at(v).adj[offset] += g;
}

void Tape::backward(Var scalar_loss) {
    if (consumed_)
        throw StateError(
            "tape: backward already replayed; record a fresh forward pass");
    Node& loss = node_at(scalar_loss);
    if (loss.value.rows != 1 || loss.value.cols != 1)
        throw DimensionError("tape: backward expects a 1x1 scalar, got " +
                             loss.value.shape_str());
    for (Node& n : nodes_) n.adj.assign(n.value.size(), 0.0);
    loss.adj[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].pull) nodes_[i].pull(*this, i);
    }
    for (Node& n : nodes_) {
        if (n.bound) n.bound->accumulate_grad(n.adj);
    }
    consumed_ = true;
}

// ---------------------------------------------------------------------------
// Recorded ops

Var matmul(Tape& t, Var a, Var b) {
    Tensor2 out = matmul(t.value(a), t.value(b));
    return t.emit(std::move(out), [a, b](Tape& tp, std::size_t self) {
        const auto up = tp.adjoint(Var{self});
        const Tensor2& av = tp.value(a);
        const Tensor2& bv = tp.value(b);
        const std::size_t n = av.rows, k = av.cols, m = bv.cols;
        // dA = dR * B^T
        std::vector<double> da(n * k, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                const double u = up[i * m + j];
                if (u == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p)
                    da[i * k + p] += u * bv.at(p, j);
            }
        tp.add_to_adjoint(a, da);
        // dB = A^T * dR
        std::vector<double> db(k * m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av_ip = av.at(i, p);
                if (av_ip == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j)
                    db[p * m + j] += av_ip * up[i * m + j];
            }
        tp.add_to_adjoint(b, db);
    });
}

Var add_bias(Tape& t, Var x, Var bias) {
    Tensor2 out = add_bias(t.value(x), t.value(bias));
    return t.emit(std::move(out), [x, bias](Tape& tp, std::size_t self) {
        const auto up = tp.adjoint(Var{self});
        tp.add_to_adjoint(x, up);
        const Tensor2& xv = tp.value(x);
        std::vector<double> db(xv.cols, 0.0);
        for (std::size_t i = 0; i < xv.rows; ++i)
            for (std::size_t j = 0; j < xv.cols; ++j)
                db[j] += up[i * xv.cols + j];
        tp.add_to_adjoint(bias, db);
    });
}

Var relu(Tape& t, Var x) {
    Tensor2 out = relu(t.value(x));
    return t.emit(std::move(out), [x](Tape& tp, std::size_t self) {
        const auto up = tp.adjoint(Var{self});
        const Tensor2& xv = tp.value(x);
        std::vector<double> dx(xv.size(), 0.0);
        for (std::size_t i = 0; i < xv.size(); ++i)
            dx[i] = xv.values[i] > 0.0 ? up[i] : 0.0;
        tp.add_to_adjoint(x, dx);
    });
}

Var add(Tape& t, Var a, Var b) {
    const Tensor2& av = t.value(a);
    const Tensor2& bv = t.value(b);
    if (av.rows != bv.rows || av.cols != bv.cols)
        throw DimensionError("add: shape mismatch: " + av.shape_str() + " vs " +
                             bv.shape_str());
    Tensor2 out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += bv.values[i];
    return t.emit(std::move(out), [a, b](Tape& tp, std::size_t self) {
        const auto up = tp.adjoint(Var{self});
        tp.add_to_adjoint(a, up);
        tp.add_to_adjoint(b, up);
    });
}

Var scale(Tape& t, Var x, double k) {
    Tensor2 out = t.value(x);
    for (double& v : out.values) v *= k;
    return t.emit(std::move(out), [x, k](Tape& tp, std::size_t self) {
        const auto up = tp.adjoint(Var{self});
        std::vector<double> dx(up.size());
        for (std::size_t i = 0; i < up.size(); ++i) dx[i] = k * up[i];
        tp.add_to_adjoint(x, dx);
    });
}

Var weighted_sum(Tape& t, Var x, const Tensor2& weights) {
    const Tensor2& xv = t.value(x);
    if (xv.rows != weights.rows || xv.cols != weights.cols)
        throw DimensionError("weighted_sum: shape mismatch: " + xv.shape_str() +
                             " vs " + weights.shape_str());
    double total = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i)
        total += xv.values[i] * weights.values[i];
    return t.emit(Tensor2(1, 1, total), [x, weights](Tape& tp, std::size_t self) {
        const double u = tp.adjoint(Var{self})[0];
        if (u == 0.0) return;
        std::vector<double> dx(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i)
            dx[i] = u * weights.values[i];
        tp.add_to_adjoint(x, dx);
    });
}

SoftmaxXent softmax_cross_entropy(Tape& t, Var logits,
                                  const std::vector<int>& labels) {
    const Tensor2& z = t.value(logits);
    if (labels.size() != z.rows)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(z.rows) + " rows");
    const std::size_t k = z.cols;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw LabelError("softmax_cross_entropy: label " +
                             std::to_string(labels[i]) + " out of range [0," +
                             std::to_string(k) + ") at row " + std::to_string(i));
    }
    Tensor2 probs = softmax_rows(z);
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        double max_logit = z.at(i, 0);
        for (std::size_t j = 1; j < k; ++j) max_logit = std::max(max_logit, z.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(z.at(i, j) - max_logit);
        const double lse = max_logit + std::log(sum);
        total += lse - z.at(i, static_cast<std::size_t>(labels[i]));
    }
    const double n = static_cast<double>(z.rows);
    Tensor2 loss(1, 1, total / n);
    Tensor2 probs_copy = probs;
    Var loss_var = t.emit(
        std::move(loss),
        [logits, labels, probs = std::move(probs_copy), n](Tape& tp, std::size_t self) {
            const double u = tp.adjoint(Var{self})[0];
            if (u == 0.0) return;
            std::vector<double> dz(probs.size());
            for (std::size_t i = 0; i < probs.rows; ++i)
                for (std::size_t j = 0; j < probs.cols; ++j) {
                    const double one_hot =
                        (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                    dz[i * probs.cols + j] = u * (probs.at(i, j) - one_hot) / n;
                }
            tp.add_to_adjoint(logits, dz);
        });
    return {loss_var, std::move(probs)};
}

Var bce_with_logits(Tape& t, Var logits, const std::vector<int>& labels) {
    const Tensor2& z = t.value(logits);
    if (z.cols != 1)
        throw DimensionError("bce_with_logits: expected nx1 logits, got " +
                             z.shape_str());
    if (labels.size() != z.rows)
        throw DimensionError("bce_with_logits: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(z.rows) + " rows");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw LabelError("bce_with_logits: label " + std::to_string(labels[i]) +
                             " is not binary at row " + std::to_string(i));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const double zi = z.at(i, 0);
        const double yi = static_cast<double>(labels[i]);
        // max(z,0) - z*y + log(1 + exp(-|z|))
        total += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
    }
    const double n = static_cast<double>(z.rows);
    Tensor2 loss(1, 1, total / n);
    return t.emit(std::move(loss), [logits, labels, n](Tape& tp, std::size_t self) {
        const double u = tp.adjoint(Var{self})[0];
        if (u == 0.0) return;
        const Tensor2& zv = tp.value(logits);
        std::vector<double> dz(zv.rows);
        for (std::size_t i = 0; i < zv.rows; ++i) {
            const double zi = zv.at(i, 0);
            const double sig = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                         : std::exp(zi) / (1.0 + std::exp(zi));
            dz[i] = u * (sig - static_cast<double>(labels[i])) / n;
        }
        tp.add_to_adjoint(logits, dz);
    });
}

Var sum_squared_row_distance(Tape& t, Var features,
                             std::span<const std::size_t> row_indices,
                             std::span<const int> anchor_indices,
                             const Tensor2& anchors) {
    const Tensor2& f = t.value(features);
    if (anchors.cols != f.cols)
        throw DimensionError("sum_squared_row_distance: features " + f.shape_str() +
                             " vs anchors " + anchors.shape_str());
    if (row_indices.size() != anchor_indices.size())
        throw DimensionError("sum_squared_row_distance: " +
                             std::to_string(row_indices.size()) + " rows vs " +
                             std::to_string(anchor_indices.size()) + " anchors");
    for (std::size_t p = 0; p < row_indices.size(); ++p) {
        if (row_indices[p] >= f.rows)
            throw IndexError("sum_squared_row_distance: row index " +
                             std::to_string(row_indices[p]) + " out of range [0," +
                             std::to_string(f.rows) + ")");
        if (anchor_indices[p] < 0 ||
            static_cast<std::size_t>(anchor_indices[p]) >= anchors.rows)
            throw IndexError("sum_squared_row_distance: anchor index " +
                             std::to_string(anchor_indices[p]) + " out of range [0," +
                             std::to_string(anchors.rows) + ")");
    }
    double total = 0.0;
    for (std::size_t p = 0; p < row_indices.size(); ++p) {
        const std::size_t r = row_indices[p];
        const std::size_t a = static_cast<std::size_t>(anchor_indices[p]);
        for (std::size_t j = 0; j < f.cols; ++j) {
            const double d = f.at(r, j) - anchors.at(a, j);
            total += d * d;
        }
    }
    std::vector<std::size_t> rows_copy(row_indices.begin(), row_indices.end());
    std::vector<int> anchors_copy(anchor_indices.begin(), anchor_indices.end());
    Tensor2 loss(1, 1, total);
    return t.emit(std::move(loss),
                  [features, rows = std::move(rows_copy),
                   anchor_ids = std::move(anchors_copy), anchors](Tape& tp, std::size_t self) {
                      const double u = tp.adjoint(Var{self})[0];
                      if (u == 0.0) return;
                      const Tensor2& fv = tp.value(features);
                      std::vector<double> df(fv.size(), 0.0);
                      for (std::size_t p = 0; p < rows.size(); ++p) {
                          const std::size_t r = rows[p];
                          const std::size_t a = static_cast<std::size_t>(anchor_ids[p]);
                          for (std::size_t j = 0; j < fv.cols; ++j)
                              df[r * fv.cols + j] +=
                                  u * 2.0 * (fv.at(r, j) - anchors.at(a, j));
                      }
                      tp.add_to_adjoint(features, df);
                  });
}

Var sum_squared_row_distance(Tape& t, Var features,
                             std::span<const int> anchor_indices,
                             const Tensor2& anchors) {
    std::vector<std::size_t> rows(anchor_indices.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return sum_squared_row_distance(t, features, rows, anchor_indices, anchors);
}

}  // namespace uda
