#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "gltd/common.hpp"
#include "gltd/tensor.hpp"

namespace gltd {

// Handle to a node on a specific tape. The tape id catches accidental mixing
// of variables across tapes (a "detached" use).
struct VarId {
    std::int32_t idx = -1;
    std::uint32_t tape = 0;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode tape. Nodes are recorded in topological order as operations
// execute; backward() walks them once in reverse. One tape per training
// step / per image; never shared across threads.
class Tape {
public:
    Tape() : id_(next_id_.fetch_add(1, std::memory_order_relaxed) + 1) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    VarId constant(Tensor v) {
        ensure_finite(v, "constant");
        return push(std::move(v), {}, nullptr, -1);
    }

    // Leaf parameter; gradients for it are reported under `param_index`.
    VarId leaf(Tensor v, int param_index) {
        ensure_finite(v, "leaf");
        check(param_index >= 0, "Tape::leaf: negative parameter index");
        return push(std::move(v), {}, nullptr, param_index);
    }

    const Tensor& value(VarId v) const { return node(v).value; }

    // Gradient of the last backward() pass w.r.t. the given node.
    const Tensor& grad(VarId v) const {
        const Node& n = node(v);
        check(!n.grad.shape.empty(), "Tape::grad: no backward pass recorded");
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }
    std::uint32_t id() const { return id_; }

    // Accumulates d(loss)/d(leaf) into param_grads[param_index] for every
    // leaf. Buffers must be pre-shaped; accumulation order is the node
    // recording order, so results are bit-deterministic. Nodes with no leaf
    // upstream carry no gradient buffer and their back fns never run; leaf
    // gradients are unaffected because every skipped path ends in constants.
    void backward(VarId loss, std::vector<Tensor>& param_grads) {
        const Node& ln = node(loss);
        check(ln.value.numel() == 1, "backward: loss must be a scalar");
        for (auto& n : nodes_) {
            n.grad = n.needs_grad ? Tensor::zeros(n.value.shape) : Tensor{};
        }
        Node& lnode = nodes_[static_cast<std::size_t>(loss.idx)];
        if (lnode.grad.shape.empty()) lnode.grad = Tensor::zeros(lnode.value.shape);
        lnode.grad.data[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.back && n.needs_grad) n.back(*this, static_cast<int>(i));
        }
        for (const auto& n : nodes_) {
            if (n.leaf_param < 0) continue;
            const auto p = static_cast<std::size_t>(n.leaf_param);
            check(p < param_grads.size(), "backward: gradient buffer too small");
            check(param_grads[p].same_shape(n.grad), "backward: gradient buffer shape mismatch");
            for (std::size_t j = 0; j < n.grad.data.size(); ++j)
                param_grads[p].data[j] += n.grad.data[j];
        }
    }

    // --- used by the op layer ---
    using BackFn = std::function<void(Tape&, int)>;

    VarId push(Tensor value, std::vector<std::int32_t> parents, BackFn back, int leaf_param) {
        bool needs = leaf_param >= 0;
        for (std::size_t i = 0; !needs && i < parents.size(); ++i)
            needs = nodes_[static_cast<std::size_t>(parents[i])].needs_grad;
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(parents), std::move(back),
                              leaf_param, needs});
        return VarId{static_cast<std::int32_t>(nodes_.size() - 1), id_};
    }

    const Tensor& value_at(int idx) const { return nodes_[static_cast<std::size_t>(idx)].value; }
    Tensor& grad_at(int idx) { return nodes_[static_cast<std::size_t>(idx)].grad; }
    // True when some leaf is upstream of the node, i.e. its grad buffer exists
    // during backward. Back fns consult this before touching a parent.
    bool wants_grad(int idx) const { return nodes_[static_cast<std::size_t>(idx)].needs_grad; }
    const std::vector<std::int32_t>& parents_at(int idx) const {
        return nodes_[static_cast<std::size_t>(idx)].parents;
    }

    std::int32_t index_of(VarId v) const {
        node(v);  // validates
        return v.idx;
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::int32_t> parents;
        BackFn back;
        int leaf_param = -1;
        bool needs_grad = false;
    };

    const Node& node(VarId v) const {
        check(v.valid(), "invalid variable handle");
        check(v.tape == id_, "detached node: variable belongs to a different tape");
        check(static_cast<std::size_t>(v.idx) < nodes_.size(), "variable index out of range");
        return nodes_[static_cast<std::size_t>(v.idx)];
    }

    std::vector<Node> nodes_;
    std::uint32_t id_;
    inline static std::atomic<std::uint32_t> next_id_{0};
};

// ---- primitive operations --------------------------------------------------

namespace detail {

inline void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace detail

inline VarId add(Tape& t, VarId a, VarId b) {
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    check(ta.same_shape(tb), "add: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    ensure_finite(out, "add");
    const auto pa = a.idx, pb = b.idx;
    return t.push(std::move(out), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                      if (tp.wants_grad(pa)) detail::accumulate(tp.grad_at(pa), tp.grad_at(self));
                      if (tp.wants_grad(pb)) detail::accumulate(tp.grad_at(pb), tp.grad_at(self));
                  },
                  -1);
}

inline VarId sub(Tape& t, VarId a, VarId b) {
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    check(ta.same_shape(tb), "sub: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    ensure_finite(out, "sub");
    const auto pa = a.idx, pb = b.idx;
    return t.push(std::move(out), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      if (tp.wants_grad(pa)) detail::accumulate(tp.grad_at(pa), g);
                      if (tp.wants_grad(pb)) {
                          Tensor& gb = tp.grad_at(pb);
                          for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
                      }
                  },
                  -1);
}

inline VarId mul(Tape& t, VarId a, VarId b) {
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    check(ta.same_shape(tb), "mul: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    ensure_finite(out, "mul");
    const auto pa = a.idx, pb = b.idx;
    return t.push(std::move(out), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& va = tp.value_at(pa);
                      const Tensor& vb = tp.value_at(pb);
                      if (tp.wants_grad(pa)) {
                          Tensor& ga = tp.grad_at(pa);
                          for (std::size_t i = 0; i < g.data.size(); ++i)
                              ga.data[i] += g.data[i] * vb.data[i];
                      }
                      if (tp.wants_grad(pb)) {
                          Tensor& gb = tp.grad_at(pb);
                          for (std::size_t i = 0; i < g.data.size(); ++i)
                              gb.data[i] += g.data[i] * va.data[i];
                      }
                  },
                  -1);
}

inline VarId scale(Tape& t, VarId a, double c) {
    Tensor out = t.value(a);
    for (auto& v : out.data) v *= c;
    ensure_finite(out, "scale");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, c](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      Tensor& ga = tp.grad_at(pa);
                      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * g.data[i];
                  },
                  -1);
}

// Elementwise multiply by a constant tensor (no gradient to the constant).
inline VarId mul_const(Tape& t, VarId a, const Tensor& m) {
    const Tensor& ta = t.value(a);
    check(ta.same_shape(m), "mul_const: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= m.data[i];
    ensure_finite(out, "mul_const");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, m](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      Tensor& ga = tp.grad_at(pa);
                      for (std::size_t i = 0; i < ga.data.size(); ++i)
                          ga.data[i] += g.data[i] * m.data[i];
                  },
                  -1);
}

// Row k of the output is row k of `a` scaled by weights[k] (constant).
inline VarId scale_rows(Tape& t, VarId a, const std::vector<double>& weights) {
    const Tensor& ta = t.value(a);
    check(ta.rank() == 2 && ta.rows() == weights.size(), "scale_rows: weight count mismatch");
    Tensor out = ta;
    const std::size_t d = ta.cols();
    for (std::size_t k = 0; k < weights.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) out.data[k * d + j] *= weights[k];
    ensure_finite(out, "scale_rows");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, weights](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      Tensor& ga = tp.grad_at(pa);
                      const std::size_t d = g.cols();
                      for (std::size_t k = 0; k < weights.size(); ++k)
                          for (std::size_t j = 0; j < d; ++j)
                              ga.data[k * d + j] += g.data[k * d + j] * weights[k];
                  },
                  -1);
}

// a[K×d] + b[1×d], broadcast over rows.
inline VarId add_rowvec(Tape& t, VarId a, VarId b) {
    const Tensor& ta = t.value(a);
    const Tensor& tb = t.value(b);
    check(ta.rank() == 2 && tb.rank() == 2 && tb.rows() == 1 && tb.cols() == ta.cols(),
          "add_rowvec: expects [K×d] and [1×d]");
    Tensor out = ta;
    const std::size_t K = ta.rows(), d = ta.cols();
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < d; ++j) out.data[k * d + j] += tb.data[j];
    ensure_finite(out, "add_rowvec");
    const auto pa = a.idx, pb = b.idx;
    return t.push(std::move(out), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      if (tp.wants_grad(pa)) detail::accumulate(tp.grad_at(pa), g);
                      if (tp.wants_grad(pb)) {
                          Tensor& gb = tp.grad_at(pb);
                          const std::size_t K = g.rows(), d = g.cols();
                          for (std::size_t k = 0; k < K; ++k)
                              for (std::size_t j = 0; j < d; ++j) gb.data[j] += g.data[k * d + j];
                      }
                  },
                  -1);
}

inline VarId matmul(Tape& t, VarId a, VarId b) {
    Tensor out = mm(t.value(a), t.value(b));
    ensure_finite(out, "matmul");
    const auto pa = a.idx, pb = b.idx;
    return t.push(std::move(out), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      if (tp.wants_grad(pa))
                          detail::accumulate(tp.grad_at(pa), mm_nt(g, tp.value_at(pb)));
                      if (tp.wants_grad(pb))
                          detail::accumulate(tp.grad_at(pb), mm_tn(tp.value_at(pa), g));
                  },
                  -1);
}

// a · bᵀ — used for attention scores and prototype logits.
inline VarId matmul_nt(Tape& t, VarId a, VarId b) {
    Tensor out = mm_nt(t.value(a), t.value(b));
    ensure_finite(out, "matmul_nt");
    const auto pa = a.idx, pb = b.idx;
    return t.push(std::move(out), {pa, pb},
                  [pa, pb](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      if (tp.wants_grad(pa))
                          detail::accumulate(tp.grad_at(pa), mm(g, tp.value_at(pb)));
                      if (tp.wants_grad(pb))
                          detail::accumulate(tp.grad_at(pb), mm_tn(g, tp.value_at(pa)));
                  },
                  -1);
}

inline VarId relu(Tape& t, VarId a) {
    Tensor out = t.value(a);
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& x = tp.value_at(pa);
                      Tensor& ga = tp.grad_at(pa);
                      for (std::size_t i = 0; i < g.data.size(); ++i)
                          if (x.data[i] > 0.0) ga.data[i] += g.data[i];
                  },
                  -1);
}

inline VarId gelu(Tape& t, VarId a) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Tensor out = t.value(a);
    for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    ensure_finite(out, "gelu");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& x = tp.value_at(pa);
                      Tensor& ga = tp.grad_at(pa);
                      for (std::size_t i = 0; i < g.data.size(); ++i) {
                          const double xi = x.data[i];
                          const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
                          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
                          ga.data[i] += g.data[i] * (cdf + xi * pdf);
                      }
                  },
                  -1);
}

// Row-wise layer normalization with per-feature gain and bias.
inline VarId layer_norm(Tape& t, VarId x, VarId gain, VarId bias, double eps = 1e-5) {
    const Tensor& tx = t.value(x);
    const Tensor& tg = t.value(gain);
    const Tensor& tb = t.value(bias);
    check(tx.rank() == 2, "layer_norm: input must be a matrix");
    const std::size_t K = tx.rows(), d = tx.cols();
    check(tg.rank() == 2 && tg.rows() == 1 && tg.cols() == d, "layer_norm: bad gain shape");
    check(tb.rank() == 2 && tb.rows() == 1 && tb.cols() == d, "layer_norm: bad bias shape");

    Tensor xhat({K, d});
    std::vector<double> sigma(K);
    Tensor out({K, d});
    for (std::size_t k = 0; k < K; ++k) {
        const double* row = tx.data.data() + k * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double s = std::sqrt(var + eps);
        sigma[k] = s;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mu) / s;
            xhat.data[k * d + j] = xh;
            out.data[k * d + j] = xh * tg.data[j] + tb.data[j];
        }
    }
    ensure_finite(out, "layer_norm");
    const auto px = x.idx, pg = gain.idx, pb = bias.idx;
    return t.push(std::move(out), {px, pg, pb},
                  [px, pg, pb, xhat, sigma](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& gain = tp.value_at(pg);
                      Tensor* gx = tp.wants_grad(px) ? &tp.grad_at(px) : nullptr;
                      Tensor* gg = tp.wants_grad(pg) ? &tp.grad_at(pg) : nullptr;
                      Tensor* gb = tp.wants_grad(pb) ? &tp.grad_at(pb) : nullptr;
                      const std::size_t K = g.rows(), d = g.cols();
                      for (std::size_t k = 0; k < K; ++k) {
                          double mean_h = 0.0, mean_hx = 0.0;
                          for (std::size_t j = 0; j < d; ++j) {
                              const double h = g.data[k * d + j] * gain.data[j];
                              mean_h += h;
                              mean_hx += h * xhat.data[k * d + j];
                          }
                          mean_h /= static_cast<double>(d);
                          mean_hx /= static_cast<double>(d);
                          for (std::size_t j = 0; j < d; ++j) {
                              const double h = g.data[k * d + j] * gain.data[j];
                              if (gx)
                                  gx->data[k * d + j] +=
                                      (h - mean_h - xhat.data[k * d + j] * mean_hx) / sigma[k];
                              if (gg) gg->data[j] += g.data[k * d + j] * xhat.data[k * d + j];
                              if (gb) gb->data[j] += g.data[k * d + j];
                          }
                      }
                  },
                  -1);
}

// Rows scaled to unit L2 norm; rows shorter than eps are divided by eps
// instead so the zero vector stays representable.
inline VarId l2_normalize_rows(Tape& t, VarId a, double eps = 1e-9) {
    const Tensor& ta = t.value(a);
    check(ta.rank() == 2, "l2_normalize_rows: input must be a matrix");
    const std::size_t K = ta.rows(), d = ta.cols();
    Tensor out({K, d});
    std::vector<double> norms(K);
    std::vector<bool> clamped(K);
    for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += ta.data[k * d + j] * ta.data[k * d + j];
        const double n = std::sqrt(s);
        clamped[k] = n < eps;
        norms[k] = clamped[k] ? eps : n;
        for (std::size_t j = 0; j < d; ++j) out.data[k * d + j] = ta.data[k * d + j] / norms[k];
    }
    ensure_finite(out, "l2_normalize_rows");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, norms, clamped](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& x = tp.value_at(pa);
                      Tensor& ga = tp.grad_at(pa);
                      const std::size_t K = g.rows(), d = g.cols();
                      for (std::size_t k = 0; k < K; ++k) {
                          const double n = norms[k];
                          if (clamped[k]) {
                              for (std::size_t j = 0; j < d; ++j)
                                  ga.data[k * d + j] += g.data[k * d + j] / n;
                              continue;
                          }
                          double dot = 0.0;
                          for (std::size_t j = 0; j < d; ++j)
                              dot += g.data[k * d + j] * x.data[k * d + j];
                          for (std::size_t j = 0; j < d; ++j)
                              ga.data[k * d + j] +=
                                  g.data[k * d + j] / n - x.data[k * d + j] * dot / (n * n * n);
                      }
                  },
                  -1);
}

// ln(max(x, floor)); zero gradient on the clamped branch.
inline VarId log_clamped(Tape& t, VarId a, double floor = 1e-12) {
    const Tensor& ta = t.value(a);
    Tensor out = ta;
    for (auto& v : out.data) v = std::log(v > floor ? v : floor);
    ensure_finite(out, "log_clamped");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, floor](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& x = tp.value_at(pa);
                      Tensor& ga = tp.grad_at(pa);
                      for (std::size_t i = 0; i < g.data.size(); ++i)
                          if (x.data[i] > floor) ga.data[i] += g.data[i] / x.data[i];
                  },
                  -1);
}

// Selects rows of a [K×d] matrix; backward scatter-adds into the source rows.
inline VarId gather_rows(Tape& t, VarId a, const std::vector<std::size_t>& idx) {
    const Tensor& ta = t.value(a);
    check(ta.rank() == 2, "gather_rows: input must be a matrix");
    const std::size_t d = ta.cols();
    Tensor out({idx.size(), d});
    for (std::size_t m = 0; m < idx.size(); ++m) {
        check(idx[m] < ta.rows(), "gather_rows: index out of range");
        for (std::size_t j = 0; j < d; ++j) out.data[m * d + j] = ta.data[idx[m] * d + j];
    }
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, idx](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      Tensor& ga = tp.grad_at(pa);
                      const std::size_t d = g.cols();
                      for (std::size_t m = 0; m < idx.size(); ++m)
                          for (std::size_t j = 0; j < d; ++j)
                              ga.data[idx[m] * d + j] += g.data[m * d + j];
                  },
                  -1);
}

inline VarId sum_all(Tape& t, VarId a) {
    const Tensor& ta = t.value(a);
    double s = 0.0;
    for (double v : ta.data) s += v;
    Tensor out = Tensor::scalar(s);
    ensure_finite(out, "sum_all");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa](Tape& tp, int self) {
                      const double g = tp.grad_at(self).data[0];
                      Tensor& ga = tp.grad_at(pa);
                      for (auto& v : ga.data) v += g;
                  },
                  -1);
}

// Column means over rows: [K×d] → [1×d].
inline VarId mean_rows(Tape& t, VarId a) {
    const Tensor& ta = t.value(a);
    check(ta.rank() == 2 && ta.rows() > 0, "mean_rows: input must be a nonempty matrix");
    const std::size_t K = ta.rows(), d = ta.cols();
    Tensor out({1, d});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < d; ++j) out.data[j] += ta.data[k * d + j];
    for (auto& v : out.data) v /= static_cast<double>(K);
    ensure_finite(out, "mean_rows");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, K](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      Tensor& ga = tp.grad_at(pa);
                      const std::size_t d = g.cols();
                      for (std::size_t k = 0; k < K; ++k)
                          for (std::size_t j = 0; j < d; ++j)
                              ga.data[k * d + j] += g.data[j] / static_cast<double>(K);
                  },
                  -1);
}

// Row-wise softmax of x/temperature, computed with max subtraction.
inline VarId softmax_rows(Tape& t, VarId a, double temperature) {
    check(temperature > 0.0, "softmax: temperature must be positive");
    const Tensor& ta = t.value(a);
    check(ta.rank() == 2, "softmax: input must be a matrix");
    const std::size_t K = ta.rows(), d = ta.cols();
    Tensor out({K, d});
    for (std::size_t k = 0; k < K; ++k) {
        double mx = -1e300;
        for (std::size_t j = 0; j < d; ++j) mx = std::max(mx, ta.data[k * d + j] / temperature);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double e = std::exp(ta.data[k * d + j] / temperature - mx);
            out.data[k * d + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < d; ++j) out.data[k * d + j] /= z;
    }
    ensure_finite(out, "softmax");
    const auto pa = a.idx;
    return t.push(std::move(out), {pa},
                  [pa, temperature](Tape& tp, int self) {
                      const Tensor& g = tp.grad_at(self);
                      const Tensor& y = tp.value_at(self);
                      Tensor& ga = tp.grad_at(pa);
                      const std::size_t K = g.rows(), d = g.cols();
                      for (std::size_t k = 0; k < K; ++k) {
                          double gy = 0.0;
                          for (std::size_t j = 0; j < d; ++j)
                              gy += g.data[k * d + j] * y.data[k * d + j];
                          for (std::size_t j = 0; j < d; ++j)
                              ga.data[k * d + j] +=
                                  y.data[k * d + j] * (g.data[k * d + j] - gy) / temperature;
                      }
                  },
                  -1);
}

}  // namespace gltd
