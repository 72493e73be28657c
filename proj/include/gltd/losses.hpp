#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gltd/common.hpp"
#include "gltd/geometry.hpp"
#include "gltd/tape.hpp"
#include "gltd/tensor.hpp"

namespace gltd {

enum class Setting { Vanilla, Similarity, Geometric };

inline Setting parse_setting(const std::string& s) {
    if (s == "vanilla") return Setting::Vanilla;
    if (s == "similarity") return Setting::Similarity;
    if (s == "geometric") return Setting::Geometric;
    throw ConfigError("unknown setting: " + s + " (expected vanilla|similarity|geometric)");
}

inline std::string setting_name(Setting s) {
    switch (s) {
        case Setting::Vanilla: return "vanilla";
        case Setting::Similarity: return "similarity";
        default: return "geometric";
    }
}

// Per-view forward products. Teacher tensors are plain values (they entered
// the graph as constants on the teacher's own tape); student entries are live
// tape nodes. s_dense_rep is a detached value copy used only for matching.
struct ViewTerm {
    std::size_t view_id = 0;
    bool is_global = false;
    PosEncoding enc;

    bool has_teacher = false;
    Tensor t_global_prob;  // [1×I]
    Tensor t_dense_prob;   // [K×I]
    Tensor t_dense_rep;    // [K×d], pre-head

    VarId s_global_prob;  // [1×I]
    VarId s_dense_prob;   // [K×I]
    Tensor s_dense_rep;   // [K×d], pre-head, detached
};

// Everything one image's views contribute to the objective. Under multi-crop
// the teacher covers only the two global views; in vanilla mode it covers all
// of them.
struct ForwardBundle {
    std::vector<ViewTerm> views;
    bool multi_crop = true;
    std::size_t n_local = 0;

    void validate() const {
        check(views.size() >= 2, "bundle needs at least 2 views");
        if (multi_crop) {
            check(views.size() == 2 + n_local, "multi-crop bundle must hold 2 + n_local views");
            for (std::size_t i = 0; i < views.size(); ++i) {
                check(views[i].has_teacher == (i < 2),
                      "multi-crop teacher terms must cover exactly the two global views");
            }
        } else {
            for (const auto& v : views)
                check(v.has_teacher, "vanilla bundle requires teacher terms on every view");
        }
        for (const auto& v : views) {
            if (v.has_teacher) {
                check(v.t_dense_prob.rows() == v.enc.count(),
                      "teacher dense rows must match the token encoding");
                check(v.t_dense_rep.rows() == v.enc.count(),
                      "teacher dense rep rows must match the token encoding");
            }
            check(v.s_dense_rep.rows() == v.enc.count(),
                  "student dense rep rows must match the token encoding");
        }
    }

    // Ordered teacher/student pair count; also the loss normalizer.
    double normalizer() const {
        if (multi_crop) return 2.0 * (static_cast<double>(n_local) + 1.0);
        const double n = static_cast<double>(views.size());
        return n * (n - 1.0);
    }
};

// H(p, q) = −Σ_i p(i)·log q(i) for single distributions; q is clamped below
// at 1e-12 inside the log. Differentiable in q only.
inline VarId cross_entropy(Tape& t, const Tensor& p, VarId q) {
    check(p.rank() == 2 && p.rows() == 1, "cross_entropy: p must be a [1×I] distribution");
    check(t.value(q).same_shape(p), "cross_entropy: support mismatch");
    return scale(t, sum_all(t, mul_const(t, log_clamped(t, q), p)), -1.0);
}

namespace detail {

// −Σ_k w_k · Σ_i p[k,i]·log q[k,i]: the shared kernel behind every loss term.
inline VarId weighted_ce_rows(Tape& t, const Tensor& p, VarId q,
                              const std::vector<double>& row_weights) {
    check(t.value(q).same_shape(p), "cross-entropy rows: support mismatch");
    check(p.rows() == row_weights.size(), "cross-entropy rows: weight count mismatch");
    VarId logq = log_clamped(t, q);
    VarId weighted = scale_rows(t, mul_const(t, logq, p), row_weights);
    return scale(t, sum_all(t, weighted), -1.0);
}

}  // namespace detail

// Iterates ordered (teacher view a, student view b) pairs with a ≠ b in a
// fixed order and checks the count against the closed-form normalizer.
template <typename Fn>
inline std::size_t for_each_pair(const ForwardBundle& bundle, Fn&& fn) {
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < bundle.views.size(); ++a) {
        if (!bundle.views[a].has_teacher) continue;
        for (std::size_t b = 0; b < bundle.views.size(); ++b) {
            if (bundle.views[a].view_id == bundle.views[b].view_id) continue;
            fn(bundle.views[a], bundle.views[b]);
            ++pairs;
        }
    }
    check(static_cast<double>(pairs) == bundle.normalizer(),
          "ordered pair count does not match the loss normalizer");
    return pairs;
}

// Global objective: cross-entropy between teacher and student image-level
// distributions over all ordered pairs of distinct views, divided by the
// pair count.
inline VarId global_loss(Tape& t, const ForwardBundle& bundle, std::size_t* pair_count = nullptr) {
    bundle.validate();
    VarId total = t.constant(Tensor::scalar(0.0));
    const std::size_t pairs = for_each_pair(bundle, [&](const ViewTerm& a, const ViewTerm& b) {
        total = add(t, total, cross_entropy(t, a.t_global_prob, b.s_global_prob));
    });
    if (pair_count) *pair_count = pairs;
    return scale(t, total, 1.0 / bundle.normalizer());
}

// Records one matching per ordered pair, in pair order, for diagnostics.
struct PairMatchings {
    std::vector<std::size_t> view_a;
    std::vector<std::size_t> view_b;
    std::vector<Matching> matching;

    void push(std::size_t a, std::size_t b, Matching m) {
        view_a.push_back(a);
        view_b.push_back(b);
        matching.push_back(std::move(m));
    }
};

// Similarity-matched local objective: teacher token k is paired with the
// student token of highest pre-head cosine similarity; each pair contributes
// the mean of its K cross-entropy terms.
inline VarId local_loss_sim(Tape& t, const ForwardBundle& bundle,
                            PairMatchings* out_matchings = nullptr) {
    bundle.validate();
    VarId total = t.constant(Tensor::scalar(0.0));
    for_each_pair(bundle, [&](const ViewTerm& a, const ViewTerm& b) {
        const Matching m = similarity_match(a.t_dense_rep, b.s_dense_rep);
        const std::size_t K = a.enc.count();
        const std::vector<double> w(K, 1.0 / static_cast<double>(K));
        VarId matched = gather_rows(t, b.s_dense_prob, m.target);
        total = add(t, total, detail::weighted_ce_rows(t, a.t_dense_prob, matched, w));
        if (out_matchings) out_matchings->push(a.view_id, b.view_id, m);
    });
    return scale(t, total, 1.0 / bundle.normalizer());
}

// Geometry-matched local objective: teacher token k is paired with the
// student token of nearest back-projected center; terms farther than the
// threshold are masked out, and the sum divides by K, not the mask count, so
// shrinking overlap shrinks the term.
inline VarId local_loss_geo(Tape& t, const ForwardBundle& bundle,
                            PairMatchings* out_matchings = nullptr) {
    bundle.validate();
    VarId total = t.constant(Tensor::scalar(0.0));
    for_each_pair(bundle, [&](const ViewTerm& a, const ViewTerm& b) {
        const Matching m = geometric_match(a.enc, b.enc);
        const std::size_t K = a.enc.count();
        std::vector<double> w(K, 0.0);
        for (std::size_t k = 0; k < K; ++k)
            if (m.mask[k]) w[k] = 1.0 / static_cast<double>(K);
        VarId matched = gather_rows(t, b.s_dense_prob, m.target);
        total = add(t, total, detail::weighted_ce_rows(t, a.t_dense_prob, matched, w));
        if (out_matchings) out_matchings->push(a.view_id, b.view_id, m);
    });
    return scale(t, total, 1.0 / bundle.normalizer());
}

struct LossTerms {
    VarId total;
    VarId global_term;
    VarId local_term;  // invalid for the vanilla setting
    bool has_local = false;
    PairMatchings local_matchings;
};

// Vanilla: L_G. Similarity: L_G + similarity-matched local term.
// Geometric: L_G + geometry-matched local term. Unit weights.
inline LossTerms total_loss(Tape& t, const ForwardBundle& bundle, Setting setting,
                            double local_weight = 1.0) {
    LossTerms out;
    out.global_term = global_loss(t, bundle);
    if (setting == Setting::Vanilla) {
        out.total = out.global_term;
        return out;
    }
    out.has_local = true;
    out.local_term = setting == Setting::Similarity
                         ? local_loss_sim(t, bundle, &out.local_matchings)
                         : local_loss_geo(t, bundle, &out.local_matchings);
    out.total = add(t, out.global_term, scale(t, out.local_term, local_weight));
    return out;
}

}  // namespace gltd
