#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "gltd/augment.hpp"
#include "gltd/common.hpp"
#include "gltd/geometry.hpp"
#include "gltd/model.hpp"
#include "gltd/rng.hpp"
#include "gltd/tensor.hpp"
#include "gltd/trainer.hpp"

namespace gltd {

// Static striping over [0, n): worker w takes indices ≡ w (mod workers).
// Each index writes only its own slot, so results are identical for any
// worker count.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

// Global representations of center-cropped images, with their class labels.
struct EmbeddingBank {
    Tensor anchors;  // M×d
    std::vector<std::size_t> labels;

    std::size_t count() const { return anchors.rows(); }
};

// Centered square crop of the short side, resized to out×out, no flip.
inline GeoParams center_crop_geo(std::size_t orig_h, std::size_t orig_w, std::size_t out) {
    const double side = static_cast<double>(std::min(orig_h, orig_w));
    GeoParams g;
    g.ul_x = (static_cast<double>(orig_w) - side) / 2.0;
    g.ul_y = (static_cast<double>(orig_h) - side) / 2.0;
    g.lr_x = g.ul_x + side;
    g.lr_y = g.ul_y + side;
    g.h = g.w = out;
    g.f = false;
    return g;
}

// Deterministic photometric-free embedding of one image.
inline Tensor embed_global(const ParamSet& params, const BackboneConfig& cfg, const Image& im,
                           std::size_t global_size) {
    const Image view = apply_geometric(im, center_crop_geo(im.height, im.width, global_size));
    Tape tape;
    BoundParams p = bind_constants(tape, params);
    const ForwardOut f = forward(tape, p, cfg, view);
    return tape.value(f.zbar);
}

inline EmbeddingBank build_bank(const ParamSet& params, const BackboneConfig& cfg,
                                const Dataset& ds, std::size_t global_size) {
    EmbeddingBank bank;
    bank.labels = ds.labels;
    bank.anchors = Tensor({ds.size(), cfg.d});
    parallel_for(ds.size(), [&](std::size_t i) {
        const Tensor e = embed_global(params, cfg, ds.images[i], global_size);
        for (std::size_t j = 0; j < cfg.d; ++j) bank.anchors.at(i, j) = e.data[j];
    });
    return bank;
}

namespace detail {

inline std::vector<double> row_norms(const Tensor& m) {
    std::vector<double> n(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += m.at(i, j) * m.at(i, j);
        n[i] = std::max(std::sqrt(s), 1e-12);
    }
    return n;
}

}  // namespace detail

// Cosine k-nearest-neighbor vote. Neighbor order is (similarity desc, anchor
// index asc); the vote is an unweighted majority by default, with class-id
// ties resolved to the smaller id. exclude_self skips anchor i for query i
// (for bank == queries protocols).
inline double knn_eval(const EmbeddingBank& bank, const Tensor& queries,
                       const std::vector<std::size_t>& query_labels, std::size_t k,
                       bool weighted = false, bool exclude_self = false) {
    const std::size_t M = bank.count();
    check(M > 0, "knn_eval: empty bank");
    check(k >= 1, "knn_eval: k must be positive");
    check(M >= k + (exclude_self ? 1 : 0), "knn_eval: bank smaller than k");
    check(queries.rows() == query_labels.size(), "knn_eval: query label count mismatch");
    check(queries.cols() == bank.anchors.cols(), "knn_eval: feature width mismatch");

    std::size_t n_classes = 0;
    for (std::size_t l : bank.labels) n_classes = std::max(n_classes, l + 1);
    const std::vector<double> an = detail::row_norms(bank.anchors);
    const std::vector<double> qn = detail::row_norms(queries);

    std::vector<int> correct(queries.rows(), 0);
    parallel_for(queries.rows(), [&](std::size_t q) {
        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(M);
        for (std::size_t a = 0; a < M; ++a) {
            if (exclude_self && a == q) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < queries.cols(); ++j)
                dot += queries.at(q, j) * bank.anchors.at(a, j);
            sims.emplace_back(dot / (qn[q] * an[a]), a);
        }
        std::sort(sims.begin(), sims.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
        });
        std::vector<double> votes(n_classes, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            const auto& [sim, idx] = sims[i];
            votes[bank.labels[idx]] += weighted ? sim : 1.0;
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < n_classes; ++c)
            if (votes[c] > votes[best]) best = c;
        correct[q] = best == query_labels[q] ? 1 : 0;
    });
    double acc = 0.0;
    for (int c : correct) acc += c;
    return acc / static_cast<double>(queries.rows());
}

// Multinomial logistic regression on frozen features: rows L2-normalized,
// bias feature appended, full-batch gradient descent with the Lipschitz step
// 2n/‖X‖_F², run until max|∇| < tol. Returns held-out accuracy.
inline double linear_probe(const Tensor& features, const std::vector<std::size_t>& labels,
                           std::size_t n_classes, const std::vector<std::size_t>& train_idx,
                           const std::vector<std::size_t>& test_idx, double tol = 1e-6,
                           std::size_t max_iters = 30000) {
    check(n_classes >= 2, "linear_probe: need at least 2 classes");
    check(!train_idx.empty() && !test_idx.empty(), "linear_probe: empty split");
    const std::size_t d = features.cols();
    const std::size_t n = train_idx.size();

    const auto normalized_row = [&](std::size_t i, std::vector<double>& row) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += features.at(i, j) * features.at(i, j);
        const double inv = 1.0 / std::max(std::sqrt(s), 1e-12);
        for (std::size_t j = 0; j < d; ++j) row[j] = features.at(i, j) * inv;
        row[d] = 1.0;  // bias feature
    };

    Tensor X({n, d + 1});
    std::vector<double> row(d + 1);
    double fro_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        normalized_row(train_idx[i], row);
        for (std::size_t j = 0; j <= d; ++j) {
            X.at(i, j) = row[j];
            fro_sq += row[j] * row[j];
        }
    }
    const double lr = 2.0 * static_cast<double>(n) / fro_sq;

    Tensor W = Tensor::zeros({d + 1, n_classes});
    std::vector<double> logits(n_classes), probs(n_classes);
    Tensor grad({d + 1, n_classes});
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -1e300;
            for (std::size_t c = 0; c < n_classes; ++c) {
                double v = 0.0;
                for (std::size_t j = 0; j <= d; ++j) v += X.at(i, j) * W.at(j, c);
                logits[c] = v;
                mx = std::max(mx, v);
            }
            double z = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c) {
                probs[c] = std::exp(logits[c] - mx);
                z += probs[c];
            }
            for (std::size_t c = 0; c < n_classes; ++c) {
                const double delta =
                    probs[c] / z - (labels[train_idx[i]] == c ? 1.0 : 0.0);
                for (std::size_t j = 0; j <= d; ++j) grad.at(j, c) += X.at(i, j) * delta;
            }
        }
        double gmax = 0.0;
        for (auto& v : grad.data) {
            v /= static_cast<double>(n);
            gmax = std::max(gmax, std::abs(v));
        }
        if (gmax < tol) break;
        for (std::size_t j = 0; j < W.data.size(); ++j) W.data[j] -= lr * grad.data[j];
    }

    std::size_t correct = 0;
    for (std::size_t t : test_idx) {
        normalized_row(t, row);
        std::size_t best = 0;
        double best_v = -1e300;
        for (std::size_t c = 0; c < n_classes; ++c) {
            double v = 0.0;
            for (std::size_t j = 0; j <= d; ++j) v += row[j] * W.at(j, c);
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        if (best == labels[t]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

// Every-fifth-index held out; deterministic and roughly class-balanced for
// round-robin-labeled datasets.
inline void probe_split(std::size_t n, std::vector<std::size_t>& train_idx,
                        std::vector<std::size_t>& test_idx) {
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 5 == 0)
            test_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
}

struct CorrespondenceReport {
    double accuracy = 0.0;
    double distance_error_px = 0.0;
    double collapse_index_mean = 0.0;
    std::size_t images = 0;
};

// Photometric-only view pairs share their geometry, so ground truth is the
// identity permutation. Tokens are matched by pre-head cosine similarity;
// accuracy counts exact index hits and the distance error measures how far
// the matched token's center sits from the true one, in original pixels.
inline CorrespondenceReport correspondence_eval(const ParamSet& params,
                                                const BackboneConfig& cfg,
                                                const MultiCropConfig& crops,
                                                const std::vector<Image>& images,
                                                std::uint64_t seed) {
    check(!images.empty(), "correspondence_eval: empty image set");
    CorrespondenceReport rep;
    rep.images = images.size();
    std::vector<double> acc(images.size()), err(images.size()), col(images.size());

    Rng root(seed);
    parallel_for(images.size(), [&](std::size_t i) {
        Rng rng = root.child_named("evalpair", i);
        const auto [va, vb] = make_eval_pair(images[i], crops, rng);

        Tape tape;
        BoundParams p = bind_constants(tape, params);
        const Tensor za = tape.value(forward(tape, p, cfg, va.image).z);
        const Tensor zb = tape.value(forward(tape, p, cfg, vb.image).z);
        const Matching m = similarity_match(za, zb);
        const PosEncoding enc = token_centers(va.geo, crops.down);

        double a = 0.0, e = 0.0;
        for (std::size_t k = 0; k < m.count(); ++k) {
            if (m.target[k] == k) a += 1.0;
            const double dx = enc.x(m.target[k]) - enc.x(k);
            const double dy = enc.y(m.target[k]) - enc.y(k);
            e += std::sqrt(dx * dx + dy * dy);
        }
        acc[i] = a / static_cast<double>(m.count());
        err[i] = e / static_cast<double>(m.count());
        col[i] = collapse_index(m);
    });
    for (std::size_t i = 0; i < images.size(); ++i) {
        rep.accuracy += acc[i];
        rep.distance_error_px += err[i];
        rep.collapse_index_mean += col[i];
    }
    rep.accuracy /= static_cast<double>(images.size());
    rep.distance_error_px /= static_cast<double>(images.size());
    rep.collapse_index_mean /= static_cast<double>(images.size());
    return rep;
}

}  // namespace gltd
