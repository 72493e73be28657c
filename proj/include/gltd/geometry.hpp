#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "gltd/common.hpp"
#include "gltd/image.hpp"
#include "gltd/tensor.hpp"

namespace gltd {

// Crop/resize/flip description: a continuous source rectangle in original-image
// pixels, the output raster size, and a horizontal-mirror bit.
struct GeoParams {
    double ul_x = 0.0;
    double ul_y = 0.0;
    double lr_x = 0.0;
    double lr_y = 0.0;
    std::size_t h = 0;
    std::size_t w = 0;
    bool f = false;

    double extent_x() const { return lr_x - ul_x; }
    double extent_y() const { return lr_y - ul_y; }

    void validate(std::size_t orig_h, std::size_t orig_w) const {
        check_config(ul_x < lr_x && ul_y < lr_y, "crop rectangle is empty");
        check_config(ul_x >= 0.0 && ul_y >= 0.0 && lr_x <= static_cast<double>(orig_w) &&
                         lr_y <= static_cast<double>(orig_h),
                     "crop rectangle extends outside the image");
        check_config(h > 0 && w > 0, "output raster must be nonempty");
    }
};

// Token-grid resolution: the backbone maps an h×w view to an (h/r)×(w/r) grid.
struct DownscaleSpec {
    std::size_t r = 16;

    void validate(const GeoParams& g) const {
        check_config(r > 0, "downscale factor must be positive");
        check_config(g.h % r == 0 && g.w % r == 0,
                     "view size must be divisible by the downscale factor");
    }
    std::size_t grid_h(const GeoParams& g) const { return g.h / r; }
    std::size_t grid_w(const GeoParams& g) const { return g.w / r; }
};

// Per-token (x, y) centers in original-image pixels, row-major over the token
// grid. step_x/step_y is the token pitch in original pixels, kept so the
// matching threshold stays well defined even for 1×1 grids.
struct PosEncoding {
    Tensor centers;  // K×2
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    double step_x = 0.0;
    double step_y = 0.0;

    std::size_t count() const { return centers.rows(); }
    double x(std::size_t k) const { return centers.at(k, 0); }
    double y(std::size_t k) const { return centers.at(k, 1); }
};

// Result of matching every source token to one token of the other view.
// distance holds pixels (geometric mode) or the achieved cosine (similarity
// mode); threshold_s is meaningful only in geometric mode.
struct Matching {
    std::vector<std::size_t> target;
    std::vector<double> distance;
    std::vector<bool> mask;
    double threshold_s = std::numeric_limits<double>::quiet_NaN();
    bool geometric = false;

    std::size_t count() const { return target.size(); }
    double mask_fill_rate() const {
        if (mask.empty()) return 0.0;
        std::size_t on = 0;
        for (bool b : mask)
            if (b) ++on;
        return static_cast<double>(on) / static_cast<double>(mask.size());
    }
};

// Crop the rectangle, bilinear-resize to h×w, then mirror horizontally iff f.
// Implemented as one backward warp: each output pixel center is mapped into
// the source rectangle and sampled bilinearly, so identity parameters give a
// bit-identical copy and the flip is an exact pixel mirror.
inline Image apply_geometric(const Image& im, const GeoParams& g) {
    g.validate(im.height, im.width);
    Image out = Image::zeros(g.h, g.w);
    const double wd = static_cast<double>(g.w);
    const double hd = static_cast<double>(g.h);
    for (std::size_t i = 0; i < g.h; ++i) {
        const double y_r = static_cast<double>(i) + 0.5;
        const double y_o = g.ul_y + (y_r / hd) * g.extent_y();
        for (std::size_t j = 0; j < g.w; ++j) {
            double x_r = static_cast<double>(j) + 0.5;
            if (g.f) x_r = wd - x_r;
            const double x_o = g.ul_x + (x_r / wd) * g.extent_x();
            for (std::size_t c = 0; c < 3; ++c)
                out.at(i, j, c) = sample_bilinear(im, x_o, y_o, c);
        }
    }
    return out;
}

// Back-project token centers into original-image coordinates. Token (i, j)
// sits at ((j+0.5)·r, (i+0.5)·r) in the resized frame; the flip mirrors x
// there, and the affine crop map carries the point back to the original.
inline PosEncoding token_centers(const GeoParams& g, const DownscaleSpec& spec) {
    spec.validate(g);
    const std::size_t gh = spec.grid_h(g);
    const std::size_t gw = spec.grid_w(g);
    const double wd = static_cast<double>(g.w);
    const double hd = static_cast<double>(g.h);
    const double rd = static_cast<double>(spec.r);

    PosEncoding enc;
    enc.grid_h = gh;
    enc.grid_w = gw;
    enc.step_x = g.extent_x() / static_cast<double>(gw);
    enc.step_y = g.extent_y() / static_cast<double>(gh);
    enc.centers = Tensor({gh * gw, 2});
    for (std::size_t i = 0; i < gh; ++i) {
        const double y_r = (static_cast<double>(i) + 0.5) * rd;
        const double y_o = g.ul_y + (y_r / hd) * g.extent_y();
        for (std::size_t j = 0; j < gw; ++j) {
            double x_r = (static_cast<double>(j) + 0.5) * rd;
            if (g.f) x_r = wd - x_r;
            const double x_o = g.ul_x + (x_r / wd) * g.extent_x();
            const std::size_t k = i * gw + j;
            enc.centers.at(k, 0) = x_o;
            enc.centers.at(k, 1) = y_o;
        }
    }
    return enc;
}

// Diagonal of one token's footprint in original-image pixels.
inline double diag_length(const GeoParams& g, const DownscaleSpec& spec) {
    spec.validate(g);
    const double step_x = g.extent_x() / static_cast<double>(spec.grid_w(g));
    const double step_y = g.extent_y() / static_cast<double>(spec.grid_h(g));
    return std::sqrt(step_x * step_x + step_y * step_y);
}

inline double diag_of(const PosEncoding& e) {
    return std::sqrt(e.step_x * e.step_x + e.step_y * e.step_y);
}

// Nearest-center matching. For each source token k the target is the other
// view's token with minimal center distance (ties to the lowest index), and
// the mask keeps only matches closer than s = ½·max of the two views' token
// diagonals. Strict comparison: d(k) == s is masked out.
inline Matching geometric_match(const PosEncoding& e, const PosEncoding& e_other) {
    const std::size_t K = e.count();
    const std::size_t Kp = e_other.count();
    check(K > 0 && Kp > 0, "geometric_match: empty encoding");

    Matching m;
    m.geometric = true;
    m.threshold_s = 0.5 * std::max(diag_of(e), diag_of(e_other));
    m.target.resize(K);
    m.distance.resize(K);
    m.mask.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t best = 0;
        double best_sq = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < Kp; ++j) {
            const double dx = e.x(k) - e_other.x(j);
            const double dy = e.y(k) - e_other.y(j);
            const double sq = dx * dx + dy * dy;
            if (sq < best_sq) {
                best_sq = sq;
                best = j;
            }
        }
        m.target[k] = best;
        m.distance[k] = std::sqrt(best_sq);
        m.mask[k] = m.distance[k] < m.threshold_s;
    }
    return m;
}

// Cosine-similarity matching over dense-representation rows. Every token is
// matched (mask all-true); ties go to the lowest index. Rows of exactly zero
// norm have no defined cosine and are rejected.
inline Matching similarity_match(const Tensor& z, const Tensor& z_other) {
    check(z.rank() == 2 && z_other.rank() == 2, "similarity_match: inputs must be matrices");
    check(z.cols() == z_other.cols(), "similarity_match: feature dimensions differ");
    const std::size_t K = z.rows();
    const std::size_t Kp = z_other.rows();
    check(K > 0 && Kp > 0, "similarity_match: empty representation");
    const std::size_t d = z.cols();

    const auto row_norm = [d](const Tensor& t, std::size_t k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += t.at(k, j) * t.at(k, j);
        return std::sqrt(s);
    };
    std::vector<double> nz(K), nzp(Kp);
    for (std::size_t k = 0; k < K; ++k) {
        nz[k] = row_norm(z, k);
        check(nz[k] > 0.0, "similarity_match: zero-norm row");
    }
    for (std::size_t j = 0; j < Kp; ++j) {
        nzp[j] = row_norm(z_other, j);
        check(nzp[j] > 0.0, "similarity_match: zero-norm row");
    }

    Matching m;
    m.geometric = false;
    m.target.resize(K);
    m.distance.resize(K);
    m.mask.assign(K, true);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t best = 0;
        double best_cos = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < Kp; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += z.at(k, c) * z_other.at(j, c);
            const double cosv = dot / (nz[k] * nzp[j]);
            if (cosv > best_cos) {
                best_cos = cosv;
                best = j;
            }
        }
        m.target[k] = best;
        m.distance[k] = best_cos;
    }
    return m;
}

// Fraction of source tokens whose target is the most-hit target token; 1.0
// means every source token mapped to a single target.
inline double collapse_index(const Matching& m) {
    check(m.count() > 0, "collapse_index: empty matching");
    std::size_t max_target = 0;
    for (std::size_t t : m.target) max_target = std::max(max_target, t);
    std::vector<std::size_t> hits(max_target + 1, 0);
    std::size_t best = 0;
    for (std::size_t t : m.target) best = std::max(best, ++hits[t]);
    return static_cast<double>(best) / static_cast<double>(m.count());
}

// One JSON line per matching, for the overlay renderer and offline analysis.
inline std::string matching_json_line(const Matching& m, const std::string& view_a,
                                      const std::string& view_b) {
    nlohmann::json j;
    j["view_a"] = view_a;
    j["view_b"] = view_b;
    j["targets"] = m.target;
    j["distances"] = m.distance;
    j["mask"] = m.mask;
    if (m.geometric)
        j["s"] = m.threshold_s;
    else
        j["s"] = nullptr;
    return j.dump();
}

}  // namespace gltd
