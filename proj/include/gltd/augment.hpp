#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "gltd/common.hpp"
#include "gltd/geometry.hpp"
#include "gltd/image.hpp"
#include "gltd/rng.hpp"

namespace gltd {

// Sampled photometric transform. Factors are the realized values, the flags
// decide which stages run; the composition order is fixed:
// jitter (brightness, contrast, saturation) → grayscale → blur → solarize.
struct PhotoParams {
    bool jitter = false;
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    bool grayscale = false;
    bool blur = false;
    double blur_sigma = 1.0;
    bool solarize = false;
    double solarize_threshold = 0.5;
};

// One view family's sampling ranges: random-resized-crop geometry plus the
// photometric probabilities. Separate instances describe the two global
// families and the local family.
struct AugDistribution {
    double area_min = 0.4;
    double area_max = 1.0;
    double ratio_min = 0.75;
    double ratio_max = 4.0 / 3.0;
    std::size_t out_h = 64;
    std::size_t out_w = 64;
    double flip_prob = 0.5;

    double jitter_prob = 0.8;
    double jitter_brightness = 0.4;
    double jitter_contrast = 0.4;
    double jitter_saturation = 0.2;
    double grayscale_prob = 0.2;
    double blur_prob = 1.0;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;
    double solarize_prob = 0.0;
    double solarize_threshold = 0.5;

    void validate(std::size_t r) const {
        check_config(area_min > 0.0 && area_min <= area_max && area_max <= 1.0,
                     "crop area range must be a nonempty subrange of (0, 1]");
        check_config(ratio_min > 0.0 && ratio_min <= ratio_max, "aspect ratio range is empty");
        check_config(out_h > 0 && out_w > 0, "output size must be positive");
        check_config(r > 0 && out_h % r == 0 && out_w % r == 0,
                     "output size must be divisible by the downscale factor");
        check_config(flip_prob >= 0.0 && flip_prob <= 1.0, "flip probability outside [0, 1]");
        check_config(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max,
                     "blur sigma range is empty");
    }
};

struct View {
    Image image;
    GeoParams geo;
    PhotoParams photo;
    bool is_global = false;
};

// Exactly 2 global views first, then n_local local views.
struct ViewSet {
    std::vector<View> views;
    std::size_t n_local = 0;
};

struct MultiCropConfig {
    AugDistribution global1;
    AugDistribution global2;
    AugDistribution local;
    std::size_t n_local = 8;
    DownscaleSpec down{16};

    // Local views are quarter-area by default (32² vs 64² globals, 2×2 grids
    // at r=16); every size stays configurable.
    MultiCropConfig() { local.out_h = local.out_w = 32; }

    void validate() const {
        global1.validate(down.r);
        global2.validate(down.r);
        if (n_local > 0) local.validate(down.r);
        check_config(global1.out_h == global2.out_h && global1.out_w == global2.out_w,
                     "the two global families must share an output size");
    }
};

// ---- geometric sampling ------------------------------------------------------

// Random-resized-crop: sample an area fraction and a log-uniform aspect
// ratio, place the rectangle uniformly; after 10 failed attempts fall back
// to a centered square crop of the short side. Draw order per attempt is
// area, ratio, x, y; the flip bit is drawn last.
inline GeoParams sample_geo(const AugDistribution& dist, Rng& rng, std::size_t orig_h,
                            std::size_t orig_w) {
    const double W = static_cast<double>(orig_w);
    const double H = static_cast<double>(orig_h);
    GeoParams g;
    g.h = dist.out_h;
    g.w = dist.out_w;

    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
        const double area = W * H * rng.uniform(dist.area_min, dist.area_max);
        const double ratio =
            std::exp(rng.uniform(std::log(dist.ratio_min), std::log(dist.ratio_max)));
        const double cw = std::sqrt(area * ratio);
        const double ch = std::sqrt(area / ratio);
        if (cw <= W && ch <= H) {
            g.ul_x = rng.uniform(0.0, W - cw);
            g.ul_y = rng.uniform(0.0, H - ch);
            g.lr_x = g.ul_x + cw;
            g.lr_y = g.ul_y + ch;
            placed = true;
        }
    }
    if (!placed) {
        const double side = std::min(W, H);
        g.ul_x = (W - side) / 2.0;
        g.ul_y = (H - side) / 2.0;
        g.lr_x = g.ul_x + side;
        g.lr_y = g.ul_y + side;
    }
    g.f = rng.bernoulli(dist.flip_prob);
    return g;
}

// Draws every photometric value regardless of the flags so the stream
// consumption is fixed-length; the flags decide what actually applies.
inline PhotoParams sample_photo(const AugDistribution& dist, Rng& rng) {
    PhotoParams p;
    p.jitter = rng.bernoulli(dist.jitter_prob);
    p.brightness = rng.uniform(1.0 - dist.jitter_brightness, 1.0 + dist.jitter_brightness);
    p.contrast = rng.uniform(1.0 - dist.jitter_contrast, 1.0 + dist.jitter_contrast);
    p.saturation = rng.uniform(1.0 - dist.jitter_saturation, 1.0 + dist.jitter_saturation);
    p.grayscale = rng.bernoulli(dist.grayscale_prob);
    p.blur = rng.bernoulli(dist.blur_prob);
    p.blur_sigma = rng.uniform(dist.blur_sigma_min, dist.blur_sigma_max);
    p.solarize = rng.bernoulli(dist.solarize_prob);
    p.solarize_threshold = dist.solarize_threshold;
    return p;
}

// ---- photometric application ---------------------------------------------------

namespace detail {

// Sampled Gaussian, radius ceil(3σ), normalized to sum 1.
inline std::vector<double> gaussian_kernel(double sigma) {
    check(sigma > 0.0, "gaussian kernel: sigma must be positive");
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double t = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-0.5 * t * t / (sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

inline std::size_t clamp_index(long i, std::size_t n) {
    if (i < 0) return 0;
    const auto u = static_cast<std::size_t>(i);
    return u >= n ? n - 1 : u;
}

}  // namespace detail

// Separable Gaussian blur with edge clamping; equals the dense 2-D
// convolution because the two axis clamps are independent.
inline Image gaussian_blur(const Image& im, double sigma) {
    const std::vector<double> k = detail::gaussian_kernel(sigma);
    const long radius = static_cast<long>(k.size() / 2);
    Image tmp = Image::zeros(im.height, im.width);
    for (std::size_t y = 0; y < im.height; ++y)
        for (std::size_t x = 0; x < im.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (long t = -radius; t <= radius; ++t)
                    acc += k[static_cast<std::size_t>(t + radius)] *
                           im.at(y, detail::clamp_index(static_cast<long>(x) + t, im.width), c);
                tmp.at(y, x, c) = acc;
            }
    Image out = Image::zeros(im.height, im.width);
    for (std::size_t y = 0; y < im.height; ++y)
        for (std::size_t x = 0; x < im.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (long t = -radius; t <= radius; ++t)
                    acc += k[static_cast<std::size_t>(t + radius)] *
                           tmp.at(detail::clamp_index(static_cast<long>(y) + t, im.height), x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

// jitter → grayscale → blur → solarize, each stage gated by its flag and
// clamped back into [0,1]. All flags off is the identity.
inline Image apply_photometric(const Image& im, const PhotoParams& p) {
    Image out = im;
    if (p.jitter) {
        for (auto& v : out.data) v = clamp01(v * p.brightness);
        double mean_luma = 0.0;
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x)
                mean_luma += luma(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2));
        mean_luma /= static_cast<double>(out.height * out.width);
        for (auto& v : out.data) v = clamp01(p.contrast * v + (1.0 - p.contrast) * mean_luma);
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x) {
                const double l = luma(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2));
                for (std::size_t c = 0; c < 3; ++c)
                    out.at(y, x, c) = clamp01(p.saturation * out.at(y, x, c) +
                                              (1.0 - p.saturation) * l);
            }
    }
    if (p.grayscale) {
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x) {
                const double l = luma(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2));
                for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(l);
            }
    }
    if (p.blur) {
        out = gaussian_blur(out, p.blur_sigma);
        for (auto& v : out.data) v = clamp01(v);
    }
    if (p.solarize) {
        for (auto& v : out.data)
            if (v >= p.solarize_threshold) v = clamp01(1.0 - v);
    }
    return out;
}

// ---- view construction --------------------------------------------------------

namespace detail {

inline View make_view(const Image& im, const AugDistribution& dist, Rng& rng, bool is_global) {
    View v;
    v.is_global = is_global;
    v.geo = sample_geo(dist, rng, im.height, im.width);
    v.photo = sample_photo(dist, rng);
    v.image = apply_photometric(apply_geometric(im, v.geo), v.photo);
    return v;
}

}  // namespace detail

// Multi-crop view set: 2 globals (families 1 and 2) then n_local locals.
// View i draws from its own child stream of the per-image RNG, so the set is
// a pure function of (image, config, seed).
inline ViewSet make_views(const Image& im, const MultiCropConfig& cfg, Rng& rng) {
    cfg.validate();
    ViewSet vs;
    vs.n_local = cfg.n_local;
    vs.views.reserve(2 + cfg.n_local);
    {
        Rng r0 = rng.child(0);
        vs.views.push_back(detail::make_view(im, cfg.global1, r0, true));
        Rng r1 = rng.child(1);
        vs.views.push_back(detail::make_view(im, cfg.global2, r1, true));
    }
    for (std::size_t i = 0; i < cfg.n_local; ++i) {
        Rng ri = rng.child(2 + i);
        vs.views.push_back(detail::make_view(im, cfg.local, ri, false));
    }
    return vs;
}

// Two views with identical geometry and independent photometrics: ground-truth
// token correspondence between them is the identity permutation.
inline std::pair<View, View> make_eval_pair(const Image& im, const MultiCropConfig& cfg,
                                            Rng& rng) {
    cfg.validate();
    Rng geo_rng = rng.child(0);
    const GeoParams g = sample_geo(cfg.global1, geo_rng, im.height, im.width);
    const Image base = apply_geometric(im, g);

    View a, b;
    a.is_global = b.is_global = true;
    a.geo = b.geo = g;
    Rng pa = rng.child(1);
    Rng pb = rng.child(2);
    a.photo = sample_photo(cfg.global1, pa);
    b.photo = sample_photo(cfg.global1, pb);
    a.image = apply_photometric(base, a.photo);
    b.image = apply_photometric(base, b.photo);
    return {std::move(a), std::move(b)};
}

}  // namespace gltd
