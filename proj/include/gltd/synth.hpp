#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gltd/common.hpp"
#include "gltd/image.hpp"
#include "gltd/rng.hpp"

namespace gltd {

inline constexpr std::size_t kSynthClassCount = 8;

namespace detail {

struct Palette {
    std::array<double, 3> a;
    std::array<double, 3> b;
};

// One palette for the whole corpus. A per-image palette (chroma or gray
// levels) would hand self-supervised training a shortcut: crops of one image
// share it, crops of different images do not, so instance discrimination
// could ignore geometry entirely. With a shared palette, image identity and
// class identity both live in spatial structure alone.
inline constexpr Palette kPalette{{0.85, 0.85, 0.85}, {0.15, 0.15, 0.15}};

inline void paint(Image& im, std::size_t y, std::size_t x, const std::array<double, 3>& col) {
    for (std::size_t c = 0; c < 3; ++c) im.at(y, x, c) = col[c];
}

}  // namespace detail

// Shape families, one per class id:
//   0 disc        1 ring        2 square      3 triangle
//   4 plus        5 bar pair    6 star        7 blob trio
// Position, scale, and rotation are jittered per image, so class identity
// lives in the global arrangement rather than in local statistics: any small
// patch sees an edge or a flat region, and only relating patches across the
// whole view tells the families apart. Weak per-pixel gray noise keeps every
// location distinct without carrying class or image identity.
inline Image synth_image(std::size_t class_id, Rng& rng, std::size_t size = 96) {
    check(class_id < kSynthClassCount, "synth_image: class id out of range");
    check(size >= 16, "synth_image: image too small");
    Image im = Image::zeros(size, size);
    const detail::Palette& pal = detail::kPalette;
    constexpr double kTau = 2.0 * 3.14159265358979323846;

    // All coordinates are fractions of the image side. Shape parameters are
    // drawn first, in a fixed order per class, then noise in raster order.
    std::function<bool(double, double)> inside;

    const double cx = rng.uniform(0.38, 0.62);
    const double cy = rng.uniform(0.38, 0.62);

    switch (class_id) {
        case 0: {
            const double r = rng.uniform(0.16, 0.30);
            inside = [=](double x, double y) {
                return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
            };
            break;
        }
        case 1: {
            const double r = rng.uniform(0.18, 0.32);
            const double ri = r * rng.uniform(0.45, 0.65);
            inside = [=](double x, double y) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                return d2 <= r * r && d2 >= ri * ri;
            };
            break;
        }
        case 2: {
            const double h = rng.uniform(0.14, 0.26);
            const double th = rng.uniform(0.0, kTau / 4.0);
            const double c = std::cos(th), s = std::sin(th);
            inside = [=](double x, double y) {
                const double dx = x - cx, dy = y - cy;
                return std::abs(dx * c + dy * s) <= h && std::abs(-dx * s + dy * c) <= h;
            };
            break;
        }
        case 3: {
            const double r = rng.uniform(0.18, 0.32);
            const double th = rng.uniform(0.0, kTau / 3.0);
            std::array<double, 3> vx, vy;
            for (std::size_t k = 0; k < 3; ++k) {
                vx[k] = cx + r * std::cos(th + kTau * static_cast<double>(k) / 3.0);
                vy[k] = cy + r * std::sin(th + kTau * static_cast<double>(k) / 3.0);
            }
            inside = [=](double x, double y) {
                bool pos = false, neg = false;
                for (std::size_t k = 0; k < 3; ++k) {
                    const std::size_t j = (k + 1) % 3;
                    const double cr =
                        (vx[j] - vx[k]) * (y - vy[k]) - (vy[j] - vy[k]) * (x - vx[k]);
                    (cr >= 0.0 ? pos : neg) = true;
                }
                return !(pos && neg);
            };
            break;
        }
        case 4: {
            const double arm = rng.uniform(0.24, 0.38);
            const double t = rng.uniform(0.05, 0.09);
            inside = [=](double x, double y) {
                const double dx = std::abs(x - cx), dy = std::abs(y - cy);
                return (dx <= t && dy <= arm) || (dy <= t && dx <= arm);
            };
            break;
        }
        case 5: {
            const bool horizontal = rng.bernoulli(0.5);
            const double len = rng.uniform(0.24, 0.38);
            const double t = rng.uniform(0.05, 0.08);
            const double gap = rng.uniform(0.12, 0.20);
            inside = [=](double x, double y) {
                const double along = horizontal ? x - cx : y - cy;
                const double across = horizontal ? y - cy : x - cx;
                return std::abs(along) <= len &&
                       (std::abs(across - gap) <= t || std::abs(across + gap) <= t);
            };
            break;
        }
        case 6: {
            const double r = rng.uniform(0.20, 0.34);
            const double th = rng.uniform(0.0, kTau / 5.0);
            std::array<double, 10> vx, vy;
            for (std::size_t k = 0; k < 10; ++k) {
                const double rad = (k % 2 == 0) ? r : 0.42 * r;
                const double ang = th + kTau * static_cast<double>(k) / 10.0;
                vx[k] = cx + rad * std::cos(ang);
                vy[k] = cy + rad * std::sin(ang);
            }
            inside = [=](double x, double y) {
                bool in = false;
                for (std::size_t k = 0, j = 9; k < 10; j = k++) {
                    if ((vy[k] > y) == (vy[j] > y)) continue;
                    const double xc = vx[k] + (y - vy[k]) / (vy[j] - vy[k]) * (vx[j] - vx[k]);
                    if (x < xc) in = !in;
                }
                return in;
            };
            break;
        }
        default: {
            std::array<double, 3> bx, by, br;
            for (std::size_t k = 0; k < 3; ++k) {
                bx[k] = rng.uniform(0.22, 0.78);
                by[k] = rng.uniform(0.22, 0.78);
                br[k] = rng.uniform(0.08, 0.14);
            }
            inside = [=](double x, double y) {
                for (std::size_t k = 0; k < 3; ++k)
                    if ((x - bx[k]) * (x - bx[k]) + (y - by[k]) * (y - by[k]) <= br[k] * br[k])
                        return true;
                return false;
            };
            break;
        }
    }

    const double S = static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double px = (static_cast<double>(x) + 0.5) / S;
            const double py = (static_cast<double>(y) + 0.5) / S;
            const bool in = inside(px, py);
            const double amp = in ? 0.04 : 0.10;
            const double v = std::clamp((in ? pal.a[0] : pal.b[0]) + rng.uniform(-amp, amp),
                                        0.0, 1.0);
            detail::paint(im, y, x, {v, v, v});
        }
    return im;
}

// Class-balanced dataset: image i gets class i mod n_classes, so counts
// differ by at most one and any remainder lands on the lowest class ids.
// Layout: img_#####.gltd files plus a labels.tsv index.
inline void write_synth_dataset(const std::string& dir, std::size_t n_images,
                                std::size_t n_classes, std::uint64_t seed,
                                std::size_t size = 96) {
    check_config(n_images > 0, "synth: need at least one image");
    check_config(n_classes >= 1 && n_classes <= kSynthClassCount,
                 "synth: class count must be between 1 and " + std::to_string(kSynthClassCount));
    std::filesystem::create_directories(dir);

    Rng root(seed);
    std::ofstream index(dir + "/labels.tsv", std::ios::binary);
    check(index.good(), "synth: cannot write dataset index");
    for (std::size_t i = 0; i < n_images; ++i) {
        const std::size_t cls = i % n_classes;
        Rng rng = root.child_named("img", i);
        const Image im = synth_image(cls, rng, size);
        char name[32];
        std::snprintf(name, sizeof name, "img_%05zu.gltd", i);
        write_image_file(dir + "/" + name, im);
        index << name << "\t" << cls << "\n";
    }
    check(index.good(), "synth: dataset index write failed");
}

}  // namespace gltd
