#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gltd/common.hpp"
#include "gltd/tensor.hpp"

namespace gltd {

// RGB raster, row-major (y, x, channel), values in [0,1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    static Image zeros(std::size_t h, std::size_t w) {
        Image im;
        im.height = h;
        im.width = w;
        im.data.assign(h * w * 3, 0.0);
        return im;
    }

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return data[(y * width + x) * 3 + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * 3 + c];
    }
    std::size_t numel() const { return data.size(); }
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Rec. 601 luma, used for grayscale conversion.
inline double luma(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

// Bilinear sample at a continuous point (x, y) in pixel units, with the
// center of pixel (i, j) at (j+0.5, i+0.5). Out-of-range lookups clamp to
// the edge pixels.
inline double sample_bilinear(const Image& im, double x, double y, std::size_t c) {
    const double u = x - 0.5;
    const double v = y - 0.5;
    const double fx = std::floor(u);
    const double fy = std::floor(v);
    const double ax = u - fx;
    const double ay = v - fy;
    const auto clampi = [](double t, std::size_t n) -> std::size_t {
        if (t < 0.0) return 0;
        const auto i = static_cast<std::size_t>(t);
        return i >= n ? n - 1 : i;
    };
    const std::size_t x0 = clampi(fx, im.width);
    const std::size_t x1 = clampi(fx + 1.0, im.width);
    const std::size_t y0 = clampi(fy, im.height);
    const std::size_t y1 = clampi(fy + 1.0, im.height);
    const double top = (1.0 - ax) * im.at(y0, x0, c) + ax * im.at(y0, x1, c);
    const double bot = (1.0 - ax) * im.at(y1, x0, c) + ax * im.at(y1, x1, c);
    return (1.0 - ay) * top + ay * bot;
}

// ---- tensor bridge ----------------------------------------------------------

inline Tensor image_to_tensor(const Image& im) {
    Tensor t({im.height, im.width, 3});
    t.data = im.data;
    return t;
}

inline Image image_from_tensor(const Tensor& t) {
    check(t.rank() == 3 && t.shape[2] == 3, "image tensor must have shape [H, W, 3]");
    ensure_finite(t, "image tensor");
    Image im;
    im.height = t.shape[0];
    im.width = t.shape[1];
    im.data.resize(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) im.data[i] = clamp01(t.data[i]);
    return im;
}

inline void write_image_file(const std::string& path, const Image& im) {
    write_tensor_file(path, image_to_tensor(im));
}

inline Image read_image_file(const std::string& path) {
    return image_from_tensor(read_tensor_file(path));
}

// ---- PPM (P6, 8-bit) ---------------------------------------------------------

namespace detail {

// Reads one PPM header token, skipping whitespace and '#' comment lines.
// Consumes the single whitespace byte that terminates the token, which for
// the maxval token leaves the stream positioned at the first pixel byte.
inline std::string ppm_token(std::istream& in) {
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (!std::isspace(ch)) break;
    }
    check(ch != EOF, "ppm: truncated header");
    std::string tok;
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    return tok;
}

}  // namespace detail

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_config(in.good(), "ppm: cannot open " + path);
    check_config(detail::ppm_token(in) == "P6", "ppm: not a binary P6 file: " + path);
    const auto header_int = [&path](const std::string& tok) {
        check_config(!tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos,
                     "ppm: malformed header in " + path);
        return std::stol(tok);
    };
    const long w = header_int(detail::ppm_token(in));
    const long h = header_int(detail::ppm_token(in));
    const long maxval = header_int(detail::ppm_token(in));
    check_config(w > 0 && h > 0, "ppm: bad dimensions in " + path);
    check_config(maxval > 0 && maxval < 256, "ppm: only 8-bit files supported: " + path);

    Image im = Image::zeros(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    std::vector<unsigned char> raw(im.numel());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check_config(in.gcount() == static_cast<std::streamsize>(raw.size()),
                 "ppm: truncated pixel data in " + path);
    const double scale = 1.0 / static_cast<double>(maxval);
    for (std::size_t i = 0; i < raw.size(); ++i) im.data[i] = raw[i] * scale;
    return im;
}

inline void write_ppm(const std::string& path, const Image& im) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "ppm: cannot open " + path + " for writing");
    out << "P6\n" << im.width << " " << im.height << "\n255\n";
    std::vector<unsigned char> raw(im.numel());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = static_cast<unsigned char>(std::lround(clamp01(im.data[i]) * 255.0));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(out.good(), "ppm: write failed for " + path);
}

}  // namespace gltd
