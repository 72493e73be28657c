#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "gltd/common.hpp"
#include "gltd/geometry.hpp"
#include "gltd/image.hpp"

namespace gltd {

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string mean_patch_hex(const Image& im, std::size_t y0, std::size_t x0,
                                  std::size_t y1, std::size_t x1) {
    double rgb[3] = {0.0, 0.0, 0.0};
    const double n = static_cast<double>((y1 - y0) * (x1 - x0));
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (std::size_t c = 0; c < 3; ++c) rgb[c] += im.at(y, x, c);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<unsigned>(std::lround(clamp01(rgb[0] / n) * 255.0)),
                  static_cast<unsigned>(std::lround(clamp01(rgb[1] / n) * 255.0)),
                  static_cast<unsigned>(std::lround(clamp01(rgb[2] / n) * 255.0)));
    return buf;
}

// Token-grid cells of one view, filled with each cell's mean color.
inline void append_panel(std::string& svg, const Image& im, std::size_t gh, std::size_t gw,
                         double ox, double oy, double scale) {
    const std::size_t cell_h = im.height / gh;
    const std::size_t cell_w = im.width / gw;
    for (std::size_t i = 0; i < gh; ++i)
        for (std::size_t j = 0; j < gw; ++j) {
            const std::string color = mean_patch_hex(im, i * cell_h, j * cell_w, (i + 1) * cell_h,
                                                     (j + 1) * cell_w);
            svg += "<rect x=\"" + fmt(ox + static_cast<double>(j * cell_w) * scale) + "\" y=\"" +
                   fmt(oy + static_cast<double>(i * cell_h) * scale) + "\" width=\"" +
                   fmt(static_cast<double>(cell_w) * scale) + "\" height=\"" +
                   fmt(static_cast<double>(cell_h) * scale) + "\" fill=\"" + color +
                   "\" stroke=\"#666\" stroke-width=\"0.5\"/>\n";
        }
}

// Panel-local token center: cell midpoint in the view raster, scaled.
inline void token_panel_xy(std::size_t k, std::size_t gw, std::size_t cell_h, std::size_t cell_w,
                           double ox, double oy, double scale, double& x, double& y) {
    const std::size_t i = k / gw;
    const std::size_t j = k % gw;
    x = ox + (static_cast<double>(j) + 0.5) * static_cast<double>(cell_w) * scale;
    y = oy + (static_cast<double>(i) + 0.5) * static_cast<double>(cell_h) * scale;
}

}  // namespace detail

// Side-by-side view panels with one colored segment per source token, drawn
// from its cell center in the left panel to its matched cell center in the
// right panel. Masked-out matches are dashed. Pure text output: byte-stable
// for identical inputs.
inline std::string render_matching_svg(const Image& va, std::size_t gha, std::size_t gwa,
                                       const Image& vb, std::size_t ghb, std::size_t gwb,
                                       const Matching& m, const std::string& caption,
                                       double scale = 4.0) {
    check(gha > 0 && gwa > 0 && ghb > 0 && gwb > 0, "svg: empty token grid");
    check(va.height % gha == 0 && va.width % gwa == 0 && vb.height % ghb == 0 &&
              vb.width % gwb == 0,
          "svg: view size must be divisible by its grid");
    check(m.count() == gha * gwa, "svg: matching size must equal the left grid");

    const double margin = 16.0, header = 28.0, gap = 48.0;
    const double wa = static_cast<double>(va.width) * scale;
    const double ha = static_cast<double>(va.height) * scale;
    const double wb = static_cast<double>(vb.width) * scale;
    const double hb = static_cast<double>(vb.height) * scale;
    const double ox_a = margin, oy = header + margin;
    const double ox_b = margin + wa + gap;
    const double width = margin * 2 + wa + gap + wb;
    const double height = header + margin * 2 + std::max(ha, hb);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width) +
           "\" height=\"" + detail::fmt(height) + "\" viewBox=\"0 0 " + detail::fmt(width) + " " +
           detail::fmt(height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + detail::fmt(width) + "\" height=\"" +
           detail::fmt(height) + "\" fill=\"#ffffff\"/>\n";
    svg += "<text x=\"" + detail::fmt(margin) + "\" y=\"" + detail::fmt(header - 8.0) +
           "\" font-family=\"monospace\" font-size=\"13\" fill=\"#222\">" + caption +
           "</text>\n";

    detail::append_panel(svg, va, gha, gwa, ox_a, oy, scale);
    detail::append_panel(svg, vb, ghb, gwb, ox_b, oy, scale);

    const std::size_t cell_ha = va.height / gha, cell_wa = va.width / gwa;
    const std::size_t cell_hb = vb.height / ghb, cell_wb = vb.width / gwb;
    const std::size_t K = m.count();
    for (std::size_t k = 0; k < K; ++k) {
        double x1, y1, x2, y2;
        detail::token_panel_xy(k, gwa, cell_ha, cell_wa, ox_a, oy, scale, x1, y1);
        detail::token_panel_xy(m.target[k], gwb, cell_hb, cell_wb, ox_b, oy, scale, x2, y2);
        const unsigned hue = static_cast<unsigned>((k * 360) / K);
        svg += "<line x1=\"" + detail::fmt(x1) + "\" y1=\"" + detail::fmt(y1) + "\" x2=\"" +
               detail::fmt(x2) + "\" y2=\"" + detail::fmt(y2) + "\" stroke=\"hsl(" +
               std::to_string(hue) + ",70%,45%)\" stroke-width=\"1.5\"";
        if (!m.mask[k]) svg += " stroke-dasharray=\"5 4\" opacity=\"0.55\"";
        svg += "/>\n";
        svg += "<circle cx=\"" + detail::fmt(x1) + "\" cy=\"" + detail::fmt(y1) +
               "\" r=\"2.5\" fill=\"hsl(" + std::to_string(hue) + ",70%,35%)\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace gltd
