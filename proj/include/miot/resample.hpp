#pragma once

// Bicubic (Catmull-Rom, a = -0.5) spatial resampling plus the random
// resize-and-crop step that prepares training images.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "miot/image.hpp"

namespace miot {

namespace detail {

inline double catmull_rom(double t) {
    t = std::abs(t);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

// Separable 1-D pass: resamples `src` of length n to length m with
// center-aligned coordinates and edge-clamped taps.
inline void resample_line(const double* src, int n, double* dst, int m) {
    double scale = static_cast<double>(n) / m;
    for (int i = 0; i < m; ++i) {
        double sx = (i + 0.5) * scale - 0.5;
        int base = static_cast<int>(std::floor(sx));
        double frac = sx - base;
        double acc = 0.0;
        for (int k = -1; k <= 2; ++k) {
            int idx = clamp(base + k, 0, n - 1);
            acc += src[idx] * catmull_rom(k - frac);
        }
        dst[i] = acc;
    }
}

}  // namespace detail

// General bicubic resize of one plane held as doubles, rows then columns.
inline std::vector<double> resize_plane(const std::vector<double>& src, int w, int h, int nw,
                                        int nh) {
    std::vector<double> rows(static_cast<std::size_t>(nw) * h);
    std::vector<double> tmp_in(static_cast<std::size_t>(w)), tmp_out(static_cast<std::size_t>(nw));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) tmp_in[x] = src[static_cast<std::size_t>(y) * w + x];
        detail::resample_line(tmp_in.data(), w, tmp_out.data(), nw);
        for (int x = 0; x < nw; ++x) rows[static_cast<std::size_t>(y) * nw + x] = tmp_out[x];
    }
    std::vector<double> out(static_cast<std::size_t>(nw) * nh);
    std::vector<double> col_in(static_cast<std::size_t>(h)), col_out(static_cast<std::size_t>(nh));
    for (int x = 0; x < nw; ++x) {
        for (int y = 0; y < h; ++y) col_in[y] = rows[static_cast<std::size_t>(y) * nw + x];
        detail::resample_line(col_in.data(), h, col_out.data(), nh);
        for (int y = 0; y < nh; ++y) out[static_cast<std::size_t>(y) * nw + x] = col_out[y];
    }
    return out;
}

inline ImageU8 resize_bicubic(const ImageU8& img, int nw, int nh) {
    require(nw > 0 && nh > 0, "resize target must be positive");
    ImageU8 out(nw, nh, img.colorspace);
    std::vector<double> plane(img.pixel_count());
    for (std::size_t p = 0; p < img.planes.size(); ++p) {
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.planes[p][i];
        std::vector<double> r = resize_plane(plane, img.width, img.height, nw, nh);
        for (std::size_t i = 0; i < r.size(); ++i) out.planes[p][i] = round_u8(r[i]);
    }
    return out;
}

inline ImageU8 downscale(const ImageU8& img, int r) {
    require(r >= 1, "scale factor must be >= 1");
    require(img.width >= r && img.height >= r, "image smaller than scale factor");
    if (r == 1) return img;
    return resize_bicubic(img, img.width / r, img.height / r);
}

inline ImageU8 upscale_bicubic(const ImageU8& img, int r) {
    require(r >= 1, "scale factor must be >= 1");
    if (r == 1) return img;
    return resize_bicubic(img, img.width * r, img.height * r);
}

// Dataset preparation: resize so the short side lands uniformly in
// [500, 1000], then take a uniform random 256x256 crop. Returns nullopt
// (skip, not fatal) when the source cannot produce a 256x256 crop.
inline std::optional<ImageU8> random_resize_crop(const ImageU8& img, std::uint64_t seed) {
    constexpr int kCrop = 256;
    int short_src = std::min(img.width, img.height);
    if (short_src < kCrop) return std::nullopt;  // not a high-resolution source
    Rng rng(seed);
    int short_side = rng.range(500, 1000);
    double ratio = static_cast<double>(short_side) / short_src;
    int nw = std::max(1, static_cast<int>(std::lround(img.width * ratio)));
    int nh = std::max(1, static_cast<int>(std::lround(img.height * ratio)));
    if (std::min(nw, nh) < kCrop) return std::nullopt;
    ImageU8 resized = resize_bicubic(img, nw, nh);
    int x0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(nw - kCrop + 1)));
    int y0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(nh - kCrop + 1)));
    return crop(resized, x0, y0, kCrop, kCrop);
}

}  // namespace miot
