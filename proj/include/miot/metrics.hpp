#pragma once

// Full-reference quality metrics: MSE, PSNR, SSIM.
//
// Conventions (recorded in report metadata): MSE/PSNR are computed jointly
// over all channels; SSIM is computed on the luma plane with an 11x11
// Gaussian window, sigma 1.5, valid positions only.

#include <cmath>
#include <limits>
#include <vector>

#include "miot/color.hpp"
#include "miot/image.hpp"

namespace miot {

inline double mse(const ImageU8& a, const ImageU8& b) {
    require(a.same_shape(b), "mse needs images of equal shape");
    double sum = 0.0;
    for (std::size_t p = 0; p < a.planes.size(); ++p)
        for (std::size_t i = 0; i < a.planes[p].size(); ++i) {
            double d = static_cast<double>(a.planes[p][i]) - static_cast<double>(b.planes[p][i]);
            sum += d * d;
        }
    return sum / (static_cast<double>(a.pixel_count()) * a.planes.size());
}

// +infinity for identical inputs; serialized as the literal "inf" in reports.
inline double psnr(const ImageU8& a, const ImageU8& b) {
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / m);
}

namespace detail {

inline std::vector<double> luma_plane(const ImageU8& img) {
    std::vector<double> out(img.pixel_count());
    if (img.colorspace == Colorspace::RGB) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = luma_of(img.planes[0][i], img.planes[1][i], img.planes[2][i]);
    } else {
        // Gray plane or YCbCr luma plane
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.planes[0][i];
    }
    return out;
}

inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        constexpr int n = 11;
        constexpr double sigma = 1.5;
        std::vector<double> v(n * n);
        double sum = 0.0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = x - (n - 1) / 2.0, dy = y - (n - 1) / 2.0;
                v[y * n + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                sum += v[y * n + x];
            }
        for (double& e : v) e /= sum;
        return v;
    }();
    return w;
}

}  // namespace detail

inline double ssim(const ImageU8& a, const ImageU8& b) {
    require(a.width == b.width && a.height == b.height, "ssim needs images of equal dimensions");
    constexpr int kWin = 11;
    require(a.width >= kWin && a.height >= kWin, "image smaller than the SSIM window");
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    std::vector<double> la = detail::luma_plane(a), lb = detail::luma_plane(b);
    const std::vector<double>& win = detail::ssim_window();
    int w = a.width, h = a.height;

    double total = 0.0;
    std::size_t count = 0;
    for (int y = 0; y + kWin <= h; ++y) {
        for (int x = 0; x + kWin <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int wy = 0; wy < kWin; ++wy) {
                const double* ra = &la[static_cast<std::size_t>(y + wy) * w + x];
                const double* rb = &lb[static_cast<std::size_t>(y + wy) * w + x];
                const double* wr = &win[static_cast<std::size_t>(wy) * kWin];
                for (int wx = 0; wx < kWin; ++wx) {
                    double va = ra[wx], vb = rb[wx], g = wr[wx];
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            }
            double var_a = saa - ma * ma;
            double var_b = sbb - mb * mb;
            double cov = sab - ma * mb;
            double val = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            total += val;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

struct QualityScores {
    double mse = 0.0;
    double psnr = 0.0;  // may be +inf
    double ssim = 0.0;
};

inline QualityScores score(const ImageU8& reference, const ImageU8& candidate) {
    QualityScores s;
    s.mse = mse(reference, candidate);
    s.psnr = s.mse == 0.0 ? std::numeric_limits<double>::infinity()
                          : 10.0 * std::log10(255.0 * 255.0 / s.mse);
    s.ssim = ssim(reference, candidate);
    return s;
}

}  // namespace miot
