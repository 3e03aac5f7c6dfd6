#pragma once

// Deterministic synthetic test/training images: smooth multi-grating shading,
// colored geometric shapes for edges, and a mild detail overlay tied to the
// shading so restoration has structure to recover. Every sample is a pure
// function of (seed, width, height).

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "miot/image.hpp"

namespace miot {

namespace detail {

struct Grating {
    double kx, ky, phase, amp;
};

// Accumulates amp * cos(kx*x + ky*y + phase) into `field` using incremental
// complex rotation per row (no per-pixel trig).
inline void add_grating(std::vector<double>& field, int w, int h, const Grating& g) {
    double step_c = std::cos(g.kx), step_s = std::sin(g.kx);
    for (int y = 0; y < h; ++y) {
        double p = g.ky * y + g.phase;
        double c = std::cos(p), s = std::sin(p);
        double* row = &field[static_cast<std::size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            row[x] += g.amp * c;
            double nc = c * step_c - s * step_s;
            s = c * step_s + s * step_c;
            c = nc;
        }
    }
}

inline std::vector<double> smooth_field(Rng& rng, int w, int h, int gratings, double cycles_lo,
                                        double cycles_hi) {
    std::vector<double> field(static_cast<std::size_t>(w) * h, 0.0);
    double base = 6.283185307179586 / std::min(w, h);
    double amp_sum = 0.0;
    for (int j = 0; j < gratings; ++j) {
        double cycles = cycles_lo + (cycles_hi - cycles_lo) * rng.unit();
        double theta = 6.283185307179586 * rng.unit();
        Grating g{base * cycles * std::cos(theta), base * cycles * std::sin(theta),
                  6.283185307179586 * rng.unit(), 0.35 + 0.65 * rng.unit()};
        amp_sum += g.amp;
        add_grating(field, w, h, g);
    }
    for (double& v : field) v = std::tanh(1.4 * v / amp_sum);
    return field;
}

}  // namespace detail

inline ImageU8 synth_image(std::uint64_t seed, int width, int height) {
    Rng rng(seed);
    std::vector<double> luma = detail::smooth_field(rng, width, height, 6, 0.5, 3.0);
    std::vector<double> tint_u = detail::smooth_field(rng, width, height, 3, 0.4, 2.0);
    std::vector<double> tint_v = detail::smooth_field(rng, width, height, 3, 0.4, 2.0);

    std::vector<std::array<double, 3>> delta(static_cast<std::size_t>(width) * height,
                                             {0.0, 0.0, 0.0});
    int shapes = rng.range(3, 6);
    for (int s = 0; s < shapes; ++s) {
        bool disk = rng.unit() < 0.5;
        int cx = rng.range(0, width - 1), cy = rng.range(0, height - 1);
        int rw = rng.range(width / 12, width / 4), rh = rng.range(height / 12, height / 4);
        std::array<double, 3> dv{};
        for (auto& d : dv) d = (rng.unit() < 0.5 ? -1 : 1) * (0.12 + 0.22 * rng.unit());
        int x0 = clamp(cx - rw, 0, width - 1), x1 = clamp(cx + rw, 0, width - 1);
        int y0 = clamp(cy - rh, 0, height - 1), y1 = clamp(cy + rh, 0, height - 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (disk) {
                    double nx = (x - cx) / static_cast<double>(rw);
                    double ny = (y - cy) / static_cast<double>(rh);
                    if (nx * nx + ny * ny > 1.0) continue;
                }
                auto& d = delta[static_cast<std::size_t>(y) * width + x];
                for (int c = 0; c < 3; ++c) d[c] += dv[c];
            }
    }

    // detail overlay: a chirp that follows the shading, so its phase can be
    // inferred from the surviving low frequencies after hard compression
    double detail_amp = 0.06 + 0.05 * rng.unit();
    double detail_freq = 18.0 + 10.0 * rng.unit();
    double detail_phase = 6.283185307179586 * rng.unit();

    ImageU8 img(width, height, Colorspace::RGB);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        double s = 0.5 + 0.40 * luma[i];
        double t = detail_amp * std::sin(detail_freq * luma[i] + detail_phase);
        const auto& d = delta[i];
        double r = s + 0.14 * tint_u[i] + t + d[0];
        double g = s - 0.06 * tint_u[i] + 0.11 * tint_v[i] + t + d[1];
        double b = s - 0.13 * tint_u[i] - 0.09 * tint_v[i] + t + d[2];
        img.planes[0][i] = round_u8(255.0 * r);
        img.planes[1][i] = round_u8(255.0 * g);
        img.planes[2][i] = round_u8(255.0 * b);
    }
    return img;
}

}  // namespace miot
