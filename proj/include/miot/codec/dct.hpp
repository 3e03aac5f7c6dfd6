#pragma once

// 8x8 type-II DCT with the orthonormal JPEG scaling (C(0) = 1/sqrt(2)),
// computed in double precision via separable 1-D passes.

#include <array>
#include <cmath>

namespace miot::codec {

using Block = std::array<double, 64>;
using IntBlock = std::array<int, 64>;

namespace detail {

struct DctBasis {
    // cosines[u][x] = C(u)/2 * cos((2x+1) u pi / 16)
    double cosines[8][8];
    DctBasis() {
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < 8; ++u) {
            double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x)
                cosines[u][x] = 0.5 * cu * std::cos((2 * x + 1) * u * pi / 16.0);
        }
    }
};

inline const DctBasis& dct_basis() {
    static const DctBasis b;
    return b;
}

}  // namespace detail

// Input: level-shifted spatial samples. Output: frequency coefficients with
// DC at index 0.
inline Block fdct_block(const Block& spatial) {
    const auto& basis = detail::dct_basis();
    double rows[8][8];
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) acc += spatial[y * 8 + x] * basis.cosines[u][x];
            rows[y][u] = acc;
        }
    Block out{};
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) acc += rows[y][u] * basis.cosines[v][y];
            out[v * 8 + u] = acc;
        }
    return out;
}

inline Block idct_block(const Block& freq) {
    const auto& basis = detail::dct_basis();
    double cols[8][8];
    for (int u = 0; u < 8; ++u)
        for (int y = 0; y < 8; ++y) {
            double acc = 0.0;
            for (int v = 0; v < 8; ++v) acc += freq[v * 8 + u] * basis.cosines[v][y];
            cols[u][y] = acc;
        }
    Block out{};
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) acc += cols[u][y] * basis.cosines[u][x];
            out[y * 8 + x] = acc;
        }
    return out;
}

}  // namespace miot::codec
