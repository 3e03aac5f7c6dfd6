#pragma once

// Quality-scaled quantization tables (libjpeg-style scaling of the Annex-K
// base matrices) and per-block quantization.

#include <array>
#include <cmath>

#include "miot/codec/dct.hpp"
#include "miot/codec/tables.hpp"
#include "miot/common.hpp"

namespace miot::codec {

struct QuantTables {
    std::array<int, 64> luma;
    std::array<int, 64> chroma;
};

inline QuantTables quality_to_tables(int q) {
    require(q >= 1 && q <= 100, "quality must be in [1, 100]");
    int scale = q < 50 ? 5000 / q : 200 - 2 * q;
    QuantTables t{};
    for (int i = 0; i < 64; ++i) {
        t.luma[i] = clamp((kBaseLumaQuant[i] * scale + 50) / 100, 1, 255);
        t.chroma[i] = clamp((kBaseChromaQuant[i] * scale + 50) / 100, 1, 255);
    }
    return t;
}

inline IntBlock quantize_block(const Block& coeffs, const std::array<int, 64>& table) {
    IntBlock out{};
    for (int i = 0; i < 64; ++i)
        out[i] = iround(coeffs[i] / static_cast<double>(table[i]));
    return out;
}

inline Block dequantize_block(const IntBlock& quantized, const std::array<int, 64>& table) {
    Block out{};
    for (int i = 0; i < 64; ++i)
        out[i] = static_cast<double>(quantized[i]) * static_cast<double>(table[i]);
    return out;
}

inline IntBlock zigzag(const IntBlock& block) {
    IntBlock out{};
    for (int i = 0; i < 64; ++i) out[i] = block[kZigzag[i]];
    return out;
}

inline IntBlock inverse_zigzag(const IntBlock& scanned) {
    IntBlock out{};
    for (int i = 0; i < 64; ++i) out[kZigzag[i]] = scanned[i];
    return out;
}

}  // namespace miot::codec
