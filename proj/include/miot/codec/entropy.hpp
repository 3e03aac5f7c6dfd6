#pragma once

// Baseline JPEG entropy layer: DPCM-coded DC, run/size-coded AC with EOB and
// ZRL, canonical Huffman codes built from the fixed Annex-K specs. Bits are
// packed MSB-first; the final partial byte is padded with 1-bits.

#include <cstdint>
#include <string>
#include <vector>

#include "miot/codec/dct.hpp"
#include "miot/codec/tables.hpp"
#include "miot/common.hpp"

namespace miot::codec {

struct BitWriter {
    std::vector<std::uint8_t> bytes;
    std::uint32_t acc = 0;
    int nbits = 0;

    void put(std::uint32_t code, int len) {
        acc = (acc << len) | (code & ((1u << len) - 1u));
        nbits += len;
        while (nbits >= 8) {
            bytes.push_back(static_cast<std::uint8_t>(acc >> (nbits - 8)));
            nbits -= 8;
        }
    }

    std::vector<std::uint8_t> finish() {
        if (nbits > 0) put(0xFFu, 8 - nbits);  // pad with 1-bits
        return std::move(bytes);
    }
};

struct BitReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t byte_pos = 0;
    int bit_pos = 0;  // bits consumed from current byte, MSB first

    bool next(int& bit) {
        if (byte_pos >= size) return false;
        bit = (data[byte_pos] >> (7 - bit_pos)) & 1;
        if (++bit_pos == 8) {
            bit_pos = 0;
            ++byte_pos;
        }
        return true;
    }
};

namespace detail {

struct HuffmanCodec {
    // encoder: symbol -> (code, length)
    std::uint16_t code[256];
    std::uint8_t length[256];
    // decoder: canonical range per length (Annex F.2.2 style)
    std::int32_t min_code[17];
    std::int32_t max_code[17];  // -1 when no codes of that length
    int val_base[17];
    std::vector<std::uint8_t> symbols_in_order;

    explicit HuffmanCodec(const HuffmanSpec& spec) {
        for (int i = 0; i < 256; ++i) length[i] = 0;
        symbols_in_order.assign(spec.symbols, spec.symbols + spec.symbol_count);
        std::uint16_t next_code = 0;
        int k = 0;
        for (int len = 1; len <= 16; ++len) {
            min_code[len] = next_code;
            val_base[len] = k;
            for (int i = 0; i < spec.counts[len - 1]; ++i, ++k) {
                code[spec.symbols[k]] = next_code;
                length[spec.symbols[k]] = static_cast<std::uint8_t>(len);
                ++next_code;
            }
            max_code[len] = spec.counts[len - 1] ? next_code - 1 : -1;
            next_code <<= 1;
        }
    }

    void encode(BitWriter& bw, int symbol) const {
        bw.put(code[symbol], length[symbol]);
    }

    int decode(BitReader& br, std::size_t block_index) const {
        std::int32_t v = 0;
        for (int len = 1; len <= 16; ++len) {
            int bit = 0;
            if (!br.next(bit))
                throw decode_error("bitstream ended inside a Huffman code (block " +
                                   std::to_string(block_index) + ")");
            v = (v << 1) | bit;
            if (max_code[len] >= 0 && v <= max_code[len])
                return symbols_in_order[val_base[len] + (v - min_code[len])];
        }
        throw decode_error("invalid Huffman code (block " + std::to_string(block_index) + ")");
    }
};

inline const HuffmanCodec& dc_codec(bool luma) {
    static const HuffmanCodec l(kDcLuma), c(kDcChroma);
    return luma ? l : c;
}

inline const HuffmanCodec& ac_codec(bool luma) {
    static const HuffmanCodec l(kAcLuma), c(kAcChroma);
    return luma ? l : c;
}

// Number of bits needed for the JPEG magnitude category of v.
inline int bit_size(int v) {
    int a = v < 0 ? -v : v;
    int s = 0;
    while (a) {
        ++s;
        a >>= 1;
    }
    return s;
}

// JPEG amplitude convention: positive values as-is, negative values are
// stored as v + (1 << size) - 1 in `size` bits.
inline std::uint32_t amplitude_bits(int v, int size) {
    return static_cast<std::uint32_t>(v >= 0 ? v : v + (1 << size) - 1);
}

inline int amplitude_value(std::uint32_t bits, int size) {
    if (size == 0) return 0;
    if (bits >> (size - 1)) return static_cast<int>(bits);  // leading 1 -> positive
    return static_cast<int>(bits) - (1 << size) + 1;
}

}  // namespace detail

enum class Component { Luma, Chroma };

// Encode zigzag-ordered quantized blocks of one image component. DC values
// are DPCM-differenced internally, starting from predictor 0.
inline std::vector<std::uint8_t> entropy_encode(const std::vector<IntBlock>& blocks,
                                                Component comp) {
    bool luma = comp == Component::Luma;
    const auto& dc = detail::dc_codec(luma);
    const auto& ac = detail::ac_codec(luma);
    BitWriter bw;
    int pred = 0;
    for (const IntBlock& blk : blocks) {
        int diff = blk[0] - pred;
        pred = blk[0];
        int s = detail::bit_size(diff);
        require(s <= 11, "DC difference out of baseline range");
        dc.encode(bw, s);
        if (s) bw.put(detail::amplitude_bits(diff, s), s);

        int run = 0;
        for (int i = 1; i < 64; ++i) {
            if (blk[i] == 0) {
                ++run;
                continue;
            }
            while (run > 15) {
                ac.encode(bw, 0xF0);  // ZRL: sixteen zeros
                run -= 16;
            }
            int as = detail::bit_size(blk[i]);
            require(as <= 10, "AC coefficient out of baseline range");
            ac.encode(bw, (run << 4) | as);
            bw.put(detail::amplitude_bits(blk[i], as), as);
            run = 0;
        }
        if (run > 0) ac.encode(bw, 0x00);  // EOB
    }
    return bw.finish();
}

inline std::vector<IntBlock> entropy_decode(const std::vector<std::uint8_t>& bytes,
                                            std::size_t block_count, Component comp) {
    bool luma = comp == Component::Luma;
    const auto& dc = detail::dc_codec(luma);
    const auto& ac = detail::ac_codec(luma);
    BitReader br{bytes.data(), bytes.size()};
    std::vector<IntBlock> blocks(block_count);
    int pred = 0;
    for (std::size_t b = 0; b < block_count; ++b) {
        IntBlock& blk = blocks[b];
        blk.fill(0);
        int s = dc.decode(br, b);
        if (s > 11) throw decode_error("DC size category out of range (block " + std::to_string(b) + ")");
        std::uint32_t bits = 0;
        for (int i = 0; i < s; ++i) {
            int bit = 0;
            if (!br.next(bit))
                throw decode_error("bitstream ended inside DC amplitude (block " +
                                   std::to_string(b) + ")");
            bits = (bits << 1) | static_cast<std::uint32_t>(bit);
        }
        pred += detail::amplitude_value(bits, s);
        blk[0] = pred;

        int i = 1;
        while (i < 64) {
            int sym = ac.decode(br, b);
            if (sym == 0x00) break;  // EOB
            int run = sym >> 4;
            int size = sym & 0x0F;
            if (sym == 0xF0) {
                i += 16;
                if (i > 64)
                    throw decode_error("ZRL overruns block (block " + std::to_string(b) + ")");
                continue;
            }
            i += run;
            if (size == 0 || i >= 64)
                throw decode_error("AC run overruns block (block " + std::to_string(b) + ")");
            std::uint32_t abits = 0;
            for (int k = 0; k < size; ++k) {
                int bit = 0;
                if (!br.next(bit))
                    throw decode_error("bitstream ended inside AC amplitude (block " +
                                       std::to_string(b) + ")");
                abits = (abits << 1) | static_cast<std::uint32_t>(bit);
            }
            blk[i] = detail::amplitude_value(abits, size);
            ++i;
        }
    }
    return blocks;
}

}  // namespace miot::codec
