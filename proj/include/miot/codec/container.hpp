#pragma once

// The on-wire container and the full encode/decode pipeline:
// color transform -> optional 4:2:0 subsampling -> 8x8 tiling with edge
// padding -> level shift -> DCT -> quantization -> zigzag -> entropy coding.
//
// Internally the pipeline carries plane samples as doubles and rounds to u8
// exactly once, at the decoded-RGB boundary; this keeps the q=100 roundtrip
// within the documented 2-level bound. The u8 color ops in color.hpp define
// the same BT.601 transform for external use.
//
// Layout (little-endian):
//   magic "MIOT" | version u8=1 | variant u8 | scale_factor u8 | quality u8 |
//   subsample u8 | colorspace u8 | width u16 | height u16 |
//   per component: section_length u32 + entropy-coded payload

#include <cstdint>
#include <string>
#include <vector>

#include "miot/codec/entropy.hpp"
#include "miot/codec/quant.hpp"
#include "miot/color.hpp"
#include "miot/image.hpp"

namespace miot::codec {

struct EncodeOptions {
    bool subsample = true;  // 4:2:0 chroma, box average
    int scale_factor = 1;   // pipeline metadata: 1 = variant 1, 4 = variant 2
};

struct BitstreamHeader {
    int variant = 0;
    int scale_factor = 1;
    int quality = 0;
    bool subsample = true;
    Colorspace colorspace = Colorspace::RGB;
    int width = 0;
    int height = 0;
};

inline constexpr std::size_t kHeaderSize = 14;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    std::uint8_t u8() {
        if (pos >= bytes.size()) throw decode_error("bitstream truncated in header");
        return bytes[pos++];
    }
    std::uint16_t u16() {
        std::uint16_t lo = u8(), hi = u8();
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
};

using Plane = std::vector<double>;

// 2x2 box average, edge-aware; the decoder inverts it by replication.
inline Plane subsample_plane(const Plane& plane, int w, int h, int& cw, int& ch) {
    cw = (w + 1) / 2;
    ch = (h + 1) / 2;
    Plane out(static_cast<std::size_t>(cw) * ch);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
            double sum = 0;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    int sx = 2 * x + dx, sy = 2 * y + dy;
                    if (sx < w && sy < h) {
                        sum += plane[static_cast<std::size_t>(sy) * w + sx];
                        ++n;
                    }
                }
            out[static_cast<std::size_t>(y) * cw + x] = sum / n;
        }
    return out;
}

inline std::vector<IntBlock> plane_to_symbols(const Plane& plane, int w, int h,
                                              const std::array<int, 64>& table) {
    int pw = (w + 7) & ~7, ph = (h + 7) & ~7;
    std::vector<IntBlock> blocks;
    blocks.reserve(static_cast<std::size_t>(pw / 8) * (ph / 8));
    for (int by = 0; by < ph; by += 8)
        for (int bx = 0; bx < pw; bx += 8) {
            Block spatial{};
            for (int y = 0; y < 8; ++y) {
                int sy = clamp(by + y, 0, h - 1);  // edge replication
                for (int x = 0; x < 8; ++x) {
                    int sx = clamp(bx + x, 0, w - 1);
                    spatial[y * 8 + x] = plane[static_cast<std::size_t>(sy) * w + sx] - 128.0;
                }
            }
            IntBlock q = quantize_block(fdct_block(spatial), table);
            // keep AC amplitudes inside the baseline 10-bit Huffman range
            for (int i = 1; i < 64; ++i) q[i] = clamp(q[i], -1023, 1023);
            blocks.push_back(zigzag(q));
        }
    return blocks;
}

inline Plane symbols_to_plane(const std::vector<IntBlock>& blocks, int w, int h,
                              const std::array<int, 64>& table) {
    int pw = (w + 7) & ~7, ph = (h + 7) & ~7;
    Plane plane(static_cast<std::size_t>(w) * h);
    std::size_t bi = 0;
    for (int by = 0; by < ph; by += 8)
        for (int bx = 0; bx < pw; bx += 8, ++bi) {
            Block spatial = idct_block(dequantize_block(inverse_zigzag(blocks[bi]), table));
            for (int y = 0; y < 8; ++y) {
                int py = by + y;
                if (py >= h) break;
                for (int x = 0; x < 8; ++x) {
                    int px = bx + x;
                    if (px >= w) break;
                    plane[static_cast<std::size_t>(py) * w + px] = spatial[y * 8 + x] + 128.0;
                }
            }
        }
    return plane;
}

inline std::size_t block_count(int w, int h) {
    return static_cast<std::size_t>((w + 7) / 8) * ((h + 7) / 8);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const ImageU8& img, int quality,
                                        const EncodeOptions& opt = {}) {
    require(img.colorspace == Colorspace::RGB || img.colorspace == Colorspace::Gray,
            "encode takes RGB or Gray input");
    require(img.width > 0 && img.height > 0, "encode needs a non-empty image");
    require(img.width <= 0xFFFF && img.height <= 0xFFFF, "image dimensions exceed u16 header");
    require(opt.scale_factor == 1 || opt.scale_factor == 4, "scale factor must be 1 or 4");
    QuantTables tables = quality_to_tables(quality);

    bool gray = img.colorspace == Colorspace::Gray;
    std::vector<std::vector<std::uint8_t>> sections;
    if (gray) {
        detail::Plane y(img.pixel_count());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = img.planes[0][i];
        sections.push_back(entropy_encode(
            detail::plane_to_symbols(y, img.width, img.height, tables.luma), Component::Luma));
    } else {
        detail::Plane y(img.pixel_count()), cb(img.pixel_count()), cr(img.pixel_count());
        for (std::size_t i = 0; i < y.size(); ++i) {
            double r = img.planes[0][i], g = img.planes[1][i], b = img.planes[2][i];
            y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb[i] = 128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b;
            cr[i] = 128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b;
        }
        sections.push_back(entropy_encode(
            detail::plane_to_symbols(y, img.width, img.height, tables.luma), Component::Luma));
        for (detail::Plane* chroma : {&cb, &cr}) {
            if (opt.subsample) {
                int cw = 0, ch = 0;
                detail::Plane sub = detail::subsample_plane(*chroma, img.width, img.height, cw, ch);
                sections.push_back(entropy_encode(
                    detail::plane_to_symbols(sub, cw, ch, tables.chroma), Component::Chroma));
            } else {
                sections.push_back(entropy_encode(
                    detail::plane_to_symbols(*chroma, img.width, img.height, tables.chroma),
                    Component::Chroma));
            }
        }
    }

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'I', 'O', 'T'});
    out.push_back(1);  // version
    out.push_back(opt.scale_factor > 1 ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(opt.scale_factor));
    out.push_back(static_cast<std::uint8_t>(quality));
    out.push_back(opt.subsample ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(img.colorspace));
    detail::put_u16(out, static_cast<std::uint16_t>(img.width));
    detail::put_u16(out, static_cast<std::uint16_t>(img.height));
    for (const auto& s : sections) {
        detail::put_u32(out, static_cast<std::uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

inline BitstreamHeader read_header(const std::vector<std::uint8_t>& bytes) {
    detail::Reader r{bytes};
    if (bytes.size() < 4 || bytes[0] != 'M' || bytes[1] != 'I' || bytes[2] != 'O' ||
        bytes[3] != 'T')
        throw decode_error("not a MIOT bitstream (bad magic)");
    r.pos = 4;
    if (r.u8() != 1) throw decode_error("unsupported bitstream version");
    BitstreamHeader h;
    h.variant = r.u8();
    h.scale_factor = r.u8();
    h.quality = r.u8();
    h.subsample = r.u8() != 0;
    std::uint8_t cs = r.u8();
    if (cs > 2) throw decode_error("invalid colorspace byte");
    h.colorspace = static_cast<Colorspace>(cs);
    h.width = r.u16();
    h.height = r.u16();
    if (h.width == 0 || h.height == 0) throw decode_error("zero dimension in header");
    if (h.quality < 1 || h.quality > 100) throw decode_error("quality out of range in header");
    if (h.scale_factor != 1 && h.scale_factor != 4)
        throw decode_error("invalid scale factor in header");
    return h;
}

inline ImageU8 decode(const std::vector<std::uint8_t>& bytes) {
    BitstreamHeader h = read_header(bytes);
    detail::Reader r{bytes};
    r.pos = kHeaderSize;
    QuantTables tables = quality_to_tables(h.quality);

    auto read_section = [&](std::size_t nblocks, Component comp, const std::array<int, 64>& table,
                            int w, int hh) {
        std::uint32_t len = r.u32();
        if (r.pos + len > bytes.size()) throw decode_error("section length overruns bitstream");
        std::vector<std::uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                                          bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + len));
        r.pos += len;
        std::vector<IntBlock> blocks = entropy_decode(payload, nblocks, comp);
        return detail::symbols_to_plane(blocks, w, hh, table);
    };

    if (h.colorspace == Colorspace::Gray) {
        detail::Plane y = read_section(detail::block_count(h.width, h.height), Component::Luma,
                                       tables.luma, h.width, h.height);
        ImageU8 img(h.width, h.height, Colorspace::Gray);
        for (std::size_t i = 0; i < y.size(); ++i) img.planes[0][i] = round_u8(y[i]);
        return img;
    }

    detail::Plane y = read_section(detail::block_count(h.width, h.height), Component::Luma,
                                   tables.luma, h.width, h.height);
    detail::Plane cb, cr;
    for (detail::Plane* chroma : {&cb, &cr}) {
        if (h.subsample) {
            int cw = (h.width + 1) / 2, ch = (h.height + 1) / 2;
            detail::Plane sub =
                read_section(detail::block_count(cw, ch), Component::Chroma, tables.chroma, cw, ch);
            chroma->resize(static_cast<std::size_t>(h.width) * h.height);
            // nearest upsample, the inverse of the box average
            for (int yy = 0; yy < h.height; ++yy)
                for (int xx = 0; xx < h.width; ++xx)
                    (*chroma)[static_cast<std::size_t>(yy) * h.width + xx] =
                        sub[static_cast<std::size_t>(yy / 2) * cw + xx / 2];
        } else {
            *chroma = read_section(detail::block_count(h.width, h.height), Component::Chroma,
                                   tables.chroma, h.width, h.height);
        }
    }

    ImageU8 img(h.width, h.height, Colorspace::RGB);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        double yy = y[i], dcb = cb[i] - 128.0, dcr = cr[i] - 128.0;
        img.planes[0][i] = round_u8(yy + 1.402 * dcr);
        img.planes[1][i] = round_u8(yy - 0.344136286 * dcb - 0.714136286 * dcr);
        img.planes[2][i] = round_u8(yy + 1.772 * dcb);
    }
    return img;
}

}  // namespace miot::codec
