#pragma once

// Binary PPM (P6) / PGM (P5) interchange, maxval 255. This is the only image
// file format the project speaks; anything else is converted out of band.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "miot/image.hpp"

namespace miot {

namespace detail {

struct ByteCursor {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    bool eof() const { return pos >= size; }
    std::uint8_t peek() const { return data[pos]; }
    std::uint8_t take() { return data[pos++]; }

    void skip_space_and_comments() {
        while (!eof()) {
            std::uint8_t c = peek();
            if (c == '#') {
                while (!eof() && take() != '\n') {
                }
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_int() {
        skip_space_and_comments();
        if (eof() || peek() < '0' || peek() > '9')
            throw parse_error("expected unsigned integer in PPM header", pos);
        long v = 0;
        while (!eof() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (take() - '0');
            if (v > 1 << 30) throw parse_error("PPM header value out of range", pos);
        }
        return static_cast<int>(v);
    }
};

}  // namespace detail

inline ImageU8 read_ppm(const std::vector<std::uint8_t>& bytes) {
    detail::ByteCursor cur{bytes.data(), bytes.size()};
    if (bytes.size() < 2) throw parse_error("input too short for PPM magic", 0);
    char m0 = static_cast<char>(cur.take());
    char m1 = static_cast<char>(cur.take());
    bool color = false;
    if (m0 == 'P' && m1 == '6')
        color = true;
    else if (m0 == 'P' && m1 == '5')
        color = false;
    else
        throw parse_error("unsupported magic, want P6 or P5", 0);

    int w = cur.read_int();
    int h = cur.read_int();
    int maxval = cur.read_int();
    if (w <= 0 || h <= 0) throw parse_error("non-positive dimensions", cur.pos);
    if (maxval != 255) throw parse_error("only maxval 255 is supported", cur.pos);
    if (cur.eof()) throw parse_error("missing payload", cur.pos);
    std::uint8_t sep = cur.take();
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
        throw parse_error("expected single whitespace before payload", cur.pos - 1);

    int channels = color ? 3 : 1;
    std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - cur.pos < need)
        throw parse_error("payload truncated, need " + std::to_string(need) + " bytes", cur.pos);

    ImageU8 img(w, h, color ? Colorspace::RGB : Colorspace::Gray);
    // interleaved payload -> planar
    const std::uint8_t* src = bytes.data() + cur.pos;
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i)
        for (int c = 0; c < channels; ++c) img.planes[c][i] = src[i * channels + c];
    return img;
}

inline std::vector<std::uint8_t> write_ppm(const ImageU8& img) {
    require(img.colorspace == Colorspace::RGB || img.colorspace == Colorspace::Gray,
            "write_ppm takes RGB or Gray input, convert YCbCr first");
    std::string header = std::string(img.colorspace == Colorspace::RGB ? "P6" : "P5") + "\n" +
                         std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    int channels = static_cast<int>(img.planes.size());
    std::vector<std::uint8_t> out(header.size() + img.pixel_count() * channels);
    std::copy(header.begin(), header.end(), out.begin());
    std::uint8_t* dst = out.data() + header.size();
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        for (int c = 0; c < channels; ++c) dst[i * channels + c] = img.planes[c][i];
    return out;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw error("cannot open file: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw error("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw error("short write: " + path);
}

inline ImageU8 load_ppm(const std::string& path) { return read_ppm(read_file(path)); }

inline void store_ppm(const std::string& path, const ImageU8& img) {
    write_file(path, write_ppm(img));
}

}  // namespace miot
