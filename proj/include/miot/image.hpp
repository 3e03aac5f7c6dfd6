#pragma once

// Planar raster images. Two sample depths are used throughout the pipeline:
// 8-bit integer images on the codec side, unit-interval float images on the
// model side. Planes are row-major, top-to-bottom, one vector per channel.

#include <cstdint>
#include <vector>

#include "miot/common.hpp"

namespace miot {

enum class Colorspace : std::uint8_t { RGB = 0, YCbCr = 1, Gray = 2 };

inline int plane_count(Colorspace cs) { return cs == Colorspace::Gray ? 1 : 3; }

template <typename T>
struct PlanarImage {
    int width = 0;
    int height = 0;
    Colorspace colorspace = Colorspace::RGB;
    std::vector<std::vector<T>> planes;

    PlanarImage() = default;
    PlanarImage(int w, int h, Colorspace cs)
        : width(w), height(h), colorspace(cs),
          planes(plane_count(cs), std::vector<T>(static_cast<std::size_t>(w) * h)) {
        require(w > 0 && h > 0, "image dimensions must be positive");
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    T& at(int plane, int x, int y) { return planes[plane][static_cast<std::size_t>(y) * width + x]; }
    T at(int plane, int x, int y) const { return planes[plane][static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const PlanarImage& o) const {
        return width == o.width && height == o.height && planes.size() == o.planes.size();
    }

    bool operator==(const PlanarImage& o) const = default;
};

using ImageU8 = PlanarImage<std::uint8_t>;
using ImageF32 = PlanarImage<float>;

inline ImageF32 to_unit_float(const ImageU8& img) {
    ImageF32 out(img.width, img.height, img.colorspace);
    for (std::size_t p = 0; p < img.planes.size(); ++p)
        for (std::size_t i = 0; i < img.planes[p].size(); ++i)
            out.planes[p][i] = static_cast<float>(img.planes[p][i]) * (1.0f / 255.0f);
    return out;
}

inline ImageU8 to_u8(const ImageF32& img) {
    ImageU8 out(img.width, img.height, img.colorspace);
    for (std::size_t p = 0; p < img.planes.size(); ++p)
        for (std::size_t i = 0; i < img.planes[p].size(); ++i)
            out.planes[p][i] = round_u8(static_cast<double>(img.planes[p][i]) * 255.0);
    return out;
}

// Replicate the last row/column so width x height becomes tw x th.
// Used before block splitting and before variant-2 down-scaling.
template <typename T>
inline PlanarImage<T> pad_edge(const PlanarImage<T>& img, int tw, int th) {
    require(tw >= img.width && th >= img.height, "pad_edge target must not shrink");
    if (tw == img.width && th == img.height) return img;
    PlanarImage<T> out(tw, th, img.colorspace);
    for (std::size_t p = 0; p < img.planes.size(); ++p)
        for (int y = 0; y < th; ++y) {
            int sy = y < img.height ? y : img.height - 1;
            for (int x = 0; x < tw; ++x) {
                int sx = x < img.width ? x : img.width - 1;
                out.at(static_cast<int>(p), x, y) = img.at(static_cast<int>(p), sx, sy);
            }
        }
    return out;
}

template <typename T>
inline PlanarImage<T> crop(const PlanarImage<T>& img, int x0, int y0, int w, int h) {
    require(x0 >= 0 && y0 >= 0 && x0 + w <= img.width && y0 + h <= img.height,
            "crop rectangle out of bounds");
    PlanarImage<T> out(w, h, img.colorspace);
    for (std::size_t p = 0; p < img.planes.size(); ++p)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(static_cast<int>(p), x, y) = img.at(static_cast<int>(p), x0 + x, y0 + y);
    return out;
}

}  // namespace miot
