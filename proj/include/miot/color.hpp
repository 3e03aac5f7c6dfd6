#pragma once

// Full-range BT.601 color transform (the JPEG convention), 8-bit in/out,
// rounded half away from zero.

#include "miot/image.hpp"

namespace miot {

inline ImageU8 rgb_to_ycbcr(const ImageU8& img) {
    require(img.colorspace == Colorspace::RGB, "rgb_to_ycbcr needs RGB input");
    ImageU8 out(img.width, img.height, Colorspace::YCbCr);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        double r = img.planes[0][i], g = img.planes[1][i], b = img.planes[2][i];
        out.planes[0][i] = round_u8(0.299 * r + 0.587 * g + 0.114 * b);
        out.planes[1][i] = round_u8(128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b);
        out.planes[2][i] = round_u8(128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b);
    }
    return out;
}

inline ImageU8 ycbcr_to_rgb(const ImageU8& img) {
    require(img.colorspace == Colorspace::YCbCr, "ycbcr_to_rgb needs YCbCr input");
    ImageU8 out(img.width, img.height, Colorspace::RGB);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        double y = img.planes[0][i];
        double cb = img.planes[1][i] - 128.0;
        double cr = img.planes[2][i] - 128.0;
        out.planes[0][i] = round_u8(y + 1.402 * cr);
        out.planes[1][i] = round_u8(y - 0.344136286 * cb - 0.714136286 * cr);
        out.planes[2][i] = round_u8(y + 1.772 * cb);
    }
    return out;
}

// Luma of one RGB triple, unrounded. Shared by the metrics module.
inline double luma_of(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace miot
