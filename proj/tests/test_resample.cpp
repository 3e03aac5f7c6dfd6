#include <catch2/catch_amalgamated.hpp>

#include "miot/resample.hpp"
#include "miot/synth.hpp"
#include "oracles.hpp"

using namespace miot;

namespace {

ImageU8 constant_image(int w, int h, std::uint8_t v) {
    ImageU8 img(w, h, Colorspace::RGB);
    for (auto& p : img.planes) std::fill(p.begin(), p.end(), v);
    return img;
}

}  // namespace

TEST_CASE("scalers preserve constants and r=1 is identity") {
    ImageU8 img = constant_image(16, 12, 77);
    for (int r : {1, 4}) {
        ImageU8 down = downscale(img, r);
        CHECK(down.width == 16 / r);
        CHECK(down.height == 12 / r);
        for (auto& p : down.planes)
            for (auto v : p) CHECK(v == 77);
        ImageU8 up = upscale_bicubic(img, r);
        CHECK(up.width == 16 * r);
        for (auto& p : up.planes)
            for (auto v : p) CHECK(v == 77);
    }
    CHECK(downscale(img, 1) == img);
    CHECK(upscale_bicubic(img, 1) == img);
    CHECK_THROWS_AS(downscale(img, 0), contract_error);
}

TEST_CASE("downscale of a ramp matches the direct bicubic oracle") {
    ImageU8 img(8, 8, Colorspace::Gray);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) img.at(0, x, y) = static_cast<std::uint8_t>(x * 30);
    ImageU8 down = downscale(img, 4);
    REQUIRE(down.width == 2);
    REQUIRE(down.height == 2);

    std::vector<double> plane(64);
    for (int i = 0; i < 64; ++i) plane[i] = img.planes[0][i];
    std::vector<double> ref = oracle::bicubic_direct(plane, 8, 8, 2, 2);
    for (int i = 0; i < 4; ++i)
        CHECK(std::abs(double(down.planes[0][i]) - ref[i]) <= 1.0);
}

TEST_CASE("resampler agrees with the oracle on arbitrary ratios") {
    ImageU8 img = synth_image(77, 37, 29);
    ImageU8 out = resize_bicubic(img, 53, 17);
    std::vector<double> plane(img.pixel_count());
    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.planes[p][i];
        std::vector<double> ref = oracle::bicubic_direct(plane, 37, 29, 53, 17);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            double clamped = clamp(ref[i], 0.0, 255.0);
            CHECK(std::abs(double(out.planes[p][i]) - clamped) <= 1.0);
        }
    }
}

TEST_CASE("upscale of a ramp matches the oracle") {
    ImageU8 img(6, 5, Colorspace::Gray);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) img.at(0, x, y) = static_cast<std::uint8_t>(x * 20 + y * 25);
    ImageU8 up = upscale_bicubic(img, 4);
    std::vector<double> plane(img.pixel_count());
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.planes[0][i];
    std::vector<double> ref = oracle::bicubic_direct(plane, 6, 5, 24, 20);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double clamped = clamp(ref[i], 0.0, 255.0);
        CHECK(std::abs(double(up.planes[0][i]) - clamped) <= 1.0);
    }
}

TEST_CASE("down-up consistency on smooth content") {
    ImageU8 img = synth_image(8, 64, 64);
    ImageU8 up = upscale_bicubic(img, 4);
    ImageU8 back = downscale(up, 4);
    double total = 0.0;
    for (int p = 0; p < 3; ++p)
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
            total += std::abs(double(back.planes[p][i]) - double(img.planes[p][i]));
    double mean_abs = total / (3.0 * img.pixel_count());
    CHECK(mean_abs <= 3.0);
}

TEST_CASE("random_resize_crop contract") {
    ImageU8 big = synth_image(99, 700, 560);

    SECTION("deterministic given seed") {
        auto a = random_resize_crop(big, 1234);
        auto b = random_resize_crop(big, 1234);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(*a == *b);
    }
    SECTION("always 256x256") {
        for (std::uint64_t s = 0; s < 8; ++s) {
            auto out = random_resize_crop(big, s);
            REQUIRE(out.has_value());
            CHECK(out->width == 256);
            CHECK(out->height == 256);
        }
    }
    SECTION("too-small sources are skipped, not fatal") {
        ImageU8 tiny = synth_image(1, 40, 40);
        CHECK_FALSE(random_resize_crop(tiny, 3).has_value());
        ImageU8 strip = synth_image(2, 600, 20);
        CHECK_FALSE(random_resize_crop(strip, 3).has_value());
    }
    SECTION("short side of the intermediate resize spans [500,1000]") {
        // statistical check on the sampler itself
        int lo = 1 << 30, hi = 0;
        for (std::uint64_t s = 0; s < 10000; ++s) {
            Rng rng(s);
            int side = rng.range(500, 1000);
            lo = std::min(lo, side);
            hi = std::max(hi, side);
            CHECK(side >= 500);
            CHECK(side <= 1000);
        }
        CHECK(lo < 520);
        CHECK(hi > 980);
    }
}
