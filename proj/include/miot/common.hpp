#pragma once

// Shared error types, deterministic RNG, and small numeric helpers.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace miot {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data (bad PPM header, truncated payload, ...).
struct parse_error : error {
    parse_error(const std::string& msg, std::size_t byte_offset)
        : error(msg + " (at byte " + std::to_string(byte_offset) + ")"), offset(byte_offset) {}
    std::size_t offset;
};

// Corrupt compressed bitstream or weights file.
struct decode_error : error {
    using error::error;
};

// Weights file incompatible with the requested model configuration.
struct model_error : error {
    using error::error;
};

// Caller broke a documented precondition.
struct contract_error : error {
    using error::error;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw contract_error(what);
}

template <typename T>
inline T clamp(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// Round half away from zero, the single rounding rule used across the codec.
inline int iround(double v) {
    return static_cast<int>(v < 0.0 ? std::ceil(v - 0.5) : std::floor(v + 0.5));
}

inline std::uint8_t round_u8(double v) {
    int r = iround(v);
    return static_cast<std::uint8_t>(clamp(r, 0, 255));
}

// splitmix64: tiny, seedable, identical on every platform. All randomized
// behavior in the library (crops, init, batch sampling) goes through this so
// runs are reproducible from a single --seed.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint32_t below(std::uint32_t n) {
        return n ? static_cast<std::uint32_t>(next() % n) : 0u;
    }

    // uniform integer in [lo, hi] inclusive
    int range(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint32_t>(hi - lo + 1)));
    }

    // standard normal via Box-Muller (cached second value)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2 = 0.0;
        do {
            u1 = unit();
        } while (u1 <= 0.0);
        u2 = unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace miot
