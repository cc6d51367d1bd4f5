#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scarnav {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

// Wrap an angle in degrees into (-180, 180].
inline double wrap_deg(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d <= -180.0) d += 360.0;
    if (d > 180.0) d -= 360.0;
    return d;
}

// Deterministic RNG wrapper. All draws are implemented explicitly on top of
// mt19937_64 so results do not depend on the standard library's
// distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range [lo, hi]
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
        std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("index: empty range");
        return static_cast<std::size_t>(next_u64() % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream for a labelled component.
    Rng derive(std::uint64_t stream) const {
        std::uint64_t z = seed_mix_ ^ (stream + 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    void reseed(std::uint64_t seed) {
        eng_.seed(seed);
        seed_mix_ = seed;
    }

  private:
    std::mt19937_64 eng_;
    std::uint64_t seed_mix_ = 0;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 14695981039346656037ULL) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Little-endian float32 packing, used by the binary tensor/checkpoint formats.
inline void append_f32_le(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
    out.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((bits >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((bits >> 24) & 0xFF));
}

inline float read_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace scarnav
