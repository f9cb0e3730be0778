#pragma once

#include <cstdint>

namespace ltx {

/// SplitMix64 generator. The stream depends only on the seed, so datasets
/// and initializations reproduce bit-exactly across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next() noexcept
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Top 53 bits of the next output scaled by 2^-53, i.e. value / 2^64
    /// truncated to double precision. Always in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// floor(uniform() * n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept
    {
        const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept
{
    SplitMix64 mix(seed ^ (tag * 0xD1B54A32D192ED03ULL));
    return mix.next();
}

}  // namespace ltx
