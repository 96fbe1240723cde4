#pragma once

#include <cstdint>

namespace nmneval {

// splitmix64 (Steele et al.); public-domain reference constants.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Chainable counter hash: hash(seed), hash(seed, a), hash(seed, a, b), ...
// Every random draw in the library derives from this, so results are
// bit-identical across platforms and independent of evaluation order.
inline std::uint64_t hash_u64(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t hash_u64(std::uint64_t seed, std::uint64_t next, Rest... rest) {
    return hash_u64(splitmix64(seed ^ (next + 0x9e3779b97f4a7c15ULL)), rest...);
}

inline double u64_to_unit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Small sequential generator; state advances via splitmix64.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x5bf0f0d2c3a5e1b7ULL)) {}

    std::uint64_t next_u64() {
        state_ = splitmix64(state_);
        return state_;
    }

    /// Uniform in [0, 1).
    double uniform() { return u64_to_unit(next_u64()); }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    long uniform_int(long lo, long hi) {
        if (hi <= lo) return lo;
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<long>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Child generator with an independent stream.
    Rng fork(std::uint64_t stream) const { return Rng(hash_u64(state_, stream)); }

  private:
    std::uint64_t state_;
};

}  // namespace nmneval
