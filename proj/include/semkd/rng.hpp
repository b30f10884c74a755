#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace semkd {

// All randomness in the simulator flows through RngStream. The transforms
// below are written out by hand because the std::* distributions are
// implementation-defined; with a fixed engine sequence the whole run is
// reproducible bit for bit on any platform.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  // Stream keyed by up to three labels, decorrelated from the root seed and
  // from every other (a, b, c) combination.
  static RngStream derive(std::uint64_t root_seed, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = root_seed;
    std::uint64_t h = splitmix64(s);
    s ^= a * 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= b * 0xc2b2ae3d27d4eb4fULL;
    h ^= splitmix64(s);
    s ^= c * 0x165667b19e3779f9ULL;
    h ^= splitmix64(s);
    return RngStream(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two uniforms per call so the
  // stream position does not depend on call history.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Exponential with mean 1.
  double exponential() { return -std::log1p(-uniform()); }

  // Uniform index in [0, n). Multiply-high keeps the bias below 2^-64.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stream labels. Every consumer derives its stream from (seed, label, ...)
// so adding a consumer never shifts anybody else's draws.
namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kTeacher = 2;
inline constexpr std::uint64_t kShards = 3;
inline constexpr std::uint64_t kChannel = 4;    // (kChannel, device, slot)
inline constexpr std::uint64_t kStudent = 5;    // (kStudent, device, n_distilled)
inline constexpr std::uint64_t kLocalInit = 6;  // (kLocalInit, device)
inline constexpr std::uint64_t kLocalTrain = 7; // (kLocalTrain, device)
}  // namespace stream

}  // namespace semkd
