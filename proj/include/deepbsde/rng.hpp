#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace deepbsde {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from (run seed, purpose label, index).
/// Training, validation and oracle batches use distinct labels so their
/// streams never overlap.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed ^ fnv1a64(label));
  return splitmix64(h ^ splitmix64(index ^ 0xd1b54a32d192ed03ULL));
}

/// Deterministic random stream. Gaussians come from Box-Muller on raw
/// mt19937_64 output, not std::normal_distribution, so equal seeds give
/// bit-identical samples independent of the standard library build.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RngStream make_stream(std::uint64_t seed, std::string_view label,
                             std::uint64_t index = 0) {
  return RngStream(derive_seed(seed, label, index));
}

}  // namespace deepbsde
