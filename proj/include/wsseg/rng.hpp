#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace wsseg {

/// Deterministic random stream derived from a root seed and a stream name.
///
/// Every randomized component of the pipeline (weak-label sampling, potential
/// initialization, augmentation, parameter init) pulls from its own named
/// stream, so enabling or disabling one component never shifts the draws seen
/// by another.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::string_view name)
      : engine_(derive_seed(root_seed, name)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1), both endpoints excluded.
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be nonzero.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; one spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  static std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    // FNV-1a over the name, then splitmix64 finalization mixed with the root.
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    std::uint64_t z = root + 0x9e3779b97f4a7c15ULL + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wsseg
