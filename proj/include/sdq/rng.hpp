#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sdq {

// Single deterministic RNG used everywhere. The engine is std::mt19937_64;
// every real-valued transform (uniform, normal, gumbel) is written out here
// instead of using std::*_distribution, whose output is
// implementation-defined and would break byte-identical reruns across
// standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0,1); both endpoints are unreachable, so
  // log(u) and log(1-u) are always finite.
  double uniform01() {
    const std::uint64_t x = next_u64() >> 11;  // top 53 bits
    return (static_cast<double>(x) + 0.5) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Standard Gumbel(0,1): -log(-log(u)).
  double gumbel() { return -std::log(-std::log(uniform01())); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // Independent child stream; reproducible function of (parent seed, salt).
  Rng derive(std::uint64_t salt) const { return Rng(splitmix64(seed_ ^ splitmix64(salt))); }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sdq
