#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace uuconv {

// Deterministic random source. The mt19937_64 engine itself is fully
// specified by the standard; the value mappings below avoid the standard
// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller. No cached spare, so the stream state
  // is exactly the engine state (keeps serialization trivial).
  double normal();

  // Normal(0, stddev) resampled until within clip_sigmas standard deviations.
  double truncated_normal(double stddev, double clip_sigmas = 2.0);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

  // splitmix64-based stream derivation, for per-item seeds that do not
  // depend on iteration schedule.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c);
  static std::uint64_t hash_string(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace uuconv
