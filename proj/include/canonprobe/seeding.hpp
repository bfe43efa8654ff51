#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace canonprobe {

using Rng = std::mt19937_64;

/// Stable mixing of a base seed with a sequence of keys. Independent of the
/// standard library's std::hash, so derived streams are reproducible across
/// builds.
class SeedSequence {
 public:
  explicit SeedSequence(std::uint64_t base) : state_(mix(base ^ 0x9e3779b97f4a7c15ULL)) {}

  SeedSequence& add(std::uint64_t value);
  SeedSequence& add(std::string_view text);

  std::uint64_t value() const { return state_; }
  Rng rng() const { return Rng(state_); }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t state_;
};

/// Uniform double in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

/// Standard normal draw (Box-Muller; consumes two uniforms).
double standard_normal(Rng& rng);

}  // namespace canonprobe
