#include "canonprobe/seeding.hpp"

#include <cmath>
#include <numbers>

namespace canonprobe {

std::uint64_t SeedSequence::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

SeedSequence& SeedSequence::add(std::uint64_t value) {
  state_ = mix(state_ ^ mix(value));
  return *this;
}

SeedSequence& SeedSequence::add(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return add(h ^ text.size());
}

double uniform(Rng& rng, double lo, double hi) {
  // 53 random mantissa bits; never returns hi.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double standard_normal(Rng& rng) {
  double u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace canonprobe
