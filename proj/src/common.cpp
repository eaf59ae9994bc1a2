#include "cm/common.hpp"

#include <cmath>

namespace cm {

double Rng::normal() {
  // Draw u1 away from zero so the log is finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection-free would bias for huge n; n here is a container size.
  return next_u64() % n;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  Rng r(a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2)));
  r.next_u64();
  return r.next_u64();
}

}  // namespace cm
