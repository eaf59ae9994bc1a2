#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace cm {

using Index = Eigen::Index;

// Flat value storage used throughout the compute core.
using Array = Eigen::ArrayXd;

// Counter-friendly 64-bit generator (splitmix64). The standard library's
// distributions are implementation-defined, so seeded runs would not be
// reproducible across toolchains; this one is fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (deterministic, no cached spare).
  double normal();

  // Integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

// Mixes two seeds into one stream seed, e.g. (run seed, epoch).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Fisher-Yates with the deterministic generator above.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

}  // namespace cm
