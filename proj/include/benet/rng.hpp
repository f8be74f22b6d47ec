#pragma once

#include <cstdint>
#include <random>

#include "benet/tensor.hpp"

namespace benet {

// mt19937_64 with hand-rolled distributions. The engine is bit-exact across
// platforms per the standard; std:: distributions are not, so we avoid them.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  real uniform() {
    return static_cast<real>((eng_() >> 11) * (1.0 / 9007199254740992.0));
  }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  // Box-Muller
  real normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    real u1 = uniform();
    while (u1 <= real(1e-300)) u1 = uniform();
    const real u2 = uniform();
    const real r = std::sqrt(real(-2) * std::log(u1));
    const real theta = real(2.0 * 3.14159265358979323846) * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  real normal(real mu, real sigma) { return mu + sigma * normal(); }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(eng_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  real spare_ = 0;
};

}  // namespace benet
