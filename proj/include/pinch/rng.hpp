#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pinch {

// Deterministic splitmix64 generator with hand-rolled distributions.
// std:: distributions are implementation-defined, which would break
// byte-for-byte reproducibility of runs across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // (0, 1), safe to take log of.
  double open_uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller, standard normal.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = open_uniform();
    double v = open_uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 2.0 * std::numbers::pi * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Standard Gumbel noise -log(-log U), U in (0,1).
  double gumbel() { return -std::log(-std::log(open_uniform())); }

  // Integer in [lo, hi], inclusive. Modulo bias is irrelevant at our ranges.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Independent child stream; distinct salts give distinct streams.
  Rng fork(uint64_t salt) const {
    Rng r(state_ ^ (0xd1342543de82ef95ULL * (salt + 0x632be59bd9b4e019ULL)));
    r.next();
    return r;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pinch
