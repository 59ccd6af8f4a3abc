#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kam {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;
using Cplx = std::complex<double>;

using IntVec = std::vector<Int>;
using Vec = std::vector<double>;
using CVec = std::vector<Cplx>;

inline constexpr double pi = 3.14159265358979323846;

inline double sqr(double x) { return x * x; }

inline double to_double(const Rat& q) {
  return static_cast<double>(boost::multiprecision::numerator(q)) /
         static_cast<double>(boost::multiprecision::denominator(q));
}

// --- deterministic counter-based randomness ---------------------------------
//
// Every Monte Carlo loop derives sample i of a run keyed by `seed` from
// mix(seed, i) alone, so results are independent of worker count and
// iteration order, and reruns are byte-identical.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(splitmix64(seed) ^ splitmix64(counter * 0xd1342543de82ef95ull + 1));
}

// Short keyed stream; cheap to construct per sample.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t counter) : state_(mix_key(seed, counter)) {}
  explicit Rng(std::uint64_t raw_state) : state_(raw_state) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // uniform in [0,1), 53-bit mantissa
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal (Box-Muller; deterministic, portable)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0x1.0p-60) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
  }

  // uniform in the closed euclidean ball of given radius
  Vec ball(int n, double radius) {
    Vec g(n);
    double norm2 = 0;
    for (auto& gi : g) {
      gi = normal();
      norm2 += gi * gi;
    }
    if (norm2 == 0) return Vec(n, 0.0);
    const double r = radius * std::pow(uniform(), 1.0 / n) / std::sqrt(norm2);
    for (auto& gi : g) gi *= r;
    return g;
  }

 private:
  std::uint64_t state_;
};

// volume of the unit euclidean ball in R^n
inline double unit_ball_volume(int n) {
  return std::pow(pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

[[noreturn]] inline void fail(const std::string& what) { throw std::runtime_error(what); }

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(what);
}

}  // namespace kam
