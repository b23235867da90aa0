#ifndef NEGFLOW_RNG_HPP
#define NEGFLOW_RNG_HPP

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "negflow/common.hpp"

namespace negflow {

/**
 * Deterministic random source. Wraps mt19937_64 but implements the
 * uniform/normal/integer draws by hand so that streams are bit-identical
 * across standard libraries (std::*_distribution is implementation-defined).
 */
class Rng {
 public:
  Rng() : engine_(0x9e3779b97f4a7c15ull) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0,1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo,hi] inclusive, unbiased via rejection.
  std::int64_t randint(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ConfigError(format_msg("randint: empty range [", lo, ",", hi, "]"));
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());  // full 64-bit range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  /// Standard normal via Box-Muller (one value per call, no caching so the
  /// stream position is a pure function of the call count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Derives an independent child stream; advancing the child does not
  /// advance this generator.
  Rng fork(std::uint64_t salt) {
    const std::uint64_t s = engine_() ^ (salt * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
    return Rng(s);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(randint(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw FormatError("Rng::deserialize: bad engine state");
  }

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace negflow

#endif  // NEGFLOW_RNG_HPP
