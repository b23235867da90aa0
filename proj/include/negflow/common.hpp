#ifndef NEGFLOW_COMMON_HPP
#define NEGFLOW_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace negflow {

/// Bad or infeasible configuration (sizes, ranges, hyperparameters).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or truncated file content.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or other numeric breakdown, with context.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input data violates a documented invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <typename... Args>
std::string format_msg(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

constexpr double kLn2 = 0.6931471805599453094;
constexpr double kLn2Pi = 1.8378770664093454836;
constexpr double kPi = 3.1415926535897932385;

}  // namespace negflow

#endif  // NEGFLOW_COMMON_HPP
