#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Single pseudo-random source type threaded through every sampled routine.
using Rng = std::mt19937_64;

enum class ErrorCode {
  kDimensionMismatch,
  kPrecondition,
  kUnsupportedVariant,
  kNoAdmissibleGain,
  kInfeasibleConstraint,
  kStepUnderflow,
  kOverflow,
  kParse,
  kUnknownId,
  kEvaluation,
  kInternal,
};

const char* to_string(ErrorCode code);

/// Structured error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void throw_error(ErrorCode code, const std::string& message);

/// Global numeric tolerances. Defaults follow the toolkit conventions; tests
/// and the CLI may override them before running analyses.
struct Tolerances {
  double algebraic = 1e-10;  // exact identities (symmetry, adjoints, brackets)
  double sampled = 1e-6;     // sampled estimates and envelope slack
};

Tolerances& tolerances();

/// Standard normal vector drawn from `rng`.
Vector random_normal(Index n, Rng& rng);

/// Relative-or-absolute closeness used throughout the tests.
inline bool near(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace cstab
