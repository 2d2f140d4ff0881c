#include "cstab/common.hpp"

namespace cstab {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kUnsupportedVariant: return "unsupported-variant";
    case ErrorCode::kNoAdmissibleGain: return "no-admissible-gain";
    case ErrorCode::kInfeasibleConstraint: return "infeasible-constraint";
    case ErrorCode::kStepUnderflow: return "step-underflow";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kUnknownId: return "unknown-id";
    case ErrorCode::kEvaluation: return "evaluation";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

void throw_error(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

Tolerances& tolerances() {
  static Tolerances instance;
  return instance;
}

Vector random_normal(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace cstab
