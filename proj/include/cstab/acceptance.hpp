#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace cstab {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;  // wall time; reported on the console only
};

struct AcceptanceOptions {
  std::uint64_t seed = 0;
  std::vector<int> only;  // empty: criteria 1..9 (10 compares two suite runs)
};

/// Runs criteria 1..9 (or the selected subset).
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options = {});

/// Deterministic report: verdicts and details, no timings.
nlohmann::json acceptance_report(const std::vector<CriterionResult>& results, std::uint64_t seed);

/// Full suite: criteria 1..9, then criterion 10 from a second run whose
/// report must be byte-identical.
std::vector<CriterionResult> run_full_acceptance(std::uint64_t seed, nlohmann::json* report);

/// "PASS  criterion 3: … -- detail (1.2 s)".
std::string format_line(const CriterionResult& r);

}  // namespace cstab
