#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstab/common.hpp"
#include "cstab/operator_core.hpp"

namespace cstab {
namespace gallery {

/// Where an expected outcome comes from: a published claim about the system,
/// an immediate identity, or an independent computation.
enum class Evidence { kClaimed, kTrivial, kDerived };

const char* to_string(Evidence e);

struct CheckOutcome {
  bool pass = false;
  std::string detail;
};

struct ExpectedOutcome {
  std::string analysis;     // e.g. "certify-quadratic"
  std::string expectation;  // human-readable statement
  Evidence evidence = Evidence::kDerived;
  std::function<CheckOutcome()> check;
};

/// Perturbation of ż = Az + vBz to ż = Az + n(z) + v(B + b)z.
struct Perturbation {
  std::optional<NonlinearOperator> additive;  // n
  std::optional<LinearOperator> control;      // b
  double additive_lipschitz = 0.0;
  double control_lipschitz = 0.0;
  double lambda = 0.0;  // gain the perturbation sizes refer to
};

struct GalleryEntry {
  std::string id;
  SystemModel model;
  double horizon_T = 1.0;
  std::vector<ExpectedOutcome> expected;
  std::string notes;
  nlohmann::json parameters;
  std::optional<Perturbation> perturbation;
  /// Unit states j = 1, 2, … along which compact control operators lose
  /// observability.
  std::vector<Vector> mode_witnesses;
};

struct GalleryOptions {
  int modes = 16;                  // wave modal truncation N
  double transport_c = 1.0;        // g on (3, ∞)
  double transport_h = 1.0 / 256;  // transport grid spacing
  double transport_length = 2.0;   // support [0, Y] of transport states
  int transport_modes = 32;        // compact transport control, J
  double transport_compact_h = 1.0 / 64;
  double omega_a = 0.25, omega_b = 0.75;  // localized damping region
  double perturbation_lambda = 0.1;
  double perturbation_fraction = 0.5;     // of the admissible p, q bounds
};

std::vector<std::string> ids();

/// Throws kUnknownId listing the valid ids.
GalleryEntry load(const std::string& id, const GalleryOptions& options = {});

nlohmann::json options_to_json(const GalleryOptions& options);
GalleryOptions options_from_json(const nlohmann::json& j);

/// Model definition file: dense matrices for plain linear entries, a
/// reference to the gallery constructor with its parameters otherwise.
nlohmann::json export_model(const GalleryEntry& entry, const GalleryOptions& options = {});

struct ExpectationResult {
  std::string entry;
  std::string analysis;
  std::string expectation;
  Evidence evidence;
  CheckOutcome outcome;
};

std::vector<ExpectationResult> verify(const GalleryEntry& entry);

nlohmann::json to_json(const ExpectationResult& r);

/// Unit energy state of wave mode j (1-based) in the interleaved
/// coordinates (√λ_j α_j, √λ_j β_j): displacement or velocity component.
Vector wave_mode_state(int modes, int j, bool velocity);

/// ess inf over (0, Y) of G_T(x) = ∫ₓ^{x+T} g for the transport weight.
double transport_weight_infimum(double T, double c, double length);

}  // namespace gallery
}  // namespace cstab
