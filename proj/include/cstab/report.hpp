#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstab/gain.hpp"
#include "cstab/gallery.hpp"
#include "cstab/operator_core.hpp"
#include "cstab/trajectory.hpp"

namespace cstab {

/// Parses JSON text; kParse errors carry "origin:line:column".
nlohmann::json parse_json(const std::string& text, const std::string& origin);
nlohmann::json read_json_file(const std::string& path);

/// Row-major matrix literal [[...], ...]; kParse on ragged or non-numeric rows.
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json matrix_to_json(const Matrix& m);

struct ResolvedModel {
  std::string ref;
  SystemModel model;
  double horizon_T = 1.0;
  std::optional<gallery::GalleryEntry> entry;  // gallery-backed models
  gallery::GalleryOptions options;
};

/// Model definition (dense literals or a gallery reference) to a model.
ResolvedModel model_from_json(const nlohmann::json& j, const std::string& origin);

/// A gallery id, or a path to a model definition file.
ResolvedModel resolve_model(const std::string& ref,
                            const gallery::GalleryOptions& options = {});

struct AnalysisStep {
  std::string name;  // certify, synthesize, simulate, envelope-check, analyze-fd, robustness
  nlohmann::json params = nlohmann::json::object();
};

struct Scenario {
  std::string model_ref;
  nlohmann::json gallery_options = nlohmann::json::object();
  std::vector<AnalysisStep> analyses;
  std::string output_dir;  // empty: default_output_dir()
  std::uint64_t seed = 0;
};

Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>");
Scenario load_scenario(const std::string& path);

/// $CSTAB_OUTPUT_DIR when set and nonempty, "cstab-out" otherwise.
std::string default_output_dir();

struct ScenarioResult {
  int exit_code = 0;  // 0 completed, 1 error, 2 expected-outcome mismatch (acceptance mode)
  nlohmann::json report;
  std::string summary;
  std::vector<std::string> artifacts;  // files written, relative to the output dir
};

/// Runs the analyses in order, feeding certificate → envelope → runs →
/// robustness. Writes report.json, per-run CSVs and summary.txt when
/// `write_files`. Errors are recorded in the report and give exit code 1.
ScenarioResult run_scenario(const Scenario& scenario, bool acceptance_mode = false,
                            bool write_files = true);

/// Wide CSV: t, one norm column per run, optional envelope column
/// M e^{−σt}‖z₀‖ (from the first run). Runs are resampled onto the first
/// run's grid. kPrecondition on an empty set; `warning` receives a note
/// when model ids differ across runs.
void emit_plot_data(const std::vector<Trajectory>& runs, const std::optional<GainEnvelope>& envelope,
                    std::ostream& out, std::string* warning = nullptr);

/// Human-readable rendering of a scenario report.
std::string render_summary(const nlohmann::json& report);

/// Writes `text` to dir/name, creating dir. kPrecondition on I/O failure.
void write_text_file(const std::string& dir, const std::string& name, const std::string& text);

}  // namespace cstab
