#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cstab/acceptance.hpp"
#include "cstab/gallery.hpp"
#include "cstab/report.hpp"

namespace {

using cstab::AnalysisStep;
using cstab::Scenario;

struct Common {
  std::string model;
  std::uint64_t seed = 0;
  std::string output_dir;
  bool json = false;
  std::optional<int> modes;
  std::optional<double> transport_c;
  std::optional<double> transport_h;
};

void add_model_options(CLI::App* cmd, Common& c) {
  cmd->add_option("model", c.model, "Gallery id or model definition file")->required();
  cmd->add_option("--seed", c.seed, "Seed for every sampled routine");
  cmd->add_option("--output-dir", c.output_dir, "Artifact directory (default $CSTAB_OUTPUT_DIR or cstab-out)");
  cmd->add_flag("--json", c.json, "Print the JSON report instead of the summary");
  cmd->add_option("--modes", c.modes, "Wave truncation order N");
  cmd->add_option("--transport-c", c.transport_c, "Transport control weight c");
  cmd->add_option("--transport-h", c.transport_h, "Transport grid spacing h");
}

nlohmann::json gallery_overrides(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (c.modes) j["modes"] = *c.modes;
  if (c.transport_c) j["transport_c"] = *c.transport_c;
  if (c.transport_h) j["transport_h"] = *c.transport_h;
  return j;
}

cstab::gallery::GalleryOptions gallery_options(const Common& c) {
  return cstab::gallery::options_from_json(gallery_overrides(c));
}

// Only keys whose values were given, so scenario-stage defaults still apply.
template <typename T>
void put(nlohmann::json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

int run(const Scenario& s, bool json, bool acceptance = false) {
  const cstab::ScenarioResult r = cstab::run_scenario(s, acceptance);
  if (json) {
    std::cout << r.report.dump(2) << "\n";
  } else {
    std::cout << r.summary;
  }
  if (r.exit_code == 1) std::cerr << "cstab: " << r.report.at("error").at("message").get<std::string>() << "\n";
  return r.exit_code;
}

Scenario scenario_for(const Common& c, std::vector<AnalysisStep> steps) {
  Scenario s;
  s.model_ref = c.model;
  s.gallery_options = gallery_overrides(c);
  s.seed = c.seed;
  s.output_dir = c.output_dir;
  s.analyses = std::move(steps);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constant-control stabilization of bilinear systems"};
  app.require_subcommand(1);

  Common c;
  std::optional<double> T, lambda, L, eta1, v_max, radius, gain, dt_out, r_tilde;
  std::string variant = "quadratic", mode = "uniform", law = "constant";
  double t_end = 10.0;
  int runs = 1, starts = 0, samples = 0;
  std::vector<double> probes;

  auto certify_params = [&] {
    nlohmann::json p = nlohmann::json::object();
    put(p, "T", T);
    p["variant"] = variant;
    if (starts > 0) p["starts"] = starts;
    return p;
  };
  auto synth_params = [&] {
    nlohmann::json p{{"mode", mode}};
    put(p, "lambda", lambda);
    put(p, "L", L);
    put(p, "eta1", eta1);
    put(p, "v_max", v_max);
    put(p, "radius", radius);
    return p;
  };
  auto add_certify_options = [&](CLI::App* cmd) {
    cmd->add_option("--T", T, "Observation horizon (default: the model's)");
    cmd->add_option("--variant", variant, "quadratic, l1, absolute or sqrt-form");
    cmd->add_option("--starts", starts, "Multistart count for sphere minimization");
  };
  auto add_synth_options = [&](CLI::App* cmd) {
    cmd->add_option("--mode", mode, "uniform or local");
    cmd->add_option("--lambda", lambda, "Constant gain");
    cmd->add_option("--L", L, "Lipschitz constant of B (default: model metadata)");
    cmd->add_option("--eta1", eta1, "Admissible-gain parameter");
    cmd->add_option("--v-max", v_max, "Upper bound on |v|");
    cmd->add_option("--radius", radius, "Ball radius for local synthesis");
  };

  CLI::App* certify = app.add_subcommand("certify", "Observability certificate delta(T)");
  add_model_options(certify, c);
  add_certify_options(certify);

  CLI::App* synthesize = app.add_subcommand("synthesize", "Certificate, then gain and decay envelope");
  add_model_options(synthesize, c);
  add_certify_options(synthesize);
  add_synth_options(synthesize);

  CLI::App* simulate = app.add_subcommand("simulate", "Closed-loop runs from seeded unit states");
  add_model_options(simulate, c);
  add_certify_options(simulate);
  add_synth_options(simulate);
  simulate->add_option("--law", law, "constant, quadratic, normalized or switching");
  simulate->add_option("--gain", gain, "Gain lambda or rho (constant law: synthesized if omitted)");
  simulate->add_option("--t-end", t_end, "Final time");
  simulate->add_option("--runs", runs, "Number of seeded initial states");
  simulate->add_option("--dt-out", dt_out, "Output grid spacing");

  CLI::App* analyze = app.add_subcommand("analyze-fd", "Finite-dimensional equivalence analysis");
  add_model_options(analyze, c);
  analyze->add_option("--samples", samples, "Sampled states per horizon");

  CLI::App* robustness = app.add_subcommand("robustness", "Perturbation margins and their validation");
  add_model_options(robustness, c);
  add_certify_options(robustness);
  add_synth_options(robustness);
  robustness->add_option("--r-tilde", r_tilde, "Dynamic perturbation size inside the radius");
  robustness->add_option("--probes", probes, "Probe magnitudes as fractions of each bound");

  CLI::App* gallery = app.add_subcommand("gallery", "List, show or export gallery models");
  gallery->require_subcommand(1);
  CLI::App* list = gallery->add_subcommand("list", "Gallery ids");
  std::string gallery_id, export_path;
  CLI::App* show = gallery->add_subcommand("show", "Entry parameters and expected outcomes");
  show->add_option("id", gallery_id)->required();
  CLI::App* exp = gallery->add_subcommand("export", "Model definition usable as a model file");
  exp->add_option("id", gallery_id)->required();
  exp->add_option("-o,--output", export_path, "Write to a file instead of stdout");
  for (CLI::App* cmd : {show, exp}) {
    cmd->add_option("--modes", c.modes, "Wave truncation order N");
    cmd->add_option("--transport-c", c.transport_c, "Transport control weight c");
    cmd->add_option("--transport-h", c.transport_h, "Transport grid spacing h");
  }
  bool verify = false;
  show->add_flag("--verify", verify, "Evaluate each expected outcome");

  CLI::App* run_cmd = app.add_subcommand("run", "Run a scenario file");
  std::string scenario_path;
  bool acceptance_mode = false;
  run_cmd->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run_cmd->add_option("--output-dir", c.output_dir, "Override the scenario's output directory");
  run_cmd->add_flag("--acceptance", acceptance_mode, "Check gallery expectations (exit 2 on mismatch)");
  run_cmd->add_flag("--json", c.json, "Print the JSON report instead of the summary");

  CLI::App* accept = app.add_subcommand("accept", "Run the acceptance suite");
  accept->add_option("--seed", c.seed, "Suite seed");
  accept->add_option("--output-dir", c.output_dir, "Where acceptance.json is written");

  CLI11_PARSE(app, argc, argv);

  try {
    if (certify->parsed()) {
      return run(scenario_for(c, {{"certify", certify_params()}}), c.json);
    }
    if (synthesize->parsed()) {
      return run(scenario_for(c, {{"certify", certify_params()}, {"synthesize", synth_params()}}), c.json);
    }
    if (simulate->parsed()) {
      nlohmann::json p{{"law", law}, {"t_end", t_end}, {"runs", runs}};
      put(p, "gain", gain);
      put(p, "dt_out", dt_out);
      std::vector<AnalysisStep> steps;
      const bool synthesized = law == "constant" && !gain;
      if (synthesized) {
        steps.push_back({"certify", certify_params()});
        steps.push_back({"synthesize", synth_params()});
      }
      steps.push_back({"simulate", p});
      if (synthesized) steps.push_back({"envelope-check", nlohmann::json::object()});
      return run(scenario_for(c, steps), c.json);
    }
    if (analyze->parsed()) {
      nlohmann::json p = nlohmann::json::object();
      if (samples > 0) p["samples"] = samples;
      return run(scenario_for(c, {{"analyze-fd", p}}), c.json);
    }
    if (robustness->parsed()) {
      nlohmann::json p = nlohmann::json::object();
      put(p, "r_tilde", r_tilde);
      if (!probes.empty()) p["probes"] = probes;
      return run(scenario_for(c, {{"certify", certify_params()},
                                  {"synthesize", synth_params()},
                                  {"robustness", p}}),
                 c.json);
    }
    if (list->parsed()) {
      for (const std::string& id : cstab::gallery::ids()) std::cout << id << "\n";
      return 0;
    }
    if (show->parsed()) {
      const cstab::gallery::GalleryEntry e = cstab::gallery::load(gallery_id, gallery_options(c));
      nlohmann::json expected = nlohmann::json::array();
      for (const auto& o : e.expected) {
        expected.push_back({{"analysis", o.analysis},
                            {"expectation", o.expectation},
                            {"evidence", cstab::gallery::to_string(o.evidence)}});
      }
      nlohmann::json j{{"id", e.id},
                       {"dimension", e.model.size()},
                       {"horizon_T", e.horizon_T},
                       {"notes", e.notes},
                       {"parameters", e.parameters},
                       {"expected", expected}};
      if (verify) {
        nlohmann::json results = nlohmann::json::array();
        int failed = 0;
        for (const auto& r : cstab::gallery::verify(e)) {
          if (!r.outcome.pass) ++failed;
          results.push_back(cstab::gallery::to_json(r));
        }
        j["verification"] = results;
        std::cout << j.dump(2) << "\n";
        return failed == 0 ? 0 : 2;
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (exp->parsed()) {
      const std::string text =
          cstab::gallery::export_model(cstab::gallery::load(gallery_id, gallery_options(c))).dump(2) + "\n";
      if (export_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(export_path);
        out << text;
        if (!out) throw cstab::Error(cstab::ErrorCode::kPrecondition, "cannot write '" + export_path + "'");
      }
      return 0;
    }
    if (run_cmd->parsed()) {
      Scenario s = cstab::load_scenario(scenario_path);
      if (!c.output_dir.empty()) s.output_dir = c.output_dir;
      return run(s, c.json, acceptance_mode);
    }
    if (accept->parsed()) {
      nlohmann::json report;
      int failed = 0;
      for (const cstab::CriterionResult& r : cstab::run_full_acceptance(c.seed, &report)) {
        std::cout << cstab::format_line(r) << std::endl;
        if (!r.pass) ++failed;
      }
      cstab::write_text_file(c.output_dir.empty() ? cstab::default_output_dir() : c.output_dir,
                             "acceptance.json", report.dump(2) + "\n");
      return failed == 0 ? 0 : 2;
    }
  } catch (const cstab::Error& e) {
    std::cerr << "cstab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
