#include "cstab/report.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "cstab/certifier.hpp"
#include "cstab/finite_dim.hpp"
#include "cstab/robustness.hpp"
#include "cstab/simulator.hpp"

namespace cstab {

namespace {

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return std::to_string(line) + ":" + std::to_string(column);
}

const nlohmann::json& require_key(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw_error(ErrorCode::kParse, where + ": missing required key '" + key + "'");
  }
  return j.at(key);
}

template <typename T>
T param(const nlohmann::json& params, const char* key, T fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw_error(ErrorCode::kParse, std::string("parameter '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_param(const nlohmann::json& params, const char* key) {
  if (!params.contains(key) || params.at(key).is_null()) return std::nullopt;
  return param<T>(params, key, T{});
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!allowed.count(k)) {
      std::ostringstream os;
      os << where << ": unknown key '" << k << "' (allowed:";
      for (const auto& a : allowed) os << " " << a;
      os << ")";
      throw_error(ErrorCode::kParse, os.str());
    }
  }
}

const std::set<std::string>& analysis_names() {
  static const std::set<std::string> names{"certify",    "synthesize", "simulate",
                                           "envelope-check", "analyze-fd", "robustness"};
  return names;
}

nlohmann::json model_json(const ResolvedModel& r) {
  const SystemModel& m = r.model;
  return {{"ref", r.ref},
          {"id", m.id},
          {"dimension", m.dimension.label()},
          {"basis", to_string(m.basis)},
          {"semigroup_class", to_string(m.semigroup_class)},
          {"linear_B", m.B.is_linear()}};
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(8) << x;
  return os.str();
}

// Scenario execution state threaded through the stages.
struct Pipeline {
  const Scenario& scenario;
  ResolvedModel resolved;
  std::optional<Certificate> certificate;
  std::string certificate_id;
  std::optional<GainEnvelope> envelope;
  std::string envelope_id;
  std::vector<Trajectory> runs;
  std::string runs_id;
  int mismatches = 0;
  std::vector<std::pair<std::string, std::string>> files;  // name → contents
};

nlohmann::json stage_certify(Pipeline& p, const nlohmann::json& params) {
  const SystemModel& m = p.resolved.model;
  const double T = param(params, "T", p.resolved.horizon_T);
  const Variant variant = variant_from_string(param<std::string>(params, "variant", "quadratic"));
  Certificate c;
  if (variant == Variant::kQuadratic && m.B.is_linear()) {
    c = certify_quadratic(m, T);
  } else if (variant == Variant::kSqrtForm) {
    c = sqrt_form_certificate(m, T);
  } else {
    MultistartOptions opts;
    opts.starts = param(params, "starts", opts.starts);
    opts.seed = p.scenario.seed;
    c = estimate_nonquadratic(m, T, variant, opts);
  }
  p.certificate = c;
  return to_json(c);
}

nlohmann::json stage_synthesize(Pipeline& p, const nlohmann::json& params) {
  if (!p.certificate) throw_error(ErrorCode::kPrecondition, "synthesize needs a preceding certify stage");
  const SystemModel& m = p.resolved.model;
  const std::string mode = param<std::string>(params, "mode", "uniform");
  nlohmann::json j;
  Rng rng(p.scenario.seed);
  const double dissipation = sampled_dissipation(m, 200, rng);
  j["hypotheses"] = {{"semigroup_class", to_string(m.semigroup_class)},
                     {"max_sampled_dissipation", dissipation},
                     {"contraction", dissipation <= tolerances().sampled}};
  if (mode == "uniform") {
    UniformOptions opts;
    opts.lambda = optional_param<double>(params, "lambda");
    opts.eta1 = optional_param<double>(params, "eta1");
    opts.v_max = optional_param<double>(params, "v_max");
    std::optional<double> L = optional_param<double>(params, "L");
    if (!L) L = m.B.as_nonlinear().lipschitz_global;
    if (!L) throw_error(ErrorCode::kPrecondition, "uniform synthesis needs a global Lipschitz constant");
    p.envelope = synthesize_uniform(*p.certificate, *L, opts);
  } else if (mode == "local") {
    const double R = param(params, "radius", 1.0);
    std::optional<double> L = optional_param<double>(params, "L");
    if (!L) L = m.B.lipschitz(R);
    if (!L) throw_error(ErrorCode::kPrecondition, "local synthesis needs L_R");
    p.envelope = synthesize_local(*p.certificate, *L, R, m.B.positive(),
                                  optional_param<double>(params, "lambda"));
  } else {
    throw_error(ErrorCode::kParse, "synthesize mode must be 'uniform' or 'local'");
  }
  p.envelope->certificate_model = m.id;
  j["envelope"] = to_json(*p.envelope);
  return j;
}

nlohmann::json stage_simulate(Pipeline& p, const nlohmann::json& params, const std::string& id) {
  const SystemModel& m = p.resolved.model;
  const LawKind kind = law_kind_from_string(param<std::string>(params, "law", "constant"));
  std::optional<double> gain = optional_param<double>(params, "gain");
  if (!gain && kind == LawKind::kConstant && p.envelope) gain = p.envelope->lambda;
  if (!gain && kind == LawKind::kQuadratic) gain = 1.0;
  if (!gain) throw_error(ErrorCode::kPrecondition, "simulate needs a gain or a preceding synthesize stage");
  const ControlLaw law{kind, *gain};
  const double t_end = param(params, "t_end", 10.0);
  const int count = param(params, "runs", 1);
  if (count < 1) throw_error(ErrorCode::kPrecondition, "simulate needs runs >= 1");
  SimulationOptions opts;
  opts.dt_out = param(params, "dt_out", 0.0);

  Rng rng(p.scenario.seed);
  p.runs.clear();
  p.runs_id = id;
  nlohmann::json runs = nlohmann::json::array();
  const bool contraction = m.semigroup_class != SemigroupClass::kUnknown;
  for (int k = 0; k < count; ++k) {
    Vector z0 = random_normal(m.size(), rng);
    z0 /= m.norm(z0);
    Trajectory traj = simulate(m, law, z0, t_end, opts);
    nlohmann::json r = summary_json(traj);
    r["fit"] = to_json(fit_decay(traj));
    if (law.kind == LawKind::kConstant && contraction) {
      const DissipationAudit a = dissipation_audit(traj);
      r["dissipation_audit"] = {{"pass", a.pass}, {"max_violation", a.max_violation}};
    }
    const std::string name = id + "_run" + std::to_string(k) + ".csv";
    std::ostringstream csv;
    write_csv(traj, csv);
    p.files.emplace_back(name, csv.str());
    r["csv"] = name;
    runs.push_back(r);
    p.runs.push_back(std::move(traj));
  }
  std::ostringstream plot;
  std::string warning;
  emit_plot_data(p.runs, law.kind == LawKind::kConstant ? p.envelope : std::nullopt, plot, &warning);
  p.files.emplace_back(id + "_plot.csv", plot.str());
  nlohmann::json j{{"law", law.label()}, {"t_end", t_end}, {"runs", runs}, {"plot", id + "_plot.csv"}};
  if (p.envelope && law.kind == LawKind::kConstant) j["envelope"] = p.envelope_id;
  return j;
}

nlohmann::json stage_envelope_check(Pipeline& p) {
  if (!p.envelope) throw_error(ErrorCode::kPrecondition, "envelope-check needs a synthesize stage");
  if (p.runs.empty()) throw_error(ErrorCode::kPrecondition, "envelope-check needs a simulate stage");
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const Trajectory& t : p.runs) {
    const EnvelopeReport r = envelope_check(t, *p.envelope);
    all = all && r.pass;
    checks.push_back(to_json(r));
  }
  if (!all) ++p.mismatches;
  return {{"pass", all}, {"checks", checks}, {"envelope", p.envelope_id}, {"runs", p.runs_id}};
}

nlohmann::json stage_analyze_fd(Pipeline& p, const nlohmann::json& params) {
  FiniteDimOptions opts;
  opts.seed = p.scenario.seed;
  opts.samples = param(params, "samples", opts.samples);
  opts.T_grid = param(params, "T_grid", opts.T_grid);
  return analyze_finite_dim(p.resolved.model, opts);
}

nlohmann::json stage_robustness(Pipeline& p, const nlohmann::json& params) {
  if (!p.envelope) throw_error(ErrorCode::kPrecondition, "robustness needs a synthesize stage");
  RobustnessOptions opts;
  opts.seed = p.scenario.seed;
  opts.r_tilde = optional_param<double>(params, "r_tilde");
  opts.probes = param(params, "probes", opts.probes);
  if (params.contains("empirical")) {
    const auto& e = params.at("empirical");
    opts.empirical = EmpiricalDecay{require_key(e, "sigma", "empirical").get<double>(),
                                    require_key(e, "M", "empirical").get<double>()};
  }
  const double L_B = param(params, "L_B", p.envelope->lipschitz);
  nlohmann::json j = to_json(analyze_robustness(p.resolved.model, *p.envelope, L_B, opts));
  j["envelope"] = p.envelope_id;
  return j;
}

}  // namespace

nlohmann::json parse_json(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::string message = e.what();
    const auto pos = message.find("parse error");
    if (pos != std::string::npos) message = message.substr(pos);
    throw_error(ErrorCode::kParse, origin + ":" + line_column(text, e.byte) + ": " + message);
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorCode::kPrecondition, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw_error(ErrorCode::kParse, what + ": expected a row-major matrix literal [[...], ...]");
  }
  const std::size_t rows = j.size(), cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      std::ostringstream os;
      os << what << ": row " << i << " has " << (j[i].is_array() ? j[i].size() : 0)
         << " entries, expected " << cols;
      throw_error(ErrorCode::kParse, os.str());
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) {
        std::ostringstream os;
        os << what << ": entry (" << i << ", " << k << ") is not a number";
        throw_error(ErrorCode::kParse, os.str());
      }
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

ResolvedModel model_from_json(const nlohmann::json& j, const std::string& origin) {
  if (!j.is_object()) throw_error(ErrorCode::kParse, origin + ": model definition must be an object");
  ResolvedModel r;
  r.ref = origin;
  if (j.contains("gallery")) {
    check_keys(j, {"format", "id", "gallery", "options", "horizon_T"}, origin);
    r.options = gallery::options_from_json(j.value("options", nlohmann::json::object()));
    r.entry = gallery::load(j.at("gallery").get<std::string>(), r.options);
    r.model = r.entry->model;
    r.horizon_T = r.entry->horizon_T;
    return r;
  }
  check_keys(j, {"format", "id", "A", "B", "P", "semigroup_class", "horizon_T"}, origin);
  const Matrix A = matrix_from_json(require_key(j, "A", origin), origin + ": A");
  const Matrix B = matrix_from_json(require_key(j, "B", origin), origin + ": B");
  std::optional<Matrix> P;
  if (j.contains("P")) P = matrix_from_json(j.at("P"), origin + ": P");
  const SemigroupClass cls =
      semigroup_class_from_string(j.value("semigroup_class", std::string("unknown")));
  r.model = make_dense_model(j.value("id", std::string("model")), A, B, P, cls);
  r.horizon_T = j.value("horizon_T", 1.0);
  return r;
}

ResolvedModel resolve_model(const std::string& ref, const gallery::GalleryOptions& options) {
  const std::vector<std::string> ids = gallery::ids();
  if (std::find(ids.begin(), ids.end(), ref) != ids.end()) {
    ResolvedModel r;
    r.ref = ref;
    r.options = options;
    r.entry = gallery::load(ref, options);
    r.model = r.entry->model;
    r.horizon_T = r.entry->horizon_T;
    return r;
  }
  if (std::filesystem::exists(ref)) return model_from_json(read_json_file(ref), ref);
  // Neither: report against the gallery so the valid ids are listed.
  gallery::load(ref, options);
  throw_error(ErrorCode::kUnknownId, "unknown model '" + ref + "'");
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  const nlohmann::json j = parse_json(text, origin);
  if (!j.is_object()) throw_error(ErrorCode::kParse, origin + ": scenario must be a JSON object");
  check_keys(j, {"model", "gallery", "analyses", "output_dir", "seed"}, origin);
  Scenario s;
  s.model_ref = require_key(j, "model", origin).get<std::string>();
  s.gallery_options = j.value("gallery", nlohmann::json::object());
  s.output_dir = j.value("output_dir", std::string());
  s.seed = j.value("seed", std::uint64_t{0});
  const nlohmann::json& list = require_key(j, "analyses", origin);
  if (!list.is_array()) throw_error(ErrorCode::kParse, origin + ": 'analyses' must be a list");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const nlohmann::json& a = list[i];
    const std::string where = origin + ": analyses[" + std::to_string(i) + "]";
    AnalysisStep step;
    if (a.is_string()) {
      step.name = a.get<std::string>();
    } else if (a.is_object() && a.contains("name")) {
      step.name = a.at("name").get<std::string>();
      step.params = a;
      step.params.erase("name");
    } else if (a.is_object() && a.size() == 1) {
      step.name = a.begin().key();
      step.params = a.begin().value();
      if (!step.params.is_object()) throw_error(ErrorCode::kParse, where + ": parameters must be an object");
    } else {
      throw_error(ErrorCode::kParse, where + ": expected a name or {name: {params}}");
    }
    if (!analysis_names().count(step.name)) {
      throw_error(ErrorCode::kParse, where + ": unknown analysis '" + step.name +
                                         "' (expected certify, synthesize, simulate, "
                                         "envelope-check, analyze-fd, robustness)");
    }
    s.analyses.push_back(std::move(step));
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorCode::kPrecondition, "cannot open scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

std::string default_output_dir() {
  const char* env = std::getenv("CSTAB_OUTPUT_DIR");
  return env && *env ? std::string(env) : std::string("cstab-out");
}

void write_text_file(const std::string& dir, const std::string& name, const std::string& text) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw_error(ErrorCode::kPrecondition, "cannot create output directory '" + dir + "'");
  const std::filesystem::path path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw_error(ErrorCode::kPrecondition, "cannot write '" + path.string() + "'");
}

ScenarioResult run_scenario(const Scenario& scenario, bool acceptance_mode, bool write_files) {
  ScenarioResult result;
  nlohmann::json report;
  nlohmann::json names = nlohmann::json::array();
  for (const AnalysisStep& a : scenario.analyses) names.push_back(a.name);
  report["scenario"] = {{"model", scenario.model_ref},
                        {"seed", scenario.seed},
                        {"analyses", names},
                        {"acceptance_mode", acceptance_mode}};
  Pipeline p{scenario, {}, {}, {}, {}, {}, {}, {}, 0, {}};
  nlohmann::json stages = nlohmann::json::array();
  try {
    p.resolved = resolve_model(scenario.model_ref, gallery::options_from_json(scenario.gallery_options));
    report["model"] = model_json(p.resolved);
    for (std::size_t i = 0; i < scenario.analyses.size(); ++i) {
      const AnalysisStep& step = scenario.analyses[i];
      const std::string id = step.name + "#" + std::to_string(i + 1);
      nlohmann::json out;
      try {
        if (step.name == "certify") {
          out = stage_certify(p, step.params);
          p.certificate_id = id;
        } else if (step.name == "synthesize") {
          out = stage_synthesize(p, step.params);
          out["certificate"] = p.certificate_id;
          p.envelope_id = id;
        } else if (step.name == "simulate") {
          out = stage_simulate(p, step.params, "stage" + std::to_string(i + 1));
        } else if (step.name == "envelope-check") {
          out = stage_envelope_check(p);
        } else if (step.name == "analyze-fd") {
          out = stage_analyze_fd(p, step.params);
        } else {
          out = stage_robustness(p, step.params);
        }
      } catch (const Error& e) {
        throw Error(e.code(), id + ": " + e.what());
      }
      stages.push_back({{"id", id}, {"analysis", step.name}, {"result", out}});
    }
    if (acceptance_mode && p.resolved.entry) {
      nlohmann::json exp = nlohmann::json::array();
      for (const gallery::ExpectationResult& r : gallery::verify(*p.resolved.entry)) {
        if (!r.outcome.pass) ++p.mismatches;
        exp.push_back(gallery::to_json(r));
      }
      report["expectations"] = exp;
    }
    report["stages"] = stages;
    report["mismatches"] = p.mismatches;
    report["status"] = "ok";
    result.exit_code = acceptance_mode && p.mismatches > 0 ? 2 : 0;
  } catch (const Error& e) {
    report["stages"] = stages;
    report["status"] = "error";
    report["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    result.exit_code = 1;
  }
  result.report = report;
  result.summary = render_summary(report);
  const std::string dir = scenario.output_dir.empty() ? default_output_dir() : scenario.output_dir;
  p.files.emplace_back("report.json", report.dump(2) + "\n");
  p.files.emplace_back("summary.txt", result.summary);
  for (const auto& [name, text] : p.files) {
    result.artifacts.push_back(name);
    if (write_files) write_text_file(dir, name, text);
  }
  return result;
}

void emit_plot_data(const std::vector<Trajectory>& runs, const std::optional<GainEnvelope>& envelope,
                    std::ostream& out, std::string* warning) {
  if (runs.empty()) throw_error(ErrorCode::kPrecondition, "plot data needs at least one trajectory");
  for (const Trajectory& t : runs) {
    if (t.times.empty()) throw_error(ErrorCode::kPrecondition, "plot data got an empty trajectory");
  }
  if (warning) {
    warning->clear();
    for (const Trajectory& t : runs) {
      if (t.model_id != runs.front().model_id) {
        *warning = "trajectories come from different models ('" + runs.front().model_id + "', '" +
                   t.model_id + "')";
        break;
      }
    }
  }
  const Trajectory& base = runs.front();
  out << "t";
  for (std::size_t k = 0; k < runs.size(); ++k) out << ",norm_" << k;
  if (envelope) out << ",envelope";
  out << '\n' << std::setprecision(17);
  std::vector<std::size_t> cursor(runs.size(), 0);
  for (std::size_t i = 0; i < base.times.size(); ++i) {
    const double t = base.times[i];
    out << t;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const Trajectory& r = runs[k];
      out << ',';
      if (r.times.size() > i && r.times[i] == t) {
        out << r.norms[i];
        continue;
      }
      // Linear interpolation onto the first run's grid; blank outside.
      std::size_t& c = cursor[k];
      while (c + 1 < r.times.size() && r.times[c + 1] < t) ++c;
      if (t < r.times.front() || t > r.times.back()) continue;
      if (c + 1 >= r.times.size()) {
        out << r.norms.back();
        continue;
      }
      const double w = (t - r.times[c]) / (r.times[c + 1] - r.times[c]);
      out << (1 - w) * r.norms[c] + w * r.norms[c + 1];
    }
    if (envelope) out << ',' << envelope->M_env * std::exp(-envelope->sigma * t) * base.initial_norm();
    out << '\n';
  }
}

std::string render_summary(const nlohmann::json& report) {
  std::ostringstream os;
  const auto& sc = report.at("scenario");
  os << "scenario: model " << sc.at("model").get<std::string>() << ", seed " << sc.at("seed") << "\n";
  if (report.contains("model")) {
    const auto& m = report.at("model");
    os << "model: " << m.at("id").get<std::string>() << " (" << m.at("dimension").get<std::string>()
       << ", " << m.at("basis").get<std::string>() << ", "
       << m.at("semigroup_class").get<std::string>() << ")\n";
  }
  for (const auto& s : report.at("stages")) {
    const std::string analysis = s.at("analysis");
    const auto& r = s.at("result");
    os << "[" << s.at("id").get<std::string>() << "] ";
    if (analysis == "certify") {
      os << "delta(T=" << fmt(r.at("horizon_T")) << ") = " << fmt(r.at("delta")) << " via "
         << r.at("method").get<std::string>();
    } else if (analysis == "synthesize") {
      const auto& e = r.at("envelope");
      os << "lambda = " << fmt(e.at("lambda")) << ", sigma = " << fmt(e.at("sigma"))
         << ", M = " << fmt(e.at("M_env")) << ", gamma = " << fmt(e.at("gamma"));
    } else if (analysis == "simulate") {
      os << r.at("runs").size() << " run(s), law " << r.at("law").get<std::string>();
      for (const auto& run : r.at("runs")) {
        os << "; |z(T)| = " << fmt(run.at("final_norm")) << ", rate " << fmt(run.at("fit").at("rate"));
      }
    } else if (analysis == "envelope-check") {
      os << (r.at("pass").get<bool>() ? "envelope holds" : "ENVELOPE VIOLATED");
    } else if (analysis == "analyze-fd") {
      os << "lmi " << r.at("lmi").at("status").get<std::string>();
    } else if (analysis == "robustness") {
      os << "r = ";
      if (r.at("r").is_null()) {
        os << "undefined";
      } else {
        os << fmt(r.at("r"));
      }
      if (r.contains("Lb_bound")) {
        os << ", Lb < " << fmt(r.at("Lb_bound")) << ", Ln < " << fmt(r.at("Ln_bound"));
      }
      os << ", " << r.at("validation_runs").size() << " validation run(s)";
    }
    os << "\n";
  }
  if (report.contains("expectations")) {
    for (const auto& e : report.at("expectations")) {
      os << (e.at("pass").get<bool>() ? "  PASS  " : "  FAIL  ") << e.at("expectation").get<std::string>()
         << " [" << e.at("evidence").get<std::string>() << "]\n";
    }
  }
  os << "status: " << report.at("status").get<std::string>();
  if (report.contains("error")) os << " (" << report.at("error").at("message").get<std::string>() << ")";
  os << "\n";
  return os.str();
}

}  // namespace cstab
