#include "checks.hpp"
#include "config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace grf;
using namespace grf::cli;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

const char* kColumnsHelp = R"(Output files (written to --out, default ./grf_out):
  validate   validate.json    algebra and metric diagnostics
  curvature  curvature.json   Ricci (all routes), scalar, residuals
  flow       flow_trace.csv, flow_summary.json
  torus      torus_trace.csv, torus_summary.json, fields_NNNNNN.grff (if output.dump_fields)
  check      check_report.json
  sweep      index.json, failures.json, cell_NNNN/ (one run per grid point)

CSV files start with '# grf <version> config_hash=<fnv1a-64>' followed by a header row.

flow_trace.csv columns:
  t                    flow time
  GR                   generalized scalar curvature at G (zero divergence)
  normRc2              |GRc|^2_G, squared norm of the generalized Ricci endomorphism
  log_sigma            log of the half-density scale, d(log sigma)/dt = -GR/2
  S                    GR * exp(2 log_sigma), the Einstein-Hilbert value
  lambda               lowest eigenvalue of the scalar functional (equals GR over a point)
  involution_residual  max |G^2 - I|
  soliton_residual     Frobenius norm of GRc in an adapted frame (zero at a soliton)

torus_trace.csv columns:
  t          flow time
  minR       min over nodes of R - |H|^2/12 - 4 e^phi Lap e^-phi
  meanR      mean over nodes of the same field
  lambda     min over unit-mass u of integral of 4|du|^2 + (R - |H|^2/12) u^2
  spd_margin min over nodes of the smallest eigenvalue of g
  g_norm     sqrt(mean over nodes of |g|_F^2)
  B_norm     sqrt(mean over nodes of |B|_F^2)
  phi_norm   sqrt(mean over nodes of phi^2)

Field dumps: "GRFF", uint32 version, d, N, field count, then each field as N^d little-endian
float64 in row-major node order (axis 0 slowest): g_ij (i <= j), B_ij (i < j), phi.

Exit codes: 0 success, 1 failed checks, 2 validation error, 3 numerical failure.)";

struct Context {
  json cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::string hash;
};

std::string header_line(const Context& c) {
  return std::string("# grf ") + kVersion + " config_hash=" + c.hash + "\n";
}

json json_header(const Context& c) { return {{"grf_version", kVersion}, {"config_hash", c.hash}}; }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("IoError", "cannot write " + p.string());
  out << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

QuadraticLieAlgebra algebra_of(const Context& c) { return algebra_from(Node(c.cfg.at("algebra"), "/algebra")); }

Matrix metric_of(const Context& c, const QuadraticLieAlgebra& a) {
  return metric_from(Node(c.cfg.at("metric"), "/metric"), a, c.seed);
}

void require(const Context& c, const char* key) {
  if (!c.cfg.contains(key)) config_error(std::string("/") + key, "missing required field");
}

int run_validate(const Context& c) {
  require(c, "algebra");
  const QuadraticLieAlgebra a = algebra_of(c);
  const AlgebraReport ar = validate_algebra(a);
  json rep = json_header(c);
  rep["algebra"] = {{"n", a.n()},
                    {"signature", {ar.p, ar.q}},
                    {"antisymmetry_residual", ar.antisymmetry_residual},
                    {"jacobi_residual", ar.jacobi_residual},
                    {"condition_number", ar.condition_number},
                    {"c_norm2", a.c_norm2()},
                    {"pass", ar.pass}};
  if (!ar.pass) {
    write_json(c.out / "validate.json", rep);
    throw InvalidLieAlgebra("antisymmetry residual " + std::to_string(ar.antisymmetry_residual) +
                            ", Jacobi residual " + std::to_string(ar.jacobi_residual));
  }
  if (c.cfg.contains("metric")) {
    const Matrix G = metric_of(c, a);
    const MetricReport mr = validate_metric(a, G);
    rep["metric"] = {{"n_plus", mr.n_plus},
                     {"n_minus", mr.n_minus},
                     {"strictly_positive", mr.strictly_positive},
                     {"involution_residual", mr.involution_residual},
                     {"symmetry_residual", mr.symmetry_residual}};
  }
  if (c.cfg.contains("divergence")) (void)divergence_from(c.cfg, a);
  write_json(c.out / "validate.json", rep);
  std::printf("valid: n = %d, jacobi_residual = %.3e\n", a.n(), ar.jacobi_residual);
  return kExitOk;
}

int run_curvature(const Context& c) {
  require(c, "algebra");
  require(c, "metric");
  const QuadraticLieAlgebra a = algebra_of(c);
  const Matrix G = metric_of(c, a);
  const Vector d = divergence_from(c.cfg, a);
  const CurvatureReport r = curvature_report(a, G, Divergence{d});
  const MetricReport mr = validate_metric(a, G);
  json rep = json_header(c);
  rep["n"] = a.n();
  rep["n_plus"] = mr.n_plus;
  rep["n_minus"] = mr.n_minus;
  rep["strictly_positive"] = mr.strictly_positive;
  rep["G"] = to_json(G);
  rep["ricci"] = to_json(r.ricci);
  rep["full_ricci_lowered"] = to_json(r.full_ricci);
  rep["scalar"] = r.scalar;
  rep["scalar_closed_form"] = scalar_closed_form(a, G, Divergence{d});
  rep["scalar_polynomial"] = scalar_polynomial(a, G, d);
  rep["ricci_norm2"] = r.ricci_norm2;
  rep["dirac_square"] = dirac_square(a);
  rep["residuals"] = {{"torsion", r.torsion_residual},
                      {"ricci_routes", r.ricci_route_residual},
                      {"scalar_routes", r.scalar_route_residual},
                      {"riemann_symmetry", r.riemann_symmetry_residual}};
  write_json(c.out / "curvature.json", rep);
  std::printf("GR = %.17g, |GRc|^2 = %.17g\n", r.scalar, r.ricci_norm2 + 0.0);
  return kExitOk;
}

int run_flow_mode(const Context& c) {
  require(c, "algebra");
  require(c, "metric");
  const QuadraticLieAlgebra a = algebra_of(c);
  const Matrix G = metric_of(c, a);
  if (!divergence_from(c.cfg, a).isZero(0.0))
    config_error("/divergence", "the flow is defined for the zero divergence only");
  const FlowConfig fc = flow_from(c.cfg);
  const FlowTrace tr = try_run_flow(a, FlowState{0.0, G, fc.log_sigma0}, fc.params);
  std::string csv = header_line(c) + kFlowCsvHeader + "\n";
  for (const auto& s : tr.samples)
    csv += fmt(s.t) + "," + fmt(s.GR) + "," + fmt(s.normRc2) + "," + fmt(s.log_sigma) + "," + fmt(s.S) + "," +
           fmt(s.lambda) + "," + fmt(s.involution_residual) + "," + fmt(s.soliton_residual) + "\n";
  write_text(c.out / "flow_trace.csv", csv);
  const auto& d = tr.diagnostics;
  json sum = json_header(c);
  sum["completed"] = tr.completed;
  sum["status"] = tr.status;
  sum["message"] = tr.message;
  sum["final_t"] = tr.final_state.t;
  sum["final_G"] = to_json(tr.final_state.G);
  sum["final_log_sigma"] = tr.final_state.log_sigma;
  sum["integrator"] = integrator_name(fc.params.integrator);
  sum["diagnostics"] = {{"accepted_steps", d.accepted_steps},
                        {"rejected_steps", d.rejected_steps},
                        {"min_dt", d.min_dt},
                        {"monotonicity_defect", d.monotonicity_defect},
                        {"worst_increment", d.worst_increment},
                        {"gr_nondecreasing", d.gr_nondecreasing},
                        {"max_involution_residual", d.max_involution_residual},
                        {"max_symmetry_residual", d.max_symmetry_residual}};
  write_json(c.out / "flow_summary.json", sum);
  if (!tr.completed) {
    std::fprintf(stderr, "grf: %s\n", tr.message.c_str());
    return kExitNumerical;
  }
  std::printf("flow completed: t = %.6g, GR = %.17g\n", tr.final_state.t, tr.samples.back().GR);
  return kExitOk;
}

int run_torus_mode(const Context& c) {
  TorusConfig tc = torus_from(c.cfg, c.seed);
  if (tc.dump_fields) {
    const fs::path dir = c.out;
    tc.params.on_sample = [dir](const torus::TorusFieldState& s, std::size_t k) {
      char name[32];
      std::snprintf(name, sizeof name, "fields_%06zu.grff", k);
      torus::write_field_dump(s, (dir / name).string());
    };
  }
  const torus::TorusTrace tr = torus::try_run_torus_flow(tc.state, tc.params);
  std::string csv = header_line(c) + torus::kTorusCsvHeader + "\n";
  for (const auto& s : tr.samples)
    csv += fmt(s.t) + "," + fmt(s.minR) + "," + fmt(s.meanR) + "," + fmt(s.lambda) + "," + fmt(s.spd_margin) + "," +
           fmt(s.g_norm) + "," + fmt(s.B_norm) + "," + fmt(s.phi_norm) + "\n";
  write_text(c.out / "torus_trace.csv", csv);
  const auto& d = tr.diagnostics;
  json sum = json_header(c);
  sum["completed"] = tr.completed;
  sum["status"] = tr.status;
  sum["message"] = tr.message;
  sum["final_t"] = tr.final_state.t;
  sum["geometry"] = {{"d", tc.state.geo.d}, {"N", tc.state.geo.N}, {"L", tc.state.geo.L}, {"k", tc.state.H0}};
  sum["diagnostics"] = {{"steps", d.steps},
                        {"max_g_asymmetry", d.max_g_asymmetry},
                        {"max_B_symmetric_part", d.max_B_symmetric_part},
                        {"max_rhs_asymmetry", d.max_rhs_asymmetry},
                        {"worst_minR_rate", d.worst_minR_rate},
                        {"worst_lambda_rate", d.worst_lambda_rate}};
  write_json(c.out / "torus_summary.json", sum);
  if (!tr.completed) {
    std::fprintf(stderr, "grf: %s\n", tr.message.c_str());
    return kExitNumerical;
  }
  std::printf("torus flow completed: t = %.6g, minR = %.17g\n", tr.final_state.t, tr.samples.back().minR);
  return kExitOk;
}

int run_check(const Context& c, std::string scope) {
  if (c.cfg.contains("check")) {
    const Node n(c.cfg.at("check"), "/check");
    n.require_object({"scope"});
    if (scope.empty()) scope = n.string_or("scope", "all");
  }
  if (scope.empty()) scope = "all";
  const std::vector<int> ids = checks::scope_ids(scope);
  json rep = json_header(c);
  rep["scope"] = scope;
  rep["seed"] = c.seed;
  json list = json::array();
  bool ok = true;
  for (int id : ids) {
    const checks::CriterionResult r = checks::run_criterion(id, c.seed);
    std::printf("criterion %d: %s  %s\n", id, r.pass() ? "PASS" : "FAIL", r.title.c_str());
    std::fprintf(stderr, "  criterion %d took %.1f s\n", id, r.seconds);
    json items = json::array();
    for (const auto& i : r.items) {
      std::printf("    [%s] %s: worst %.3e, tolerance %.3e%s%s\n", i.pass ? "ok" : "FAIL", i.name.c_str(), i.worst,
                  i.tolerance, i.note.empty() ? "" : "; ", i.note.c_str());
      items.push_back({{"name", i.name}, {"worst", i.worst}, {"tolerance", i.tolerance}, {"pass", i.pass}, {"note", i.note}});
    }
    std::fflush(stdout);
    list.push_back({{"id", r.id}, {"title", r.title}, {"pass", r.pass()}, {"items", items}});
    ok = ok && r.pass();
  }
  rep["criteria"] = list;
  rep["pass"] = ok;
  write_json(c.out / "check_report.json", rep);
  return ok ? kExitOk : kExitCheckFailed;
}

int run_mode(const std::string& mode, const Context& c, const std::string& scope);

/// Classifies an exception into an exit code and message.
int classify(std::exception_ptr e, std::string& message) {
  try {
    std::rethrow_exception(e);
  } catch (const ValidationError& ex) {
    message = ex.what();
    return kExitValidation;
  } catch (const NumericalError& ex) {
    message = ex.what();
    return kExitNumerical;
  } catch (const std::exception& ex) {
    message = ex.what();
    return kExitCheckFailed;
  }
}

int run_sweep(const Context& c) {
  const SweepConfig sc = sweep_from(c.cfg);
  json base = c.cfg;
  base.erase("sweep");
  base["mode"] = sc.mode;
  std::size_t cells = 1;
  for (const auto& ax : sc.axes) cells *= ax.values.size();
  json index = json_header(c);
  index["mode"] = sc.mode;
  json axes = json::array();
  for (const auto& ax : sc.axes) axes.push_back({{"pointer", ax.pointer}, {"values", ax.values}});
  index["axes"] = axes;
  json cell_list = json::array(), failures = json::array();
  int worst = kExitOk;
  for (std::size_t k = 0; k < cells; ++k) {
    json cell = base;
    json values = json::object();
    std::size_t rem = k;
    for (std::size_t ai = sc.axes.size(); ai-- > 0;) {
      const auto& ax = sc.axes[ai];
      const json& v = ax.values[rem % ax.values.size()];
      rem /= ax.values.size();
      set_pointer(cell, ax.pointer, v);
      values[ax.pointer] = v;
    }
    char name[32];
    std::snprintf(name, sizeof name, "cell_%04zu", k);
    Context cc;
    cc.cfg = cell;
    cc.seed = c.seed;
    cc.out = c.out / name;
    cc.hash = hex64(fnv1a(cell.dump()));
    fs::create_directories(cc.out);
    int code = kExitOk;
    std::string message;
    try {
      check_top_level(cell);
      code = run_mode(sc.mode, cc, "");
      if (code != kExitOk) message = "run did not complete";
    } catch (...) {
      code = classify(std::current_exception(), message);
    }
    json entry = {{"cell", k}, {"dir", name}, {"values", values}, {"exit_code", code}, {"config_hash", cc.hash}};
    if (code != kExitOk) {
      if (sc.mode == "flow" || sc.mode == "torus") {
        const fs::path summary = cc.out / (sc.mode + "_summary.json");
        if (fs::exists(summary)) {
          std::ifstream in(summary);
          const json s = json::parse(in);
          message = s.value("message", message);
        }
      }
      entry["message"] = message;
      failures.push_back(entry);
      std::fprintf(stderr, "grf: %s failed: %s\n", name, message.c_str());
      if (worst != kExitValidation) worst = code == kExitValidation ? code : std::max(worst, code);
    }
    cell_list.push_back(entry);
  }
  index["cells"] = cell_list;
  write_json(c.out / "index.json", index);
  json fail = json_header(c);
  fail["failed_cells"] = failures;
  write_json(c.out / "failures.json", fail);
  std::printf("sweep: %zu cells, %zu failed\n", cells, failures.size());
  return worst;
}

int run_mode(const std::string& mode, const Context& c, const std::string& scope) {
  if (mode == "validate") return run_validate(c);
  if (mode == "curvature") return run_curvature(c);
  if (mode == "flow") return run_flow_mode(c);
  if (mode == "torus") return run_torus_mode(c);
  if (mode == "check") return run_check(c, scope);
  return run_sweep(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grf: generalized Ricci flow over a point and on flat tori"};
  app.footer(kColumnsHelp);
  app.require_subcommand(1, 1);
  std::string config_path, out_dir = "grf_out", scope;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"validate", "curvature", "flow", "torus", "check", "sweep"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " mode");
    sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory");
    if (std::string(name) == "check") {
      sub->add_option("scope", scope, "algebraic | torus | all (default: all)");
    } else {
      sub->get_option("--config")->required();
    }
  }
  CLI11_PARSE(app, argc, argv);
  const std::string mode = app.get_subcommands().front()->get_name();

  try {
    Context c;
    c.cfg = config_path.empty() ? json::object() : read_config(config_path);
    check_top_level(c.cfg);
    if (c.cfg.contains("mode") && c.cfg.at("mode").get<std::string>() != mode)
      config_error("/mode", "config mode '" + c.cfg.at("mode").get<std::string>() + "' does not match subcommand '" +
                                mode + "'");
    c.seed = seed ? *seed : static_cast<std::uint64_t>(c.cfg.value("seed", 0L));
    c.cfg["seed"] = c.seed;
    c.cfg["mode"] = mode;
    c.hash = hex64(fnv1a(c.cfg.dump()));
    c.out = out_dir;
    fs::create_directories(c.out);
    return run_mode(mode, c, scope);
  } catch (...) {
    std::string message;
    const int code = classify(std::current_exception(), message);
    std::fprintf(stderr, "grf: %s\n", message.c_str());
    return code;
  }
}
