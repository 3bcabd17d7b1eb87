#pragma once

#include "grf/flow.hpp"
#include "grf/instances.hpp"
#include "grf/torus.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace grf::cli {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[noreturn]] inline void config_error(const std::string& where, const std::string& what) {
  throw ConfigParseError(where + ": " + what);
}

/// Reads a JSON document; syntax errors report line and column.
inline json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigParseError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

/// Typed access with the JSON pointer of each field in every diagnostic.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  Node at(const std::string& key) const {
    if (!has(key)) config_error(path_ + "/" + key, "missing required field");
    return Node(j_.at(key), path_ + "/" + key);
  }

  void require_object(const std::set<std::string>& allowed) const {
    if (!j_.is_object()) config_error(path_.empty() ? "/" : path_, "expected an object");
    for (const auto& [k, v] : j_.items())
      if (!allowed.count(k)) config_error(path_ + "/" + k, "unknown key");
  }

  double number() const {
    if (!j_.is_number()) config_error(path_, "expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) config_error(path_, "number must be finite");
    return v;
  }
  long integer() const {
    if (!j_.is_number_integer()) config_error(path_, "expected an integer");
    return j_.get<long>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) config_error(path_, "expected true or false");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) config_error(path_, "expected a string");
    return j_.get<std::string>();
  }

  double number_or(const std::string& key, double dflt) const { return has(key) ? at(key).number() : dflt; }
  long integer_or(const std::string& key, long dflt) const { return has(key) ? at(key).integer() : dflt; }
  bool boolean_or(const std::string& key, bool dflt) const { return has(key) ? at(key).boolean() : dflt; }
  std::string string_or(const std::string& key, const std::string& dflt) const {
    return has(key) ? at(key).string() : dflt;
  }

  Vector vector() const {
    if (!j_.is_array()) config_error(path_, "expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j_.size()));
    for (std::size_t i = 0; i < j_.size(); ++i) v(static_cast<Eigen::Index>(i)) = Node(j_[i], path_ + "/" + std::to_string(i)).number();
    return v;
  }

  Matrix matrix() const {
    if (!j_.is_array() || j_.empty()) config_error(path_, "expected a non-empty array of rows");
    const std::size_t rows = j_.size();
    std::size_t cols = 0;
    Matrix m;
    for (std::size_t i = 0; i < rows; ++i) {
      const Vector row = Node(j_[i], path_ + "/" + std::to_string(i)).vector();
      if (i == 0) {
        cols = static_cast<std::size_t>(row.size());
        m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      } else if (static_cast<std::size_t>(row.size()) != cols) {
        config_error(path_ + "/" + std::to_string(i), "row length differs from row 0");
      }
      m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
  }

 private:
  const json& j_;
  std::string path_;
};

inline const std::set<std::string> kModes = {"validate", "curvature", "flow", "torus", "check", "sweep"};

/// Validates the top-level layout; nested blocks are checked where they are consumed.
inline void check_top_level(const json& cfg) {
  Node(cfg, "").require_object({"mode", "seed", "algebra", "metric", "divergence", "flow", "torus", "check",
                                "sweep", "output"});
  if (cfg.contains("mode")) {
    const std::string m = Node(cfg.at("mode"), "/mode").string();
    if (!kModes.count(m)) config_error("/mode", "unknown mode '" + m + "'");
  }
  if (cfg.contains("seed")) {
    const long s = Node(cfg.at("seed"), "/seed").integer();
    if (s < 0) config_error("/seed", "seed must be nonnegative");
  }
  if (cfg.contains("output")) {
    const Node out(cfg.at("output"), "/output");
    out.require_object({"dump_fields"});
  }
}

/// Algebra presets: abelian (n, p), so3, su2_double, complex_double_su2, so3_plus_so3_neg, su2_line_double,
/// or explicit {eta, c} with c nested n x n x n, all indices down. Optional basis change matrix P.
inline QuadraticLieAlgebra algebra_from(const Node& n) {
  n.require_object({"preset", "scale", "n", "p", "eta", "c", "basis_change"});
  QuadraticLieAlgebra a;
  if (n.has("preset")) {
    if (n.has("eta") || n.has("c")) config_error(n.path(), "give either a preset or eta/c, not both");
    const std::string p = n.at("preset").string();
    const double scale = n.number_or("scale", 1.0);
    if (p == "abelian") {
      const long dim = n.integer_or("n", 4), plus = n.integer_or("p", 2);
      if (dim < 1 || plus < 0 || plus > dim) config_error(n.path() + "/n", "need n >= 1 and 0 <= p <= n");
      a = abelian(static_cast<int>(dim), static_cast<int>(plus));
    } else if (p == "so3") {
      a = so3(scale);
    } else if (p == "su2_double") {
      a = cotangent_double(su2_structure(scale));
    } else if (p == "complex_double_su2") {
      a = complex_double_su2(scale);
    } else if (p == "so3_plus_so3_neg") {
      a = direct_sum(so3(scale), negate_pairing(so3(scale)));
    } else if (p == "su2_line_double") {
      a = cotangent_double(su2_plus_line(scale));
    } else {
      config_error(n.path() + "/preset", "unknown preset '" + p + "'");
    }
  } else {
    const Matrix eta = n.at("eta").matrix();
    const int dim = static_cast<int>(eta.rows());
    if (eta.cols() != dim) config_error(n.path() + "/eta", "eta must be square");
    const Node c = n.at("c");
    if (!c.raw().is_array() || c.raw().size() != static_cast<std::size_t>(dim))
      config_error(c.path(), "c must be nested n x n x n");
    Tensor t(dim, 3);
    for (int x = 0; x < dim; ++x) {
      const Matrix slice = Node(c.raw()[static_cast<std::size_t>(x)], c.path() + "/" + std::to_string(x)).matrix();
      if (slice.rows() != dim || slice.cols() != dim)
        config_error(c.path() + "/" + std::to_string(x), "c must be nested n x n x n");
      for (int y = 0; y < dim; ++y)
        for (int z = 0; z < dim; ++z) t(x, y, z) = slice(y, z);
    }
    a = QuadraticLieAlgebra(eta, t);
    const AlgebraReport rep = validate_algebra(a);
    if (!rep.pass)
      throw InvalidLieAlgebra("antisymmetry residual " + std::to_string(rep.antisymmetry_residual) +
                              ", Jacobi residual " + std::to_string(rep.jacobi_residual));
  }
  if (n.has("basis_change")) {
    const Matrix P = n.at("basis_change").matrix();
    if (P.rows() != a.n() || P.cols() != a.n()) config_error(n.path() + "/basis_change", "must be n x n");
    a = change_basis(a, P);
  }
  return a;
}

/// Metric: exactly one of identity, matrix (G as an endomorphism), v_plus (spanning vectors),
/// graph {g, b} on a cotangent double, split (diag of p ones then minus ones), random_positive.
inline Matrix metric_from(const Node& n, const QuadraticLieAlgebra& a, std::uint64_t seed) {
  n.require_object({"identity", "matrix", "v_plus", "graph", "split", "random_positive"});
  if (n.raw().size() != 1) config_error(n.path(), "give exactly one metric form");
  const int dim = a.n();
  if (n.has("identity")) {
    if (!n.at("identity").boolean()) config_error(n.path() + "/identity", "must be true");
    return make_metric(a, Matrix::Identity(dim, dim)).G;
  }
  if (n.has("matrix")) {
    const Matrix G = n.at("matrix").matrix();
    if (G.rows() != dim || G.cols() != dim) config_error(n.path() + "/matrix", "must be n x n");
    return make_metric(a, G).G;
  }
  if (n.has("v_plus")) {
    const Node v = n.at("v_plus");
    if (!v.raw().is_array()) config_error(v.path(), "expected an array of vectors");
    std::vector<Vector> vs;
    for (std::size_t i = 0; i < v.raw().size(); ++i) vs.push_back(Node(v.raw()[i], v.path() + "/" + std::to_string(i)).vector());
    return metric_from_subspace(a, vs).G;
  }
  if (n.has("graph")) {
    const Node g = n.at("graph");
    g.require_object({"g", "b"});
    const Matrix gm = g.at("g").matrix();
    const Matrix b = g.has("b") ? g.at("b").matrix() : Matrix::Zero(gm.rows(), gm.cols());
    return graph_metric(a, gm, b).G;
  }
  if (n.has("split")) {
    const long p = n.at("split").integer();
    if (p < 0 || p > dim) config_error(n.path() + "/split", "need 0 <= p <= n");
    Matrix G = Matrix::Identity(dim, dim);
    for (int i = static_cast<int>(p); i < dim; ++i) G(i, i) = -1.0;
    return make_metric(a, G).G;
  }
  if (!n.at("random_positive").boolean()) config_error(n.path() + "/random_positive", "must be true");
  Rng rng(seed);
  return random_strictly_positive_metric(a, rng);
}

inline Vector divergence_from(const json& cfg, const QuadraticLieAlgebra& a) {
  if (!cfg.contains("divergence")) return Vector::Zero(a.n());
  const Vector d = Node(cfg.at("divergence"), "/divergence").vector();
  if (d.size() != a.n()) config_error("/divergence", "length must equal the algebra dimension");
  return d;
}

struct FlowConfig {
  FlowParams params;
  double log_sigma0 = 0.0;
};

inline FlowConfig flow_from(const json& cfg) {
  FlowConfig fc;
  if (!cfg.contains("flow")) return fc;
  const Node n(cfg.at("flow"), "/flow");
  n.require_object({"dt", "T", "integrator", "tol", "retract_tol", "max_steps", "record_every",
                    "monitor_positivity", "cross_check", "log_sigma0"});
  FlowParams& p = fc.params;
  p.dt = n.number_or("dt", p.dt);
  p.T = n.number_or("T", p.T);
  if (n.has("integrator")) p.integrator = parse_integrator(n.at("integrator").string());
  p.tol = n.number_or("tol", p.tol);
  p.retract_tol = n.number_or("retract_tol", p.retract_tol);
  p.max_steps = n.integer_or("max_steps", p.max_steps);
  p.record_every = static_cast<int>(n.integer_or("record_every", p.record_every));
  p.monitor_positivity = n.boolean_or("monitor_positivity", p.monitor_positivity);
  p.cross_check = n.boolean_or("cross_check", p.cross_check);
  fc.log_sigma0 = n.number_or("log_sigma0", 0.0);
  validate_params(p);
  return fc;
}

struct TorusConfig {
  torus::TorusFieldState state;
  torus::TorusParams params;
  bool dump_fields = false;
};

inline torus::PerturbationMode mode_from(const Node& n) {
  n.require_object({"field", "i", "j", "amplitude", "wave", "phase"});
  torus::PerturbationMode m;
  const std::string f = n.at("field").string();
  if (f == "g") {
    m.field = torus::PerturbationMode::Field::g;
  } else if (f == "B") {
    m.field = torus::PerturbationMode::Field::B;
  } else if (f == "phi") {
    m.field = torus::PerturbationMode::Field::phi;
  } else {
    config_error(n.path() + "/field", "expected g, B or phi");
  }
  m.i = static_cast<int>(n.integer_or("i", 0));
  m.j = static_cast<int>(n.integer_or("j", 0));
  m.amplitude = n.at("amplitude").number();
  m.phase = n.number_or("phase", 0.0);
  const Node w = n.at("wave");
  if (!w.raw().is_array() || w.raw().size() > 3) config_error(w.path(), "expected up to 3 integers");
  m.wave = {0, 0, 0};
  for (std::size_t a = 0; a < w.raw().size(); ++a)
    m.wave[a] = static_cast<int>(Node(w.raw()[a], w.path() + "/" + std::to_string(a)).integer());
  return m;
}

inline TorusConfig torus_from(const json& cfg, std::uint64_t seed) {
  TorusConfig tc;
  const json empty = json::object();
  const Node n(cfg.contains("torus") ? cfg.at("torus") : empty, "/torus");
  n.require_object({"d", "N", "L", "k", "T", "c_cfl", "record_every", "compute_lambda", "modes", "random_modes",
                    "lambda_tol", "max_steps"});
  torus::TorusGeometry geo;
  geo.d = static_cast<int>(n.integer_or("d", 3));
  geo.N = static_cast<int>(n.integer_or("N", 16));
  geo.L = n.number_or("L", geo.L);
  torus::validate_geometry(geo);
  const double k = n.number_or("k", 0.0);
  tc.state = torus::flat_state(geo, k);
  if (n.has("modes")) {
    const Node ms = n.at("modes");
    if (!ms.raw().is_array()) config_error(ms.path(), "expected an array of modes");
    for (std::size_t i = 0; i < ms.raw().size(); ++i)
      torus::apply_mode(tc.state, mode_from(Node(ms.raw()[i], ms.path() + "/" + std::to_string(i))));
  }
  if (n.has("random_modes")) {
    const Node rm = n.at("random_modes");
    rm.require_object({"count", "amplitude", "B", "phi", "max_wave"});
    const long max_wave = rm.integer_or("max_wave", 2);
    if (max_wave < 1 || max_wave > geo.N / 2 - 1) config_error(rm.path() + "/max_wave", "need 1 <= max_wave < N/2");
    for (const auto& m : torus::random_modes(geo.d, seed, rm.number_or("amplitude", 0.05),
                                             static_cast<int>(rm.integer_or("count", 6)), rm.boolean_or("B", true),
                                             rm.boolean_or("phi", true), static_cast<int>(max_wave)))
      torus::apply_mode(tc.state, m);
  }
  torus::TorusParams& p = tc.params;
  p.T = n.number_or("T", 1.0);
  p.c_cfl = n.number_or("c_cfl", p.c_cfl);
  p.record_every = static_cast<int>(n.integer_or("record_every", p.record_every));
  p.compute_lambda = n.boolean_or("compute_lambda", p.compute_lambda);
  p.lambda.residual_tol = n.number_or("lambda_tol", p.lambda.residual_tol);
  p.max_steps = n.integer_or("max_steps", p.max_steps);
  torus::validate_params(p);
  if (cfg.contains("output")) tc.dump_fields = Node(cfg.at("output"), "/output").boolean_or("dump_fields", false);
  return tc;
}

struct SweepAxis {
  std::string pointer;
  std::vector<json> values;
};

struct SweepConfig {
  std::string mode = "flow";
  std::vector<SweepAxis> axes;
};

inline SweepConfig sweep_from(const json& cfg) {
  SweepConfig sc;
  if (!cfg.contains("sweep")) return sc;
  const Node n(cfg.at("sweep"), "/sweep");
  n.require_object({"mode", "axes"});
  sc.mode = n.string_or("mode", "flow");
  if (sc.mode != "flow" && sc.mode != "torus" && sc.mode != "curvature")
    config_error("/sweep/mode", "expected flow, torus or curvature");
  if (n.has("axes")) {
    const Node axes = n.at("axes");
    if (!axes.raw().is_array()) config_error(axes.path(), "expected an array");
    for (std::size_t i = 0; i < axes.raw().size(); ++i) {
      const Node ax(axes.raw()[i], axes.path() + "/" + std::to_string(i));
      ax.require_object({"pointer", "values"});
      SweepAxis a;
      a.pointer = ax.at("pointer").string();
      try {
        (void)json::json_pointer(a.pointer);
      } catch (const json::exception& e) {
        config_error(ax.path() + "/pointer", e.what());
      }
      if (a.pointer.rfind("/sweep", 0) == 0) config_error(ax.path() + "/pointer", "cannot sweep the sweep block");
      const Node vals = ax.at("values");
      if (!vals.raw().is_array() || vals.raw().empty()) config_error(vals.path(), "expected a non-empty array");
      for (const auto& v : vals.raw()) a.values.push_back(v);
      sc.axes.push_back(std::move(a));
    }
  }
  return sc;
}

/// Sets the value at a JSON pointer, creating intermediate objects.
inline void set_pointer(json& doc, const std::string& pointer, const json& value) {
  try {
    doc[json::json_pointer(pointer)] = value;
  } catch (const json::exception& e) {
    throw ConfigParseError(pointer + ": " + e.what());
  }
}

}  // namespace grf::cli
