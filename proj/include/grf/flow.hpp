#pragma once

#include "grf/curvature.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <vector>

namespace grf {

enum class Integrator { euler, rk4, rkf45 };

inline const char* integrator_name(Integrator i) {
  switch (i) {
    case Integrator::euler: return "euler";
    case Integrator::rk4: return "rk4";
    default: return "rkf45";
  }
}

inline Integrator parse_integrator(const std::string& s) {
  if (s == "euler") return Integrator::euler;
  if (s == "rk4") return Integrator::rk4;
  if (s == "rkf45") return Integrator::rkf45;
  throw ValidationError("UnknownIntegrator", "integrator must be euler, rk4 or rkf45, got '" + s + "'");
}

/// log_sigma parametrizes the constant half-density sigma = exp(log_sigma).
struct FlowState {
  double t = 0.0;
  Matrix G;
  double log_sigma = 0.0;
};

struct FlowParams {
  double dt = 1e-3;
  double T = 10.0;
  Integrator integrator = Integrator::rk4;
  double tol = 1e-9;  ///< local error target for rkf45
  double retract_tol = 1e-10;
  long max_steps = 50'000'000;
  int record_every = 1;
  bool monitor_positivity = true;
  bool cross_check = false;  ///< compare the closed-form rhs with the connection route
};

inline void validate_params(const FlowParams& p) {
  if (!(p.dt > 0.0) || !std::isfinite(p.dt)) throw ValidationError("InvalidFlowParams", "dt must be positive");
  if (!(p.T > 0.0) || !std::isfinite(p.T)) throw ValidationError("InvalidFlowParams", "T must be positive");
  if (!(p.tol > 0.0)) throw ValidationError("InvalidFlowParams", "tol must be positive");
  if (!(p.retract_tol > 0.0)) throw ValidationError("InvalidFlowParams", "retract_tol must be positive");
  if (p.max_steps < 1) throw ValidationError("InvalidFlowParams", "max_steps must be at least 1");
  if (p.record_every < 1) throw ValidationError("InvalidFlowParams", "record_every must be at least 1");
}

struct FlowRhs {
  Matrix dG;
  double dlog_sigma = 0.0;
};

namespace detail {

/// Right side for any matrix G; used on intermediate stages off the constraint set.
inline FlowRhs flow_rhs_unchecked(const QuadraticLieAlgebra& a, const Matrix& G) {
  return {-2.0 * ricci_closed_form(a, G), -0.5 * scalar_polynomial(a, G, Vector::Zero(a.n()))};
}

inline bool finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

/// dG/dt = -2 GRc, d(log sigma)/dt = -GR/2 with zero divergence.
inline FlowRhs flow_rhs(const QuadraticLieAlgebra& a, const FlowState& s, bool cross_check = false) {
  make_metric(a, s.G);
  FlowRhs r = detail::flow_rhs_unchecked(a, s.G);
  if (cross_check) {
    const Matrix Rc = ricci(a, s.G);
    const double err = max_abs(-2.0 * Rc - r.dG);
    if (err > 1e-8 * (1.0 + max_abs(Rc)))
      throw NumericalError("RhsMismatch", "closed-form and connection Ricci differ by " + std::to_string(err));
  }
  return r;
}

/// Floor below which G^2 - Id cannot be resolved in double precision.
inline double involution_floor(const Matrix& G) {
  const double s = std::max(1.0, max_abs(G));
  return 64.0 * std::numeric_limits<double>::epsilon() * s * s * G.rows();
}

struct RetractResult {
  Matrix G;
  int iterations = 0;
  double residual = 0.0;
};

/// Newton-Schulz iteration G <- (3G - G^3)/2 towards the nearest involution.
inline RetractResult involution_retract(const Matrix& G_approx, double retract_tol = 1e-10) {
  RetractResult r{G_approx, 0, involution_residual(G_approx)};
  if (!std::isfinite(r.residual) || !(r.residual < 0.5))
    throw RetractionDiverged("|G^2 - Id| = " + std::to_string(r.residual) + " is outside the basin (< 0.5)");
  const double floor = involution_floor(G_approx);
  while (r.residual > retract_tol && r.residual > floor) {
    if (r.iterations >= 20) throw RetractionDiverged("no convergence within 20 iterations");
    const Matrix next = 0.5 * (3.0 * r.G - r.G * r.G * r.G);
    const double res = involution_residual(next);
    ++r.iterations;
    if (!(res <= 0.5 * r.residual)) {
      if (res <= floor) {
        r.G = next;
        r.residual = res;
        break;
      }
      throw RetractionDiverged("residual " + std::to_string(res) + " not halved from " + std::to_string(r.residual));
    }
    r.G = next;
    r.residual = res;
  }
  return r;
}

namespace detail {

struct RawStep {
  Matrix G;
  double log_sigma = 0.0;
  double error = 0.0;  ///< embedded error estimate (rkf45 only)
};

inline RawStep raw_step(const QuadraticLieAlgebra& a, const FlowState& s, double dt, Integrator integ) {
  const Matrix& G = s.G;
  if (integ == Integrator::euler) {
    const FlowRhs k = flow_rhs_unchecked(a, G);
    return {G + dt * k.dG, s.log_sigma + dt * k.dlog_sigma, 0.0};
  }
  if (integ == Integrator::rk4) {
    const FlowRhs k1 = flow_rhs_unchecked(a, G);
    const FlowRhs k2 = flow_rhs_unchecked(a, G + 0.5 * dt * k1.dG);
    const FlowRhs k3 = flow_rhs_unchecked(a, G + 0.5 * dt * k2.dG);
    const FlowRhs k4 = flow_rhs_unchecked(a, G + dt * k3.dG);
    return {G + dt / 6.0 * (k1.dG + 2.0 * k2.dG + 2.0 * k3.dG + k4.dG),
            s.log_sigma + dt / 6.0 * (k1.dlog_sigma + 2.0 * k2.dlog_sigma + 2.0 * k3.dlog_sigma + k4.dlog_sigma),
            0.0};
  }
  // Fehlberg 4(5).
  static constexpr double A[6][5] = {{0, 0, 0, 0, 0},
                                     {1.0 / 4, 0, 0, 0, 0},
                                     {3.0 / 32, 9.0 / 32, 0, 0, 0},
                                     {1932.0 / 2197, -7200.0 / 2197, 7296.0 / 2197, 0, 0},
                                     {439.0 / 216, -8.0, 3680.0 / 513, -845.0 / 4104, 0},
                                     {-8.0 / 27, 2.0, -3544.0 / 2565, 1859.0 / 4104, -11.0 / 40}};
  static constexpr double B4[6] = {25.0 / 216, 0, 1408.0 / 2565, 2197.0 / 4104, -1.0 / 5, 0};
  static constexpr double B5[6] = {16.0 / 135, 0, 6656.0 / 12825, 28561.0 / 56430, -9.0 / 50, 2.0 / 55};
  std::vector<FlowRhs> k;
  for (int i = 0; i < 6; ++i) {
    Matrix Gi = G;
    for (int j = 0; j < i; ++j) Gi += dt * A[i][j] * k[j].dG;
    k.push_back(flow_rhs_unchecked(a, Gi));
  }
  Matrix G4 = G, G5 = G;
  double l4 = s.log_sigma, l5 = s.log_sigma;
  for (int i = 0; i < 6; ++i) {
    G4 += dt * B4[i] * k[i].dG;
    G5 += dt * B5[i] * k[i].dG;
    l4 += dt * B4[i] * k[i].dlog_sigma;
    l5 += dt * B5[i] * k[i].dlog_sigma;
  }
  return {G5, l5, std::max(max_abs(G5 - G4), std::abs(l5 - l4))};
}

}  // namespace detail

/// Outcome of one accepted step.
struct StepResult {
  FlowState state;
  double dt_used = 0.0;
  double dt_next = 0.0;
  int rejected = 0;
};

/// One accepted step starting from dt; rejected attempts halve dt.
inline StepResult flow_step_adaptive(const QuadraticLieAlgebra& a, const FlowState& s, double dt,
                                     const FlowParams& p) {
  StepResult out;
  while (true) {
    if (dt < 1e-14) throw StepUnderflow("step size fell below 1e-14 at t = " + std::to_string(s.t));
    bool ok = false;
    detail::RawStep raw;
    RetractResult rr;
    try {
      raw = detail::raw_step(a, s, dt, p.integrator);
      if (detail::finite(raw.G) && std::isfinite(raw.log_sigma) &&
          (p.integrator != Integrator::rkf45 || raw.error <= p.tol)) {
        rr = involution_retract(raw.G, p.retract_tol);
        ok = rr.residual <= std::max(p.retract_tol, involution_floor(rr.G));
      }
    } catch (const RetractionDiverged&) {
      ok = false;
    }
    if (!ok) {
      if (p.integrator == Integrator::rkf45 && std::isfinite(raw.error) && raw.error > p.tol && raw.error > 0.0)
        dt *= std::max(0.1, std::min(0.5, 0.9 * std::pow(p.tol / raw.error, 0.2)));
      else
        dt *= 0.5;
      ++out.rejected;
      continue;
    }
    out.state = {s.t + dt, rr.G, raw.log_sigma};
    out.dt_used = dt;
    if (p.integrator == Integrator::rkf45) {
      const double fac = raw.error > 0.0 ? 0.9 * std::pow(p.tol / raw.error, 0.2) : 4.0;
      out.dt_next = dt * std::min(4.0, std::max(0.1, fac));
    } else {
      out.dt_next = std::min(p.dt, 2.0 * dt);
    }
    return out;
  }
}

inline FlowState flow_step(const QuadraticLieAlgebra& a, const FlowState& s, const FlowParams& p) {
  make_metric(a, s.G);
  return flow_step_adaptive(a, s, p.dt, p).state;
}

/// Frobenius norm of GRc(G, 0) in an adapted frame.
inline double soliton_residual(const QuadraticLieAlgebra& a, const Matrix& G) {
  const AdaptedFrame f = adapted_frame(a, G);
  return f.to_frame(ricci_closed_form(a, G)).norm();
}

struct FlowSample {
  double t = 0.0;
  double GR = 0.0;
  double normRc2 = 0.0;
  double log_sigma = 0.0;
  double S = 0.0;
  double lambda = 0.0;
  double involution_residual = 0.0;
  double soliton_residual = 0.0;
};

inline FlowSample sample_state(const QuadraticLieAlgebra& a, const FlowState& s) {
  FlowSample r;
  r.t = s.t;
  r.GR = scalar_polynomial(a, s.G, Vector::Zero(a.n()));
  const Matrix Rc = ricci_closed_form(a, s.G);
  r.normRc2 = norm2_G(a, Rc);
  r.log_sigma = s.log_sigma;
  r.S = r.GR * std::exp(2.0 * s.log_sigma);
  r.lambda = r.GR;
  r.involution_residual = involution_residual(s.G);
  r.soliton_residual = soliton_residual(a, s.G);
  return r;
}

struct FlowDiagnostics {
  long accepted_steps = 0;
  long rejected_steps = 0;
  double min_dt = 0.0;
  /// max |dGR/dt - |GRc|^2| / (1 + |GRc|^2), trapezoid |GRc|^2 over the step, where |GRc|^2 > 1e-6.
  double monotonicity_defect = 0.0;
  /// min over steps of (GR_{k+1} - GR_k) / (1 + |GR_k|); negative means a decrease.
  double worst_increment = 0.0;
  double max_involution_residual = 0.0;
  double max_symmetry_residual = 0.0;
  bool gr_nondecreasing = true;  ///< GR_{k+1} >= GR_k - 1e-8 (1 + |GR_k|) on every step
};

struct FlowTrace {
  std::vector<FlowSample> samples;
  FlowDiagnostics diagnostics;
  FlowState final_state;
  bool completed = false;
  std::string status = "ok";  ///< "ok" or the kind of the error that stopped the run
  std::string message;
  std::exception_ptr error;
};

inline constexpr const char* kFlowCsvHeader =
    "t,GR,normRc2,log_sigma,S,lambda,involution_residual,soliton_residual";

/// Runs the flow; numerical failures stop the run and are reported in the returned trace.
inline FlowTrace try_run_flow(const QuadraticLieAlgebra& a, const FlowState& init, const FlowParams& p) {
  validate_params(p);
  const GeneralizedPseudometric gm = make_metric(a, init.G);
  const bool positive = gm.strictly_positive;
  FlowTrace tr;
  FlowState s = init;
  tr.samples.push_back(sample_state(a, s));
  FlowSample last = tr.samples.back();
  auto& dg = tr.diagnostics;
  dg.min_dt = p.dt;
  double dt = p.dt;
  long since_record = 0;
  const double t_end = init.t + p.T;
  try {
    while (s.t < t_end - 1e-12 * std::max(1.0, std::abs(t_end))) {
      if (dg.accepted_steps >= p.max_steps) throw StepUnderflow("max_steps reached at t = " + std::to_string(s.t));
      const double h = std::min(dt, t_end - s.t);
      const StepResult st = flow_step_adaptive(a, s, h, p);
      dg.rejected_steps += st.rejected;
      ++dg.accepted_steps;
      dg.min_dt = std::min(dg.min_dt, st.dt_used);
      s = st.state;
      if (t_end - s.t < 1e-12 * std::max(1.0, std::abs(t_end))) s.t = t_end;
      dt = h < dt ? dt : st.dt_next;
      if (p.monitor_positivity && positive && !is_positive_definite(a.eta() * s.G))
        throw PositivityLost("<G., .> is no longer positive definite at t = " + std::to_string(s.t));

      FlowSample cur;
      cur.t = s.t;
      cur.GR = scalar_polynomial(a, s.G, Vector::Zero(a.n()));
      cur.normRc2 = norm2_G(a, ricci_closed_form(a, s.G));
      const double slope = (cur.GR - last.GR) / (cur.t - last.t);
      const double avg = 0.5 * (cur.normRc2 + last.normRc2);
      if (avg > 1e-6) dg.monotonicity_defect = std::max(dg.monotonicity_defect, std::abs(slope - avg) / (1.0 + avg));
      const double inc = (cur.GR - last.GR) / (1.0 + std::abs(last.GR));
      if (dg.accepted_steps == 1 || inc < dg.worst_increment) dg.worst_increment = inc;
      if (cur.GR < last.GR - 1e-8 * (1.0 + std::abs(last.GR))) dg.gr_nondecreasing = false;
      dg.max_involution_residual = std::max(dg.max_involution_residual, involution_residual(s.G));
      const Matrix etaG = a.eta() * s.G;
      dg.max_symmetry_residual = std::max(dg.max_symmetry_residual, max_abs(etaG - etaG.transpose()));

      last = cur;
      if (++since_record >= p.record_every || s.t >= t_end) {
        tr.samples.push_back(sample_state(a, s));
        since_record = 0;
      }
    }
    tr.completed = true;
  } catch (const NumericalError& e) {
    tr.status = e.kind();
    tr.message = e.what();
    tr.error = std::current_exception();
    try {
      if (tr.samples.back().t < s.t) tr.samples.push_back(sample_state(a, s));
    } catch (const std::exception&) {
    }
  }
  tr.final_state = s;
  return tr;
}

/// Runs the flow and rethrows the error that stopped it.
inline FlowTrace run_flow(const QuadraticLieAlgebra& a, const FlowState& init, const FlowParams& p) {
  FlowTrace tr = try_run_flow(a, init, p);
  if (!tr.completed) std::rethrow_exception(tr.error);
  return tr;
}

}  // namespace grf
