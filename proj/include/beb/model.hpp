#pragma once

#include <beb/common.hpp>

#include <cmath>
#include <functional>
#include <utility>

namespace beb {

// ---------------------------------------------------------------------------
// Model representation
// ---------------------------------------------------------------------------

/// Coefficients of the quadratic terms epsilon*(q1*x1*x2 + q2*x1*x3) added to
/// the first component of the vector field. Zero epsilon gives a linear flow.
struct NonlinearTerms {
  double epsilon = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;

  bool active() const { return epsilon != 0.0; }
};

/// An impacting hybrid system
///
///   xdot = F(x; mu, eta)           while  H(x) = C^T x > 0,
///   x   -> x - B * v(x)            when   H(x) = 0, v(x) = C^T F < 0,
///
/// in the series form
///
///   F(x; mu) = A x + M mu + mu A1 x + eps (q1 x1 x2 + q2 x1 x3) e1 + M1 mu^2.
///
/// The second parameter eta acts through `eta_action`, which rewrites the
/// matrices of a copy (for the built-in families it moves one entry of B).
/// Models may instead supply `field_override` / `jacobian_override` for a
/// vector field outside the series form; the blow-up evaluators below then
/// refuse mu = 0 because they can no longer divide out the scaling exactly.
struct HybridModel {
  int n = 0;
  Mat A;   // linear part at mu = 0
  Mat A1;  // O(mu) correction to the linear part
  Vec M;   // O(mu) constant forcing
  Vec M1;  // O(mu^2) constant forcing
  Vec B;   // impact direction; reset is x -> x - B v(x)
  Vec C;   // surface normal, H(x) = C^T x
  NonlinearTerms nonlinear;

  /// False for fixtures that supply only (A, B, C): equilibrium placement and
  /// two-parameter continuation are unavailable, boundary/cycle analysis at
  /// fixed parameters still works.
  bool has_drift = true;

  std::function<Vec(const Vec&, const ParamPoint&)> field_override;
  std::function<Mat(const Vec&, const ParamPoint&)> jacobian_override;

  /// Applies the second unfolding parameter to a copy of the model. The hook
  /// recomputes the affected entries from values captured at construction, so
  /// applying it twice does not compound.
  std::function<void(HybridModel&, double)> eta_action;

  /// Optional state-dependent reset direction W(x); the reset is then
  /// x -> x + W(x) v(x). Defaults to the constant -B. None of the built-in
  /// families use this, and the blow-up evaluators always assume constant -B.
  std::function<Vec(const Vec&, const ParamPoint&)> reset_direction_override;

  bool series_form() const { return !field_override; }

  /// W(x), the direction along which the reset translates the state.
  Vec reset_direction(const Vec& x, const ParamPoint& p) const {
    return reset_direction_override ? reset_direction_override(x, p) : Vec(-B);
  }

  /// Copy of the model with eta folded into the matrices.
  HybridModel at_eta(double eta) const {
    HybridModel out = *this;
    if (eta != 0.0) {
      if (!eta_action) throw InputError("at_eta: model has no eta_action hook");
      eta_action(out, eta);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

inline void check_dim(const HybridModel& m, const Vec& x, const char* who) {
  if (x.size() != m.n)
    throw InputError(std::string(who) + ": state has size " + std::to_string(x.size()) +
                     ", model dimension is " + std::to_string(m.n));
}

/// F(x; mu, eta). eta is ignored here: it must already be folded into the
/// matrices via at_eta, keeping evaluation free of hidden parameter state.
inline Vec eval_vector_field(const HybridModel& m, const Vec& x, const ParamPoint& p) {
  check_dim(m, x, "eval_vector_field");
  if (m.field_override) return m.field_override(x, p);
  Vec f = m.A * x;
  if (m.has_drift) {
    f += p.mu * (m.M + m.A1 * x) + (p.mu * p.mu) * m.M1;
  }
  if (m.nonlinear.active()) {
    if (m.n < 3) throw InputError("eval_vector_field: quadratic terms need n >= 3");
    f(0) += p.mu * m.nonlinear.epsilon *
            (m.nonlinear.q1 * x(0) * x(1) + m.nonlinear.q2 * x(0) * x(2));
  }
  return f;
}

/// DF(x; mu, eta). Analytic for the series form; central differences with
/// step 1e-6 * max(1, |x|) when only a field override is present.
inline Mat field_jacobian(const HybridModel& m, const Vec& x, const ParamPoint& p) {
  check_dim(m, x, "field_jacobian");
  if (m.jacobian_override) return m.jacobian_override(x, p);
  if (m.field_override) {
    const double h = 1e-6 * std::max(1.0, x.norm());
    Mat J(m.n, m.n);
    Vec xp = x, xm = x;
    for (int j = 0; j < m.n; ++j) {
      xp(j) += h;
      xm(j) -= h;
      J.col(j) = (m.field_override(xp, p) - m.field_override(xm, p)) / (2.0 * h);
      xp(j) = x(j);
      xm(j) = x(j);
    }
    return J;
  }
  Mat J = m.A;
  if (m.has_drift) J += p.mu * m.A1;
  if (m.nonlinear.active()) {
    const double e = p.mu * m.nonlinear.epsilon;
    J(0, 0) += e * (m.nonlinear.q1 * x(1) + m.nonlinear.q2 * x(2));
    J(0, 1) += e * m.nonlinear.q1 * x(0);
    J(0, 2) += e * m.nonlinear.q2 * x(0);
  }
  return J;
}

/// How the flow meets the switching surface at a point of Sigma.
enum class BoundaryClass {
  incoming,             // v < 0: transversal arrival, reset fires
  outgoing,             // v > 0: transversal departure
  grazing_positive_a,   // v = 0, a > 0: tangential touch, flow curves away
  sticking,             // v = 0, a <= 0: flow presses onto the surface
};

inline const char* to_string(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::incoming: return "incoming";
    case BoundaryClass::outgoing: return "outgoing";
    case BoundaryClass::grazing_positive_a: return "grazing_positive_a";
    case BoundaryClass::sticking: return "sticking";
  }
  return "?";
}

struct LieData {
  double H;  // C^T x
  double v;  // C^T F, normal velocity
  double a;  // grad(v)^T F, normal acceleration
  Vec grad_v;
  BoundaryClass cls;
};

/// H, v = C^T F, a = (DF^T C)^T F and the induced boundary classification.
inline LieData lie_derivatives(const HybridModel& m, const Vec& x, const ParamPoint& p,
                               double v_graze = defaults::v_graze) {
  LieData out;
  const Vec F = eval_vector_field(m, x, p);
  out.H = m.C.dot(x);
  out.v = m.C.dot(F);
  out.grad_v = field_jacobian(m, x, p).transpose() * m.C;
  out.a = out.grad_v.dot(F);
  if (std::abs(out.v) <= v_graze) {
    out.cls = out.a > 0.0 ? BoundaryClass::grazing_positive_a : BoundaryClass::sticking;
  } else {
    out.cls = out.v > 0.0 ? BoundaryClass::outgoing : BoundaryClass::incoming;
  }
  return out;
}

/// Impact reset R(x) = x - B v(x). Requires x on the surface and v(x) <= 0
/// up to the grazing tolerance; resetting an outgoing point is a logic error
/// upstream and is rejected rather than absorbed.
inline Vec apply_reset(const HybridModel& m, const Vec& x, const ParamPoint& p,
                       double boundary_tol = defaults::boundary_tol,
                       double v_graze = defaults::v_graze) {
  check_dim(m, x, "apply_reset");
  const LieData lie = lie_derivatives(m, x, p, v_graze);
  if (!on_surface(lie.H, x, boundary_tol))
    throw InputError("apply_reset: point is off the switching surface, H = " +
                     std::to_string(lie.H));
  if (lie.v > v_graze)
    throw InputError("apply_reset: normal velocity is positive (outgoing), v = " +
                     std::to_string(lie.v));
  return x + m.reset_direction(x, p) * lie.v;
}

/// Vector field of the constrained sliding motion on the sticking set,
///   F_s = (I - W grad(v)^T / (grad(v)^T W)) F,  W = -B.
/// Defined wherever grad(v)^T B is bounded away from zero.
inline Vec sticking_field(const HybridModel& m, const Vec& x, const ParamPoint& p) {
  const Vec F = eval_vector_field(m, x, p);
  const Vec gv = field_jacobian(m, x, p).transpose() * m.C;
  const Vec W = m.reset_direction(x, p);
  const double gvW = gv.dot(W);
  if (std::abs(gvW) < 1e-14)
    throw NumericalError("sticking_field: grad(v)^T W vanishes, constraint is degenerate");
  return F - W * (gv.dot(F) / gvW);
}

// ---------------------------------------------------------------------------
// Blown-up system
// ---------------------------------------------------------------------------
// Rescaling x = mu y turns the series form into
//
//   ydot = G(y; mu) = A y + M + mu (A1 y + eps (q1 y1 y2 + q2 y1 y3) e1 + M1),
//
// which is polynomial in mu and well defined at (and beyond) mu = 0. The
// reset becomes y -> y - B C^T G(y; mu), exact for the series form.

inline Vec blowup_field(const HybridModel& m, const Vec& y, const ParamPoint& p) {
  check_dim(m, y, "blowup_field");
  if (!m.series_form()) {
    if (p.mu == 0.0)
      throw InputError("blowup_field: override models cannot be blown up at mu = 0");
    return eval_vector_field(m, Vec(p.mu * y), p) / p.mu;
  }
  if (!m.has_drift)
    throw InputError("blowup_field: model has no forcing terms (M absent)");
  Vec g = m.A * y + m.M + p.mu * (m.A1 * y + m.M1);
  if (m.nonlinear.active())
    g(0) += p.mu * m.nonlinear.epsilon *
            (m.nonlinear.q1 * y(0) * y(1) + m.nonlinear.q2 * y(0) * y(2));
  return g;
}

inline Mat blowup_jacobian(const HybridModel& m, const Vec& y, const ParamPoint& p) {
  check_dim(m, y, "blowup_jacobian");
  if (!m.series_form()) {
    if (p.mu == 0.0)
      throw InputError("blowup_jacobian: override models cannot be blown up at mu = 0");
    return field_jacobian(m, Vec(p.mu * y), p);
  }
  Mat J = m.A + p.mu * m.A1;
  if (m.nonlinear.active()) {
    const double e = p.mu * m.nonlinear.epsilon;
    J(0, 0) += e * (m.nonlinear.q1 * y(1) + m.nonlinear.q2 * y(2));
    J(0, 1) += e * m.nonlinear.q1 * y(0);
    J(0, 2) += e * m.nonlinear.q2 * y(0);
  }
  return J;
}

inline double blowup_velocity(const HybridModel& m, const Vec& y, const ParamPoint& p) {
  return m.C.dot(blowup_field(m, y, p));
}

inline Vec blowup_reset(const HybridModel& m, const Vec& y, const ParamPoint& p) {
  return y - m.B * blowup_velocity(m, y, p);
}

inline Mat blowup_reset_jacobian(const HybridModel& m, const Vec& y, const ParamPoint& p) {
  return Mat::Identity(m.n, m.n) -
         m.B * (blowup_jacobian(m, y, p).transpose() * m.C).transpose();
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass;
  double value;  // the quantity the check inspected, for reporting
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool pass = true;

  void add(std::string name, bool ok, double value, std::string detail = {}) {
    pass = pass && ok;
    checks.push_back({std::move(name), ok, value, std::move(detail)});
  }
};

/// Structural well-posedness: dimensions agree, C is a genuine normal, the
/// reset lands back on the surface (C^T B = 0), A is invertible, C^T A B > 0,
/// and the restitution ratio -1 - grad(v)^T W exceeds 0, i.e. grad(v)^T B > 1,
/// sampled over low-velocity boundary points for nonlinear fields.
inline ValidationReport validate_model(const HybridModel& m) {
  ValidationReport rep;
  const bool dims_ok = m.n > 0 && m.A.rows() == m.n && m.A.cols() == m.n &&
                       m.B.size() == m.n && m.C.size() == m.n &&
                       (!m.nonlinear.active() || m.n >= 3) &&
                       (!m.has_drift || (m.M.size() == m.n && m.A1.rows() == m.n &&
                                         m.A1.cols() == m.n && m.M1.size() == m.n));
  rep.add("dimensions", dims_ok, double(m.n));
  if (!dims_ok) return rep;

  rep.add("normal_nonzero", m.C.norm() > 0.0, m.C.norm());

  const double ctb = m.C.dot(m.B);
  rep.add("reset_tangent_to_surface", std::abs(ctb) <= 1e-12 * std::max(1.0, m.B.norm() * m.C.norm()),
          ctb, "C^T B must vanish so resets stay on H = 0");

  Eigen::JacobiSVD<Mat> svd(m.A);
  const double smin = svd.singularValues()(m.n - 1);
  const double smax = svd.singularValues()(0);
  rep.add("A_invertible", smin > 1e-12 * smax, smin / smax, "smallest/largest singular value");

  const double ctab = m.C.dot(m.A * m.B);
  rep.add("ctab_positive", ctab > 0.0, ctab,
          "C^T A B > 0: impacts lose energy and the grazing set is attracting");

  // restitution r = -1 - grad(v)^T W = grad(v)^T B - 1 must lie in (0, ...)
  // near the origin of the surface; for the series form at mu = 0 this is
  // exactly ctab - 1, for nonlinear terms sample a few boundary points.
  double worst = ctab - 1.0;
  if (m.nonlinear.active()) {
    const ParamPoint p{0.01, 0.0};
    for (double s : {-1.0, -0.1, 0.1, 1.0}) {
      Vec x = Vec::Zero(m.n);
      x(1) = s;
      x(2) = -s;
      x -= m.C * (m.C.dot(x) / m.C.squaredNorm());
      const Vec gv = field_jacobian(m, x, p).transpose() * m.C;
      worst = std::min(worst, gv.dot(m.B) - 1.0);
    }
  }
  rep.add("restitution_positive", worst > 0.0, worst, "grad(v)^T B - 1 over sampled boundary points");
  return rep;
}

}  // namespace beb
