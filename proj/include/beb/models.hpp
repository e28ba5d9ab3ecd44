#pragma once

#include <beb/model.hpp>

#include <map>
#include <string>

namespace beb {

// ---------------------------------------------------------------------------
// Three-dimensional family with a saddle-node codimension-two point
// ---------------------------------------------------------------------------

/// Builds the 3d family whose boundary-equilibrium bifurcation spawns a cycle
/// with a Floquet multiplier passing through +1 as b2 varies.
///
///   A  = [ t 1 0 ; m 0 1 ; d 0 0 ]   (t, m, d from the prescribed spectrum)
///   B  = (0, b2, b3),  C = e1,  M = -e3,  A1 = -e1 e1^T,
///
/// plus the optional quadratic terms eps (q1 x1 x2 + q2 x1 x3) e1. The second
/// unfolding parameter shifts b2, so at_eta(eta) has B = (0, b2 + eta, b3).
///
/// lambda1 and lambda2 must be a conjugate pair (or both real); lambda3 real.
inline HybridModel build_sn_example(Complex lambda1, Complex lambda2, Complex lambda3,
                                    double b2 = 1.85, double b3 = 1.6,
                                    double epsilon = 0.0, double q1 = 0.0, double q2 = 0.0) {
  const Complex t = lambda1 + lambda2 + lambda3;
  const Complex mm = -(lambda1 * lambda2 + lambda1 * lambda3 + lambda2 * lambda3);
  const Complex dd = lambda1 * lambda2 * lambda3;
  const double imag_leak =
      std::abs(t.imag()) + std::abs(mm.imag()) + std::abs(dd.imag());
  if (imag_leak > 1e-12)
    throw InputError("build_sn_example: spectrum is not closed under conjugation");

  HybridModel m;
  m.n = 3;
  m.A = Mat{{t.real(), 1.0, 0.0}, {mm.real(), 0.0, 1.0}, {dd.real(), 0.0, 0.0}};
  m.A1 = Mat::Zero(3, 3);
  m.A1(0, 0) = -1.0;
  m.M = Vec{{0.0, 0.0, -1.0}};
  m.M1 = Vec::Zero(3);
  m.B = Vec{{0.0, b2, b3}};
  m.C = Vec{{1.0, 0.0, 0.0}};
  m.nonlinear = {epsilon, q1, q2};
  m.eta_action = [b2, b3](HybridModel& target, double eta) {
    target.B = Vec{{0.0, b2 + eta, b3}};
  };
  return m;
}

/// Same family with the default spectrum {-0.1 +- 0.2i, -0.5}.
inline HybridModel build_sn_example(double b2 = 1.85, double b3 = 1.6, double epsilon = 0.0,
                                    double q1 = 0.0, double q2 = 0.0) {
  return build_sn_example({-0.1, 0.2}, {-0.1, -0.2}, {-0.5, 0.0}, b2, b3, epsilon, q1, q2);
}

// ---------------------------------------------------------------------------
// Three-dimensional family with a period-doubling codimension-two point
// ---------------------------------------------------------------------------

/// Builds the 3d family whose bifurcating cycle acquires a Floquet multiplier
/// -1 at an isolated restitution value r0 (about 0.66691 for the defaults).
///
///   A  = [ rho omega 0 ; -omega rho 1 ; 0 0 -lambda ]
///   B  = (0, 1 + r, -sigma),  C = e1,  M = e3,  A1 = e3 e3^T.
///
/// The second unfolding parameter shifts sigma: at_eta(eta) rebuilds
/// B = (0, 1 + r, -(sigma + eta)) while r stays frozen at its codimension-two
/// value, so (mu, eta) unfolds the degenerate cycle.
inline HybridModel build_pd_example(double rho = 0.1, double omega = 1.0, double lambda = 0.3,
                                    double r = 0.66691, double sigma = 0.8,
                                    double epsilon = 0.0, double q1 = 0.0, double q2 = 0.0) {
  HybridModel m;
  m.n = 3;
  m.A = Mat{{rho, omega, 0.0}, {-omega, rho, 1.0}, {0.0, 0.0, -lambda}};
  m.A1 = Mat::Zero(3, 3);
  m.A1(2, 2) = 1.0;
  m.M = Vec{{0.0, 0.0, 1.0}};
  m.M1 = Vec::Zero(3);
  m.B = Vec{{0.0, 1.0 + r, -sigma}};
  m.C = Vec{{1.0, 0.0, 0.0}};
  m.nonlinear = {epsilon, q1, q2};
  m.eta_action = [r, sigma](HybridModel& target, double eta) {
    target.B = Vec{{0.0, 1.0 + r, -(sigma + eta)}};
  };
  return m;
}

// ---------------------------------------------------------------------------
// Eight-dimensional airfoil fixture
// ---------------------------------------------------------------------------

/// Frozen linearization of a three-degree-of-freedom airfoil with flap
/// freeplay, taken at its boundary-equilibrium point: states
/// (heave, pitch, flap, their rates, two aerodynamic lag states), switching
/// surface at flap angle x3 = 0, normal velocity v(x) = x6, restitution 0.72.
/// Only (A, B, C) are known, so drift-dependent operations (equilibrium
/// placement, two-parameter continuation) reject this model.
inline HybridModel airfoil_fixture() {
  HybridModel m;
  m.n = 8;
  m.A = Mat{
      {0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0},
      {0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0},
      {0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0},
      {-2.9340e+03, 2.3800e+03, -31.8848, -4.1409, -1.7578, -0.2147, -118.8655, -29.0256},
      {2.5143e+03, -1.4569e+04, -126.9591, 3.3583, -8.2454, -1.0773, 157.7863, 38.5297},
      {-1.5787e+03, 3.9373e+04, 119.8092, -3.2826, 17.0083, -1.9570, -328.2203, -80.1478},
      {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0},
      {0.0, 64.8330, 35.6462, 1.0, 0.9000, 0.1487, -57.3753, -22.3998}};
  const double r = 0.72;
  m.B = (1.0 + r) * Vec{{0.0, 0.0, 0.0, 0.0030, -0.0774, 1.0, 0.0, 0.0}};
  m.C = Vec::Zero(8);
  m.C(2) = 1.0;
  m.has_drift = false;
  m.A1 = Mat::Zero(8, 8);
  m.M = Vec::Zero(8);
  m.M1 = Vec::Zero(8);
  return m;
}

// ---------------------------------------------------------------------------
// Named lookup used by the CLI and the model file loader
// ---------------------------------------------------------------------------

/// Builds "sn3d", "pd3d", or "airfoil_fixture" with named parameter
/// overrides. Unknown names and unknown or unsupported parameters are
/// rejected so typos cannot silently fall back to defaults.
inline HybridModel build_builtin(const std::string& name,
                                 const std::map<std::string, double>& params = {}) {
  auto take = [&params](const char* key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  auto reject_unknown = [&params](std::initializer_list<const char*> known,
                                  const std::string& who) {
    for (const auto& [key, value] : params) {
      (void)value;
      bool ok = false;
      for (const char* k : known)
        if (key == k) ok = true;
      if (!ok) throw InputError("builtin " + who + ": unknown parameter '" + key + "'");
    }
  };
  if (name == "sn3d") {
    reject_unknown({"lambda_re", "lambda_im", "lambda3", "b2", "b3", "epsilon", "q1", "q2"},
                   name);
    const double re = take("lambda_re", -0.1);
    const double im = take("lambda_im", 0.2);
    return build_sn_example({re, im}, {re, -im}, {take("lambda3", -0.5), 0.0},
                            take("b2", 1.85), take("b3", 1.6), take("epsilon", 0.0),
                            take("q1", 0.0), take("q2", 0.0));
  }
  if (name == "pd3d") {
    reject_unknown({"rho", "omega", "lambda", "r", "sigma", "epsilon", "q1", "q2"}, name);
    return build_pd_example(take("rho", 0.1), take("omega", 1.0), take("lambda", 0.3),
                            take("r", 0.66691), take("sigma", 0.8), take("epsilon", 0.0),
                            take("q1", 0.0), take("q2", 0.0));
  }
  if (name == "airfoil_fixture") {
    reject_unknown({}, name);
    return airfoil_fixture();
  }
  throw InputError("unknown builtin model '" + name +
                   "' (expected sn3d, pd3d, or airfoil_fixture)");
}

}  // namespace beb
