#pragma once

/// Reduction of a parameterized fixed point to the coefficients of its
/// one-dimensional restricted map near a critical multiplier.
///
/// Given a family u -> P(u; mu, eta) with a fixed point u_hat at (0,0) whose
/// Jacobian carries a simple multiplier at +1 (saddle-node) or -1 (period
/// doubling), the restriction to the centre manifold reads
///
///   z -> z + a mu + b eta + c z^2 + d mu z + e eta z + m mu^2 + n eta^2
///   z -> -z + a mu + b eta + c z^2 + d mu z + e eta z + f z^3
///
/// in the two cases. Everything here is computed from map evaluations alone:
/// directional finite differences with a halving step schedule, plus the
/// centre-manifold corrections that enter d, e and f through the solution of
/// bordered linear systems. No closed-form model structure is assumed, so the
/// same code serves both the hybrid-system Poincare maps and synthetic test
/// maps with planted coefficients.

#include <beb/poincare.hpp>

#include <map>
#include <string>
#include <vector>

namespace beb {

enum class UnfoldingType { saddle_node, period_doubling };

inline const char* to_string(UnfoldingType t) {
  return t == UnfoldingType::saddle_node ? "saddle-node" : "period-doubling";
}

inline double critical_multiplier(UnfoldingType t) {
  return t == UnfoldingType::saddle_node ? 1.0 : -1.0;
}

/// Two-parameter family of maps on R^d.
struct MapFamily {
  int dim = 0;
  std::function<Vec(const Vec&, double, double)> eval;  // (u, mu, eta)
};

/// Right/left eigenvector pair at the multiplier nearest a real target.
///
/// v has unit 2-norm with its largest-magnitude entry positive and w is scaled
/// so that w^T v = 1. The convention pins both sign choices, which makes
/// coefficient sets reproducible; flipping (v, w) jointly would flip the signs
/// of a, b, c, m, n while leaving d, e, f and every slope unchanged.
struct CriticalPair {
  Complex lambda;
  Vec v, w;
  double imag_leak = 0;  // largest imaginary part discarded on the way
};

inline CriticalPair critical_pair(const Mat& J, double lambda_target) {
  const int d = int(J.rows());
  CriticalPair out;

  const Eigen::EigenSolver<Mat> right(J);
  int pick = 0;
  for (int i = 1; i < d; ++i)
    if (std::abs(right.eigenvalues()(i) - lambda_target) <
        std::abs(right.eigenvalues()(pick) - lambda_target))
      pick = i;
  out.lambda = right.eigenvalues()(pick);
  out.imag_leak = std::abs(out.lambda.imag());

  Vec v = right.eigenvectors().col(pick).real();
  out.imag_leak =
      std::max(out.imag_leak, right.eigenvectors().col(pick).imag().cwiseAbs().maxCoeff());
  v.normalize();
  int arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;

  const Eigen::EigenSolver<Mat> left(J.transpose());
  pick = 0;
  for (int i = 1; i < d; ++i)
    if (std::abs(left.eigenvalues()(i) - out.lambda) <
        std::abs(left.eigenvalues()(pick) - out.lambda))
      pick = i;
  Vec w = left.eigenvectors().col(pick).real();
  out.imag_leak =
      std::max(out.imag_leak, left.eigenvectors().col(pick).imag().cwiseAbs().maxCoeff());

  const double s = w.dot(v);
  if (std::abs(s) < 1e-12 * w.norm())
    throw NumericalError("critical_pair: left and right eigenvectors are orthogonal");
  out.v = v;
  out.w = w / s;
  return out;
}

/// Step schedule for the finite-difference stencils: h0 halves towards h_min,
/// and each derived quantity keeps the value from the step pair with the
/// smallest successive relative difference. The loop stops early once every
/// tracked quantity has met `target`.
struct StencilOptions {
  double h0 = 1e-2;
  double h_min = 1e-9;
  double target = 1e-6;
};

namespace detail {

struct BestScalar {
  double value = std::numeric_limits<double>::quiet_NaN();
  double tol = std::numeric_limits<double>::infinity();
  double prev = 0;
  bool seen = false;

  void update(double val) {
    if (!seen) {
      value = val;
    } else {
      const double t = std::abs(val - prev) / std::max(1.0, std::abs(val));
      if (t < tol) {
        tol = t;
        value = val;
      }
    }
    prev = val;
    seen = true;
  }
};

struct BestVec {
  Vec value, prev;
  double tol = std::numeric_limits<double>::infinity();
  bool seen = false;

  void update(const Vec& val) {
    if (!seen) {
      value = val;
    } else {
      const double t = (val - prev).norm() / std::max(1.0, val.norm());
      if (t < tol) {
        tol = t;
        value = val;
      }
    }
    prev = val;
    seen = true;
  }
};

}  // namespace detail

/// w-projected bilinear form of the second state derivative, w^T D^2P (p, q),
/// through the polarization identity B(p,q) = [G(p+q) - G(p-q)]/4 with the
/// even quadratic-form stencil G(z) = w^T [P(u+hz) + P(u-hz) - 2 P(u)]/h^2.
/// Both stencils are symmetric in their probe, so the value inherits the
/// exact sign covariance of the eigenvector convention. Arguments are
/// normalized before probing and the bilinear scaling restored afterwards.
inline double projected_bilinear(const MapFamily& F, const Vec& u, const Vec& P0,
                                 const Vec& w, Vec p, Vec q,
                                 const StencilOptions& opt = {}) {
  const double sp = p.norm(), sq = q.norm();
  if (sp == 0.0 || sq == 0.0) return 0.0;
  p /= sp;
  q /= sq;
  const Vec zp = p + q, zm = p - q;
  auto G = [&](const Vec& z, double h) {
    if (z.norm() < 1e-14) return 0.0;
    return w.dot(F.eval(u + h * z, 0, 0) + F.eval(u - h * z, 0, 0) - 2 * P0) / (h * h);
  };
  detail::BestScalar best;
  for (double h = opt.h0; h > opt.h_min; h /= 2) {
    best.update((G(zp, h) - G(zm, h)) / 4.0);
    if (best.tol < opt.target) break;
  }
  return sp * sq * best.value;
}

/// Full-vector variant of the same polarization, D^2P (p, q) as a vector.
inline Vec bilinear_vector(const MapFamily& F, const Vec& u, const Vec& P0, Vec p, Vec q,
                           const StencilOptions& opt = {}) {
  const double sp = p.norm(), sq = q.norm();
  if (sp == 0.0 || sq == 0.0) return Vec::Zero(u.size());
  p /= sp;
  q /= sq;
  const Vec zp = p + q, zm = p - q;
  auto G = [&](const Vec& z, double h) -> Vec {
    if (z.norm() < 1e-14) return Vec::Zero(u.size());
    return (F.eval(u + h * z, 0, 0) + F.eval(u - h * z, 0, 0) - 2 * P0) / (h * h);
  };
  detail::BestVec best;
  for (double h = opt.h0; h > opt.h_min; h /= 2) {
    best.update(Vec((G(zp, h) - G(zm, h)) / 4.0));
    if (best.tol < opt.target) break;
  }
  return sp * sq * best.value;
}

/// Solve (I - J) x = rhs as a minimum-norm least-squares problem. At a
/// saddle-node I - J is singular with kernel along v, so solutions are only
/// defined up to multiples of v; the minimum-norm representative fixes that
/// gauge as v^T x = 0. The right-hand sides produced by the reduction are
/// always in range when the critical multiplier is simple, and the residual
/// check rejects anything that is not rather than silently projecting it out.
inline Vec cm_solve(const Mat& J, const Vec& rhs, double range_tol = 1e-8) {
  const int d = int(J.rows());
  const Mat ImJ = Mat::Identity(d, d) - J;
  const Vec x = ImJ.completeOrthogonalDecomposition().solve(rhs);
  const double residual = (ImJ * x - rhs).norm();
  if (residual > range_tol * std::max(1.0, rhs.norm()))
    throw NumericalError(
        "cm_solve: right-hand side is outside the range of I - J, residual " +
        std::to_string(residual));
  return x;
}

/// Coefficients of the restricted one-dimensional map, with diagnostics.
struct CoefficientSet {
  UnfoldingType type = UnfoldingType::saddle_node;
  double lambda0 = 1;
  Complex lambda_fp;  // multiplier the Jacobian actually carries
  Vec v, w;

  double a = 0, b = 0, c = 0, d = 0, e = 0, m = 0, n = 0;
  double f = std::numeric_limits<double>::quiet_NaN();

  /// Mixed-derivative parts of d and e before the centre-manifold correction.
  double d_mixed = 0, e_mixed = 0;

  /// Cubic coefficient evaluated with the left eigenvector substituted into
  /// the bilinear slots, plus the difference between the two closed forms of
  /// the linear-in-parameter manifold coefficient. Both quantify variant
  /// formulas that circulate for the period-doubling case; the primary f
  /// comes from the homological route.
  double f_printed_variant = std::numeric_limits<double>::quiet_NaN();
  double w01_alt_gap = std::numeric_limits<double>::quiet_NaN();

  /// d eta / d mu of the critical curve at the origin: -a/b for the
  /// saddle-node, -(a c + d)/(b c + e) for period doubling.
  double curve_slope = std::numeric_limits<double>::quiet_NaN();

  /// Unfolding genericity: the bifurcation curve meets the eta axis
  /// transversally, and the leading nonlinear term does not degenerate.
  bool transversal = false;
  bool nondegenerate = false;

  double fixed_point_residual = 0;
  double lambda_along_v = 0;  // first derivative of w^T P along v, should be lambda0
  std::map<std::string, double> stencil_tol;
  std::vector<std::string> warnings;
};

/// Compute the restricted-map coefficients of `F` at the fixed point `u_hat`.
/// The Jacobian may be supplied when a carefully converged one is already
/// available; otherwise it is rebuilt by central differences with the same
/// halving schedule.
inline CoefficientSet map_coefficients(const MapFamily& F, const Vec& u_hat,
                                       UnfoldingType type, const StencilOptions& opt = {},
                                       const Mat* jacobian = nullptr) {
  const int d = F.dim;
  const double lambda0 = critical_multiplier(type);
  const bool pd = type == UnfoldingType::period_doubling;

  CoefficientSet out;
  out.type = type;
  out.lambda0 = lambda0;

  const Vec P0 = F.eval(u_hat, 0, 0);
  out.fixed_point_residual = (P0 - u_hat).norm();

  Mat J(d, d);
  if (jacobian) {
    J = *jacobian;
  } else {
    for (int j = 0; j < d; ++j) {
      detail::BestVec col;
      for (double h = opt.h0; h > opt.h_min; h /= 2) {
        Vec step = Vec::Zero(d);
        step(j) = h;
        col.update(Vec((F.eval(u_hat + step, 0, 0) - F.eval(u_hat - step, 0, 0)) / (2 * h)));
        if (col.tol < opt.target) break;
      }
      J.col(j) = col.value;
    }
  }

  const CriticalPair cp = critical_pair(J, lambda0);
  out.v = cp.v;
  out.w = cp.w;
  out.lambda_fp = cp.lambda;
  if (std::abs(cp.lambda - lambda0) > 0.05)
    out.warnings.push_back("critical multiplier " + std::to_string(cp.lambda.real()) +
                           " is far from its target value");
  const Vec& v = cp.v;
  const Vec& w = cp.w;

  detail::BestScalar a_, b_, c_, m_, n_, dmix_, emix_, r3_, lamv_;
  detail::BestVec pmu_, peta_, bvv_;
  for (double h = opt.h0; h > opt.h_min; h /= 2) {
    const Vec Pmu_p = F.eval(u_hat, h, 0), Pmu_m = F.eval(u_hat, -h, 0);
    const Vec Peta_p = F.eval(u_hat, 0, h), Peta_m = F.eval(u_hat, 0, -h);
    const Vec Pv_p = F.eval(u_hat + h * v, 0, 0), Pv_m = F.eval(u_hat - h * v, 0, 0);

    a_.update(w.dot(Pmu_p - Pmu_m) / (2 * h));
    b_.update(w.dot(Peta_p - Peta_m) / (2 * h));
    m_.update(0.5 * w.dot(Pmu_p + Pmu_m - 2 * P0) / (h * h));
    n_.update(0.5 * w.dot(Peta_p + Peta_m - 2 * P0) / (h * h));
    c_.update(0.5 * w.dot(Pv_p + Pv_m - 2 * P0) / (h * h));
    lamv_.update(w.dot(Pv_p - Pv_m) / (2 * h));
    pmu_.update(Vec((Pmu_p - Pmu_m) / (2 * h)));
    peta_.update(Vec((Peta_p - Peta_m) / (2 * h)));
    bvv_.update(Vec((Pv_p + Pv_m - 2 * P0) / (h * h)));

    dmix_.update(w.dot(F.eval(u_hat + h * v, h, 0) - F.eval(u_hat - h * v, h, 0) -
                       F.eval(u_hat + h * v, -h, 0) + F.eval(u_hat - h * v, -h, 0)) /
                 (4 * h * h));
    emix_.update(w.dot(F.eval(u_hat + h * v, 0, h) - F.eval(u_hat - h * v, 0, h) -
                       F.eval(u_hat + h * v, 0, -h) + F.eval(u_hat - h * v, 0, -h)) /
                 (4 * h * h));
    if (pd)
      r3_.update(w.dot(F.eval(u_hat + 2 * h * v, 0, 0) - F.eval(u_hat - 2 * h * v, 0, 0) -
                       2 * Pv_p + 2 * Pv_m) /
                 (2 * h * h * h) / 6.0);

    const double worst =
        std::max({a_.tol, b_.tol, c_.tol, m_.tol, n_.tol, dmix_.tol, emix_.tol,
                  pd ? r3_.tol : 0.0, pmu_.tol, peta_.tol, bvv_.tol});
    if (worst < opt.target) break;
  }

  out.a = a_.value;
  out.b = b_.value;
  out.c = c_.value;
  out.m = m_.value;
  out.n = n_.value;
  out.d_mixed = dmix_.value;
  out.e_mixed = emix_.value;
  out.lambda_along_v = lamv_.value;
  out.stencil_tol = {{"a", a_.tol},     {"b", b_.tol},         {"c", c_.tol},
                     {"m", m_.tol},     {"n", n_.tol},         {"d_mixed", dmix_.tol},
                     {"e_mixed", emix_.tol}, {"lambda_along_v", lamv_.tol}};

  const Vec s_mu = cm_solve(J, Vec(pmu_.value - out.a * v));
  const Vec s_eta = cm_solve(J, Vec(peta_.value - out.b * v));
  out.d = out.d_mixed + projected_bilinear(F, u_hat, P0, w, v, s_mu, opt);
  out.e = out.e_mixed + projected_bilinear(F, u_hat, P0, w, v, s_eta, opt);

  if (pd) {
    out.stencil_tol["f_cubic"] = r3_.tol;
    const Vec H02 = bvv_.value - 2 * out.c * v;
    const Vec w20 = cm_solve(J, H02);
    out.f = r3_.value + 0.5 * projected_bilinear(F, u_hat, P0, w, v, w20, opt);

    const Eigen::PartialPivLU<Mat> ImJ(Mat(Mat::Identity(d, d) - J));
    const Vec inner = bilinear_vector(F, u_hat, P0, w, ImJ.solve(bvv_.value), opt);
    out.f_printed_variant =
        r3_.value - out.c * out.c + 0.5 * projected_bilinear(F, u_hat, P0, w, w, inner, opt);

    const Vec gamma = pmu_.value;
    const Vec w01 = ImJ.solve(Vec(gamma - w.dot(gamma) * v));
    const Vec w01_alt = Vec(ImJ.solve(gamma) - 0.5 * w.dot(gamma) * w);
    out.w01_alt_gap = (w01 - w01_alt).norm();
  }

  if (pd) {
    const double denom = out.b * out.c + out.e;
    out.transversal = std::abs(denom) > 1e-10;
    if (!out.transversal)
      out.warnings.push_back("period-doubling curve is vertical at this order (b c + e = 0)");
    else
      out.curve_slope = -(out.a * out.c + out.d) / denom;
    out.nondegenerate = std::abs(out.c * out.c + out.f) > 1e-8;
    if (!out.nondegenerate)
      out.warnings.push_back("period-doubled branch is degenerate (c^2 + f = 0)");
  } else {
    out.transversal = std::abs(out.b) > 1e-10;
    if (!out.transversal)
      out.warnings.push_back("saddle-node curve is vertical at this order (b = 0)");
    else
      out.curve_slope = -out.a / out.b;
    out.nondegenerate = std::abs(out.c) > 1e-8;
    if (!out.nondegenerate)
      out.warnings.push_back("quadratic coefficient c is degenerate");
  }
  return out;
}

/// Which parameterization of the section the expansion lives on. The cycle is
/// the same either way; the charts are conjugate through the reset. The
/// pre-impact chart is the primary one because the arrival point carries the
/// physical impact velocity, which is what the amplitude predictions expand.
enum class SectionSide { pre_impact, post_impact };

inline const char* to_string(SectionSide s) {
  return s == SectionSide::pre_impact ? "pre-impact" : "post-impact";
}

/// Poincare-map family of the blown-up system around a base model: mu enters
/// as the blow-up parameter and eta rewrites the model through its eta hook.
/// The family arguments are offsets from the reference point `at`, so
/// expansions can be centered anywhere in the parameter plane, not only at
/// the codimension-two origin. Because the eta hook recomputes from the
/// values captured when `base` was built, pass the unfolded family here and
/// put the absolute eta of the expansion point in `at`; handing in a model
/// already folded through at_eta would snap back to its construction values
/// the moment a stencil steps in eta.
inline MapFamily poincare_family(const HybridModel& base, const SectionChart& ch,
                                 SectionSide side = SectionSide::pre_impact,
                                 ParamPoint at = {},
                                 const PoincareOptions& opt = {}) {
  if (!base.eta_action)
    throw InputError("poincare_family: model has no eta_action hook");
  MapFamily F;
  F.dim = base.n - 1;
  F.eval = [base, ch, side, at, opt](const Vec& u, double mu, double eta) {
    const HybridModel m = base.at_eta(at.eta + eta);
    const ParamPoint p{at.mu + mu, at.eta + eta};
    return side == SectionSide::post_impact ? return_map(m, ch, u, p, opt).u_next
                                            : pre_return_map(m, ch, u, p, opt).u_next;
  };
  return F;
}

struct UnfoldingResult {
  CoefficientSet coeffs;
  FixedPointResult fixed_point;  // post-impact cycle point, where Newton runs
  SectionChart chart;
  SectionSide side = SectionSide::pre_impact;
  Vec u_expansion;  // fixed point on the chart the expansion actually used
};

/// Full pipeline around a reference point of the parameter plane: converge
/// the impacting cycle of the blown-up system at `at` (the codimension-two
/// origin by default), then expand the section map around it on the requested
/// side. `u_guess` seeds the cycle search; use linear_cycle_seed or
/// affine_cycle_seed for models whose blown-up limit is affine. Away from the
/// origin the critical multiplier is close to, not exactly at, its target
/// value, which is how on-curve expansions for the amplitude formulas are
/// produced.
inline UnfoldingResult unfolding_coefficients(const HybridModel& base, UnfoldingType type,
                                              const Vec& u_guess,
                                              SectionSide side = SectionSide::pre_impact,
                                              ParamPoint at = {},
                                              const PoincareOptions& popt = {},
                                              const StencilOptions& sopt = {}) {
  UnfoldingResult out;
  out.chart = section_chart(base.C);
  out.side = side;
  const HybridModel m_at = base.at_eta(at.eta);
  out.fixed_point = fixed_point(m_at, out.chart, u_guess, at, popt);
  if (!out.fixed_point.converged)
    throw NumericalError("unfolding_coefficients: cycle iteration did not converge");
  const MapFamily F = poincare_family(base, out.chart, side, at, popt);
  if (side == SectionSide::post_impact) {
    out.u_expansion = out.fixed_point.u_hat;
    out.coeffs = map_coefficients(F, out.u_expansion, type, sopt, &out.fixed_point.jacobian);
  } else {
    const ReturnMapResult rm = return_map(m_at, out.chart, out.fixed_point.u_hat, at, popt);
    out.u_expansion = out.chart.project(rm.y_pre);
    out.coeffs = map_coefficients(F, out.u_expansion, type, sopt);
  }
  return out;
}

}  // namespace beb
