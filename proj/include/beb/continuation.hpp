#pragma once

/// Locating degenerate cycles and following them through parameter space:
/// codimension-two points of a one-parameter model family, critical mu on a
/// fixed-eta slice, natural-parameter limit-cycle branches with event
/// detection, pseudo-arclength tracing of saddle-node and period-doubling
/// curves in (mu, eta), and simulation-based bifurcation diagrams.

#include <beb/equilibria.hpp>
#include <beb/poincare.hpp>

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace beb {

// ---------------------------------------------------------------------------
// Existence indicator for the affine cycle pair
// ---------------------------------------------------------------------------

/// Window and grid of the closure-determinant scan in the period variable.
struct ClosureScan {
  double t_lo = 0.5;  // stays clear of the rank-drop degeneracy at T = 0
  double t_hi = 60.0;
  double dt = 0.05;
};

struct ClosureDetMin {
  double value = std::numeric_limits<double>::infinity();
  double t_at_min = 0.0;
};

/// Smallest value of det(I - DR0 e^{A_eff T}) over the scan window, grid
/// minimum sharpened by golden-section refinement. A saddle-node of the
/// affine cycle pair is a tangency of this determinant with zero, so the
/// refined minimum changes sign transversally in any parameter that unfolds
/// the fold, which makes it a clean bisection indicator where the multiplier
/// itself only touches +1 from one side.
inline ClosureDetMin min_closure_det(const HybridModel& m, double mu,
                                     const ClosureScan& scan = {}) {
  const detail::AffinePieces ap = detail::affine_pieces(m, mu);
  const Mat I = Mat::Identity(m.n, m.n);
  auto det_at = [&](double T) {
    return Mat(I - ap.DR0 * linear_flow_map(ap.A_eff, T).expAt).determinant();
  };

  ClosureDetMin out;
  for (double T = scan.t_lo; T <= scan.t_hi; T += scan.dt) {
    const double d = det_at(T);
    if (d < out.value) {
      out.value = d;
      out.t_at_min = T;
    }
  }
  const double lo = std::max(scan.t_lo, out.t_at_min - scan.dt);
  const double hi = std::min(scan.t_hi, out.t_at_min + scan.dt);
  const double t_ref = detail::golden_min_arg(det_at, lo, hi);
  const double d_ref = det_at(t_ref);
  if (d_ref < out.value) {
    out.value = d_ref;
    out.t_at_min = t_ref;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Critical-parameter location by bisection
// ---------------------------------------------------------------------------

namespace detail {

inline double bisect_sign_change(const std::function<double(double)>& g, double lo,
                                 double hi, double tol, int max_iter) {
  double g_lo = g(lo);
  double g_hi = g(hi);
  if ((g_lo < 0) == (g_hi < 0))
    throw NumericalError("bisection: indicator has the same sign at both bracket ends (" +
                         std::to_string(g_lo) + ", " + std::to_string(g_hi) + ")");
  for (int it = 0; it < max_iter && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g_mid = g(mid);
    if ((g_mid < 0) == (g_lo < 0)) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
      g_hi = g_mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

struct CriticalPointOptions {
  double tol = 1e-9;  // bracket width on the searched parameter
  int max_iter = 200;
  ClosureScan scan;
  double t_scan_max = 100.0;  // cycle-seed scan for the multiplier indicator
  double dt_scan = 0.05;
  /// Newton tolerance for the reported cycle at the located parameter. At a
  /// fold the fixed point is a tangency, so on the nonexistence side of the
  /// final bracket the residual bottoms out near |slope| * tol; this must sit
  /// above that floor rather than at the usual machine-level default.
  double refine_newton_tol = 1e-8;
  PoincareOptions poincare;
};

struct Codim2Result {
  double eta0 = 0.0;  // located value of the family parameter
  Vec u_hat;
  double period = 0.0;
  FixedPointResult fp;
};

namespace detail {

/// Signed distance of the critical multiplier from lambda0 = -1 for the
/// Newton-refined cycle at the given mu.
inline double pd_indicator(const HybridModel& m, double mu, const CriticalPointOptions& opt) {
  const CycleSeed seed = affine_cycle_seed(m, mu, opt.t_scan_max, opt.dt_scan);
  const FixedPointResult fp =
      fixed_point(m, seed.u, ParamPoint{mu, 0.0}, opt.poincare);
  return nearest_multiplier(fp.multipliers, -1.0).real() + 1.0;
}

inline FixedPointResult refine_critical_cycle(const HybridModel& m, double mu,
                                              double lambda0,
                                              const CriticalPointOptions& opt) {
  Vec u_seed;
  if (lambda0 > 0) {
    // at the fold the determinant root is tangent, so take the post-impact
    // point straight from the kernel at the minimizing period
    const ClosureDetMin dm = min_closure_det(m, mu, opt.scan);
    const detail::AffinePieces ap = detail::affine_pieces(m, mu);
    u_seed = section_chart(m.C).project(detail::kernel_cycle_point(ap, m.C, dm.t_at_min));
  } else {
    u_seed = affine_cycle_seed(m, mu, opt.t_scan_max, opt.dt_scan).u;
  }
  PoincareOptions popt = opt.poincare;
  popt.newton_tol = std::max(popt.newton_tol, opt.refine_newton_tol);
  return fixed_point(m, u_seed, ParamPoint{mu, 0.0}, popt);
}

}  // namespace detail

/// Codimension-two point of a one-parameter model family at mu = 0: the
/// family parameter where the bifurcating cycle has Floquet multiplier
/// lambda0. For lambda0 = +1 the indicator is the sign of the refined
/// closure-determinant minimum (cycle-pair existence); for lambda0 = -1 it is
/// the distance of the multiplier nearest -1 from -1.
inline Codim2Result find_codim2(const std::function<HybridModel(double)>& family,
                                double lambda0, double lo, double hi,
                                const CriticalPointOptions& opt = {}) {
  if (lambda0 != 1.0 && lambda0 != -1.0)
    throw InputError("find_codim2: lambda0 must be +1 or -1");
  std::function<double(double)> indicator;
  if (lambda0 > 0)
    indicator = [&](double s) { return min_closure_det(family(s), 0.0, opt.scan).value; };
  else
    indicator = [&](double s) { return detail::pd_indicator(family(s), 0.0, opt); };

  Codim2Result out;
  out.eta0 = detail::bisect_sign_change(indicator, lo, hi, opt.tol, opt.max_iter);
  out.fp = detail::refine_critical_cycle(family(out.eta0), 0.0, lambda0, opt);
  out.u_hat = out.fp.u_hat;
  out.period = out.fp.period;
  return out;
}

struct Codim1Result {
  double mu_c = 0.0;
  Vec u_hat;
  double period = 0.0;
  FixedPointResult fp;
};

/// Critical mu of the cycle on a fixed-eta slice (fold the slice in with
/// at_eta before calling). Same indicators as find_codim2, bisected in mu.
inline Codim1Result critical_mu(const HybridModel& m, double lambda0, double mu_lo,
                                double mu_hi, const CriticalPointOptions& opt = {}) {
  if (lambda0 != 1.0 && lambda0 != -1.0)
    throw InputError("critical_mu: lambda0 must be +1 or -1");
  std::function<double(double)> indicator;
  if (lambda0 > 0)
    indicator = [&](double s) { return min_closure_det(m, s, opt.scan).value; };
  else
    indicator = [&](double s) { return detail::pd_indicator(m, s, opt); };

  Codim1Result out;
  out.mu_c = detail::bisect_sign_change(indicator, mu_lo, mu_hi, opt.tol, opt.max_iter);
  out.fp = detail::refine_critical_cycle(m, out.mu_c, lambda0, opt);
  out.u_hat = out.fp.u_hat;
  out.period = out.fp.period;
  return out;
}

// ---------------------------------------------------------------------------
// One-parameter cycle branch
// ---------------------------------------------------------------------------

enum class BranchEvent { none, saddle_node, period_doubling, grazing, boundary_equilibrium };

inline const char* to_string(BranchEvent e) {
  switch (e) {
    case BranchEvent::none: return "none";
    case BranchEvent::saddle_node: return "saddle_node";
    case BranchEvent::period_doubling: return "period_doubling";
    case BranchEvent::grazing: return "grazing";
    case BranchEvent::boundary_equilibrium: return "boundary_equilibrium";
  }
  return "?";
}

struct BranchPoint {
  double mu = 0.0;
  double eta = 0.0;
  Vec u_hat;
  double period = 0.0;
  double v_pre = 0.0;  // arrival velocity of the cycle, blown-up units
  double min_interior_H = std::numeric_limits<double>::infinity();
  std::vector<Complex> multipliers;
  BranchEvent event = BranchEvent::none;
};

struct BranchOptions {
  double dmu0 = 5e-4;
  double dmu_min = 1e-10;
  double dmu_max = 2e-3;
  double event_tol = 1e-8;  // bracket width in mu for refined events
  int max_points = 4000;
  PoincareOptions poincare;
};

struct CycleBranch {
  std::vector<BranchPoint> points;
  std::string stop_reason;
};

namespace detail {

struct BranchSolver {
  const HybridModel& m;
  SectionChart ch;
  double eta;
  const BranchOptions& opt;

  std::optional<BranchPoint> operator()(double mu, const Vec& guess) const {
    try {
      const ParamPoint p{mu, eta};
      const FixedPointResult fp = fixed_point(m, ch, guess, p, opt.poincare);
      const ReturnMapResult rm = return_map(m, ch, fp.u_hat, p, opt.poincare);
      BranchPoint bp;
      bp.mu = mu;
      bp.eta = eta;
      bp.u_hat = fp.u_hat;
      bp.period = fp.period;
      bp.v_pre = rm.v_pre;
      bp.min_interior_H = rm.min_interior_H;
      bp.multipliers = fp.multipliers;
      return bp;
    } catch (const NumericalError&) {
      return std::nullopt;
    } catch (const InputError&) {
      return std::nullopt;
    }
  }
};

inline double real_multiplier_gap(const BranchPoint& bp, double target) {
  const Complex z = nearest_multiplier(bp.multipliers, target);
  if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real())))
    return std::numeric_limits<double>::quiet_NaN();
  return z.real() - target;
}

/// Bisects a sign change of a multiplier gap between two solved points; the
/// guesses interpolate the section points linearly in mu.
inline std::optional<BranchPoint> refine_multiplier_event(
    const BranchSolver& solve, const BranchPoint& a, const BranchPoint& b, double target,
    double tol, BranchEvent label) {
  double lo = a.mu, hi = b.mu;
  Vec u_lo = a.u_hat, u_hi = b.u_hat;
  double g_lo = real_multiplier_gap(a, target);
  BranchPoint at_event = b;
  for (int it = 0; it < 80 && std::abs(hi - lo) > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const std::optional<BranchPoint> bp = solve(mid, Vec(0.5 * (u_lo + u_hi)));
    if (!bp) return std::nullopt;
    const double g_mid = real_multiplier_gap(*bp, target);
    if (std::isnan(g_mid)) return std::nullopt;
    at_event = *bp;
    if ((g_mid < 0) == (g_lo < 0)) {
      lo = mid;
      u_lo = bp->u_hat;
      g_lo = g_mid;
    } else {
      hi = mid;
      u_hi = bp->u_hat;
    }
  }
  at_event.event = label;
  return at_event;
}

}  // namespace detail

/// Follows the single-impact cycle from (u0, mu_from) toward mu_to on the
/// fixed-eta slice by natural-parameter stepping: secant predictor, Newton
/// correction, step halving where correction fails. Detected along the way
/// and refined by bisection to event_tol in mu:
///
///   period_doubling   real multiplier crossing -1,
///   saddle_node       real multiplier crossing +1, or the existence
///                     boundary where correction stops converging while the
///                     critical multiplier sits near +1,
///   grazing           the cycle's interior approach to the surface
///                     reaching zero (the existence boundary with the
///                     arrival velocity or interior clearance collapsing
///                     instead),
///   boundary_equilibrium  mu crossing 0.
///
/// The branch ends at the first existence boundary or at mu_to.
inline CycleBranch continue_cycle(const HybridModel& base, double eta, const Vec& u0,
                                  double mu_from, double mu_to,
                                  const BranchOptions& opt = {}) {
  const HybridModel m = base.at_eta(eta);
  const detail::BranchSolver solve{m, section_chart(m.C), eta, opt};
  CycleBranch out;

  std::optional<BranchPoint> first = solve(mu_from, u0);
  if (!first)
    throw NumericalError("continue_cycle: the seed cycle does not converge at mu_from");
  out.points.push_back(*first);

  const double dir = mu_to >= mu_from ? 1.0 : -1.0;
  double dmu = std::min(opt.dmu0, opt.dmu_max);

  while (int(out.points.size()) < opt.max_points) {
    const BranchPoint& cur = out.points.back();
    if (dir * (cur.mu - mu_to) >= 0) {
      out.stop_reason = "range_end";
      return out;
    }

    const double mu_next = dir > 0 ? std::min(cur.mu + dmu, mu_to)
                                   : std::max(cur.mu - dmu, mu_to);
    Vec guess = cur.u_hat;
    if (out.points.size() >= 2) {
      const BranchPoint& prev = out.points[out.points.size() - 2];
      if (std::abs(cur.mu - prev.mu) > 0) {
        const double w = (mu_next - cur.mu) / (cur.mu - prev.mu);
        guess = cur.u_hat + w * (cur.u_hat - prev.u_hat);
      }
    }

    std::optional<BranchPoint> next = solve(mu_next, guess);
    if (next && (next->u_hat - guess).norm() > 0.25 * std::max(1.0, cur.u_hat.norm()))
      next.reset();  // correction jumped to a different cycle

    if (!next) {
      if (dmu > opt.dmu_min) {
        dmu = std::max(0.5 * dmu, opt.dmu_min);
        continue;
      }
      // existence boundary: the repeated halving has already pinned it to
      // within dmu_min of the last good point; classify it there
      BranchPoint last = out.points.back();
      const double gap_sn = detail::real_multiplier_gap(last, 1.0);
      if (last.min_interior_H < 1e-3 * std::max(1.0, last.u_hat.norm()))
        last.event = BranchEvent::grazing;
      else if (!std::isnan(gap_sn) && std::abs(gap_sn) < 0.2)
        last.event = BranchEvent::saddle_node;
      out.points.back() = last;
      out.stop_reason = last.event == BranchEvent::none ? "lost_convergence"
                                                        : to_string(last.event);
      return out;
    }

    // events strictly between the last accepted point and the new one
    const BranchPoint prev = out.points.back();
    for (double target : {-1.0, 1.0}) {
      const double g_prev = detail::real_multiplier_gap(prev, target);
      const double g_next = detail::real_multiplier_gap(*next, target);
      if (!std::isnan(g_prev) && !std::isnan(g_next) && (g_prev < 0) != (g_next < 0)) {
        const BranchEvent label =
            target < 0 ? BranchEvent::period_doubling : BranchEvent::saddle_node;
        std::optional<BranchPoint> ev =
            detail::refine_multiplier_event(solve, prev, *next, target, opt.event_tol, label);
        if (ev) out.points.push_back(*ev);
      }
    }
    if ((prev.mu < 0) != (next->mu < 0) && prev.mu != 0 && next->mu != 0) {
      std::optional<BranchPoint> ev = solve(0.0, Vec(0.5 * (prev.u_hat + next->u_hat)));
      if (ev) {
        ev->event = BranchEvent::boundary_equilibrium;
        out.points.push_back(*ev);
      }
    }

    out.points.push_back(*next);
    dmu = std::min(dmu * 1.6, opt.dmu_max);
  }
  out.stop_reason = "max_points";
  return out;
}

// ---------------------------------------------------------------------------
// Two-parameter bifurcation curves
// ---------------------------------------------------------------------------

struct CurveOptions {
  double ds0 = 2e-3;
  double ds_min = 1e-7;
  double ds_max = 1e-2;
  int max_points = 2000;
  double mu_min = 0.0, mu_max = 0.06;
  double eta_min = -1e300, eta_max = 1e300;
  int newton_max_iter = 12;
  double tol = 1e-10;
  /// Acceptance ceiling for a stalled corrector; the multiplier residual
  /// cannot drop below the finite-difference noise of the map Jacobian.
  double residual_floor = 1e-6;
  double fd_h = 1e-5;  // fixed finite-difference step of the augmented system
  PoincareOptions poincare;
};

struct CurvePoint {
  double mu = 0.0;
  double eta = 0.0;
  Vec u_hat;
  double period = 0.0;
  Complex critical_multiplier;
};

struct BifurcationCurve {
  std::vector<CurvePoint> points;
  /// Slope d eta / d mu of the tangent at the starting point.
  double deta_dmu_start = std::numeric_limits<double>::quiet_NaN();
  std::string stop_reason;
};

namespace detail {

/// The defect whose zero set is the bifurcation curve: fixed-point residual
/// stacked with the critical-multiplier gap. The multiplier comes from a
/// fixed-step map Jacobian so the defect stays smooth in all unknowns.
struct CurveSystem {
  const HybridModel& base;
  SectionChart ch;
  double lambda0;
  const CurveOptions& opt;

  int unknowns() const { return ch.n + 1; }  // (n-1) section coords + mu + eta

  Complex multiplier(const HybridModel& m, const Vec& u, const ParamPoint& p) const {
    const int d = ch.n - 1;
    const double h = opt.fd_h;
    Mat J(d, d);
    for (int j = 0; j < d; ++j) {
      Vec up = u, um = u;
      up(j) += h;
      um(j) -= h;
      J.col(j) = (return_map(m, ch, up, p, opt.poincare).u_next -
                  return_map(m, ch, um, p, opt.poincare).u_next) /
                 (2.0 * h);
    }
    Eigen::EigenSolver<Mat> es(J);
    std::vector<Complex> mults(d);
    for (int i = 0; i < d; ++i) mults[i] = es.eigenvalues()(i);
    return nearest_multiplier(mults, lambda0);
  }

  Vec residual(const Vec& X) const {
    const int d = ch.n - 1;
    const Vec u = X.head(d);
    const double mu = X(d);
    const double eta = X(d + 1);
    const HybridModel m = base.at_eta(eta);
    const ParamPoint p{mu, eta};
    Vec G(d + 1);
    G.head(d) = return_map(m, ch, u, p, opt.poincare).u_next - u;
    G(d) = multiplier(m, u, p).real() - lambda0;
    return G;
  }

  Mat jacobian(const Vec& X) const {
    const int N = unknowns();
    Mat J(N - 1, N);
    for (int j = 0; j < N; ++j) {
      Vec Xp = X, Xm = X;
      Xp(j) += opt.fd_h;
      Xm(j) -= opt.fd_h;
      J.col(j) = (residual(Xp) - residual(Xm)) / (2.0 * opt.fd_h);
    }
    return J;
  }
};

inline Vec kernel_tangent(const Mat& J) {
  Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullV);
  Vec t = svd.matrixV().col(J.cols() - 1);
  return t / t.norm();
}

}  // namespace detail

/// Pseudo-arclength continuation of the curve {cycle fixed point, critical
/// multiplier = lambda0} in (u, mu, eta). The tangent is the one-dimensional
/// kernel of the finite-difference Jacobian of the augmented system; the
/// corrector solves the system bordered with the tangent row. The return
/// time never appears as an unknown: each residual evaluation solves it
/// inside the return map.
inline BifurcationCurve continue_curve(const HybridModel& base, double lambda0,
                                       double mu0, double eta0, const Vec& u0,
                                       double mu_direction = 1.0,
                                       const CurveOptions& opt = {}) {
  const detail::CurveSystem sys{base, section_chart(base.C), lambda0, opt};
  const int N = sys.unknowns();
  const int d = N - 2;

  Vec X(N);
  X.head(d) = u0;
  X(d) = mu0;
  X(d + 1) = eta0;

  BifurcationCurve out;
  Vec t_prev;

  // The multiplier component of the residual bottoms out at the finite-
  // difference noise floor rather than machine precision, so the corrector
  // keeps the best iterate seen and accepts it once progress stalls.
  auto correct = [&](Vec Xc, const Vec& t_row) -> std::optional<Vec> {
    Vec best = Xc;
    double best_norm = std::numeric_limits<double>::infinity();
    int stalled = 0;
    for (int it = 0; it < opt.newton_max_iter; ++it) {
      const Vec G = sys.residual(Xc);
      const double gn = G.norm();
      if (gn <= opt.tol * std::max(1.0, Xc.norm())) return Xc;
      if (gn < 0.5 * best_norm) {
        stalled = 0;
      } else if (++stalled >= 3) {
        break;
      }
      if (gn < best_norm) {
        best_norm = gn;
        best = Xc;
      }
      Mat Jb(N, N);
      Jb.topRows(N - 1) = sys.jacobian(Xc);
      Jb.row(N - 1) = t_row.transpose();
      Vec rhs = Vec::Zero(N);
      rhs.head(N - 1) = -G;
      const Vec step = Jb.completeOrthogonalDecomposition().solve(rhs);
      Xc += step;
      if (!Xc.allFinite()) return std::nullopt;
      if (step.norm() <= 1e-13 * std::max(1.0, Xc.norm())) break;
    }
    const double final_norm = sys.residual(Xc).norm();
    if (final_norm < best_norm) {
      best_norm = final_norm;
      best = Xc;
    }
    return best_norm <= opt.residual_floor ? std::optional<Vec>(best) : std::nullopt;
  };

  auto push_point = [&](const Vec& Xc) {
    CurvePoint cp;
    cp.u_hat = Xc.head(d);
    cp.mu = Xc(d);
    cp.eta = Xc(d + 1);
    const HybridModel m = base.at_eta(cp.eta);
    const ParamPoint p{cp.mu, cp.eta};
    cp.period = return_map(m, sys.ch, cp.u_hat, p, opt.poincare).period;
    cp.critical_multiplier = sys.multiplier(m, cp.u_hat, p);
    out.points.push_back(std::move(cp));
  };

  // settle onto the curve from the seed, bordered with the seed tangent
  Vec t0 = detail::kernel_tangent(sys.jacobian(X));
  std::optional<Vec> Xc = correct(X, t0);
  if (!Xc) throw NumericalError("continue_curve: the seed does not converge onto the curve");
  X = *Xc;
  t0 = detail::kernel_tangent(sys.jacobian(X));
  if (t0(d) * mu_direction < 0) t0 = -t0;
  out.deta_dmu_start = t0(d + 1) / t0(d);
  t_prev = t0;
  push_point(X);

  double ds = opt.ds0;
  while (int(out.points.size()) < opt.max_points) {
    const Vec& last = X;
    Vec t = detail::kernel_tangent(sys.jacobian(last));
    if (t.dot(t_prev) < 0) t = -t;

    std::optional<Vec> next;
    while (true) {
      next = correct(last + ds * t, t);
      if (next && (*next - last).norm() <= 10.0 * ds) break;
      next.reset();
      if (ds <= opt.ds_min) break;
      ds = std::max(0.5 * ds, opt.ds_min);
    }
    if (!next) {
      out.stop_reason = "step_underflow";
      return out;
    }

    X = *next;
    t_prev = t;
    push_point(X);
    const double mu = X(d), eta = X(d + 1);
    if (mu < opt.mu_min || mu > opt.mu_max || eta < opt.eta_min || eta > opt.eta_max) {
      out.stop_reason = "range_end";
      return out;
    }
    ds = std::min(ds * 1.5, opt.ds_max);
  }
  out.stop_reason = "max_points";
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force bifurcation diagrams
// ---------------------------------------------------------------------------

enum class DiagramObservable { impact_velocity, max_x1 };

inline const char* to_string(DiagramObservable o) {
  return o == DiagramObservable::impact_velocity ? "impact_velocity" : "max_x1";
}

struct DiagramOptions {
  double transient_time = 500.0;
  double sample_time = 250.0;
  int max_samples = 400;
  /// Reuse the previous grid point's end state, rescaled by the mu ratio, as
  /// an extra seed (sweep continuation of the attractor).
  bool sweep_carry = true;
  /// Offset of the default seed from the pseudo-equilibrium, along C.
  double seed_perturbation = 1e-3;
  SimOptions sim;
};

struct DiagramSample {
  double mu = 0.0;
  int seed_index = 0;  // -1 marks the carried sweep seed
  std::vector<double> values;
  Termination termination = Termination::time_limit;
};

namespace detail {

inline Vec default_diagram_seed(const HybridModel& m, const ParamPoint& p, double bump) {
  Vec x0;
  try {
    x0 = pseudo_equilibrium(m, p).location;
  } catch (const NumericalError&) {
    x0 = Vec::Zero(m.n);
  } catch (const InputError&) {
    x0 = Vec::Zero(m.n);
  }
  return x0 + (bump * std::max(1.0, x0.norm()) / m.C.norm()) * m.C;
}

inline void record_observable(const Trajectory& traj, DiagramObservable obs,
                              int max_samples, std::vector<double>& values) {
  if (obs == DiagramObservable::impact_velocity) {
    for (const ImpactEvent& ev : traj.events) {
      values.push_back(ev.v_pre);
      if (int(values.size()) >= max_samples) return;
    }
    return;
  }
  for (const TrajectorySegment& seg : traj.segments) {
    if (seg.sticking || seg.x.empty()) continue;
    double peak = -std::numeric_limits<double>::infinity();
    for (const Vec& x : seg.x) peak = std::max(peak, x(0));
    values.push_back(peak);
    if (int(values.size()) >= max_samples) return;
  }
}

}  // namespace detail

/// Simulated attractor samples over a mu grid, swept in the order given.
/// Each grid point runs every seed through a discarded transient and then a
/// sampling window, recording the observable per impact (arrival velocity,
/// original units) or per flight arc (peak of x1). Deterministic for a given
/// grid and seed list.
inline std::vector<DiagramSample> brute_force_diagram(const HybridModel& m,
                                                      const std::vector<double>& mu_grid,
                                                      DiagramObservable obs,
                                                      const DiagramOptions& opt = {},
                                                      const std::vector<Vec>& seeds = {}) {
  std::vector<DiagramSample> out;
  SimOptions sim = opt.sim;
  if (sim.sample_dt == 0.0)
    sim.sample_dt = obs == DiagramObservable::max_x1 ? 0.01 : 1e6;

  bool have_carry = false;
  Vec carry;
  double carry_mu = 0.0;

  for (double mu : mu_grid) {
    const ParamPoint p{mu, 0.0};
    std::vector<std::pair<int, Vec>> starts;
    if (seeds.empty())
      starts.emplace_back(0, detail::default_diagram_seed(m, p, opt.seed_perturbation));
    else
      for (int i = 0; i < int(seeds.size()); ++i) starts.emplace_back(i, seeds[i]);
    if (opt.sweep_carry && have_carry && carry_mu != 0.0)
      starts.emplace_back(-1, Vec(carry * (mu / carry_mu)));

    for (const auto& [index, x0] : starts) {
      DiagramSample sample;
      sample.mu = mu;
      sample.seed_index = index;
      try {
        const Trajectory settle = simulate(m, x0, p, opt.transient_time, sim);
        const Trajectory window = simulate(m, settle.x_final, p, opt.sample_time, sim);
        detail::record_observable(window, obs, opt.max_samples, sample.values);
        sample.termination = window.terminated_by;
        carry = window.x_final;
        carry_mu = mu;
        have_carry = true;
      } catch (const NumericalError&) {
        sample.termination = Termination::event_count_cap;
      } catch (const InputError&) {
        sample.termination = Termination::event_count_cap;
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attractor classification and the grazing transition
// ---------------------------------------------------------------------------

/// Coarse shape of a sampled attractor: how many distinct impact-velocity
/// levels it visits and whether it touches the grazing regime.
struct AttractorSignature {
  int impact_count = 0;
  int cluster_count = 0;
  double v_abs_min = std::numeric_limits<double>::infinity();
  double v_abs_max = 0.0;
  bool near_grazing = false;
  bool sticking = false;
  bool divergent = false;
};

inline AttractorSignature attractor_signature(const DiagramSample& sample,
                                              double cluster_tol = 1e-3,
                                              double graze_floor = 1e-6) {
  AttractorSignature sig;
  sig.impact_count = int(sample.values.size());
  sig.sticking = sample.termination == Termination::sticking ||
                 sample.termination == Termination::chattering_cap;
  sig.divergent = sample.termination == Termination::divergence;
  if (sample.values.empty()) return sig;
  std::vector<double> mags;
  mags.reserve(sample.values.size());
  for (double v : sample.values) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  sig.v_abs_min = mags.front();
  sig.v_abs_max = mags.back();
  sig.near_grazing = sig.v_abs_min < graze_floor * std::max(1.0, sig.v_abs_max);
  sig.cluster_count = 1;
  const double gap = cluster_tol * std::max(1.0, mags[mags.size() / 2]);
  for (std::size_t i = 1; i < mags.size(); ++i)
    if (mags[i] - mags[i - 1] > gap) ++sig.cluster_count;
  return sig;
}

struct GrazingTransition {
  double mu = std::numeric_limits<double>::quiet_NaN();
  int evaluations = 0;
  AttractorSignature regular_side, transformed_side;
};

/// Brute-force location of the parameter where the single-cluster attractor
/// stops being one: bisection on the attractor signature between a regular
/// bracket end and a transformed one. Each trial point is seeded from the
/// closed-form affine cycle at that mu when the model supports it, so the
/// bisection follows the fate of the single-impact branch itself instead of
/// whatever a generic transient happens to reach. The attractor is
/// re-simulated at every trial point, so the cost is the simulation budget
/// times the bisection depth; tol is the final bracket width in mu.
inline GrazingTransition grazing_transition_mu(const HybridModel& base, double eta,
                                               double mu_lo, double mu_hi,
                                               double tol = 2e-4,
                                               const DiagramOptions& opt = {},
                                               double cluster_tol = 1e-3) {
  const HybridModel m = base.at_eta(eta);
  GrazingTransition out;

  auto probe = [&](double mu) {
    DiagramOptions one = opt;
    one.sweep_carry = false;
    std::vector<Vec> starts;
    try {
      starts.push_back(Vec(mu * affine_cycle_seed(m, mu).y_plus));
    } catch (const NumericalError&) {
    } catch (const InputError&) {
    }
    const std::vector<DiagramSample> s =
        brute_force_diagram(m, {mu}, DiagramObservable::impact_velocity, one, starts);
    ++out.evaluations;
    return attractor_signature(s.front(), cluster_tol);
  };
  auto regular = [](const AttractorSignature& sig) {
    return sig.impact_count > 0 && sig.cluster_count == 1 && !sig.near_grazing &&
           !sig.sticking && !sig.divergent;
  };

  AttractorSignature lo_sig = probe(mu_lo);
  AttractorSignature hi_sig = probe(mu_hi);
  if (regular(lo_sig) == regular(hi_sig))
    throw NumericalError(
        "grazing_transition_mu: both bracket ends show the same attractor type");
  while (mu_hi - mu_lo > tol) {
    const double mid = 0.5 * (mu_lo + mu_hi);
    const AttractorSignature mid_sig = probe(mid);
    if (regular(mid_sig) == regular(lo_sig)) {
      mu_lo = mid;
      lo_sig = mid_sig;
    } else {
      mu_hi = mid;
      hi_sig = mid_sig;
    }
  }
  out.mu = 0.5 * (mu_lo + mu_hi);
  out.regular_side = regular(lo_sig) ? lo_sig : hi_sig;
  out.transformed_side = regular(lo_sig) ? hi_sig : lo_sig;
  return out;
}

}  // namespace beb
