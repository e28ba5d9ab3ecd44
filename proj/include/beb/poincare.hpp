#pragma once

#include <beb/flow.hpp>

namespace beb {

// ---------------------------------------------------------------------------
// Section parameterization
// ---------------------------------------------------------------------------

/// Coordinates on the switching surface: u = Q y where Q keeps every state
/// coordinate except the one carrying the largest |C| entry, and the inverse
/// embedding solves S y = (0, u) with S = [C^T; Q]. Dropping the dominant
/// coordinate keeps S well conditioned for any unit normal.
struct SectionChart {
  int n = 0;
  int dropped = 0;  // index of the state coordinate eliminated by H = 0
  Mat Q;            // (n-1) x n selector
  Mat S;            // [C^T; Q]
  Mat S_inv;

  Vec project(const Vec& y) const { return Q * y; }

  Vec embed(const Vec& u) const {
    Vec rhs(n);
    rhs(0) = 0.0;
    rhs.tail(n - 1) = u;
    return S_inv * rhs;
  }

  /// Embeds a tangent vector of the section (same formula: the chart is
  /// affine and the surface is linear).
  Vec embed_tangent(const Vec& du) const { return embed(du); }
};

inline SectionChart section_chart(const Vec& C) {
  const int n = int(C.size());
  if (n < 2) throw InputError("section_chart: need at least two states");
  int drop = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(C(i)) > std::abs(C(drop))) drop = i;
  SectionChart ch;
  ch.n = n;
  ch.dropped = drop;
  ch.Q = Mat::Zero(n - 1, n);
  int row = 0;
  for (int i = 0; i < n; ++i)
    if (i != drop) ch.Q(row++, i) = 1.0;
  ch.S = Mat::Zero(n, n);
  ch.S.row(0) = C.transpose();
  ch.S.bottomRows(n - 1) = ch.Q;
  ch.S_inv = ch.S.partialPivLu().inverse();
  return ch;
}

// ---------------------------------------------------------------------------
// Return map of the blown-up system
// ---------------------------------------------------------------------------

struct PoincareOptions {
  FlowOptions flow;
  double t_max = 500.0;  // give up on a return after this flight time
  double v_graze = defaults::v_graze;
  double newton_tol = defaults::newton_tol;
  /// Acceptance ceiling when Newton stagnates above newton_tol, which happens
  /// at parameters bisected onto a bifurcation to finite accuracy.
  double newton_floor = 1e-7;
  int newton_max_iter = defaults::newton_max_iter;
  // finite-difference schedule for the map Jacobian
  double fd_h0_scale = 1e-2;  // initial step, times max(1, |u|)
  double fd_h_min = 1e-9;
  double fd_target = 1e-6;  // successive-difference convergence target
};

struct ReturnMapResult {
  Vec u_next;
  double period;
  Vec y_pre;  // pre-impact state
  double v_pre;
  double min_interior_H;
};

/// One application of the section-to-section map: embed u, fly the blown-up
/// field to the surface, reset, project back. Defined wherever the embedded
/// point leaves the surface (outgoing velocity).
inline ReturnMapResult return_map(const HybridModel& m, const SectionChart& ch, const Vec& u,
                                  const ParamPoint& p, const PoincareOptions& opt = {}) {
  if (u.size() != m.n - 1) throw InputError("return_map: u has the wrong dimension");
  const Vec y0 = ch.embed(u);
  auto field = [&m, &p](const Vec& y) { return blowup_field(m, y, p); };
  const double v0 = m.C.dot(field(y0));
  if (v0 <= opt.v_graze)
    throw InputError("return_map: section point is not outgoing, v = " + std::to_string(v0));
  const SectionCrossing hit =
      flow_to_section(field, m.n, m.C, y0, opt.t_max, opt.flow, opt.v_graze);
  ReturnMapResult out;
  out.y_pre = hit.y;
  out.v_pre = hit.v;
  out.period = hit.t;
  out.min_interior_H = hit.min_interior_H;
  out.u_next = ch.project(blowup_reset(m, hit.y, p));
  return out;
}

inline ReturnMapResult return_map(const HybridModel& m, const Vec& u, const ParamPoint& p,
                                  const PoincareOptions& opt = {}) {
  return return_map(m, section_chart(m.C), u, p, opt);
}

/// The same section-to-section map seen from the incoming side: u
/// parameterizes the pre-impact arrival point, the reset fires first and the
/// flight follows. Conjugate to return_map through the reset, so fixed points
/// describe the same cycle and the multipliers agree; expansions around the
/// two kinds of fixed point differ by the induced change of chart.
inline ReturnMapResult pre_return_map(const HybridModel& m, const SectionChart& ch,
                                      const Vec& u, const ParamPoint& p,
                                      const PoincareOptions& opt = {}) {
  if (u.size() != m.n - 1) throw InputError("pre_return_map: u has the wrong dimension");
  const Vec y_minus = ch.embed(u);
  const Vec y_plus = blowup_reset(m, y_minus, p);
  auto field = [&m, &p](const Vec& y) { return blowup_field(m, y, p); };
  const double v0 = m.C.dot(field(y_plus));
  if (v0 <= opt.v_graze)
    throw InputError("pre_return_map: reset image is not outgoing, v = " +
                     std::to_string(v0));
  const SectionCrossing hit =
      flow_to_section(field, m.n, m.C, y_plus, opt.t_max, opt.flow, opt.v_graze);
  ReturnMapResult out;
  out.y_pre = hit.y;
  out.v_pre = hit.v;
  out.period = hit.t;
  out.min_interior_H = hit.min_interior_H;
  out.u_next = ch.project(hit.y);
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference Jacobian with a per-column step schedule
// ---------------------------------------------------------------------------

struct JacobianFd {
  Mat J;
  std::vector<double> column_tol;  // best successive-difference ratio per column
};

/// Central differences with the step halved from h0 until the column
/// stabilizes to the target or the step floor is reached; each column keeps
/// the estimate from the step with the smallest successive change.
inline JacobianFd map_jacobian_fd(const HybridModel& m, const SectionChart& ch,
                                  const Vec& u_hat, const ParamPoint& p,
                                  const PoincareOptions& opt = {}) {
  const int d = int(u_hat.size());
  JacobianFd out;
  out.J.resize(d, d);
  out.column_tol.assign(d, std::numeric_limits<double>::infinity());
  for (int j = 0; j < d; ++j) {
    double h = opt.fd_h0_scale * std::max(1.0, u_hat.norm());
    Vec prev, best;
    double best_tol = std::numeric_limits<double>::infinity();
    for (; h > opt.fd_h_min; h *= 0.5) {
      Vec up = u_hat, um = u_hat;
      up(j) += h;
      um(j) -= h;
      const Vec col = (return_map(m, ch, up, p, opt).u_next -
                       return_map(m, ch, um, p, opt).u_next) /
                      (2.0 * h);
      if (prev.size()) {
        const double tol = (col - prev).norm() / std::max(col.norm(), 1e-300);
        if (tol < best_tol) {
          best_tol = tol;
          best = col;
        }
        if (tol < opt.fd_target) break;
      }
      prev = col;
    }
    out.J.col(j) = best.size() ? best : prev;
    out.column_tol[j] = best_tol;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixed points
// ---------------------------------------------------------------------------

struct FixedPointResult {
  Vec u_hat;
  double residual = 0.0;
  double period = 0.0;
  std::vector<Complex> multipliers;
  Mat jacobian;
  std::vector<double> jacobian_tol;
  bool converged = false;
};

/// Damped Newton iteration on P(u) - u = 0. The linear solves use a
/// rank-revealing decomposition because near a saddle-node codimension-two
/// point I - DP is singular along the critical direction; there the residual
/// is quadratic in the offset and convergence degrades to linear, which the
/// iteration budget absorbs. At a parameter bisected onto a fold to finite
/// accuracy the residual bottoms out at the leftover parameter error instead
/// of newton_tol; the stagnation floor accepts such points rather than
/// reporting failure for a cycle that exists to ten digits.
inline FixedPointResult fixed_point(const HybridModel& m, const SectionChart& ch,
                                    const Vec& u_guess, const ParamPoint& p,
                                    const PoincareOptions& opt = {}) {
  const int d = int(u_guess.size());
  Vec u = u_guess;
  Vec r = return_map(m, ch, u, p, opt).u_next - u;
  bool converged = false;
  int stalled = 0;
  for (int it = 0; it < opt.newton_max_iter && !converged; ++it) {
    // cheap fixed-step Jacobian: Newton only needs descent-quality slopes
    const double h = 1e-6 * std::max(1.0, u.norm());
    Mat J(d, d);
    for (int j = 0; j < d; ++j) {
      Vec up = u, um = u;
      up(j) += h;
      um(j) -= h;
      J.col(j) =
          (return_map(m, ch, up, p, opt).u_next - return_map(m, ch, um, p, opt).u_next) /
          (2.0 * h);
    }
    const Vec step =
        Mat(J - Mat::Identity(d, d)).completeOrthogonalDecomposition().solve(-r);
    double damp = 1.0;
    const double r_before = r.norm();
    for (int k = 0; k < 10; ++k, damp *= 0.5) {
      const Vec u_try = u + damp * step;
      const Vec r_try = return_map(m, ch, u_try, p, opt).u_next - u_try;
      if (r_try.norm() <= r.norm() || damp <= 1.0 / 512.0) {
        u = u_try;
        r = r_try;
        break;
      }
    }
    if (u.norm() > 1e6) throw NumericalError("fixed_point: iteration diverged");
    const double scale = std::max(1.0, u.norm());
    stalled = r.norm() > 0.5 * r_before ? stalled + 1 : 0;
    converged = r.norm() <= opt.newton_tol * scale ||
                step.norm() <= 1e-14 * scale ||
                (stalled >= 3 && r.norm() <= opt.newton_floor * scale);
  }
  if (!converged)
    throw NumericalError("fixed_point: Newton did not converge, residual " +
                         std::to_string(r.norm()));

  FixedPointResult out;
  out.u_hat = u;
  out.residual = r.norm();
  const ReturnMapResult final_map = return_map(m, ch, u, p, opt);
  out.period = final_map.period;
  const JacobianFd jfd = map_jacobian_fd(m, ch, u, p, opt);
  out.jacobian = jfd.J;
  out.jacobian_tol = jfd.column_tol;
  Eigen::EigenSolver<Mat> es(out.jacobian);
  out.multipliers.resize(d);
  for (int i = 0; i < d; ++i) out.multipliers[i] = es.eigenvalues()(i);
  out.converged = true;
  return out;
}

inline FixedPointResult fixed_point(const HybridModel& m, const Vec& u_guess,
                                    const ParamPoint& p, const PoincareOptions& opt = {}) {
  return fixed_point(m, section_chart(m.C), u_guess, p, opt);
}

/// Multiplier closest to a target value (how continuation and the unfolding
/// track "the" critical eigenvalue).
inline Complex nearest_multiplier(const std::vector<Complex>& mults, double target) {
  if (mults.empty()) throw InputError("nearest_multiplier: empty spectrum");
  Complex best = mults[0];
  for (const Complex& z : mults)
    if (std::abs(z - target) < std::abs(best - target)) best = z;
  return best;
}

// ---------------------------------------------------------------------------
// Closed-form cycle of the leading-order blown-up system
// ---------------------------------------------------------------------------

struct CycleSeed {
  Vec u;       // section coordinates of the post-impact point
  Vec y_plus;  // the post-impact state itself
  double period;
};

namespace detail {

/// Matrices of the blown-up system truncated after its affine part: flow
/// ydot = A_eff y + M_eff and reset linearization DR0 = I - B C^T A_eff.
/// Exact for models without quadratic terms, leading order otherwise.
struct AffinePieces {
  Mat A_eff;
  Vec M_eff;
  Mat DR0;
  Vec y_eq;
};

inline AffinePieces affine_pieces(const HybridModel& m, double mu) {
  if (!m.has_drift)
    throw InputError("affine cycle analysis: model has no forcing terms (M absent)");
  if (!m.series_form())
    throw InputError("affine cycle analysis: model is not in series form");
  AffinePieces ap;
  ap.A_eff = m.A + mu * m.A1;
  ap.M_eff = m.M + mu * m.M1;
  ap.DR0 = Mat::Identity(m.n, m.n) - m.B * (m.C.transpose() * ap.A_eff);
  ap.y_eq = ap.A_eff.partialPivLu().solve(Vec(-ap.M_eff));
  return ap;
}

/// Post-impact point of the closure-kernel cycle with period T: the member of
/// the family y_eq + span ker(I - DR0 e^{A_eff T}) lying on the surface.
inline Vec kernel_cycle_point(const AffinePieces& ap, const Vec& C, double T) {
  const int n = int(C.size());
  Eigen::JacobiSVD<Mat> svd(
      Mat(Mat::Identity(n, n) - ap.DR0 * linear_flow_map(ap.A_eff, T).expAt),
      Eigen::ComputeFullV);
  const Vec phi = svd.matrixV().col(n - 1);
  const double c_phi = C.dot(phi);
  if (std::abs(c_phi) < 1e-10)
    throw NumericalError("kernel_cycle_point: kernel direction is tangent to the surface");
  return ap.y_eq - (C.dot(ap.y_eq) / c_phi) * phi;
}

}  // namespace detail

/// All admissible single-impact cycles of the affine part of the blown-up
/// system at the given mu, found in closed form. Flow and reset are both
/// affine, so closed orbits are never isolated at fixed period: the composite
/// K(T) = DR0 e^{A_eff T} must have eigenvalue 1, the cycle family is the
/// equilibrium plus the kernel line of I - K(T), and the periods are the
/// roots of det(I - K(T)). The post-impact point is the family member lying
/// on the surface, kept only when it leaves the surface, arrives back
/// transversally, and stays clear of the surface in between. Exact for the
/// blown-up series model without quadratic terms (up to the scalar root
/// solves), which makes this both the continuation seed and an independent
/// oracle for the integrated return map.
inline std::vector<CycleSeed> affine_cycle_seeds(const HybridModel& m, double mu,
                                                 double t_scan_max = 100.0,
                                                 double dt_scan = 0.05) {
  const detail::AffinePieces ap = detail::affine_pieces(m, mu);
  const int n = m.n;
  const Mat I = Mat::Identity(n, n);

  auto closure_det = [&](double T) {
    return Mat(I - ap.DR0 * linear_flow_map(ap.A_eff, T).expAt).determinant();
  };

  std::vector<CycleSeed> seeds;
  const SectionChart ch = section_chart(m.C);
  double prev_T = dt_scan;
  double prev_d = closure_det(prev_T);
  for (double T = 2 * dt_scan; T <= t_scan_max; T += dt_scan) {
    const double det_T = closure_det(T);
    if ((prev_d < 0) != (det_T < 0)) {
      boost::uintmax_t iters = 100;
      auto r = boost::math::tools::toms748_solve(
          closure_det, prev_T, T, prev_d, det_T,
          boost::math::tools::eps_tolerance<double>(50), iters);
      const double T_star = 0.5 * (r.first + r.second);
      try {
        const Vec y_plus = detail::kernel_cycle_point(ap, m.C, T_star);
        const double v_plus = m.C.dot(ap.A_eff * y_plus + ap.M_eff);
        const Vec y_minus = affine_flow_state(ap.A_eff, ap.M_eff, y_plus, T_star);
        const double v_minus = m.C.dot(ap.A_eff * y_minus + ap.M_eff);
        double min_interior = std::numeric_limits<double>::infinity();
        for (int i = 8; i <= 392; ++i)
          min_interior =
              std::min(min_interior, m.C.dot(affine_flow_state(ap.A_eff, ap.M_eff, y_plus,
                                                               T_star * double(i) / 400.0)));
        if (v_plus > defaults::v_graze && v_minus < -defaults::v_graze &&
            min_interior > 1e-6 * std::max(1.0, y_plus.norm())) {
          CycleSeed seed;
          seed.y_plus = y_plus;
          seed.period = T_star;
          seed.u = ch.project(y_plus);
          seeds.push_back(std::move(seed));
        }
      } catch (const NumericalError&) {
        // kernel tangent to the surface: no admissible representative here
      }
    }
    prev_T = T;
    prev_d = det_T;
  }
  return seeds;
}

/// First admissible cycle from affine_cycle_seeds, as the usual starting
/// point for Newton refinement.
inline CycleSeed affine_cycle_seed(const HybridModel& m, double mu,
                                   double t_scan_max = 100.0, double dt_scan = 0.05) {
  std::vector<CycleSeed> seeds = affine_cycle_seeds(m, mu, t_scan_max, dt_scan);
  if (seeds.empty())
    throw NumericalError("affine_cycle_seed: no admissible cycle found in the scan window");
  return seeds.front();
}

/// The mu = 0 case: the cycle of the leading-order blown-up system.
inline CycleSeed linear_cycle_seed(const HybridModel& m, double t_scan_max = 100.0,
                                   double dt_scan = 0.05) {
  return affine_cycle_seed(m, 0.0, t_scan_max, dt_scan);
}

}  // namespace beb
