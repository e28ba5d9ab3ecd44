#pragma once

#include <beb/model.hpp>

#include <algorithm>

namespace beb {

enum class EquilibriumKind { regular, pseudo };

/// Admissible equilibria exist where their defining equations are physically
/// meaningful: regular ones at H > 0, pseudo ones inside the attracting part
/// of the sticking set (normal acceleration a < 0). Virtual equilibria solve
/// the equations on the wrong side and organize the bifurcation anyway.
enum class Admissibility { admissible, virtual_, boundary };

inline const char* to_string(Admissibility a) {
  switch (a) {
    case Admissibility::admissible: return "admissible";
    case Admissibility::virtual_: return "virtual";
    case Admissibility::boundary: return "boundary";
  }
  return "?";
}

struct EquilibriumInfo {
  Vec location;
  EquilibriumKind kind = EquilibriumKind::regular;
  Admissibility admissibility = Admissibility::boundary;
  std::vector<Complex> spectrum;
  double residual = 0.0;
  /// Pseudo-equilibria solve F(x) = beta * B on H = 0; beta is the Lagrange
  /// multiplier of the contact constraint (zero for regular equilibria).
  double beta = 0.0;
  /// H at a regular equilibrium, normal acceleration a at a pseudo one: the
  /// quantity whose sign decided admissibility.
  double margin = 0.0;
};

namespace detail {

inline std::vector<Complex> spectrum_of(const Mat& J) {
  Eigen::EigenSolver<Mat> es(J);
  std::vector<Complex> out(J.rows());
  for (int i = 0; i < J.rows(); ++i) out[i] = es.eigenvalues()(i);
  return out;
}

}  // namespace detail

/// Equilibrium of the smooth flow, x_reg = -A^{-1} M mu + O(mu^2) for the
/// series form, Newton-polished when the field has quadratic terms or an
/// override. Admissibility is the sign of H at the solution.
inline EquilibriumInfo regular_equilibrium(const HybridModel& m, const ParamPoint& p,
                                           double tol = defaults::newton_tol,
                                           int max_iter = defaults::newton_max_iter) {
  if (!m.has_drift)
    throw InputError("regular_equilibrium: model has no forcing terms (M absent)");
  Vec x = Vec::Zero(m.n);
  if (m.series_form()) {
    const Mat Aeff = m.A + p.mu * m.A1;
    const Vec Meff = p.mu * m.M + (p.mu * p.mu) * m.M1;
    x = Aeff.partialPivLu().solve(-Meff);
  }
  if (!m.series_form() || m.nonlinear.active()) {
    bool done = false;
    for (int it = 0; it < max_iter && !done; ++it) {
      const Vec F = eval_vector_field(m, x, p);
      const Vec step = field_jacobian(m, x, p).partialPivLu().solve(F);
      x -= step;
      done = step.norm() <= tol * std::max(1.0, x.norm());
    }
    if (!done)
      throw NumericalError("regular_equilibrium: Newton did not converge");
  }

  EquilibriumInfo out;
  out.location = x;
  out.kind = EquilibriumKind::regular;
  out.residual = eval_vector_field(m, x, p).norm();
  out.spectrum = detail::spectrum_of(field_jacobian(m, x, p));
  const double H = m.C.dot(x);
  out.margin = H;
  if (on_surface(H, x))
    out.admissibility = Admissibility::boundary;
  else
    out.admissibility = H > 0 ? Admissibility::admissible : Admissibility::virtual_;
  return out;
}

/// Rest point of the sticking flow: F(x) = beta B with C^T x = 0. For the
/// series form this is linear algebra; quadratic terms and overrides get a
/// bordered Newton iteration in (x, beta) seeded by the linear solution.
/// Admissibility is membership of the attracting sticking set, a(x) < 0.
inline EquilibriumInfo pseudo_equilibrium(const HybridModel& m, const ParamPoint& p,
                                          double tol = defaults::newton_tol,
                                          int max_iter = defaults::newton_max_iter) {
  if (!m.has_drift)
    throw InputError("pseudo_equilibrium: model has no forcing terms (M absent)");
  Vec x = Vec::Zero(m.n);
  double beta = 0.0;
  if (m.series_form()) {
    const Mat Aeff = m.A + p.mu * m.A1;
    const Vec Meff = p.mu * m.M + (p.mu * p.mu) * m.M1;
    auto lu = Aeff.partialPivLu();
    const Vec AinvB = lu.solve(m.B);
    const Vec AinvM = lu.solve(Meff);
    const double denom = m.C.dot(AinvB);
    if (std::abs(denom) < 1e-14)
      throw NumericalError("pseudo_equilibrium: C^T A^{-1} B vanishes, no isolated solution");
    beta = m.C.dot(AinvM) / denom;
    x = beta * AinvB - AinvM;
  }
  if (!m.series_form() || m.nonlinear.active()) {
    bool done = false;
    for (int it = 0; it < max_iter && !done; ++it) {
      Vec G(m.n + 1);
      G.head(m.n) = eval_vector_field(m, x, p) - beta * m.B;
      G(m.n) = m.C.dot(x);
      Mat J = Mat::Zero(m.n + 1, m.n + 1);
      J.topLeftCorner(m.n, m.n) = field_jacobian(m, x, p);
      J.topRightCorner(m.n, 1) = -m.B;
      J.bottomLeftCorner(1, m.n) = m.C.transpose();
      const Vec step = J.partialPivLu().solve(G);
      x -= step.head(m.n);
      beta -= step(m.n);
      done = step.norm() <= tol * std::max(1.0, x.norm());
    }
    if (!done)
      throw NumericalError("pseudo_equilibrium: Newton did not converge");
  }

  EquilibriumInfo out;
  out.location = x;
  out.kind = EquilibriumKind::pseudo;
  out.beta = beta;
  out.residual = (eval_vector_field(m, x, p) - beta * m.B).norm() + std::abs(m.C.dot(x));

  const LieData lie = lie_derivatives(m, x, p);
  out.margin = lie.a;
  if (std::abs(lie.a) <= defaults::v_graze)
    out.admissibility = Admissibility::boundary;
  else
    out.admissibility = lie.a < 0 ? Admissibility::admissible : Admissibility::virtual_;

  // spectrum of the sticking flow linearized at the rest point
  const double h = 1e-7 * std::max(1.0, x.norm());
  Mat Js(m.n, m.n);
  for (int j = 0; j < m.n; ++j) {
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    Js.col(j) = (sticking_field(m, xp, p) - sticking_field(m, xm, p)) / (2.0 * h);
  }
  out.spectrum = detail::spectrum_of(Js);
  return out;
}

// ---------------------------------------------------------------------------
// Boundary-equilibrium classification
// ---------------------------------------------------------------------------

enum class BebVerdict { persistence, nonsmooth_fold, degenerate };

inline const char* to_string(BebVerdict v) {
  switch (v) {
    case BebVerdict::persistence: return "persistence";
    case BebVerdict::nonsmooth_fold: return "nonsmooth_fold";
    case BebVerdict::degenerate: return "degenerate";
  }
  return "?";
}

/// The three scalars that settle what the boundary-equilibrium bifurcation
/// does at leading order, and the verdict they imply:
///
///   C^T A^{-1} B < 0  : regular and pseudo-equilibrium swap admissibility
///                       as mu crosses zero (persistence),
///   C^T A^{-1} B > 0  : both exist on one side and annihilate (fold).
///
/// Hypotheses checked first: A invertible, C^T A B > 0, C^T A^{-1} M != 0;
/// any failure yields verdict degenerate with the failed condition named.
struct BebClassification {
  double ctab = 0.0;
  double ctainvb = 0.0;
  double ctainvm = 0.0;
  BebVerdict verdict = BebVerdict::degenerate;
  std::string failed_hypothesis;
};

inline BebClassification classify_beb(const HybridModel& m) {
  BebClassification out;
  out.ctab = m.C.dot(m.A * m.B);
  Eigen::FullPivLU<Mat> lu(m.A);
  if (!lu.isInvertible()) {
    out.failed_hypothesis = "A is singular";
    return out;
  }
  out.ctainvb = m.C.dot(lu.solve(m.B));
  if (!m.has_drift) {
    out.failed_hypothesis = "M absent, boundary-crossing speed undefined";
    return out;
  }
  out.ctainvm = m.C.dot(lu.solve(m.M));
  if (out.ctab <= 0.0) {
    out.failed_hypothesis = "C^T A B <= 0";
    return out;
  }
  if (std::abs(out.ctainvm) < 1e-12) {
    out.failed_hypothesis = "C^T A^{-1} M = 0, equilibrium path tangent to surface";
    return out;
  }
  if (std::abs(out.ctainvb) < 1e-12) {
    out.failed_hypothesis = "C^T A^{-1} B = 0";
    return out;
  }
  out.verdict = out.ctainvb < 0 ? BebVerdict::persistence : BebVerdict::nonsmooth_fold;
  return out;
}

// ---------------------------------------------------------------------------
// Sticking-flow spectrum
// ---------------------------------------------------------------------------

/// Linearization A_s = (I - B C^T A / C^T A B) A of the sticking flow at the
/// origin. A_s always has a double eigenvalue 0 (the constraint directions);
/// the remaining n-2 eigenvalues govern stability along the sticking set and
/// their product equals -(C^T A^{-1} B / C^T A B) det A.
struct StickingSpectrum {
  Mat A_s;
  std::vector<Complex> eigenvalues;          // all n of them
  std::vector<Complex> nonzero_eigenvalues;  // the n-2 structural ones
  double zero_magnitude = 0.0;               // largest |.| among the discarded pair
  double det_identity_residual = 0.0;        // relative defect of the product identity
};

inline StickingSpectrum sticking_spectrum(const HybridModel& m) {
  const double ctab = m.C.dot(m.A * m.B);
  if (std::abs(ctab) < 1e-14)
    throw NumericalError("sticking_spectrum: C^T A B vanishes");
  StickingSpectrum out;
  out.A_s = (Mat::Identity(m.n, m.n) - (m.B * (m.C.transpose() * m.A)) / ctab) * m.A;
  out.eigenvalues = detail::spectrum_of(out.A_s);

  std::vector<Complex> sorted = out.eigenvalues;
  std::sort(sorted.begin(), sorted.end(),
            [](Complex a, Complex b) { return std::abs(a) < std::abs(b); });
  out.zero_magnitude = std::abs(sorted[1]);
  out.nonzero_eigenvalues.assign(sorted.begin() + 2, sorted.end());

  Complex prod = 1.0;
  for (Complex z : out.nonzero_eigenvalues) prod *= z;
  Eigen::FullPivLU<Mat> lu(m.A);
  const double target = -(m.C.dot(lu.solve(m.B)) / ctab) * m.A.determinant();
  out.det_identity_residual = std::abs(prod - target) / std::max(1.0, std::abs(target));
  return out;
}

}  // namespace beb
