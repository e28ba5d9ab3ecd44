#pragma once

/// Impact-velocity predictions for the cycles that unfold from a
/// codimension-two boundary-equilibrium bifurcation.
///
/// On the blown-up section, the arrival velocity of a cycle through the chart
/// point u is an affine functional of u, so along the centre manifold it
/// expands as
///
///   A_hat = ell0 + ell1 mu + (L01 + L11 mu) z + h.o.t.
///
/// Substituting the fixed-point branches of the restricted map gives closed
/// forms in mu - mu_c, where mu_c is the fold or period-doubling location of
/// the one-parameter slice. Multiplying by mu converts the blown-up amplitude
/// back to original units.

#include <beb/normalform.hpp>

namespace beb {

/// Linearization of the arrival velocity over the section chart, evaluated at
/// a reference cycle: value at the cycle plus its gradient along the critical
/// eigenvector.
struct AmplitudeFactors {
  double ell0 = 0;  // velocity of the reference cycle itself
  double ell1 = 0;  // its first-order mu correction
  double L01 = 0;   // velocity slope along v
  double L11 = 0;   // mu correction of that slope
};

/// u_hat and v live on the pre-impact chart: the velocity functional is
/// C^T (A y + M) there, with the order-mu part C^T (A1 y + M1).
inline AmplitudeFactors amplitude_factors(const HybridModel& m, const SectionChart& ch,
                                          const Vec& u_hat, const Vec& v) {
  const Vec y = ch.embed(u_hat);
  const Vec t = ch.embed_tangent(v);
  AmplitudeFactors out;
  out.ell0 = m.C.dot(m.A * y + m.M);
  out.ell1 = m.C.dot(m.A1 * y + m.M1);
  out.L01 = m.C.dot(m.A * t);
  out.L11 = m.C.dot(m.A1 * t);
  return out;
}

/// One evaluated branch: blown-up amplitude and its original-units value.
struct AmplitudePoint {
  double z = std::numeric_limits<double>::quiet_NaN();
  double blown = std::numeric_limits<double>::quiet_NaN();
  double original = std::numeric_limits<double>::quiet_NaN();
  bool real_branch = false;
};

namespace detail {

inline AmplitudePoint amplitude_of(const AmplitudeFactors& fac, double mu, double z,
                                   bool real_branch) {
  AmplitudePoint out;
  out.real_branch = real_branch;
  if (!real_branch) return out;
  out.z = z;
  out.blown = fac.ell0 + fac.ell1 * mu + (fac.L01 + fac.L11 * mu) * z;
  out.original = mu * out.blown;
  return out;
}

}  // namespace detail

/// The two cycle branches near a saddle-node at mu_c on a fixed-eta slice.
/// Both exist where the radicand is positive (the fold side); past the fold
/// the points come back flagged not real.
struct SaddleNodeAmplitudes {
  AmplitudePoint upper, lower;
  double radicand = 0;
};

inline SaddleNodeAmplitudes sn_amplitudes(const CoefficientSet& cs,
                                          const AmplitudeFactors& fac, double mu,
                                          double mu_c) {
  if (cs.type != UnfoldingType::saddle_node)
    throw InputError("sn_amplitudes: coefficient set is not a saddle-node expansion");
  const double dm = mu - mu_c;
  const double rad =
      -cs.a * dm / cs.c + (cs.d * cs.d - 4 * cs.m * cs.c) * dm * dm / (4 * cs.c * cs.c);
  SaddleNodeAmplitudes out;
  out.radicand = rad;
  const bool real_branch = rad >= 0;
  const double root = real_branch ? std::sqrt(rad) : 0;
  const double shift = -cs.d * dm / (2 * cs.c);
  out.upper = detail::amplitude_of(fac, mu, root + shift, real_branch);
  out.lower = detail::amplitude_of(fac, mu, -root + shift, real_branch);
  return out;
}

/// Amplitudes on a fixed-eta slice through a period-doubling at mu_c: the
/// persisting single-impact cycle, and the pair of arrival velocities of the
/// two-impact cycle that branches off for mu beyond mu_c.
struct PeriodDoublingAmplitudes {
  AmplitudePoint fixed;
  AmplitudePoint doubled_upper, doubled_lower;
  double radicand = 0;
};

inline PeriodDoublingAmplitudes pd_amplitudes(const CoefficientSet& cs,
                                              const AmplitudeFactors& fac, double mu,
                                              double mu_c) {
  if (cs.type != UnfoldingType::period_doubling)
    throw InputError("pd_amplitudes: coefficient set is not a period-doubling expansion");
  const double dm = mu - mu_c;
  const double denom = cs.c * cs.c + cs.f;
  const double rad = -(cs.c * cs.a + cs.d) * dm / denom;
  PeriodDoublingAmplitudes out;
  out.radicand = rad;
  out.fixed = detail::amplitude_of(fac, mu, cs.a * dm / 2, true);
  const bool real_branch = rad >= 0;
  const double root = real_branch ? std::sqrt(rad) : 0;
  const double shift = cs.c * (cs.c * cs.a + cs.d) * dm / (2 * denom) + cs.a * dm / 2;
  out.doubled_upper = detail::amplitude_of(fac, mu, root + shift, real_branch);
  out.doubled_lower = detail::amplitude_of(fac, mu, -root + shift, real_branch);
  return out;
}

}  // namespace beb
