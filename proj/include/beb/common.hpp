#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace beb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Complex = std::complex<double>;

/// Unfolding parameter pair: mu crosses the boundary-equilibrium bifurcation,
/// eta unfolds the degenerate multiplier of the bifurcating cycle.
struct ParamPoint {
  double mu = 0.0;
  double eta = 0.0;
};

/// Default numerical thresholds. Operations take these as defaulted arguments
/// so the CLI can override any of them per run.
namespace defaults {
inline constexpr double boundary_tol = 1e-10;   // on-surface test, scaled by max(1, |x|)
inline constexpr double v_graze = 1e-8;         // |velocity| below this counts as grazing
inline constexpr double v_stick = 1e-8;         // chattering cutoff into the sticking flow
inline constexpr double integrator_rtol = 1e-10;
inline constexpr double integrator_atol = 1e-12;
inline constexpr double newton_tol = 1e-12;
inline constexpr int newton_max_iter = 50;
inline constexpr int chatter_cap = 10000;
}  // namespace defaults

/// Thrown when an iterative computation fails to converge or a trajectory
/// query cannot be satisfied. The CLI maps this family to exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown on malformed input: bad dimensions, schema violations, calls that
/// break an operation's preconditions. The CLI maps this family to exit code 2.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Orbit reached the switching surface tangentially; the reset and the
/// saltation matrix are ill-conditioned there, so callers must handle this
/// case explicitly instead of receiving a silently degraded result.
struct GrazingEncounter : NumericalError {
  GrazingEncounter(const std::string& what, double velocity)
      : NumericalError(what), velocity(velocity) {}
  double velocity;
};

inline bool on_surface(double H, const Vec& x, double tol = defaults::boundary_tol) {
  return std::abs(H) <= tol * std::max(1.0, x.norm());
}

}  // namespace beb
