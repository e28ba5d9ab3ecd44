#pragma once

#include <beb/model.hpp>

#include <boost/math/tools/toms748_solve.hpp>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <functional>
#include <limits>
#include <utility>

namespace beb {

struct FlowOptions {
  double rtol = defaults::integrator_rtol;
  double atol = defaults::integrator_atol;
  double init_dt = 1e-3;
  double max_dt = 0.0;  // 0 disables the cap
  /// Interpolant samples examined per accepted step. Crossings hiding inside
  /// a single step (double impacts, shallow dips) are caught here, so this
  /// trades speed against the shortest resolvable excursion.
  int scan_points = 16;
  /// Hard ceiling on the state norm. Truncated local models can blow up in
  /// finite time once a trajectory escapes the region the expansion
  /// describes, and the step size collapses as it does; stopping at the
  /// ceiling keeps such runs from consuming the whole time budget.
  double x_max = 1e6;
};

struct SimOptions : FlowOptions {
  double boundary_tol = defaults::boundary_tol;
  double v_graze = defaults::v_graze;
  double v_stick = defaults::v_stick;
  int max_events = 100000;
  int chatter_cap = defaults::chatter_cap;
  double sample_dt = 0.0;  // 0 records every scan sample; > 0 thins to about this spacing
};

// ---------------------------------------------------------------------------
// Event-locating integration engine
// ---------------------------------------------------------------------------

enum class ArcStop { crossing, time_end, escape };

struct ArcResult {
  ArcStop stop = ArcStop::time_end;
  double t = 0.0;
  Vec y;
  /// Smallest refined interior local minimum of the monitor along the arc;
  /// +inf when the monitor never turned around.
  double min_interior = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Golden-section minimizer for the interpolant-composed monitor. The
/// bracket is a few interpolant samples wide, so unimodality holds.
inline double golden_min_arg(const std::function<double(double)>& g, double a, double b) {
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double g1 = g(x1), g2 = g(x2);
  for (int i = 0; i < 48 && b - a > 1e-14 * std::max(1.0, std::abs(b)); ++i) {
    if (g1 <= g2) {
      b = x2;
      x2 = x1;
      g2 = g1;
      x1 = b - inv_phi * (b - a);
      g1 = g(x1);
    } else {
      a = x1;
      x1 = x2;
      g1 = g2;
      x2 = a + inv_phi * (b - a);
      g2 = g(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Integrates y' = field(y) from (t0, y0) until the monitor functional
/// crosses from positive to non-positive, or until t_max. Each accepted step
/// of the adaptive stepper is searched through its dense interpolant, the
/// first sign change is sharpened by bracketed root finding, and `accept`
/// (when given) may veto a candidate so the search continues; vetoes handle
/// interpolation wiggle around a start exactly on the zero set. `observe` is
/// called at every interpolant sample in time order.
template <class Field>
ArcResult flow_until_crossing(Field&& field, int n, const Vec& y0, double t0, double t_max,
                              const std::function<double(const Vec&)>& monitor,
                              const FlowOptions& opt = {},
                              const std::function<bool(double, const Vec&)>& accept = {},
                              const std::function<void(double, const Vec&)>& observe = {},
                              bool track_min = false) {
  namespace ode = boost::numeric::odeint;
  using State = std::vector<double>;
  if (!(t_max > t0)) throw InputError("flow_until_crossing: empty time interval");

  auto rhs = [&field, n](const State& y, State& dy, double) {
    dy.resize(std::size_t(n));
    Eigen::Map<const Vec> ym(y.data(), n);
    Eigen::Map<Vec>(dy.data(), n) = field(ym);
  };
  auto stepper =
      opt.max_dt > 0.0
          ? ode::make_dense_output(opt.atol, opt.rtol, opt.max_dt,
                                   ode::runge_kutta_dopri5<State>())
          : ode::make_dense_output(opt.atol, opt.rtol, ode::runge_kutta_dopri5<State>());
  State y(y0.data(), y0.data() + n);
  stepper.initialize(y, t0, std::min(opt.init_dt, 0.25 * (t_max - t0)));

  auto interp = [&stepper, n](double t) -> Vec {
    State s(std::size_t(n), 0.0);
    stepper.calc_state(t, s);
    return Eigen::Map<Vec>(s.data(), n);
  };
  auto mon_at = [&interp, &monitor](double t) { return monitor(interp(t)); };

  ArcResult res;
  double prev_t = t0;
  double prev_g = monitor(y0);
  if (observe) observe(t0, y0);
  // sliding window of the last three samples for local-minimum detection
  double w_t[3] = {t0, t0, t0};
  double w_g[3] = {prev_g, prev_g, prev_g};
  int w_fill = 1;

  while (stepper.current_time() < t_max) {
    stepper.do_step(rhs);
    const double step_lo = prev_t;
    const double step_hi = std::min(stepper.current_time(), t_max);

    const int K = std::max(2, opt.scan_points);
    for (int k = 1; k <= K; ++k) {
      const double tk = step_lo + (step_hi - step_lo) * double(k) / double(K);
      const Vec yk = interp(tk);
      if (yk.norm() > opt.x_max) {
        res.stop = ArcStop::escape;
        res.t = tk;
        res.y = yk;
        return res;
      }
      const double gk = monitor(yk);
      if (observe) observe(tk, yk);

      if (prev_g > 0.0 && gk <= 0.0) {
        double t_lo = prev_t, t_hi = tk;
        double t_star = t_hi;
        if (gk < 0.0) {
          boost::uintmax_t iters = 120;
          auto r = boost::math::tools::toms748_solve(
              mon_at, t_lo, t_hi, prev_g, gk,
              boost::math::tools::eps_tolerance<double>(48), iters);
          t_star = 0.5 * (r.first + r.second);
        }
        const Vec y_star = interp(t_star);
        if (!accept || accept(t_star, y_star)) {
          res.stop = ArcStop::crossing;
          res.t = t_star;
          res.y = y_star;
          return res;
        }
      }

      if (track_min) {
        w_t[0] = w_t[1];
        w_g[0] = w_g[1];
        w_t[1] = w_t[2];
        w_g[1] = w_g[2];
        w_t[2] = tk;
        w_g[2] = gk;
        w_fill = std::min(w_fill + 1, 3);
        if (w_fill == 3 && w_g[1] <= w_g[0] && w_g[1] <= w_g[2] && w_t[1] > t0) {
          // refine inside the valid part of the current interpolant
          const double lo = std::max(w_t[0], step_lo);
          const double tmin = detail::golden_min_arg(mon_at, lo, w_t[2]);
          res.min_interior = std::min({res.min_interior, mon_at(tmin), w_g[1]});
        }
      }
      prev_t = tk;
      prev_g = gk;
    }
    if (step_hi >= t_max) break;
  }

  res.stop = ArcStop::time_end;
  res.t = t_max;
  res.y = interp(std::min(t_max, stepper.current_time()));
  return res;
}

// ---------------------------------------------------------------------------
// Flow to the switching surface
// ---------------------------------------------------------------------------

struct SectionCrossing {
  Vec y;       // state at the crossing
  double t;    // crossing time
  double v;    // normal velocity there (negative: transversal arrival)
  double min_interior_H = std::numeric_limits<double>::infinity();
};

/// First transversal arrival of y' = field(y) on {C^T y = 0} from the
/// positive side. Throws NumericalError when no crossing occurs before
/// t_max and GrazingEncounter when the arrival is tangential.
template <class Field>
SectionCrossing flow_to_section(Field&& field, int n, const Vec& C, const Vec& y0,
                                double t_max, const FlowOptions& opt = {},
                                double v_graze = defaults::v_graze) {
  auto monitor = [&C](const Vec& y) { return C.dot(y); };
  auto accept = [&](double, const Vec& y) { return C.dot(field(y)) <= v_graze; };
  const ArcResult arc = flow_until_crossing(field, n, y0, 0.0, t_max, monitor, opt, accept,
                                            {}, true);
  if (arc.stop == ArcStop::time_end)
    throw NumericalError("flow_to_section: no surface crossing before t = " +
                         std::to_string(t_max));
  if (arc.stop == ArcStop::escape)
    throw NumericalError("flow_to_section: state norm exceeded x_max before reaching the surface");
  SectionCrossing out;
  out.y = arc.y;
  out.t = arc.t;
  out.v = C.dot(field(arc.y));
  out.min_interior_H = arc.min_interior;
  if (std::abs(out.v) <= v_graze)
    throw GrazingEncounter("flow_to_section: tangential arrival on the surface", out.v);
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid trajectory simulation
// ---------------------------------------------------------------------------

struct ImpactEvent {
  double t;
  Vec x_pre;
  Vec x_post;      // equals x_pre for a grazing touch
  double v_pre;
  double v_post;
  bool grazing = false;
};

struct TrajectorySegment {
  bool sticking = false;
  std::vector<double> t;
  std::vector<Vec> x;
};

enum class Termination { time_limit, sticking, chattering_cap, event_count_cap, divergence };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::time_limit: return "time_limit";
    case Termination::sticking: return "sticking";
    case Termination::chattering_cap: return "chattering_cap";
    case Termination::event_count_cap: return "event_count_cap";
    case Termination::divergence: return "divergence";
  }
  return "?";
}

struct Trajectory {
  std::vector<TrajectorySegment> segments;
  std::vector<ImpactEvent> events;
  Termination terminated_by = Termination::time_limit;
  double t_final = 0.0;
  Vec x_final;
  /// Smallest interior dip of H over all free-flight arcs: how close the
  /// trajectory came to the surface without touching it.
  double min_interior_H = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Two-step Newton projection onto {H = 0, v = 0} within span{C, grad v},
/// used when handing a state to the sticking flow so the constraint errors
/// do not drift during the sliding phase.
inline Vec project_to_sticking_set(const HybridModel& m, Vec x, const ParamPoint& p) {
  for (int it = 0; it < 3; ++it) {
    const LieData lie = lie_derivatives(m, x, p);
    Eigen::Matrix2d G;
    G << m.C.squaredNorm(), m.C.dot(lie.grad_v), m.C.dot(lie.grad_v),
        lie.grad_v.squaredNorm();
    const Eigen::Vector2d rhs(-lie.H, -lie.v);
    const Eigen::Vector2d ab = G.fullPivLu().solve(rhs);
    x += ab(0) * m.C + ab(1) * lie.grad_v;
  }
  return x;
}

}  // namespace detail

/// Full hybrid evolution in the original coordinates: free flight between
/// impacts, the reset at transversal arrivals, truncation of chattering
/// sequences into the sticking flow, and sliding along the sticking set
/// until lift-off. Grazing touches are recorded as events without a reset.
inline Trajectory simulate(const HybridModel& m, const Vec& x0, const ParamPoint& p,
                           double t_end, const SimOptions& opt = {}) {
  check_dim(m, x0, "simulate");
  Trajectory traj;
  Vec x = x0;
  double t = 0.0;
  if (m.C.dot(x) < -opt.boundary_tol * std::max(1.0, x.norm()))
    throw InputError("simulate: initial state lies in the forbidden region H < 0");
  if (x.norm() > opt.x_max) {
    traj.terminated_by = Termination::divergence;
    traj.x_final = x;
    return traj;
  }

  auto field = [&m, &p](const Vec& y) { return eval_vector_field(m, y, p); };
  auto stick_field = [&m, &p](const Vec& y) { return sticking_field(m, y, p); };

  double last_event_t = -1.0;
  int burst = 0;
  enum class Mode { decide, flow, stick };
  Mode mode = Mode::decide;
  bool done = false;

  auto run_arc = [&](bool sticking_arc) {
    TrajectorySegment seg;
    seg.sticking = sticking_arc;
    double next_sample = t;
    auto observe = [&](double ts, const Vec& ys) {
      if (opt.sample_dt > 0.0 && ts < next_sample && ts > t) return;
      seg.t.push_back(ts);
      seg.x.push_back(ys);
      next_sample = ts + opt.sample_dt;
    };
    ArcResult arc;
    if (sticking_arc) {
      auto monitor = [&](const Vec& y) {
        return -lie_derivatives(m, y, p, opt.v_graze).a;
      };
      arc = flow_until_crossing(stick_field, m.n, x, t, t_end, monitor, opt, {}, observe,
                                false);
    } else {
      auto monitor = [&](const Vec& y) { return m.C.dot(y); };
      auto accept = [&](double, const Vec& y) {
        return m.C.dot(field(y)) <= opt.v_graze;
      };
      arc = flow_until_crossing(field, m.n, x, t, t_end, monitor, opt, accept, observe,
                                true);
      traj.min_interior_H = std::min(traj.min_interior_H, arc.min_interior);
    }
    if (seg.t.empty() || seg.t.back() != arc.t) {
      seg.t.push_back(arc.t);
      seg.x.push_back(arc.y);
    }
    traj.segments.push_back(std::move(seg));
    t = arc.t;
    x = arc.y;
    if (arc.stop == ArcStop::time_end) {
      traj.terminated_by =
          sticking_arc ? Termination::sticking : Termination::time_limit;
      done = true;
    } else if (arc.stop == ArcStop::escape) {
      traj.terminated_by = Termination::divergence;
      done = true;
    } else {
      mode = sticking_arc ? Mode::flow : Mode::decide;
    }
  };

  auto note_event = [&](const ImpactEvent& ev) {
    traj.events.push_back(ev);
    if (int(traj.events.size()) >= opt.max_events) {
      traj.terminated_by = Termination::event_count_cap;
      done = true;
    }
    if (ev.t - last_event_t < 1e-9 * std::max(1.0, ev.t))
      ++burst;
    else
      burst = 1;
    last_event_t = ev.t;
    if (burst > opt.chatter_cap) {
      traj.terminated_by = Termination::chattering_cap;
      done = true;
    }
  };

  while (!done) {
    switch (mode) {
      case Mode::decide: {
        const LieData lie = lie_derivatives(m, x, p, opt.v_graze);
        if (on_surface(lie.H, x, opt.boundary_tol) && lie.v < -opt.v_graze) {
          const Vec x_post = x + m.reset_direction(x, p) * lie.v;
          const LieData post = lie_derivatives(m, x_post, p, opt.v_graze);
          note_event({t, x, x_post, lie.v, post.v, false});
          x = x_post;
          // truncate a chattering accumulation once the rebound cannot rise
          // clear of the integration noise floor
          const double v_floor =
              std::max(opt.v_stick, std::sqrt(20.0 * opt.atol * std::abs(post.a)));
          if (post.a < -opt.v_graze && post.v < v_floor)
            mode = Mode::stick;
          break;
        }
        if (on_surface(lie.H, x, opt.boundary_tol) && std::abs(lie.v) <= opt.v_graze) {
          if (lie.a < -opt.v_graze) {
            mode = Mode::stick;
            break;
          }
          note_event({t, x, x, lie.v, lie.v, true});
        }
        mode = Mode::flow;
        break;
      }
      case Mode::flow:
        run_arc(false);
        break;
      case Mode::stick:
        x = detail::project_to_sticking_set(m, x, p);
        run_arc(true);
        break;
    }
    if (t >= t_end) done = true;
  }

  traj.t_final = t;
  traj.x_final = x;
  return traj;
}

// ---------------------------------------------------------------------------
// Floquet multipliers through the variational flow
// ---------------------------------------------------------------------------

struct CycleMultipliers {
  std::vector<Complex> nontrivial;  // n-1 section multipliers
  Mat monodromy;                    // saltation * variational, full n x n
  Mat saltation;
  double period;
  Vec y_pre;              // pre-impact state at the located crossing
  double trivial_defect;  // residual of the exact unit multiplier along the flow
  double closure_error;   // |R(y_pre) - y_start|
};

/// Multipliers of a single-impact cycle of the blown-up system: integrate the
/// variational equations along the smooth arc, apply the saltation matrix of
/// the reset, then deflate the exact unit multiplier carried by the flow
/// direction. Serves as an independent cross-check of finite-difference
/// return-map Jacobians.
inline CycleMultipliers floquet_via_variational(const HybridModel& m, const Vec& y_start,
                                                double period_guess, const ParamPoint& p,
                                                const FlowOptions& opt = {}) {
  check_dim(m, y_start, "floquet_via_variational");
  const int n = m.n;
  const int N = n + n * n;

  auto big_field = [&](const Vec& z) {
    const Vec y = z.head(n);
    const Mat Phi = Eigen::Map<const Mat>(z.data() + n, n, n);
    Vec dz(N);
    dz.head(n) = blowup_field(m, y, p);
    Eigen::Map<Mat>(dz.data() + n, n, n) = blowup_jacobian(m, y, p) * Phi;
    return dz;
  };
  auto monitor = [&](const Vec& z) { return m.C.dot(z.head(n)); };
  auto accept = [&](double, const Vec& z) {
    return blowup_velocity(m, z.head(n), p) <= defaults::v_graze;
  };

  Vec z0(N);
  z0.head(n) = y_start;
  Eigen::Map<Mat>(z0.data() + n, n, n) = Mat::Identity(n, n);

  const ArcResult arc = flow_until_crossing(big_field, N, z0, 0.0, 2.5 * period_guess,
                                            monitor, opt, accept);
  if (arc.stop == ArcStop::time_end)
    throw NumericalError("floquet_via_variational: cycle does not return to the surface");

  CycleMultipliers out;
  out.period = arc.t;
  out.y_pre = arc.y.head(n);
  const Mat Phi = Eigen::Map<const Mat>(arc.y.data() + n, n, n);

  const double v_pre = blowup_velocity(m, out.y_pre, p);
  if (std::abs(v_pre) <= defaults::v_graze)
    throw GrazingEncounter("floquet_via_variational: cycle grazes the surface", v_pre);

  const Vec y_post = blowup_reset(m, out.y_pre, p);
  const Mat DR = blowup_reset_jacobian(m, out.y_pre, p);
  const Vec g_pre = blowup_field(m, out.y_pre, p);
  const Vec g_post = blowup_field(m, y_post, p);
  out.saltation = DR + ((g_post - DR * g_pre) / v_pre) * m.C.transpose();
  out.monodromy = out.saltation * Phi;
  out.closure_error = (y_post - y_start).norm();

  // orthogonal similarity sending e1 to the flow direction isolates the unit
  // multiplier exactly; the trailing block carries the section multipliers
  Mat q(n, 1);
  q.col(0) = blowup_field(m, y_start, p);
  Eigen::HouseholderQR<Mat> qr(q);
  const Mat Q = qr.householderQ();
  const Mat T = Q.transpose() * out.monodromy * Q;
  out.trivial_defect =
      std::abs(T(0, 0) - 1.0) + T.col(0).tail(n - 1).norm() / std::max(1.0, T.norm());

  Eigen::EigenSolver<Mat> es(T.bottomRightCorner(n - 1, n - 1));
  out.nontrivial.resize(n - 1);
  for (int i = 0; i < n - 1; ++i) out.nontrivial[i] = es.eigenvalues()(i);
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form affine flow, used for seeds and as an integration oracle
// ---------------------------------------------------------------------------

struct LinearFlow {
  Mat expAt;
  Mat integral;  // int_0^t e^{As} ds = A^{-1}(e^{At} - I) for invertible A
};

inline LinearFlow linear_flow_map(const Mat& A, double t) {
  LinearFlow lf;
  lf.expAt = (A * t).exp();
  lf.integral =
      A.partialPivLu().solve(lf.expAt - Mat::Identity(A.rows(), A.cols()));
  return lf;
}

/// x(t) for xdot = A x + b from x0, evaluated through the matrix exponential.
inline Vec affine_flow_state(const Mat& A, const Vec& b, const Vec& x0, double t) {
  const LinearFlow lf = linear_flow_map(A, t);
  return lf.expAt * x0 + lf.integral * b;
}

}  // namespace beb
