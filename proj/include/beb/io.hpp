#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beb/amplitude.hpp"
#include "beb/common.hpp"
#include "beb/continuation.hpp"
#include "beb/flow.hpp"
#include "beb/model.hpp"
#include "beb/models.hpp"
#include "beb/normalform.hpp"

namespace beb {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Shortest round-trippable decimal form. All emitted numbers go through
/// here so identical inputs produce byte-identical files.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// FNV-1a over a canonical serialization of the model matrices. Echoed in
/// output headers so a result file records which model produced it.
inline std::uint64_t model_hash(const HybridModel& m) {
  std::string s = std::to_string(m.n);
  auto add = [&s](const double* p, long count) {
    for (long i = 0; i < count; ++i) {
      s += ',';
      s += format_real(p[i]);
    }
  };
  add(m.A.data(), m.A.size());
  add(m.A1.data(), m.A1.size());
  add(m.M.data(), m.M.size());
  add(m.M1.data(), m.M1.size());
  add(m.B.data(), m.B.size());
  add(m.C.data(), m.C.size());
  add(&m.nonlinear.epsilon, 1);
  add(&m.nonlinear.q1, 1);
  add(&m.nonlinear.q2, 1);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string model_hash_hex(const HybridModel& m) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(model_hash(m)));
  return buf;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

namespace detail {

inline InputError field_error(const std::string& path, const std::string& what) {
  return InputError("model spec: " + path + ": " + what);
}

inline Vec parse_vector(const json& j, const std::string& path, int n) {
  if (!j.is_array()) throw field_error(path, "expected an array");
  if (int(j.size()) != n)
    throw field_error(path, "expected length " + std::to_string(n) + ", got " +
                                std::to_string(j.size()));
  Vec v(n);
  for (int i = 0; i < n; ++i) {
    if (!j[i].is_number())
      throw field_error(path + "[" + std::to_string(i) + "]", "expected a number");
    v(i) = j[i].get<double>();
  }
  return v;
}

/// Row-major n x n matrix given either flat or as nested rows.
inline Mat parse_matrix(const json& j, const std::string& path, int n) {
  if (!j.is_array()) throw field_error(path, "expected an array");
  Mat A(n, n);
  if (int(j.size()) == n && j[0].is_array()) {
    for (int i = 0; i < n; ++i) {
      const Vec row = parse_vector(j[i], path + "[" + std::to_string(i) + "]", n);
      A.row(i) = row.transpose();
    }
    return A;
  }
  if (int(j.size()) != n * n)
    throw field_error(path, "expected " + std::to_string(n) + "x" + std::to_string(n) +
                                " (" + std::to_string(n * n) + " entries), got " +
                                std::to_string(j.size()));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const json& e = j[i * n + k];
      if (!e.is_number())
        throw field_error(path + "[" + std::to_string(i * n + k) + "]",
                          "expected a number");
      A(i, k) = e.get<double>();
    }
  return A;
}

}  // namespace detail

/// Build a model from a parsed spec: either a `builtin` stanza resolved
/// through the registry, or explicit matrices. Errors carry the offending
/// field path.
inline HybridModel model_from_json(const json& j) {
  if (!j.is_object()) throw detail::field_error("$", "expected an object");

  if (j.contains("builtin")) {
    const json& b = j["builtin"];
    if (!b.is_object()) throw detail::field_error("builtin", "expected an object");
    if (!b.contains("name") || !b["name"].is_string())
      throw detail::field_error("builtin.name", "expected a string");
    std::map<std::string, double> params;
    if (b.contains("params")) {
      if (!b["params"].is_object())
        throw detail::field_error("builtin.params", "expected an object");
      for (const auto& [key, val] : b["params"].items()) {
        if (!val.is_number())
          throw detail::field_error("builtin.params." + key, "expected a number");
        params[key] = val.get<double>();
      }
    }
    return build_builtin(b["name"].get<std::string>(), params);
  }

  if (!j.contains("n") || !j["n"].is_number_integer())
    throw detail::field_error("n", "expected an integer");
  const int n = j["n"].get<int>();
  if (n < 2) throw detail::field_error("n", "expected n >= 2");

  for (const char* req : {"A", "M", "B", "C"})
    if (!j.contains(req)) throw detail::field_error(req, "missing required field");

  HybridModel m;
  m.n = n;
  m.A = detail::parse_matrix(j["A"], "A", n);
  m.M = detail::parse_vector(j["M"], "M", n);
  m.B = detail::parse_vector(j["B"], "B", n);
  m.C = detail::parse_vector(j["C"], "C", n);
  m.A1 = j.contains("A1") ? detail::parse_matrix(j["A1"], "A1", n) : Mat::Zero(n, n);
  m.M1 = j.contains("M1") ? detail::parse_vector(j["M1"], "M1", n) : Vec::Zero(n);

  if (j.contains("nonlinear")) {
    const json& nl = j["nonlinear"];
    if (!nl.is_object()) throw detail::field_error("nonlinear", "expected an object");
    for (const auto& [key, val] : nl.items()) {
      if (key != "epsilon" && key != "q1" && key != "q2")
        throw detail::field_error("nonlinear." + key, "unknown field");
      if (!val.is_number())
        throw detail::field_error("nonlinear." + key, "expected a number");
    }
    m.nonlinear.epsilon = nl.value("epsilon", 0.0);
    m.nonlinear.q1 = nl.value("q1", 0.0);
    m.nonlinear.q2 = nl.value("q2", 0.0);
  }
  return m;
}

inline HybridModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InputError("model spec: " + path + ": " + e.what());
  }
  return model_from_json(j);
}

inline json model_to_json(const HybridModel& m) {
  json j;
  j["n"] = m.n;
  auto mat = [&](const Mat& A) {
    json rows = json::array();
    for (int i = 0; i < A.rows(); ++i) {
      json row = json::array();
      for (int k = 0; k < A.cols(); ++k) row.push_back(A(i, k));
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [&](const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  j["A"] = mat(m.A);
  j["A1"] = mat(m.A1);
  j["M"] = vec(m.M);
  j["M1"] = vec(m.M1);
  j["B"] = vec(m.B);
  j["C"] = vec(m.C);
  j["nonlinear"] = {{"epsilon", m.nonlinear.epsilon}, {"q1", m.nonlinear.q1}, {"q2", m.nonlinear.q2}};
  return j;
}

inline void save_model(const HybridModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file: " + path);
  out << model_to_json(m).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

/// Event flag per trajectory row: 0 smooth sample, 1 impact arrival, 2 impact
/// departure, 3 grazing arrival, 4 grazing departure, 5 sticking sample.
/// Impact events contribute two consecutive rows at the same time stamp, the
/// pre-reset state then the post-reset state.
enum class RowFlag : int {
  smooth = 0,
  impact_pre = 1,
  impact_post = 2,
  grazing_pre = 3,
  grazing_post = 4,
  sticking = 5,
};

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto row = [&out](double t, const Vec& x, RowFlag flag) {
    out << format_real(t);
    for (int i = 0; i < x.size(); ++i) out << ',' << format_real(x(i));
    out << ',' << int(flag) << '\n';
  };
  out << "t";
  int n = 0;
  if (!traj.segments.empty() && !traj.segments.front().x.empty())
    n = int(traj.segments.front().x.front().size());
  else if (!traj.events.empty())
    n = int(traj.events.front().x_pre.size());
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  out << ",event_flag\n";

  std::size_t next_event = 0;
  auto flush_events_before = [&](double t_limit) {
    while (next_event < traj.events.size() && traj.events[next_event].t <= t_limit) {
      const ImpactEvent& ev = traj.events[next_event++];
      row(ev.t, ev.x_pre, ev.grazing ? RowFlag::grazing_pre : RowFlag::impact_pre);
      row(ev.t, ev.x_post, ev.grazing ? RowFlag::grazing_post : RowFlag::impact_post);
    }
  };
  for (const TrajectorySegment& seg : traj.segments) {
    if (!seg.t.empty()) flush_events_before(seg.t.front() - 1e-14);
    for (std::size_t k = 0; k < seg.t.size(); ++k)
      row(seg.t[k], seg.x[k], seg.sticking ? RowFlag::sticking : RowFlag::smooth);
    if (!seg.t.empty()) flush_events_before(seg.t.back() + 1e-14);
  }
  flush_events_before(std::numeric_limits<double>::infinity());
}

inline void write_diagram_csv(std::ostream& out, const std::vector<DiagramSample>& samples) {
  out << "mu,seed_id,observable_value\n";
  for (const DiagramSample& s : samples)
    for (double v : s.values)
      out << format_real(s.mu) << ',' << s.seed_index << ',' << format_real(v) << '\n';
}

inline void write_branch_csv(std::ostream& out, const CycleBranch& branch) {
  out << "mu,eta,period,v_pre,min_interior_H,lambda_max_abs,event\n";
  for (const BranchPoint& p : branch.points) {
    double lam = 0.0;
    for (const Complex& z : p.multipliers) lam = std::max(lam, std::abs(z));
    out << format_real(p.mu) << ',' << format_real(p.eta) << ','
        << format_real(p.period) << ',' << format_real(p.v_pre) << ','
        << format_real(p.min_interior_H) << ',' << format_real(lam) << ','
        << to_string(p.event) << '\n';
  }
}

inline void write_curve_csv(std::ostream& out, const BifurcationCurve& curve) {
  out << "mu,eta,period,lambda_crit\n";
  for (const CurvePoint& p : curve.points)
    out << format_real(p.mu) << ',' << format_real(p.eta) << ','
        << format_real(p.period) << ',' << format_real(p.critical_multiplier.real())
        << '\n';
}

/// One row per mu: both predicted branches in original units, then any
/// simulated values (absent columns stay empty so the header width is fixed
/// by the widest row).
struct AmplitudeRow {
  double mu = 0.0;
  double pred_branch1 = 0.0;
  double pred_branch2 = 0.0;
  std::vector<double> simulated;
};

inline void write_amplitude_csv(std::ostream& out, const std::vector<AmplitudeRow>& rows) {
  std::size_t max_sim = 0;
  for (const AmplitudeRow& r : rows) max_sim = std::max(max_sim, r.simulated.size());
  out << "mu,A_pred_branch1,A_pred_branch2";
  for (std::size_t i = 1; i <= max_sim; ++i) out << ",A_sim" << i;
  out << '\n';
  for (const AmplitudeRow& r : rows) {
    out << format_real(r.mu) << ',' << format_real(r.pred_branch1) << ','
        << format_real(r.pred_branch2);
    for (std::size_t i = 0; i < max_sim; ++i) {
      out << ',';
      if (i < r.simulated.size()) out << format_real(r.simulated[i]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Coefficient report
// ---------------------------------------------------------------------------

inline json unfolding_to_json(const UnfoldingResult& r) {
  json j;
  j["kind"] = r.coeffs.type == UnfoldingType::saddle_node ? "SN" : "PD";
  j["lambda0"] = critical_multiplier(r.coeffs.type);
  j["a"] = r.coeffs.a;
  j["b"] = r.coeffs.b;
  j["c"] = r.coeffs.c;
  j["d"] = r.coeffs.d;
  j["e"] = r.coeffs.e;
  if (r.coeffs.type == UnfoldingType::saddle_node) {
    j["m"] = r.coeffs.m;
    j["n"] = r.coeffs.n;
  } else {
    j["f"] = r.coeffs.f;
  }
  j["slope"] = r.coeffs.curve_slope;
  j["section_side"] = to_string(r.side);
  j["genericity"] = {{"transversal", r.coeffs.transversal},
                     {"nondegenerate", r.coeffs.nondegenerate}};
  json fd = json::object();
  for (const auto& [name, tol] : r.coeffs.stencil_tol) fd[name] = tol;
  j["fd_diagnostics"] = fd;
  if (!r.coeffs.warnings.empty()) j["warnings"] = r.coeffs.warnings;
  return j;
}

}  // namespace beb
