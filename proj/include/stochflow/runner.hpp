#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stochflow/assumptions.hpp"
#include "stochflow/config.hpp"
#include "stochflow/counterexamples.hpp"
#include "stochflow/feynman_kac.hpp"
#include "stochflow/jacobian.hpp"
#include "stochflow/norm_equivalence.hpp"
#include "stochflow/parallel.hpp"
#include "stochflow/report.hpp"

namespace sflow {

/// Exit statuses of a run.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct RunResult {
  Json report;
  std::vector<TraceRow> trace;
  std::string resolved_config;
  int exit_status = kExitOk;
};

namespace detail {

inline McSpec mc_spec(const ExperimentConfig& c, unsigned threads) {
  McSpec mc;
  mc.n_paths = c.integer("mc", "n_paths");
  mc.master_seed = c.integer("mc", "master_seed");
  mc.threads = threads;
  if (c.has("grid", "steps")) mc.steps = c.integer("grid", "steps");
  if (c.has("grid", "equidistribute")) mc.equidistribute = c.boolean("grid", "equidistribute");
  if (c.has("mc", "max_exploded_fraction")) mc.max_exploded_fraction = c.number("mc", "max_exploded_fraction");
  return mc;
}

inline QuadratureSpec quad_spec(const ExperimentConfig& c) {
  return {c.number("quadrature", "lo"), c.number("quadrature", "hi"),
          static_cast<int>(c.integer("quadrature", "nodes")), c.list("quadrature", "breaks")};
}

inline std::vector<Vec> start_points(const ExperimentConfig& c, int d) {
  const auto flat = c.list("time", "x");
  std::vector<Vec> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(d) <= flat.size(); i += static_cast<std::size_t>(d)) {
    Vec x(d);
    for (int k = 0; k < d; ++k) x(k) = flat[i + static_cast<std::size_t>(k)];
    out.push_back(x);
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

inline double rms(const std::vector<double>& sq) {
  return sq.empty() ? std::numeric_limits<double>::quiet_NaN()
                    : std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
}

// Squared errors of finite entries only; NaN marks an exploded path.
inline std::vector<double> finite_only(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

struct Outcome {
  bool pass = false;
  Json results;
  std::vector<TraceRow> trace;
};

inline Outcome run_simulate(const ExperimentConfig& c, unsigned threads) {
  const CoefficientSystem sys = c.build_system();
  const McSpec mc = mc_spec(c, threads);
  const double t = c.number("time", "t");
  const double s = c.number("time", "s");
  const TimeGrid grid = make_grid(sys, t, s, mc);
  const bool has_exact = sys.exact != ExactSolution::none;
  const std::size_t n = mc.n_paths;
  const std::size_t n_trace = std::min<std::size_t>(c.integer("output", "trace_paths"), n);
  Outcome out;
  out.results["points"] = Json::array();
  bool ok = true;
  const auto points = start_points(c, sys.d);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Vec& x = points[p];
    std::vector<Vec> terminal(n);
    std::vector<double> err2(n, 0.0);
    std::vector<char> exploded(n, 0);
    std::vector<FlowPath> traced(p == 0 ? n_trace : 0);
    parallel_for(n, threads, [&](std::size_t m) {
      const BrownianPath path = sample_brownian(grid, sys.dw, mc.master_seed, m);
      FlowPath flow = euler_forward(sys, t, x, path);
      exploded[m] = flow.exploded;
      if (!flow.exploded) {
        terminal[m] = flow.terminal();
        if (has_exact) {
          const FlowPath ex = exact_forward(sys, t, x, path);
          err2[m] = ex.exploded ? std::numeric_limits<double>::quiet_NaN()
                                : (ex.terminal() - flow.terminal()).squaredNorm();
        }
      } else {
        err2[m] = std::numeric_limits<double>::quiet_NaN();
      }
      if (m < traced.size()) traced[m] = std::move(flow);
    });
    for (std::size_t m = 0; m < traced.size(); ++m) append_trace(out.trace, m, traced[m]);
    std::size_t n_exploded = 0;
    for (char e : exploded) n_exploded += static_cast<std::size_t>(e);
    Json mean = Json::array();
    Json se = Json::array();
    for (int k = 0; k < sys.d; ++k) {
      std::vector<double> vals;
      for (std::size_t m = 0; m < n; ++m)
        if (!exploded[m]) vals.push_back(terminal[m](k));
      const SampleStats st = sample_stats(vals);
      mean.push_back(jnum(st.mean));
      se.push_back(jnum(st.stderr_mean));
    }
    const double frac = static_cast<double>(n_exploded) / static_cast<double>(n);
    ok = ok && frac <= mc.max_exploded_fraction;
    out.results["points"].push_back({{"x", jvec(x)},
                                     {"terminal_mean", mean},
                                     {"terminal_stderr", se},
                                     {"exploded", n_exploded},
                                     {"exact_rms_error", has_exact ? jnum(rms(finite_only(err2))) : Json(nullptr)}});
  }
  out.results["grid_steps"] = grid.steps();
  out.pass = ok;
  return out;
}

inline Outcome run_invert(const ExperimentConfig& c, unsigned threads) {
  const CoefficientSystem sys = c.build_system();
  const McSpec mc = mc_spec(c, threads);
  const double t = c.number("time", "t");
  const double s = c.number("time", "s");
  const double tol = c.number("check", "tolerance");
  const TimeGrid grid = make_grid(sys, t, s, mc);
  const bool has_exact = sys.exact != ExactSolution::none;
  const std::size_t n = mc.n_paths;
  const std::size_t n_trace = std::min<std::size_t>(c.integer("output", "trace_paths"), n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Outcome out;
  out.results["points"] = Json::array();
  bool ok = true;
  const auto points = start_points(c, sys.d);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Vec& x = points[p];
    std::vector<double> round_trip(n, nan);
    std::vector<double> vs_exact(n, nan);
    std::vector<FlowPath> traced(p == 0 ? n_trace : 0);
    parallel_for(n, threads, [&](std::size_t m) {
      const BrownianPath path = sample_brownian(grid, sys.dw, mc.master_seed, m);
      const FlowPath fwd = euler_forward(sys, t, x, path);
      if (fwd.exploded) return;
      FlowPath inv = euler_inverse(sys, s, fwd.terminal(), path);
      if (!inv.exploded) {
        round_trip[m] = (inv.terminal() - x).squaredNorm();
        if (has_exact) vs_exact[m] = (inv.terminal() - exact_inverse(sys, t, fwd.terminal(), path)).squaredNorm();
      }
      if (m < traced.size()) traced[m] = std::move(inv);
    });
    for (std::size_t m = 0; m < traced.size(); ++m) append_trace(out.trace, m, traced[m]);
    const auto rt = finite_only(round_trip);
    const double frac = 1.0 - static_cast<double>(rt.size()) / static_cast<double>(n);
    const double rms_rt = rms(rt);
    ok = ok && frac <= mc.max_exploded_fraction && rms_rt < tol;
    out.results["points"].push_back({{"x", jvec(x)},
                                     {"round_trip_rms", jnum(rms_rt)},
                                     {"exact_inverse_rms", has_exact ? jnum(rms(finite_only(vs_exact))) : Json(nullptr)},
                                     {"exploded_fraction", jnum(frac)}});
  }
  out.results["grid_steps"] = grid.steps();
  out.pass = ok;
  return out;
}

inline Outcome run_jacobian(const ExperimentConfig& c, unsigned threads) {
  const CoefficientSystem sys = c.build_system();
  const Weight weight = c.build_weight(sys);
  const McSpec mc = mc_spec(c, threads);
  const double t = c.number("time", "t");
  const double s = c.number("time", "s");
  const double tol = c.number("check", "tolerance");
  const double h = c.number("check", "fd_step");
  const TimeGrid grid = make_grid(sys, t, s, mc);
  const std::size_t n = mc.n_paths;
  const std::size_t n_trace = std::min<std::size_t>(c.integer("output", "trace_paths"), n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Outcome out;
  out.results["points"] = Json::array();
  bool ok = true;
  for (const Vec& x : start_points(c, sys.d)) {
    std::vector<double> liou_rel(n, nan);
    std::vector<double> fd_rel(n, nan);
    std::vector<std::vector<double>> logdet(out.trace.empty() ? n_trace : 0);
    parallel_for(n, threads, [&](std::size_t m) {
      const BrownianPath path = sample_brownian(grid, sys.dw, mc.master_seed, m);
      const FlowPath flow = euler_forward(sys, t, x, path);
      if (flow.exploded) return;
      const double var = variational_jacobian(sys, flow, path).matrices.back().determinant();
      const DeterminantPath lio = liouville_determinant(sys, flow, path);
      const double fd = fd_jacobian(sys, t, x, path, h).determinant();
      liou_rel[m] = std::abs(std::exp(lio.log_det.back()) - var) / std::abs(var);
      fd_rel[m] = std::abs(fd - var) / std::abs(var);
      if (m < logdet.size()) logdet[m] = lio.log_det;
    });
    for (std::size_t m = 0; m < logdet.size(); ++m)
      for (std::size_t j = 0; j < logdet[m].size(); ++j) out.trace.push_back({m, grid[j], 0, logdet[m][j]});
    const double med_l = median(finite_only(liou_rel));
    const double med_f = median(finite_only(fd_rel));
    ok = ok && med_l < tol && med_f < tol;
    out.results["points"].push_back({{"x", jvec(x)},
                                     {"liouville_vs_variational_median_rel", jnum(med_l)},
                                     {"fd_vs_variational_median_rel", jnum(med_f)}});

    MomentConfig mcfg;
    mcfg.t = t;
    mcfg.s = s;
    mcfg.x = x;
    mcfg.steps = mc.steps;
    mcfg.n_paths = n;
    mcfg.master_seed = mc.master_seed;
    mcfg.threads = threads;
    mcfg.truncation = c.number("check", "truncation");
    const auto alphas = c.list("check", "alphas");
    Json moments = Json::array();
    if (sys.K_tilde) {
      for (const auto& r : moment_report(MomentKind::det, sys, nullptr, alphas, mcfg)) {
        moments.push_back(to_json(r));
        ok = ok && r.pass;
      }
    }
    for (const auto& r : moment_report(MomentKind::rho, sys, &weight, alphas, mcfg)) {
      moments.push_back(to_json(r));
      ok = ok && r.pass;
    }
    out.results["points"].back()["moments"] = moments;
    if (!sys.K_tilde) out.results["points"].back()["det_moments"] = "skipped: system has no K_tilde";
  }
  out.results["grid_steps"] = grid.steps();
  out.pass = ok;
  return out;
}

inline Outcome run_normeq(const ExperimentConfig& c, unsigned threads) {
  const CoefficientSystem sys = c.build_system();
  const Weight weight = c.build_weight(sys);
  NormEquivConfig cfg;
  cfg.mc = mc_spec(c, threads);
  cfg.quad = quad_spec(c);
  cfg.z = c.number("check", "z");
  const TestFunction phi = c.build_test_function();
  const double t = c.number("time", "t");
  const double s = c.number("time", "s");
  Outcome out;
  const NormEquivReport rep = check_equivalence(sys, phi, weight, t, s, cfg);
  out.results["norm_equivalence"] = to_json(rep);
  out.pass = rep.lower_pass && rep.upper_pass;
  if (c.boolean("check", "change_of_variables")) {
    const auto cov = change_of_variables_check(sys, phi, weight, t, s, cfg, c.number("check", "rel_tol"));
    out.results["change_of_variables"] = to_json(cov);
    out.pass = out.pass && cov.pass;
  }
  return out;
}

inline Outcome run_counterexample(const ExperimentConfig& c, unsigned threads, std::string& verdict) {
  Outcome out;
  if (c.text("check", "family") == "gbm") {
    GbmCounterexampleConfig g;
    g.alpha = c.number("check", "alpha");
    g.beta = c.number("check", "beta");
    g.x = c.number("check", "x");
    g.s = c.number("check", "s");
    g.weight_rate = c.number("check", "weight_rate");
    g.caps = c.list("check", "caps");
    g.ratio_threshold = c.number("check", "ratio_threshold");
    g.n_paths = c.integer("mc", "n_paths");
    g.master_seed = c.integer("mc", "master_seed");
    g.threads = threads;
    const auto rep = counterexample_gbm(g);
    out.results["gbm"] = to_json(rep);
    verdict = rep.verdict;
  } else {
    OuCounterexampleConfig o;
    o.lambda = c.number("check", "lambda");
    o.a = c.number("check", "a");
    o.s = c.number("check", "s");
    o.y_lo = c.number("check", "y_lo");
    o.y_hi = c.number("check", "y_hi");
    o.y_nodes = static_cast<int>(c.integer("check", "y_nodes"));
    o.ratio_threshold = c.number("check", "ratio_threshold");
    const auto rep = counterexample_ou(o);
    out.results["ou"] = to_json(rep);
    verdict = rep.verdict;
  }
  out.pass = verdict == c.text("check", "expect");
  return out;
}

inline Outcome run_fk(const ExperimentConfig& c, unsigned threads) {
  PdeProblem pb;
  pb.system = c.build_system();
  pb.weight = c.build_weight(pb.system);
  pb.T = c.number("time", "T");
  const CompiledExpr& h = c.expression("check", "h");
  const CompiledExpr& f = c.expression("check", "f");
  const double T = pb.T;
  pb.h = [h, T](const Vec& x) { return h(T, x); };
  pb.f = [f](double r, const Vec& x) { return f(r, x); };
  pb.p = c.number("check", "p");
  FkConfig cfg;
  cfg.mc = mc_spec(c, threads);
  cfg.quad = quad_spec(c);
  cfg.time_nodes = static_cast<int>(c.integer("check", "time_nodes"));
  cfg.z = c.number("check", "z");
  const double t = c.number("time", "t");
  Outcome out;
  Json u = Json::array();
  const auto xs = start_points(c, pb.system.d);
  const auto est = fk_solve(pb, t, xs, cfg.mc);
  for (std::size_t i = 0; i < xs.size(); ++i) u.push_back({{"x", jvec(xs[i])}, {"u", to_json(est[i])}});
  out.results["u"] = u;
  const auto lp = weighted_lp_check(pb, t, cfg);
  out.results["weighted_lp"] = to_json(lp);
  out.pass = lp.pass;
  try {
    const auto lb = lower_bound_check(pb, t, cfg);
    out.results["lower_bound"] = to_json(lb);
    out.pass = out.pass && lb.pass && lb.nonnegative;
  } catch (const std::invalid_argument& e) {
    out.results["lower_bound"] = std::string("skipped: ") + e.what();
  }
  return out;
}

inline Outcome run_assumptions(const ExperimentConfig& c) {
  const CoefficientSystem sys = c.build_system();
  const Weight weight = c.build_weight(sys);
  AssumptionGrid g;
  g.lo = c.number("check", "lo");
  g.hi = c.number("check", "hi");
  g.n_x = static_cast<int>(c.integer("check", "n_x"));
  g.t0 = c.number("check", "t0");
  g.t1 = c.number("check", "t1");
  g.n_r = static_cast<int>(c.integer("check", "n_r"));
  g.tolerance = c.number("check", "tolerance");
  const auto rep = check_assumptions(sys, weight, g);
  Json ratios = Json::object();
  for (const auto& [k, v] : rep.ratios) ratios[k] = {{"ratio", jnum(v)}, {"violated", rep.violated.at(k)}};
  Outcome out;
  out.results = {{"ratios", ratios},
                 {"observed_det_rate", jnum(rep.observed_det_rate)},
                 {"observed_rho_rate", jnum(rep.observed_rho_rate)},
                 {"observed_pair_rate", jnum(rep.observed_pair_rate)},
                 {"samples", rep.samples},
                 {"pass", rep.pass}};
  out.pass = rep.pass;
  return out;
}

}  // namespace detail

/// Runs a validated configuration. The report never depends on `threads`.
/// Module errors are caught and reported with exit status 1.
inline RunResult run_experiment(const ExperimentConfig& c, unsigned threads = 1) {
  RunResult res;
  res.resolved_config = c.resolved_text();
  Json& r = res.report;
  r["experiment"] = c.experiment;
  r["config"] = c.resolved_json();
  if (c.has("mc", "master_seed")) {
    r["seeds"] = {{"master_seed", c.integer("mc", "master_seed")},
                  {"generator", "philox4x32-10"},
                  {"key", "(master mod 2^32, master div 2^32)"},
                  {"counter", "(path mod 2^32, path div 2^32, step, stream * 2^25 + component)"},
                  {"stream", "brownian"}};
  }
  std::string expected = c.text("check", "expect");
  std::string outcome;
  try {
    detail::Outcome o;
    const auto& ex = c.experiment;
    if (ex == "simulate") {
      o = detail::run_simulate(c, threads);
    } else if (ex == "invert") {
      o = detail::run_invert(c, threads);
    } else if (ex == "jacobian") {
      o = detail::run_jacobian(c, threads);
    } else if (ex == "normeq") {
      o = detail::run_normeq(c, threads);
    } else if (ex == "fk") {
      o = detail::run_fk(c, threads);
    } else if (ex == "assumptions") {
      o = detail::run_assumptions(c);
    }
    if (ex == "counterexample") {
      o = detail::run_counterexample(c, threads, outcome);
    } else {
      outcome = o.pass ? "pass" : "fail";
    }
    r["results"] = std::move(o.results);
    res.trace = std::move(o.trace);
  } catch (const std::exception& e) {
    r["error"] = e.what();
    outcome = "error";
  }
  r["outcome"] = outcome;
  r["expected"] = expected;
  r["expectation_met"] = outcome == expected;
  res.exit_status = outcome == expected ? kExitOk : kExitCheckFailed;
  r["exit_status"] = res.exit_status;
  return res;
}

}  // namespace sflow
