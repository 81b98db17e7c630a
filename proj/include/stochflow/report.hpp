#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stochflow/counterexamples.hpp"
#include "stochflow/feynman_kac.hpp"
#include "stochflow/jacobian.hpp"
#include "stochflow/norm_equivalence.hpp"

namespace sflow {

using Json = nlohmann::json;

/// JSON has no inf/nan; those become the strings "inf", "-inf", "nan".
inline Json jnum(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline Json jnums(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(jnum(x));
  return out;
}

inline Json jvec(const Vec& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(jnum(v(i)));
  return out;
}

inline Json to_json(const Estimate& e) {
  return {{"value", jnum(e.value)},
          {"stderr", jnum(e.stderr_value)},
          {"n_paths", e.n_paths},
          {"n_nodes", e.n_nodes},
          {"exploded_fraction", jnum(e.exploded_fraction)}};
}

inline Json to_json(const BoundReport& r) {
  return {{"kind", to_string(r.kind)},       {"alpha", jnum(r.alpha)},
          {"estimate", jnum(r.estimate)},    {"stderr", jnum(r.stderr_estimate)},
          {"bound", jnum(r.bound)},          {"log_bound", jnum(r.log_bound)},
          {"k_tilde_l1", jnum(r.k_tilde_l1)}, {"pass", r.pass},
          {"n_paths", r.n_paths},            {"exploded", r.exploded},
          {"stopped", r.stopped}};
}

inline Json to_json(const NormEquivReport& r) {
  return {{"lhs", to_json(r.lhs)},
          {"mid", to_json(r.mid)},
          {"k_tilde_l1", jnum(r.k_tilde_l1)},
          {"c", jnum(r.constants.c)},
          {"C", jnum(r.constants.C)},
          {"log_c", jnum(r.constants.log_c)},
          {"log_C", jnum(r.constants.log_C)},
          {"lower_log_margin", jnum(r.lower_log_margin)},
          {"upper_log_margin", jnum(r.upper_log_margin)},
          {"lower_pass", r.lower_pass},
          {"upper_pass", r.upper_pass},
          {"ratio", jnum(r.ratio)}};
}

inline Json to_json(const ChangeOfVariablesReport& r) {
  return {{"forward", to_json(r.forward)},
          {"inverse", to_json(r.inverse)},
          {"residual", jnum(r.residual)},
          {"relative_residual", jnum(r.relative_residual)},
          {"combined_stderr", jnum(r.combined_stderr)},
          {"pass", r.pass}};
}

inline Json to_json(const InequalityReport& r) {
  return {{"kind", r.kind},
          {"lhs", to_json(r.lhs)},
          {"rhs", jnum(r.rhs)},
          {"log_constant", jnum(r.log_constant)},
          {"k_tilde_l1", jnum(r.k_tilde_l1)},
          {"log_margin", jnum(r.log_margin)},
          {"pass", r.pass},
          {"nonnegative", r.nonnegative},
          {"z_component", r.z_component}};
}

inline Json to_json(const DivergenceReport& r) {
  Json mc = Json::array();
  for (const auto& e : r.truncated_mc) mc.push_back(to_json(e));
  return {{"weighted_integral_exact", jnum(r.weighted_integral_exact)},
          {"weighted_integral_quadrature", jnum(r.weighted_integral_quadrature)},
          {"caps", jnums(r.caps)},
          {"truncated", jnums(r.truncated)},
          {"truncated_mc", mc},
          {"strictly_increasing", r.strictly_increasing},
          {"last_to_first", jnum(r.last_to_first)},
          {"verdict", r.verdict}};
}

inline Json to_json(const RatioReport& r) {
  return {{"y", jnums(r.y)},
          {"log_r", jnums(r.log_r)},
          {"log_ratio", jnum(r.log_ratio)},
          {"ratio", jnum(r.ratio)},
          {"validation_error", jnum(r.validation_error)},
          {"verdict", r.verdict}};
}

/// Two-space indentation, keys sorted, trailing newline.
inline std::string dump_report(const Json& j) { return j.dump(2) + "\n"; }

/// One row of a path trace.
struct TraceRow {
  std::uint64_t path_id = 0;
  double time = 0.0;
  int component = 0;
  double value = 0.0;
};

inline std::string csv_trace(const std::vector<TraceRow>& rows) {
  std::string out = "path_id,time,component,value\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%d,%.17g\n", static_cast<unsigned long long>(r.path_id), r.time,
                  r.component, r.value);
    out += buf;
  }
  return out;
}

/// Rows for every state of a flow path; inverse paths are reported at their
/// original times.
inline void append_trace(std::vector<TraceRow>& rows, std::uint64_t path_id, const FlowPath& flow) {
  const auto& ts = flow.grid.times();
  for (std::size_t j = 0; j < flow.states.size(); ++j) {
    const double time = flow.direction == FlowDirection::forward ? ts[j] : flow.origin_time - ts[j];
    for (int c = 0; c < flow.states[j].size(); ++c) rows.push_back({path_id, time, c, flow.states[j](c)});
  }
}

}  // namespace sflow
