#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stochflow/catalog.hpp"
#include "stochflow/expression.hpp"
#include "stochflow/norm_equivalence.hpp"
#include "stochflow/weight.hpp"

namespace sflow {

/// Any problem with a configuration document. line/column are 1-based; 0 when
/// the problem has no single source position (a missing key).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, std::size_t line, std::size_t column)
      : std::runtime_error(line ? std::to_string(line) + ":" + std::to_string(column) + ": " + msg : msg),
        line_(line),
        column_(column) {}
  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
  std::size_t column = 0;  // of the value's first character
  std::size_t key_column = 0;
  bool quoted = false;
  bool defaulted = false;
};

/// Raw document: section name -> key -> entry. Keys before any header live in "".
struct ConfigDocument {
  std::map<std::string, std::map<std::string, ConfigEntry>> sections;
  std::map<std::string, std::size_t> section_lines;

  [[nodiscard]] const ConfigEntry* find(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

}  // namespace detail

/// Sections in [brackets], `key = value` lines, `#` comments outside quotes.
inline ConfigDocument parse_document(std::string_view text) {
  ConfigDocument doc;
  doc.sections[""];
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;

    bool in_quote = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quote = !in_quote;
      if (line[i] == '#' && !in_quote) {
        cut = i;
        break;
      }
    }
    line = line.substr(0, cut);
    const std::string_view body = detail::trim(line);
    if (body.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::size_t indent = static_cast<std::size_t>(body.data() - line.data());
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("section header missing ']'", line_no, indent + body.size());
      const std::string_view name = detail::trim(body.substr(1, body.size() - 2));
      if (!detail::is_identifier(name)) throw ConfigError("malformed section name", line_no, indent + 2);
      section = std::string(name);
      if (doc.section_lines.count(section)) throw ConfigError("duplicate section [" + section + "]", line_no, indent + 1);
      doc.section_lines[section] = line_no;
      doc.sections[section];
    } else {
      const std::size_t eq = body.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no, indent + 1);
      const std::string_view key = detail::trim(body.substr(0, eq));
      if (!detail::is_identifier(key)) throw ConfigError("malformed key", line_no, indent + 1);
      std::string_view raw = body.substr(eq + 1);
      const std::size_t lead = raw.find_first_not_of(" \t");
      ConfigEntry entry;
      entry.line = line_no;
      entry.key_column = indent + 1;
      entry.column = indent + eq + 2 + (lead == std::string_view::npos ? 0 : lead);
      raw = detail::trim(raw);
      if (!raw.empty() && raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') throw ConfigError("unterminated string", line_no, entry.column);
        entry.quoted = true;
        entry.column += 1;
        raw = raw.substr(1, raw.size() - 2);
        if (raw.find('"') != std::string_view::npos) throw ConfigError("stray '\"' in string", line_no, entry.column);
      }
      if (raw.empty() && !entry.quoted) throw ConfigError("missing value", line_no, entry.column);
      entry.value = std::string(raw);
      auto [it, inserted] = doc.sections[section].emplace(std::string(key), entry);
      if (!inserted) throw ConfigError("duplicate key '" + std::string(key) + "'", line_no, indent + 1);
    }
    if (end == text.size()) break;
  }
  return doc;
}

enum class ValueKind { number, integer, boolean, word, list, expression };

struct KeySpec {
  std::string section;
  std::string key;
  ValueKind kind = ValueKind::number;
  std::optional<std::string> default_value;  // nullopt: required
  std::vector<std::string> choices = {};     // for words
};

inline const std::vector<std::string>& experiment_tags() {
  static const std::vector<std::string> tags = {"simulate", "invert", "jacobian", "normeq",
                                                "counterexample", "fk", "assumptions"};
  return tags;
}

inline const std::vector<std::string>& section_order() {
  static const std::vector<std::string> order = {"",     "system", "params",     "weight", "time",  "grid",
                                                 "mc",   "quadrature", "check", "output"};
  return order;
}

namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// "none" and "" are the empty list.
inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty() || trim(s) == "none") return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(std::string_view(s).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> to_number(std::string_view s) {
  s = trim(s);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || std::isnan(v) || s.empty()) return std::nullopt;
  return v;
}

// Catalog parameters accepted under [system] per tag, with defaults.
inline std::vector<KeySpec> catalog_keys(const std::string& tag, int d, int dw) {
  auto num = [](std::string k, std::optional<std::string> def) {
    return KeySpec{"system", std::move(k), ValueKind::number, std::move(def)};
  };
  auto integer = [](std::string k, std::optional<std::string> def) {
    return KeySpec{"system", std::move(k), ValueKind::integer, std::move(def)};
  };
  if (tag == "gbm") return {num("alpha", std::nullopt), num("beta", std::nullopt)};
  if (tag == "ou") return {num("lambda", std::nullopt), integer("d", "1")};
  if (tag == "bounded_trig") return {num("kappa", std::nullopt), integer("d", "1")};
  if (tag == "heat") return {num("sigma0", std::nullopt), integer("d", "1")};
  if (tag == "linear") {
    std::vector<KeySpec> keys = {integer("d", std::nullopt), integer("dw", std::nullopt)};
    for (int i = 1; i <= d; ++i)
      for (int j = 1; j <= d; ++j) keys.push_back(num("B" + std::to_string(i) + std::to_string(j), "0"));
    for (int k = 1; k <= dw; ++k)
      for (int i = 1; i <= d; ++i)
        for (int j = 1; j <= d; ++j)
          keys.push_back(num("A" + std::to_string(k) + "_" + std::to_string(i) + std::to_string(j), "0"));
    return keys;
  }
  // expression-defined coefficients
  std::vector<KeySpec> keys = {integer("d", "1"), integer("dw", "1"), num("K", std::nullopt),
                               KeySpec{"system", "K_tilde", ValueKind::number, "none"},
                               KeySpec{"system", "K_hat", ValueKind::number, "none"}};
  for (int i = 1; i <= d; ++i) keys.push_back({"system", "b" + std::to_string(i), ValueKind::expression, "0"});
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= dw; ++j)
      keys.push_back({"system", "sigma" + std::to_string(i) + std::to_string(j), ValueKind::expression, "0"});
  return keys;
}

}  // namespace detail

/// A validated configuration. Every key the run reads is present in `doc`,
/// defaults flagged, values normalized.
class ExperimentConfig {
 public:
  std::string experiment;
  ConfigDocument doc;
  std::vector<KeySpec> schema;
  std::map<std::string, CompiledExpr> expressions;  // "section.key" -> program

  [[nodiscard]] bool has(const std::string& section, const std::string& key) const {
    return doc.find(section, key) != nullptr;
  }
  [[nodiscard]] const std::string& text(const std::string& section, const std::string& key) const {
    const ConfigEntry* e = doc.find(section, key);
    if (!e) throw std::logic_error("config key [" + section + "] " + key + " not in schema");
    return e->value;
  }
  [[nodiscard]] double number(const std::string& section, const std::string& key) const {
    return *detail::to_number(text(section, key));
  }
  [[nodiscard]] std::optional<double> optional_number(const std::string& section, const std::string& key) const {
    if (!has(section, key) || text(section, key) == "none") return std::nullopt;
    return number(section, key);
  }
  [[nodiscard]] std::uint64_t integer(const std::string& section, const std::string& key) const {
    return std::stoull(text(section, key));
  }
  [[nodiscard]] bool boolean(const std::string& section, const std::string& key) const {
    return text(section, key) == "true";
  }
  [[nodiscard]] std::vector<double> list(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : detail::split_list(text(section, key))) out.push_back(*detail::to_number(item));
    return out;
  }
  [[nodiscard]] const CompiledExpr& expression(const std::string& section, const std::string& key) const {
    return expressions.at(section + "." + key);
  }

  /// Constants visible to expressions ([params]).
  [[nodiscard]] std::map<std::string, double> params() const {
    std::map<std::string, double> out;
    const auto it = doc.sections.find("params");
    if (it != doc.sections.end())
      for (const auto& [k, e] : it->second) out[k] = *detail::to_number(e.value);
    return out;
  }

  /// Canonical text: fixed section order, schema key order, defaults marked.
  [[nodiscard]] std::string resolved_text() const {
    std::ostringstream out;
    out << "experiment = " << experiment << "\n";
    for (const auto& section : section_order()) {
      if (section.empty()) continue;
      std::vector<std::pair<std::string, const ConfigEntry*>> rows;
      for (const auto& k : schema)
        if (k.section == section) rows.emplace_back(k.key, doc.find(section, k.key));
      if (section == "params")
        for (const auto& [k, e] : doc.sections.at("params")) rows.emplace_back(k, &e);
      if (rows.empty()) continue;
      out << "\n[" << section << "]\n";
      for (const auto& [key, e] : rows) {
        const bool expr = kind_of(section, key) == ValueKind::expression;
        out << key << " = " << (expr ? "\"" + e->value + "\"" : e->value);
        if (e->defaulted) out << "  # default";
        out << "\n";
      }
    }
    return out.str();
  }

  /// The same content as JSON, typed.
  [[nodiscard]] nlohmann::json resolved_json() const {
    nlohmann::json j = nlohmann::json::object();
    j["experiment"] = experiment;
    std::vector<std::string> defaulted;
    for (const auto& [section, entries] : doc.sections) {
      if (section.empty()) continue;
      for (const auto& [key, e] : entries) {
        nlohmann::json& slot = j[section][key];
        switch (kind_of(section, key)) {
          case ValueKind::number:
            if (e.value == "none") {
              slot = nullptr;
            } else {
              const double v = *detail::to_number(e.value);
              slot = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(e.value);
            }
            break;
          case ValueKind::integer: slot = std::stoull(e.value); break;
          case ValueKind::boolean: slot = e.value == "true"; break;
          case ValueKind::list: {
            slot = nlohmann::json::array();
            for (const auto& item : detail::split_list(e.value)) {
              const double v = *detail::to_number(item);
              slot.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(item));
            }
            break;
          }
          default: slot = e.value;
        }
        if (e.defaulted) defaulted.push_back(section + "." + key);
      }
    }
    j["defaults_used"] = defaulted;
    return j;
  }

  [[nodiscard]] ValueKind kind_of(const std::string& section, const std::string& key) const {
    if (section == "params") return ValueKind::number;
    for (const auto& k : schema)
      if (k.section == section && k.key == key) return k.kind;
    return ValueKind::word;
  }

  [[nodiscard]] CoefficientSystem build_system() const;
  [[nodiscard]] Weight build_weight(const CoefficientSystem& sys) const;
  [[nodiscard]] TestFunction build_test_function() const;
};

namespace detail {

inline std::string raw_or(const ConfigDocument& doc, const std::string& s, const std::string& k,
                          const std::string& def) {
  const ConfigEntry* e = doc.find(s, k);
  return e ? e->value : def;
}

inline int raw_dim(const ConfigDocument& doc, const std::string& k, int def) {
  const ConfigEntry* e = doc.find("system", k);
  if (!e) return def;
  const auto v = to_number(e->value);
  if (!v || *v != std::floor(*v) || *v < 1 || *v > kMaxDim) {
    throw ConfigError("'" + k + "' must be an integer in [1, " + std::to_string(kMaxDim) + "]", e->line, e->column);
  }
  return static_cast<int>(*v);
}

inline bool uses_system(const std::string& ex) { return ex != "counterexample"; }
inline bool uses_weight(const std::string& ex) {
  return ex == "normeq" || ex == "fk" || ex == "assumptions" || ex == "jacobian";
}
inline bool uses_paths(const std::string& ex) { return ex != "counterexample" && ex != "assumptions"; }

inline std::vector<KeySpec> build_schema(const std::string& ex, const ConfigDocument& doc) {
  using VK = ValueKind;
  std::vector<KeySpec> s = {{"", "experiment", VK::word, std::nullopt, experiment_tags()}};
  auto add = [&s](std::string sec, std::string key, VK kind, std::optional<std::string> def,
                  std::vector<std::string> choices = {}) {
    s.push_back({std::move(sec), std::move(key), kind, std::move(def), std::move(choices)});
  };

  if (uses_system(ex)) {
    add("system", "tag", VK::word, std::nullopt, {"gbm", "ou", "linear", "bounded_trig", "heat", "expression"});
    const std::string tag = raw_or(doc, "system", "tag", "");
    if (tag == "expression" && doc.find("system", "b") && raw_dim(doc, "d", 1) != 1) {
      const auto* e = doc.find("system", "b");
      throw ConfigError("'b' is only allowed when d = 1; use b1..bd", e->line, e->column);
    }
    auto keys = catalog_keys(tag, raw_dim(doc, "d", 1), raw_dim(doc, "dw", 1));
    if (tag == "expression" && (ex == "normeq" || ex == "fk")) {
      for (auto& k : keys)
        if (k.key == "K_tilde") k.default_value.reset();
    }
    s.insert(s.end(), keys.begin(), keys.end());
  }
  if (uses_weight(ex)) {
    add("weight", "family", VK::word, "polynomial", {"polynomial", "exponential"});
    if (raw_or(doc, "weight", "family", "polynomial") == "polynomial") {
      add("weight", "beta", VK::number, "0");
    } else {
      add("weight", "profile", VK::word, "smooth_abs", {"abs", "smooth_abs", "linear"});
      add("weight", "rate", VK::number, "0");
    }
  }
  if (ex == "simulate" || ex == "invert" || ex == "jacobian" || ex == "normeq") {
    add("time", "t", VK::number, "0");
    add("time", "s", VK::number, "1");
  }
  if (ex == "fk") {
    add("time", "t", VK::number, "0");
    add("time", "T", VK::number, "1");
  }
  if (ex == "simulate" || ex == "invert" || ex == "jacobian" || ex == "fk") add("time", "x", VK::list, "0.5");
  if (uses_paths(ex)) {
    add("grid", "steps", VK::integer, "64");
    add("grid", "equidistribute", VK::boolean, "false");
  }
  if (ex != "assumptions") {
    add("mc", "n_paths", VK::integer, ex == "counterexample" ? "100000" : "1000");
    add("mc", "master_seed", VK::integer, "1");
    if (uses_paths(ex)) add("mc", "max_exploded_fraction", VK::number, "0.01");
  }
  if (ex == "normeq" || ex == "fk") {
    add("quadrature", "lo", VK::number, "-8");
    add("quadrature", "hi", VK::number, "8");
    add("quadrature", "nodes", VK::integer, "64");
    add("quadrature", "breaks", VK::list, "none");
  }

  if (ex == "simulate") {
    add("check", "expect", VK::word, "pass", {"pass", "fail"});
  } else if (ex == "invert") {
    add("check", "tolerance", VK::number, "0.05");
    add("check", "expect", VK::word, "pass", {"pass", "fail"});
  } else if (ex == "jacobian") {
    add("check", "tolerance", VK::number, "0.02");
    add("check", "fd_step", VK::number, "1e-4");
    add("check", "alphas", VK::list, "-2, -1, 1, 2, 3");
    add("check", "truncation", VK::number, "inf");
    add("check", "z", VK::number, "3");
    add("check", "expect", VK::word, "pass", {"pass", "fail"});
  } else if (ex == "normeq") {
    add("check", "phi", VK::word, "gaussian_bump", {"indicator", "gaussian_bump", "capped_abs"});
    add("check", "phi_width", VK::number, "1");
    add("check", "z", VK::number, "3");
    add("check", "change_of_variables", VK::boolean, "false");
    if (raw_or(doc, "check", "change_of_variables", "false") == "true") add("check", "rel_tol", VK::number, "0.05");
    add("check", "expect", VK::word, "pass", {"pass", "fail"});
  } else if (ex == "counterexample") {
    add("check", "family", VK::word, "gbm", {"gbm", "ou"});
    add("check", "s", VK::number, "1");
    add("check", "ratio_threshold", VK::number, "10");
    if (raw_or(doc, "check", "family", "gbm") == "gbm") {
      add("check", "alpha", VK::number, "1");
      add("check", "beta", VK::number, "0");
      add("check", "x", VK::number, "1");
      add("check", "weight_rate", VK::number, "-2");
      add("check", "caps", VK::list, "100, 10000, 1000000");
      add("check", "expect", VK::word, "divergent", {"divergent", "finite"});
    } else {
      add("check", "lambda", VK::number, "1");
      add("check", "a", VK::number, "1");
      add("check", "y_lo", VK::number, "-20");
      add("check", "y_hi", VK::number, "20");
      add("check", "y_nodes", VK::integer, "81");
      add("check", "expect", VK::word, "fails", {"fails", "holds"});
    }
  } else if (ex == "fk") {
    add("check", "h", VK::expression, std::nullopt);
    add("check", "f", VK::expression, "0");
    add("check", "p", VK::number, "2");
    add("check", "time_nodes", VK::integer, "16");
    add("check", "z", VK::number, "3");
    add("check", "expect", VK::word, "pass", {"pass", "fail"});
  } else if (ex == "assumptions") {
    add("check", "lo", VK::number, "-10");
    add("check", "hi", VK::number, "10");
    add("check", "n_x", VK::integer, "81");
    add("check", "t0", VK::number, "0");
    add("check", "t1", VK::number, "1");
    add("check", "n_r", VK::integer, "5");
    add("check", "tolerance", VK::number, "1e-9");
    add("check", "expect", VK::word, "pass", {"pass", "fail"});
  }
  if (ex == "simulate" || ex == "invert" || ex == "jacobian") add("output", "trace_paths", VK::integer, "8");
  return s;
}

inline std::string normalize(const KeySpec& spec, const ConfigEntry& e) {
  auto bad = [&](const std::string& what) -> ConfigError {
    return ConfigError("[" + spec.section + "] " + spec.key + ": " + what, e.line, e.column);
  };
  if (spec.kind != ValueKind::expression && e.quoted) throw bad("quotes are only for expressions");
  switch (spec.kind) {
    case ValueKind::number: {
      if (e.value == "none" && spec.default_value == std::optional<std::string>("none")) return e.value;
      const auto v = to_number(e.value);
      if (!v) throw bad("expected a number, got '" + e.value + "'");
      return shortest(*v);
    }
    case ValueKind::integer: {
      std::uint64_t v = 0;
      const auto* first = e.value.data();
      const auto [ptr, ec] = std::from_chars(first, first + e.value.size(), v);
      if (ec != std::errc() || ptr != first + e.value.size()) throw bad("expected a non-negative integer");
      return std::to_string(v);
    }
    case ValueKind::boolean:
      if (e.value != "true" && e.value != "false") throw bad("expected true or false");
      return e.value;
    case ValueKind::word:
      if (!spec.choices.empty() && std::find(spec.choices.begin(), spec.choices.end(), e.value) == spec.choices.end()) {
        std::string all;
        for (const auto& c : spec.choices) all += (all.empty() ? "" : ", ") + c;
        throw bad("unknown value '" + e.value + "' (expected one of: " + all + ")");
      }
      return e.value;
    case ValueKind::list: {
      std::string out;
      for (const auto& item : split_list(e.value)) {
        const auto v = to_number(item);
        if (!v) throw bad("malformed list element '" + item + "'");
        out += (out.empty() ? "" : ", ") + shortest(*v);
      }
      return out.empty() ? "none" : out;
    }
    case ValueKind::expression:
      return e.value;
  }
  return e.value;
}

inline void check_ranges(const ExperimentConfig& c) {
  auto fail = [&c](const std::string& sec, const std::string& key, const std::string& msg) {
    const ConfigEntry* e = c.doc.find(sec, key);
    throw ConfigError("[" + sec + "] " + key + ": " + msg, e && !e->defaulted ? e->line : 0,
                      e && !e->defaulted ? e->column : 0);
  };
  auto positive_int = [&](const std::string& sec, const std::string& key) {
    if (c.has(sec, key) && c.integer(sec, key) == 0) fail(sec, key, "must be positive");
  };
  positive_int("grid", "steps");
  positive_int("mc", "n_paths");
  positive_int("quadrature", "nodes");
  positive_int("check", "time_nodes");
  positive_int("output", "trace_paths");
  if (c.has("time", "t") && c.has("time", "s") && c.number("time", "s") < c.number("time", "t"))
    fail("time", "s", "must be >= t");
  if (c.has("time", "T") && c.number("time", "T") < c.number("time", "t")) fail("time", "T", "must be >= t");
  if (c.has("quadrature", "hi") && !(c.number("quadrature", "hi") > c.number("quadrature", "lo")))
    fail("quadrature", "hi", "must exceed lo");
  if (c.has("mc", "max_exploded_fraction")) {
    const double f = c.number("mc", "max_exploded_fraction");
    if (!(f >= 0.0 && f <= 1.0)) fail("mc", "max_exploded_fraction", "must lie in [0, 1]");
  }
  if (c.has("time", "x") && c.has("system", "tag")) {
    const std::size_t n = c.list("time", "x").size();
    const int d = c.has("system", "d") ? static_cast<int>(c.integer("system", "d")) : 1;
    if (n == 0 || n % static_cast<std::size_t>(d) != 0)
      fail("time", "x", "needs a positive multiple of d = " + std::to_string(d) + " coordinates");
  }
}

}  // namespace detail

/// Parses and validates a configuration. Expression fields are compiled
/// against r, x1..xd and the [params] constants. `overrides` (section, key,
/// value) are applied before validation, e.g. a --seed flag.
inline ExperimentConfig parse_config(
    std::string_view text, const std::vector<std::tuple<std::string, std::string, std::string>>& overrides = {}) {
  ExperimentConfig cfg;
  cfg.doc = parse_document(text);
  for (const auto& [sec, key, value] : overrides) {
    ConfigEntry e;
    e.value = value;
    cfg.doc.sections[sec][key] = e;
  }
  ConfigDocument& doc = cfg.doc;

  const ConfigEntry* ex = doc.find("", "experiment");
  if (!ex) throw ConfigError("missing 'experiment = <tag>'", 0, 0);
  const auto& tags = experiment_tags();
  if (std::find(tags.begin(), tags.end(), ex->value) == tags.end()) {
    throw ConfigError("unknown experiment '" + ex->value + "'", ex->line, ex->column);
  }
  cfg.experiment = ex->value;

  // Aliases for scalar systems.
  if (auto it = doc.sections.find("system"); it != doc.sections.end() && detail::raw_or(doc, "system", "tag", "") == "expression") {
    auto& sec = it->second;
    for (const auto& [alias, canonical] : {std::pair<std::string, std::string>{"b", "b1"}, {"sigma", "sigma11"}}) {
      const auto a = sec.find(alias);
      if (a == sec.end()) continue;
      if (sec.count(canonical)) throw ConfigError("both '" + alias + "' and '" + canonical + "' given", a->second.line, a->second.column);
      if (alias == "sigma" && (detail::raw_dim(doc, "d", 1) != 1 || detail::raw_dim(doc, "dw", 1) != 1))
        throw ConfigError("'sigma' is only allowed when d = dw = 1", a->second.line, a->second.column);
      sec[canonical] = a->second;
      sec.erase(a);
    }
  }

  cfg.schema = detail::build_schema(cfg.experiment, doc);

  for (const auto& [section, entries] : doc.sections) {
    const bool known_section = std::find(section_order().begin(), section_order().end(), section) != section_order().end();
    if (!known_section) {
      throw ConfigError("unknown section [" + section + "]", doc.section_lines.count(section) ? doc.section_lines.at(section) : 0, 1);
    }
    for (const auto& [key, e] : entries) {
      if (section == "params") {
        if (key == "r" || (key.size() > 1 && key[0] == 'x' && key.find_first_not_of("0123456789", 1) == std::string::npos) ||
            detail::function_arity(key) >= 0) {
          throw ConfigError("parameter name '" + key + "' is reserved", e.line, e.key_column);
        }
        if (!detail::to_number(e.value) || e.quoted) throw ConfigError("parameter '" + key + "' needs a number", e.line, e.column);
        continue;
      }
      const bool known = std::any_of(cfg.schema.begin(), cfg.schema.end(),
                                     [&](const KeySpec& k) { return k.section == section && k.key == key; });
      if (!known) {
        const std::string where = section.empty() ? key : "[" + section + "] " + key;
        throw ConfigError("unknown key '" + where + "' for experiment '" + cfg.experiment + "'", e.line,
                          e.key_column);
      }
    }
  }
  doc.sections["params"];

  for (const auto& spec : cfg.schema) {
    auto& section = doc.sections[spec.section];
    auto it = section.find(spec.key);
    if (it == section.end()) {
      if (!spec.default_value) {
        const std::string where = spec.section.empty() ? spec.key : "[" + spec.section + "] " + spec.key;
        throw ConfigError("missing required key '" + where + "'", 0, 0);
      }
      ConfigEntry e;
      e.value = *spec.default_value;
      e.defaulted = true;
      it = section.emplace(spec.key, e).first;
    }
    it->second.value = detail::normalize(spec, it->second);
  }
  // Drop sections that ended up empty so the resolved config stays minimal.
  for (auto it = doc.sections.begin(); it != doc.sections.end();) {
    if (it->second.empty() && !it->first.empty() && it->first != "params") {
      it = doc.sections.erase(it);
    } else {
      ++it;
    }
  }

  SymbolTable symbols;
  symbols.d = cfg.has("system", "d") ? static_cast<int>(cfg.integer("system", "d")) : 1;
  symbols.constants = cfg.params();
  for (const auto& spec : cfg.schema) {
    if (spec.kind != ValueKind::expression) continue;
    ConfigEntry& e = doc.sections[spec.section][spec.key];
    try {
      CompiledExpr prog(parse_expression(e.value), symbols);
      e.value = print_expression(parse_expression(e.value));
      cfg.expressions.emplace(spec.section + "." + spec.key, std::move(prog));
    } catch (const ParseError& err) {
      throw ConfigError(spec.key + ": " + err.what(), e.line, e.column + err.column() - 1);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(spec.key + ": " + err.what(), e.line, e.column);
    }
  }
  detail::check_ranges(cfg);
  return cfg;
}

inline CoefficientSystem ExperimentConfig::build_system() const {
  const std::string tag = text("system", "tag");
  if (tag != "expression") {
    std::map<std::string, double> p;
    for (const auto& [k, e] : doc.sections.at("system"))
      if (k != "tag") p[k] = *detail::to_number(e.value);
    return builtin_system(tag, p);
  }
  CoefficientSystem sys;
  sys.name = "expression";
  sys.d = static_cast<int>(integer("system", "d"));
  sys.dw = static_cast<int>(integer("system", "dw"));
  std::vector<CompiledExpr> b;
  std::vector<CompiledExpr> s;
  for (int i = 1; i <= sys.d; ++i) {
    b.push_back(expression("system", "b" + std::to_string(i)));
    for (int j = 1; j <= sys.dw; ++j) s.push_back(expression("system", "sigma" + std::to_string(i) + std::to_string(j)));
  }
  const int d = sys.d;
  const int dw = sys.dw;
  sys.b = [b, d](double r, const Vec& x) {
    Vec out(d);
    for (int i = 0; i < d; ++i) out(i) = b[static_cast<std::size_t>(i)](r, x);
    return out;
  };
  sys.sigma = [s, d, dw](double r, const Vec& x) {
    Mat out(d, dw);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < dw; ++j) out(i, j) = s[static_cast<std::size_t>(i * dw + j)](r, x);
    return out;
  };
  sys.K = TimeFunction::constant(number("system", "K"));
  if (const auto kt = optional_number("system", "K_tilde")) sys.K_tilde = TimeFunction::constant(*kt);
  if (const auto kh = optional_number("system", "K_hat")) sys.K_hat = TimeFunction::constant(*kh);
  sys.params = params();
  return sys;
}

inline Weight ExperimentConfig::build_weight(const CoefficientSystem& sys) const {
  if (text("weight", "family") == "polynomial") return polynomial_weight(number("weight", "beta"), sys.d, sys.K);
  const std::string prof = text("weight", "profile");
  const ExpProfile p = prof == "abs" ? ExpProfile::abs : prof == "linear" ? ExpProfile::linear : ExpProfile::smooth_abs;
  return exponential_weight(p, number("weight", "rate"), sys.d, sys.K);
}

inline TestFunction ExperimentConfig::build_test_function() const {
  const std::string phi = text("check", "phi");
  const double w = number("check", "phi_width");
  if (phi == "indicator") return indicator_function(w);
  if (phi == "capped_abs") return capped_abs();
  return gaussian_bump(w);
}

}  // namespace sflow
