#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sflow {

/// Nonnegative integrable function of time, used for the bound functions
/// K, K-tilde and friends. Represented as a nonnegative linear combination
/// of closed-form terms so that L1 norms are exact.
class TimeFunction {
 public:
  /// c, for all r.
  struct Constant {
    double value;
  };
  /// c * |r - r0|^(-gamma), 0 <= gamma < 1: an integrable spike at r0.
  struct Power {
    double scale;
    double center;
    double gamma;
  };
  /// values[i] on [edges[i], edges[i+1]); zero outside [edges.front(), edges.back()].
  struct Piecewise {
    std::vector<double> edges;
    std::vector<double> values;
  };
  using Term = std::variant<Constant, Power, Piecewise>;

  TimeFunction() = default;

  static TimeFunction constant(double c) {
    require(std::isfinite(c) && c >= 0.0, "constant TimeFunction must be finite and >= 0");
    TimeFunction f;
    if (c > 0.0) f.terms_.push_back(Constant{c});
    return f;
  }

  static TimeFunction power(double scale, double center, double gamma) {
    require(std::isfinite(scale) && scale >= 0.0, "power TimeFunction scale must be >= 0");
    require(gamma >= 0.0 && gamma < 1.0, "power TimeFunction needs 0 <= gamma < 1");
    TimeFunction f;
    if (scale > 0.0) f.terms_.push_back(Power{scale, center, gamma});
    return f;
  }

  static TimeFunction piecewise(std::vector<double> edges, std::vector<double> values) {
    require(edges.size() >= 2 && values.size() + 1 == edges.size(),
            "piecewise TimeFunction needs edges.size() == values.size() + 1");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      require(edges[i + 1] > edges[i], "piecewise TimeFunction edges must increase");
    }
    for (double v : values) {
      require(std::isfinite(v) && v >= 0.0, "piecewise TimeFunction values must be >= 0");
    }
    TimeFunction f;
    f.terms_.push_back(Piecewise{std::move(edges), std::move(values)});
    return f;
  }

  [[nodiscard]] bool is_zero() const { return terms_.empty(); }
  [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

  double operator()(double r) const {
    double sum = 0.0;
    for (const auto& term : terms_) sum += eval(term, r);
    return sum;
  }

  /// Exact integral over [a, b], a <= b.
  [[nodiscard]] double integral(double a, double b) const {
    require(a <= b, "TimeFunction::integral needs a <= b");
    double sum = 0.0;
    for (const auto& term : terms_) sum += integrate(term, a, b);
    return sum;
  }

  /// L1 norm over [a, b]; identical to integral() since values are >= 0.
  [[nodiscard]] double l1_norm(double a, double b) const { return integral(a, b); }

  /// Largest value on [a, b] (infinite for a spike inside the interval).
  [[nodiscard]] double sup(double a, double b) const {
    double total = 0.0;
    for (const auto& term : terms_) {
      if (const auto* c = std::get_if<Constant>(&term)) {
        total += c->value;
      } else if (const auto* p = std::get_if<Power>(&term)) {
        if (p->gamma == 0.0) {
          total += p->scale;
        } else if (p->center >= a && p->center <= b) {
          return std::numeric_limits<double>::infinity();
        } else {
          const double dist = std::min(std::abs(a - p->center), std::abs(b - p->center));
          total += p->scale * std::pow(dist, -p->gamma);
        }
      } else {
        const auto& pw = std::get<Piecewise>(term);
        double best = 0.0;
        for (std::size_t i = 0; i < pw.values.size(); ++i) {
          if (pw.edges[i + 1] > a && pw.edges[i] <= b) best = std::max(best, pw.values[i]);
        }
        total += best;
      }
    }
    return total;
  }

  [[nodiscard]] std::string describe() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (const auto& term : terms_) {
      if (!out.empty()) out += " + ";
      if (const auto* c = std::get_if<Constant>(&term)) {
        out += std::to_string(c->value);
      } else if (const auto* p = std::get_if<Power>(&term)) {
        out += std::to_string(p->scale) + "*|r-" + std::to_string(p->center) + "|^-" +
               std::to_string(p->gamma);
      } else {
        out += "piecewise(" + std::to_string(std::get<Piecewise>(term).values.size()) + ")";
      }
    }
    return out;
  }

  friend TimeFunction operator+(TimeFunction lhs, const TimeFunction& rhs) {
    lhs.terms_.insert(lhs.terms_.end(), rhs.terms_.begin(), rhs.terms_.end());
    return lhs;
  }

  friend TimeFunction operator*(double k, TimeFunction f) {
    require(std::isfinite(k) && k >= 0.0, "TimeFunction scale factor must be >= 0");
    if (k == 0.0) return TimeFunction{};
    for (auto& term : f.terms_) {
      if (auto* c = std::get_if<Constant>(&term)) {
        c->value *= k;
      } else if (auto* p = std::get_if<Power>(&term)) {
        p->scale *= k;
      } else {
        for (double& v : std::get<Piecewise>(term).values) v *= k;
      }
    }
    return f;
  }

 private:
  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  static double eval(const Term& term, double r) {
    if (const auto* c = std::get_if<Constant>(&term)) return c->value;
    if (const auto* p = std::get_if<Power>(&term)) {
      if (p->gamma == 0.0) return p->scale;
      const double dist = std::abs(r - p->center);
      return dist == 0.0 ? std::numeric_limits<double>::infinity()
                         : p->scale * std::pow(dist, -p->gamma);
    }
    const auto& pw = std::get<Piecewise>(term);
    if (r < pw.edges.front() || r > pw.edges.back()) return 0.0;
    auto it = std::upper_bound(pw.edges.begin(), pw.edges.end(), r);
    std::size_t idx = static_cast<std::size_t>(it - pw.edges.begin());
    idx = idx == 0 ? 0 : idx - 1;
    if (idx >= pw.values.size()) idx = pw.values.size() - 1;
    return pw.values[idx];
  }

  // Antiderivative of |r - c|^(-g) that is odd around c.
  static double power_primitive(double r, double c, double g) {
    const double u = r - c;
    const double mag = std::pow(std::abs(u), 1.0 - g) / (1.0 - g);
    return u < 0.0 ? -mag : mag;
  }

  static double integrate(const Term& term, double a, double b) {
    if (const auto* c = std::get_if<Constant>(&term)) return c->value * (b - a);
    if (const auto* p = std::get_if<Power>(&term)) {
      return p->scale * (power_primitive(b, p->center, p->gamma) -
                         power_primitive(a, p->center, p->gamma));
    }
    const auto& pw = std::get<Piecewise>(term);
    double sum = 0.0;
    for (std::size_t i = 0; i < pw.values.size(); ++i) {
      const double lo = std::max(a, pw.edges[i]);
      const double hi = std::min(b, pw.edges[i + 1]);
      if (hi > lo) sum += pw.values[i] * (hi - lo);
    }
    return sum;
  }

  std::vector<Term> terms_;
};

}  // namespace sflow
