#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stochflow/linalg.hpp"

namespace sflow {

/// Syntax or name-resolution error. column is 1-based within the parsed text.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t column)
      : std::runtime_error(what), column_(column) {}
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

enum class ExprKind { number, symbol, neg, add, sub, mul, div, pow, call };

struct Expr {
  ExprKind kind = ExprKind::number;
  double value = 0.0;
  std::string name;  // symbol or function name
  std::vector<Expr> args;

  friend bool operator==(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.name != b.name || a.args != b.args) return false;
    // Bitwise for literals, so -0 and 0 differ.
    return a.kind != ExprKind::number || (std::signbit(a.value) == std::signbit(b.value) && a.value == b.value);
  }
};

namespace detail {

struct FunctionInfo {
  const char* name;
  int arity;
};

inline constexpr FunctionInfo kFunctions[] = {
    {"exp", 1}, {"log", 1}, {"sin", 1}, {"cos", 1},  {"tanh", 1},
    {"sqrt", 1}, {"abs", 1}, {"min", 2}, {"max", 2},
};

inline int function_arity(std::string_view name) {
  for (const auto& f : kFunctions) {
    if (name == f.name) return f.arity;
  }
  return -1;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Expr parse() {
    skip();
    if (pos_ == s_.size()) fail("empty expression", pos_);
    Expr e = expr();
    skip();
    if (pos_ != s_.size()) {
      if (s_[pos_] == ')') fail("unmatched ')'", pos_);
      fail(std::string("unexpected '") + s_[pos_] + "'", pos_);
    }
    return e;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> open_;  // positions of unclosed '('

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const { throw ParseError(msg, at + 1); }

  // Running out of input inside parentheses blames the innermost '('.
  [[noreturn]] void fail_here(const std::string& msg) const {
    if (pos_ == s_.size() && !open_.empty()) fail("unclosed '('", open_.back());
    fail(msg, pos_);
  }

  void skip() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static Expr binary(ExprKind k, Expr a, Expr b) {
    Expr e;
    e.kind = k;
    e.args.push_back(std::move(a));
    e.args.push_back(std::move(b));
    return e;
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = binary(ExprKind::add, std::move(lhs), term());
      } else if (accept('-')) {
        lhs = binary(ExprKind::sub, std::move(lhs), term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary(ExprKind::mul, std::move(lhs), unary());
      } else if (accept('/')) {
        lhs = binary(ExprKind::div, std::move(lhs), unary());
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    if (accept('-')) {
      Expr e;
      e.kind = ExprKind::neg;
      e.args.push_back(unary());
      return e;
    }
    if (accept('+')) return unary();
    Expr base = primary();
    if (accept('^')) return binary(ExprKind::pow, std::move(base), unary());
    return base;
  }

  Expr primary() {
    skip();
    if (pos_ == s_.size()) fail_here("expected an operand");
    const char c = s_[pos_];
    if (c == '(') {
      open_.push_back(pos_++);
      Expr e = expr();
      if (!accept(')')) fail_here("expected ')'");
      open_.pop_back();
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected '") + c + "'", pos_);
  }

  Expr number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
      if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
        while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p;
        pos_ = p;
      }
    }
    Expr e;
    const char* first = s_.data() + start;
    const char* last = s_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(first, last, e.value);
    if (ec != std::errc() || ptr != last || !std::isfinite(e.value)) fail("malformed number", start);
    return e;
  }

  Expr identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    Expr e;
    e.name = std::string(s_.substr(start, pos_ - start));
    skip();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      const int arity = function_arity(e.name);
      if (arity < 0) fail("unknown function '" + e.name + "'", start);
      e.kind = ExprKind::call;
      open_.push_back(pos_++);
      e.args.push_back(expr());
      while (accept(',')) e.args.push_back(expr());
      if (!accept(')')) fail_here("expected ')' or ','");
      open_.pop_back();
      if (static_cast<int>(e.args.size()) != arity) {
        fail(e.name + " takes " + std::to_string(arity) + " argument(s)", start);
      }
      return e;
    }
    if (function_arity(e.name) >= 0) fail("function '" + e.name + "' needs an argument list", start);
    e.kind = ExprKind::symbol;
    return e;
  }
};

inline int precedence(const Expr& e) {
  switch (e.kind) {
    case ExprKind::add:
    case ExprKind::sub: return 1;
    case ExprKind::mul:
    case ExprKind::div: return 2;
    case ExprKind::neg: return 3;
    case ExprKind::pow: return 4;
    default: return 5;
  }
}

inline void print_to(std::string& out, const Expr& e, int min_prec) {
  const int p = precedence(e);
  const bool paren = p < min_prec;
  if (paren) out += '(';
  switch (e.kind) {
    case ExprKind::number: {
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, e.value);
      out.append(buf, r.ptr);
      break;
    }
    case ExprKind::symbol: out += e.name; break;
    case ExprKind::neg:
      out += '-';
      print_to(out, e.args[0], 3);
      break;
    case ExprKind::pow:
      print_to(out, e.args[0], 5);
      out += '^';
      print_to(out, e.args[1], 3);
      break;
    case ExprKind::call:
      out += e.name;
      out += '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        print_to(out, e.args[i], 0);
      }
      out += ')';
      break;
    default: {
      static constexpr const char* ops[] = {" + ", " - ", " * ", " / "};
      const int idx = static_cast<int>(e.kind) - static_cast<int>(ExprKind::add);
      print_to(out, e.args[0], p);
      out += ops[idx];
      print_to(out, e.args[1], p + 1);
    }
  }
  if (paren) out += ')';
}

}  // namespace detail

inline Expr parse_expression(std::string_view text) { return detail::Parser(text).parse(); }

/// Fewest parentheses that reproduce the same tree; literals in shortest
/// round-trip form.
inline std::string print_expression(const Expr& e) {
  std::string out;
  detail::print_to(out, e, 0);
  return out;
}

/// Variables visible to an expression: r, x1..xd, plus named constants.
struct SymbolTable {
  int d = 1;
  std::map<std::string, double> constants;
};

/// Stack program over slots (r, x1..xd).
class CompiledExpr {
 public:
  CompiledExpr() = default;

  CompiledExpr(const Expr& e, const SymbolTable& symbols) : d_(symbols.d), source_(print_expression(e)) {
    emit(e, symbols);
    int depth = 0;
    for (const auto& ins : code_) {
      depth += ins.op <= Op::slot ? 1 : (ins.op >= Op::add && ins.op <= Op::max ? -1 : 0);
      max_depth_ = std::max(max_depth_, depth);
    }
  }

  [[nodiscard]] double operator()(double r, const Vec& x) const {
    if (x.size() != d_) throw std::invalid_argument("expression '" + source_ + "': state dimension mismatch");
    double stack_buf[64] = {};
    std::vector<double> heap;
    double* st = stack_buf;
    if (max_depth_ > 64) {
      heap.resize(static_cast<std::size_t>(max_depth_));
      st = heap.data();
    }
    int top = -1;
    for (const auto& ins : code_) {
      switch (ins.op) {
        case Op::constant: st[++top] = ins.value; break;
        case Op::slot: st[++top] = ins.slot == 0 ? r : x(ins.slot - 1); break;
        case Op::neg: st[top] = -st[top]; break;
        case Op::add: --top; st[top] += st[top + 1]; break;
        case Op::sub: --top; st[top] -= st[top + 1]; break;
        case Op::mul: --top; st[top] *= st[top + 1]; break;
        case Op::div:
          --top;
          if (st[top + 1] == 0.0) domain("division by zero");
          st[top] /= st[top + 1];
          break;
        case Op::pow: --top; st[top] = std::pow(st[top], st[top + 1]); break;
        case Op::min: --top; st[top] = std::min(st[top], st[top + 1]); break;
        case Op::max: --top; st[top] = std::max(st[top], st[top + 1]); break;
        case Op::exp: st[top] = std::exp(st[top]); break;
        case Op::log:
          if (!(st[top] > 0.0)) domain("log of a non-positive number");
          st[top] = std::log(st[top]);
          break;
        case Op::sin: st[top] = std::sin(st[top]); break;
        case Op::cos: st[top] = std::cos(st[top]); break;
        case Op::tanh: st[top] = std::tanh(st[top]); break;
        case Op::sqrt:
          if (st[top] < 0.0) domain("sqrt of a negative number");
          st[top] = std::sqrt(st[top]);
          break;
        case Op::abs: st[top] = std::abs(st[top]); break;
      }
      if (!std::isfinite(st[top])) domain("non-finite intermediate value");
    }
    return st[0];
  }

  [[nodiscard]] const std::string& source() const { return source_; }
  [[nodiscard]] int dimension() const { return d_; }
  [[nodiscard]] bool empty() const { return code_.empty(); }

 private:
  enum class Op { constant, slot, add, sub, mul, div, pow, min, max, neg, exp, log, sin, cos, tanh, sqrt, abs };
  struct Instr {
    Op op;
    double value = 0.0;
    int slot = 0;
  };

  int d_ = 1;
  std::string source_;
  std::vector<Instr> code_;
  int max_depth_ = 0;

  [[noreturn]] void domain(const char* what) const {
    throw DomainError("expression '" + source_ + "': " + what);
  }

  void emit(const Expr& e, const SymbolTable& symbols) {
    switch (e.kind) {
      case ExprKind::number: code_.push_back({Op::constant, e.value, 0}); return;
      case ExprKind::symbol: {
        if (e.name == "r") {
          code_.push_back({Op::slot, 0.0, 0});
          return;
        }
        if (e.name.size() > 1 && e.name[0] == 'x' &&
            e.name.find_first_not_of("0123456789", 1) == std::string::npos && e.name[1] != '0') {
          const int k = std::stoi(e.name.substr(1));
          if (k > symbols.d) {
            throw std::invalid_argument("variable " + e.name + " exceeds dimension d = " + std::to_string(symbols.d));
          }
          code_.push_back({Op::slot, 0.0, k});
          return;
        }
        const auto it = symbols.constants.find(e.name);
        if (it == symbols.constants.end()) throw std::invalid_argument("unknown symbol '" + e.name + "'");
        code_.push_back({Op::constant, it->second, 0});
        return;
      }
      case ExprKind::neg:
        emit(e.args[0], symbols);
        code_.push_back({Op::neg});
        return;
      case ExprKind::call: {
        for (const auto& a : e.args) emit(a, symbols);
        static const std::map<std::string, Op> ops = {
            {"exp", Op::exp}, {"log", Op::log},   {"sin", Op::sin}, {"cos", Op::cos}, {"tanh", Op::tanh},
            {"sqrt", Op::sqrt}, {"abs", Op::abs}, {"min", Op::min}, {"max", Op::max}};
        code_.push_back({ops.at(e.name)});
        return;
      }
      default: {
        emit(e.args[0], symbols);
        emit(e.args[1], symbols);
        static constexpr Op ops[] = {Op::add, Op::sub, Op::mul, Op::div, Op::pow};
        code_.push_back({ops[static_cast<int>(e.kind) - static_cast<int>(ExprKind::add)]});
      }
    }
  }
};

inline CompiledExpr compile_expression(std::string_view text, const SymbolTable& symbols) {
  return CompiledExpr(parse_expression(text), symbols);
}

}  // namespace sflow
