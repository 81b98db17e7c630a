#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "stochflow/runner.hpp"

using namespace sflow;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random trees over every node kind; literals include exponents and fractions.
Expr random_expr(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 8);
  Expr e;
  switch (pick(rng)) {
    case 0: {
      static const double lits[] = {0.0, 1.0, 2.5, 1e-7, 3.0e20, 0.1, 123456789.0, 0.3333333333333333};
      e.value = lits[std::uniform_int_distribution<int>(0, 7)(rng)];
      return e;
    }
    case 1: {
      static const char* syms[] = {"r", "x1", "x2", "lambda"};
      e.kind = ExprKind::symbol;
      e.name = syms[std::uniform_int_distribution<int>(0, 3)(rng)];
      return e;
    }
    case 2:
      e.kind = ExprKind::neg;
      e.args.push_back(random_expr(rng, depth - 1));
      return e;
    case 3: {
      static const char* fns[] = {"exp", "log", "sin", "cos", "tanh", "sqrt", "abs", "min", "max"};
      const int i = std::uniform_int_distribution<int>(0, 8)(rng);
      e.kind = ExprKind::call;
      e.name = fns[i];
      e.args.push_back(random_expr(rng, depth - 1));
      if (i >= 7) e.args.push_back(random_expr(rng, depth - 1));
      return e;
    }
    default: {
      static const ExprKind ops[] = {ExprKind::add, ExprKind::sub, ExprKind::mul, ExprKind::div, ExprKind::pow};
      e.kind = ops[std::uniform_int_distribution<int>(0, 4)(rng)];
      e.args.push_back(random_expr(rng, depth - 1));
      e.args.push_back(random_expr(rng, depth - 1));
      return e;
    }
  }
}

RunResult run_text(const std::string& text, unsigned threads = 1) { return run_experiment(parse_config(text), threads); }

}  // namespace

TEST(Expression, PrintUsesMinimalParentheses) {
  for (const char* s : {"a - (b - c)", "a - b - c", "-x^2", "(-x)^2", "2^3^4", "(2^3)^4", "a / (b * c)",
                        "-(a + b)", "min(a, b) * exp(-r)", "a^-b", "--x", "1e-07 + 3e+20"}) {
    EXPECT_EQ(print_expression(parse_expression(s)), s);
  }
  EXPECT_EQ(print_expression(parse_expression("((a)) + (b * c)")), "a + b * c");
}

TEST(Expression, RoundTripsGeneratedCorpus) {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 100; ++i) {
    const Expr e = random_expr(rng, 5);
    const std::string printed = print_expression(e);
    EXPECT_EQ(parse_expression(printed), e) << printed;
  }
}

TEST(Expression, EvaluatesWithConstantsAndVariables) {
  SymbolTable sym;
  sym.d = 2;
  sym.constants = {{"lambda", 2.0}};
  const auto f = compile_expression("-lambda * x1 + max(x2, r)^2 / 4", sym);
  Vec x(2);
  x << 3.0, -1.0;
  EXPECT_DOUBLE_EQ(f(2.0, x), -6.0 + 1.0);
  EXPECT_DOUBLE_EQ(compile_expression("2^3^2", sym)(0.0, x), 512.0);
  EXPECT_DOUBLE_EQ(compile_expression("-2^2", sym)(0.0, x), -4.0);
  EXPECT_THROW((void)compile_expression("log(x2)", sym)(0.0, x), DomainError);
  EXPECT_THROW((void)compile_expression("sqrt(x2)", sym)(0.0, x), DomainError);
  EXPECT_THROW((void)compile_expression("1 / (x1 - 3)", sym)(0.0, x), DomainError);
  EXPECT_THROW(compile_expression("x3", sym), std::invalid_argument);
  EXPECT_THROW(compile_expression("mu * x1", sym), std::invalid_argument);
}

TEST(Expression, SyntaxErrorPositions) {
  auto column = [](const char* s) {
    try {
      parse_expression(s);
    } catch (const ParseError& e) {
      return e.column();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(column("exp("), 4u);
  EXPECT_EQ(column("1 + (2 * (3 + 4)"), 5u);
  EXPECT_EQ(column("1 +"), 4u);
  EXPECT_EQ(column("1 + 2)"), 6u);
  EXPECT_EQ(column("foo(1)"), 1u);
  EXPECT_EQ(column("min(1)"), 1u);
  EXPECT_EQ(column("2 $ 3"), 3u);
}

TEST(Config, ExpressionDriftFromParams) {
  const auto cfg = parse_config(
      "experiment = simulate\n[system]\ntag = expression\nb = -lambda * x1\nsigma = \"1\"\nK = 2\n[params]\nlambda = 2\n");
  const auto sys = cfg.build_system();
  EXPECT_DOUBLE_EQ(sys.b(0.0, scalar_vec(3.0))(0), -6.0);
  EXPECT_DOUBLE_EQ(sys.sigma(0.0, scalar_vec(3.0))(0, 0), 1.0);
}

TEST(Config, ErrorsCarryPositions) {
  auto where = [](const std::string& text) -> std::pair<std::size_t, std::size_t> {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return {e.line(), e.column()};
    }
    return {0, 0};
  };
  EXPECT_EQ(where("experiment = simulate\n[system]\ntag = expression\nK = 1\nsigma = exp(\n"),
            (std::pair<std::size_t, std::size_t>{5, 12}));
  EXPECT_EQ(where("experiment = normeq\n[system]\ntag = ou\nlambda = 1\n  colour = 3\n"),
            (std::pair<std::size_t, std::size_t>{5, 3}));
  EXPECT_EQ(where("experiment = teleport\n"), (std::pair<std::size_t, std::size_t>{1, 14}));
  EXPECT_EQ(where("experiment = normeq\n[system]\ntag = ou\nlambda = fast\n"), (std::pair<std::size_t, std::size_t>{4, 10}));
  EXPECT_EQ(where("experiment = normeq\n[system]\ntag = ou\n").first, 0u);  // missing lambda
  EXPECT_THROW(parse_config("experiment = normeq\n[sytem]\n"), ConfigError);
  EXPECT_THROW(parse_config("experiment = simulate\n[system]\ntag = expression\nd = 1\nK = 1\nb1 = \"x2\"\n"),
               ConfigError);
  EXPECT_THROW(parse_config("experiment = normeq\n[system]\ntag = ou\nlambda = 1\n[time]\nt = 1\ns = 0\n"),
               ConfigError);
}

TEST(Config, MinimalOuGolden) {
  const auto cfg = parse_config(slurp(STOCHFLOW_SOURCE_DIR "/configs/ou_normeq_min.cfg"));
  const std::string resolved = cfg.resolved_text();
  EXPECT_EQ(resolved, slurp(STOCHFLOW_SOURCE_DIR "/tests/golden/ou_normeq_min.resolved.cfg"));
  // The resolved text is itself a valid config that resolves to itself, now without defaults.
  const auto again = parse_config(resolved);
  std::string stripped;
  std::istringstream lines(resolved);
  for (std::string line; std::getline(lines, line);) stripped += line.substr(0, line.find("  # default")) + "\n";
  EXPECT_EQ(again.resolved_text(), stripped);
  EXPECT_EQ(cfg.resolved_json()["defaults_used"].size(), 19u);
}

TEST(Config, SeedOverride) {
  const auto cfg = parse_config(slurp(STOCHFLOW_SOURCE_DIR "/configs/ou_normeq_min.cfg"), {{"mc", "master_seed", "99"}});
  EXPECT_EQ(cfg.integer("mc", "master_seed"), 99u);
  EXPECT_FALSE(cfg.doc.find("mc", "master_seed")->defaulted);
}

TEST(Runner, ZeroSystemNormeq) {
  const auto res = run_text(slurp(STOCHFLOW_SOURCE_DIR "/configs/zero_normeq.cfg"));
  EXPECT_EQ(res.exit_status, kExitOk);
  const Json& r = res.report["results"]["norm_equivalence"];
  const double lhs = r["lhs"]["value"];
  const double mid = r["mid"]["value"];
  EXPECT_LE(r["c"].get<double>() * lhs, mid * (1 + 1e-12));
  EXPECT_LE(mid, r["C"].get<double>() * lhs * (1 + 1e-12));
}

TEST(Runner, GbmCounterexampleExpectedDivergent) {
  const auto res = run_text("experiment = counterexample\n[mc]\nn_paths = 2000\n");
  EXPECT_EQ(res.report["outcome"], "divergent");
  EXPECT_EQ(res.exit_status, kExitOk);
  const auto wrong = run_text("experiment = counterexample\n[mc]\nn_paths = 2000\n[check]\nexpect = finite\n");
  EXPECT_EQ(wrong.exit_status, kExitCheckFailed);
}

TEST(Runner, ModuleErrorsBecomeReportEntries) {
  // log(x1) leaves its domain once a path crosses zero.
  const auto res = run_text(
      "experiment = simulate\n[system]\ntag = expression\nb = \"log(x1)\"\nsigma = \"1\"\nK = 1\n[time]\nx = 0.5\n[mc]\nn_paths = 50\n");
  EXPECT_EQ(res.exit_status, kExitCheckFailed);
  EXPECT_EQ(res.report["outcome"], "error");
  EXPECT_TRUE(res.report.contains("error"));
}

TEST(Runner, ReportsIndependentOfThreads) {
  for (const char* name : {"ou_normeq_min", "expression_simulate", "gbm_invert", "heat_fk"}) {
    const std::string text = slurp(std::string(STOCHFLOW_SOURCE_DIR "/configs/") + name + ".cfg");
    const auto cfg = parse_config(text, {{"mc", "n_paths", "300"}});
    const auto one = run_experiment(cfg, 1);
    const std::string ref = dump_report(one.report);
    const std::string trace = csv_trace(one.trace);
    for (unsigned threads : {4u, 8u}) {
      const auto other = run_experiment(cfg, threads);
      EXPECT_EQ(dump_report(other.report), ref) << name << " threads=" << threads;
      EXPECT_EQ(csv_trace(other.trace), trace) << name;
    }
  }
}

TEST(Report, NonFiniteNumbersAndCsv) {
  EXPECT_EQ(jnum(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(jnum(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(jnum(std::nan("")), "nan");
  EXPECT_EQ(csv_trace({{3, 0.1, 1, 1.0 / 3.0}}), "path_id,time,component,value\n3,0.10000000000000001,1,0.33333333333333331\n");
}
