#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "stochflow/runner.hpp"

namespace {

bool write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic flow laboratory: runs one experiment from a configuration file."};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned threads = sflow::default_thread_count();
  bool csv = false;

  for (const auto& tag : sflow::experiment_tags()) {
    auto* sub = app.add_subcommand(tag, "run the '" + tag + "' experiment");
    sub->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override [mc] master_seed");
    sub->add_option("--out", out_dir, "directory for report.json, resolved.cfg and trace.csv");
    sub->add_option("--threads", threads, "worker threads (default: STOCHFLOW_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--csv", csv, "write the path trace as CSV (needs --out)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sflow::kExitUsage;
  }
  const std::string experiment = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();

  std::ifstream in(config_path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  sflow::ExperimentConfig cfg;
  try {
    std::vector<std::tuple<std::string, std::string, std::string>> overrides;
    const auto doc = sflow::parse_document(text);
    if (const auto* e = doc.find("", "experiment"); !e) {
      overrides.emplace_back("", "experiment", experiment);
    } else if (e->value != experiment) {
      std::cerr << config_path << ": config is for '" << e->value << "', not '" << experiment << "'\n";
      return sflow::kExitUsage;
    }
    if (sub->count("--seed")) overrides.emplace_back("mc", "master_seed", std::to_string(seed));
    cfg = sflow::parse_config(text, overrides);
  } catch (const sflow::ConfigError& e) {
    std::cerr << config_path << ":" << e.what() << "\n";
    return sflow::kExitUsage;
  }
  if (csv && out_dir.empty()) {
    std::cerr << "--csv needs --out\n";
    return sflow::kExitUsage;
  }

  const sflow::RunResult res = sflow::run_experiment(cfg, threads);
  const std::string report = sflow::dump_report(res.report);
  if (out_dir.empty()) {
    std::cout << report;
  } else {
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    bool ok = !ec && write_file(dir / "report.json", report) && write_file(dir / "resolved.cfg", res.resolved_config);
    if (ok && csv) ok = write_file(dir / "trace.csv", sflow::csv_trace(res.trace));
    if (!ok) {
      std::cerr << "cannot write to " << out_dir << "\n";
      return sflow::kExitUsage;
    }
    std::cout << experiment << ": outcome " << res.report["outcome"].get<std::string>() << ", expected "
              << res.report["expected"].get<std::string>() << "\n";
  }
  return res.exit_status;
}
