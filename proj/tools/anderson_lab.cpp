#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "anderson/config.hpp"
#include "anderson/runner.hpp"

using namespace anderson;

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo experiments for the multi-particle Anderson model"};
  app.require_subcommand(1);

  std::string config_path, out_dir, report_dir;
  std::uint64_t seed = 0;
  int workers = 1;
  bool emit_reports = false;

  auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides config and ANDERSON_SEED)");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  app.add_option("--config", config_path, "YAML configuration file");
  app.add_flag("--emit-reports", emit_reports, "Write predicate reports as JSON");
  for (auto* o : {seed_opt, workers_opt, out_opt}) o->configurable(false);

  for (Experiment e : all_experiments()) app.add_subcommand(to_string(e), paper_claim(e))->fallthrough();
  auto* rep = app.add_subcommand("report", "Summarize a results directory");
  rep->add_option("dir", report_dir, "Results directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitOperational;
  }

  if (rep->parsed()) return report(report_dir, std::cout, std::cerr);

  const std::string name = app.get_subcommands().front()->get_name();
  const Experiment e = experiment_from_string(name);
  RunConfig config;
  try {
    config = config_path.empty() ? RunConfig::defaults(e) : parse_config_file(config_path);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitOperational;
  }
  if (config.experiment != e) {
    std::cerr << "error: config describes '" << to_string(config.experiment) << "' but subcommand is '" << name << "'\n";
    return kExitOperational;
  }

  RunOptions options;
  if (*seed_opt) options.seed = seed;
  if (*workers_opt) options.workers = workers;
  if (*out_opt) options.out = out_dir;
  options.emit_reports = emit_reports;
  options.getenv_fn = [](const char* k) { return std::getenv(k); };
  const int code = run(config, options, std::cerr);
  if (code != kExitOperational) std::cerr << "results written to " << (options.out ? *options.out : config.output_dir) << "\n";
  return code;
}
