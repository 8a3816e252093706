// causal_ps: Bayesian propensity score weighting from the command line.
//
//   causal_ps analyze  --config cfg.json [--seed S --workers N --out DIR]
//   causal_ps simulate --config cfg.json | --preset table2|table3|sparse ...
//   causal_ps diagnose --config cfg.json [--debug-const-pi P ...]
//
// Exit codes: 0 = ran (possibly with statistical warnings), 1 = input or
// configuration error, 2 = internal failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "causalps/cli.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out_dir;
  std::string preset;
  std::optional<int> replications;
  std::optional<double> debug_const_pi;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "JSON config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "RNG seed (overrides config)");
  cmd->add_option("--workers", flags.workers,
                  "worker threads (0 = CAUSAL_PS_WORKERS or hardware)");
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
}

causalps::RunConfig build_config(const CommonFlags& flags,
                                 const std::string& command) {
  causalps::json j = causalps::json::object();
  if (!flags.config_path.empty())
    j = causalps::cli_detail::load_json_file(flags.config_path);
  causalps::RunConfig cfg = causalps::parse_run_config(j, command);
  if (flags.seed) cfg.seed = flags.seed;
  if (flags.workers > 0) cfg.workers = flags.workers;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.preset.empty()) cfg.preset = flags.preset;
  if (flags.replications) cfg.replications = flags.replications;
  if (flags.debug_const_pi) cfg.debug_const_pi = flags.debug_const_pi;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian propensity score weighting for binary treatments"};
  app.require_subcommand(1);

  CommonFlags analyze_flags, simulate_flags, diagnose_flags;
  auto* analyze = app.add_subcommand("analyze", "estimate the ATE on a dataset");
  add_common(analyze, analyze_flags, true);
  auto* simulate = app.add_subcommand("simulate", "run a replication study");
  add_common(simulate, simulate_flags, false);
  simulate->add_option("--preset", simulate_flags.preset,
                       "table2 | table3 | sparse");
  simulate->add_option("--replications", simulate_flags.replications,
                       "override replication count");
  auto* diagnose = app.add_subcommand("diagnose", "balance and weight diagnostics");
  add_common(diagnose, diagnose_flags, true);
  diagnose->add_option("--debug-const-pi", diagnose_flags.debug_const_pi,
                       "inject a constant propensity instead of fitting");

  int exit_code = 0;
  try {
    app.parse(argc, argv);
    if (analyze->parsed())
      exit_code = causalps::run_analyze(build_config(analyze_flags, "analyze"));
    else if (simulate->parsed())
      exit_code = causalps::run_simulate(build_config(simulate_flags, "simulate"));
    else
      exit_code = causalps::run_diagnose(build_config(diagnose_flags, "diagnose"));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const causalps::CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal failure: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
