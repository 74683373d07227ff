#include <CLI11.hpp>

#include "ergcbf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ERG-guided CBF navigation: scenario simulation, baseline comparison, gain tuning"};
  app.require_subcommand(1);

  ergcbf::cli::CommonOptions run_opts;
  double rate = 0.0;
  long seed = 0;

  auto add_common = [&](CLI::App* cmd, ergcbf::cli::CommonOptions* opts) {
    cmd->add_option("config", opts->config_path, "scenario file")->required();
    cmd->add_option("--out", opts->out_dir, "output directory (default $ERGCBF_OUT or .)");
    cmd->add_option_function<double>(
        "--rate-hz", [opts](double v) { opts->rate_hz = v; }, "override the simulation rate");
    cmd->add_option_function<long>(
        "--seed", [opts](long v) { opts->seed = v; }, "override the scenario seed");
  };

  auto* run = app.add_subcommand("run", "simulate a scenario and emit trajectory + metrics");
  add_common(run, &run_opts);

  ergcbf::cli::CommonOptions cmp_opts;
  auto* cmp = app.add_subcommand("compare", "reference-governor CBF vs the high-order CBF baseline");
  add_common(cmp, &cmp_opts);

  ergcbf::cli::TuneCliOptions tune_opts;
  auto* tune = app.add_subcommand("tune", "gradient-based tracking-gain tuning");
  add_common(tune, &tune_opts.common);
  tune->add_option("--iterations", tune_opts.iterations, "gradient iterations")->default_val(20);
  tune->add_option("--alpha", tune_opts.alpha, "gradient step size")->default_val(1e-3);
  tune->add_flag("--grad-oracle", tune_opts.grad_oracle,
                 "print the sensitivity vs finite-difference agreement first");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a scenario without running it");
  validate->add_option("config", validate_path, "scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  (void)rate;
  (void)seed;
  if (run->parsed()) return ergcbf::cli::cmd_run(run_opts);
  if (cmp->parsed()) return ergcbf::cli::cmd_compare(cmp_opts);
  if (tune->parsed()) return ergcbf::cli::cmd_tune(tune_opts);
  if (validate->parsed()) return ergcbf::cli::cmd_validate(validate_path);
  return 0;
}
