#include <CLI11.hpp>

#include "kfspoof/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Plan and simulate measurement spoofing against a Kalman filter"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kfspoof::cli::kVersion);

  kfspoof::cli::RunOptions opts;
  std::uint64_t seed = 0;
  int trials = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    sub->add_option("--trials", trials, "Monte Carlo trials (overrides the config)")->check(CLI::PositiveNumber);
  };

  auto* plan = app.add_subcommand("plan", "compute the minimum-effort spoofing plan");
  common(plan);
  auto* simulate = app.add_subcommand("simulate", "replay a plan through the two filters");
  common(simulate);
  simulate->add_option("--plan", opts.plan_path, "plan CSV (default: plan from the config)")
      ->check(CLI::ExistingFile);
  auto* online = app.add_subcommand("online", "compare receding-horizon and offline attacks");
  common(online);
  auto* sweep = app.add_subcommand("sweep", "sweep the separation target or the seed");
  common(sweep);
  sweep->add_option("--over", opts.sweep_over, "d or seeds")->check(CLI::IsMember({"d", "seeds"}));
  sweep->add_option("--step", opts.sweep_step, "constrained step whose d is varied");
  sweep->add_option("--values", opts.sweep_values, "d values")->delimiter(',');
  sweep->add_option("--seeds", opts.sweep_seeds, "number of consecutive seeds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kfspoof::cli::ExitCode::validation;
  }

  for (auto* sub : {plan, simulate, online, sweep}) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--trials")) opts.trials = trials;
    return kfspoof::cli::run(sub->get_name(), opts);
  }
  return kfspoof::cli::ExitCode::validation;
}
