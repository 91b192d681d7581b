#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kfspoof/io.hpp"
#include "kfspoof/planner.hpp"
#include "kfspoof/sim.hpp"

namespace kfspoof::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { ok = 0, validation = 2, infeasible = 3, numeric = 4 };

struct RunOptions {
  std::filesystem::path config_path;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::filesystem::path plan_path;  // simulate: replay this plan instead of planning

  // sweep
  std::string sweep_over = "d";  // "d" or "seeds"
  int sweep_step = 0;            // constrained step to vary; 0 = first constrained step
  std::vector<double> sweep_values;
  int sweep_seeds = 50;
};

struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;

  [[nodiscard]] io::json to_json() const {
    io::json j;
    j["command"] = command;
    j["config"] = config_path;
    j["seed"] = seed;
    j["outputs"] = outputs;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["versions"] = {{"kfspoof", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    return j;
  }
};

namespace detail {

class Session {
 public:
  Session(std::string command, const RunOptions& opts, std::ostream& log)
      : opts_(opts), log_(log), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.config_path = opts.config_path.string();
    std::vector<std::string> notes;
    config_ = io::load_config(opts.config_path, &notes);
    for (const auto& n : notes) log_ << "note: " << n << '\n';
    if (opts.seed) config_.seed = *opts.seed;
    if (opts.trials) config_.trials = *opts.trials;
    if (config_.trials < 1) throw ConfigError("trials must be >= 1");
    manifest_.seed = config_.seed;
    std::filesystem::create_directories(opts.out_dir);
  }

  [[nodiscard]] ScenarioConfig& config() { return config_; }
  [[nodiscard]] const RunOptions& options() const { return opts_; }
  [[nodiscard]] std::ostream& log() { return log_; }

  std::filesystem::path output(const std::string& name) {
    auto p = opts_.out_dir / name;
    manifest_.outputs.push_back(p.string());
    return p;
  }

  void finish() {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const auto path = opts_.out_dir / (manifest_.command + ".manifest.json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << manifest_.to_json().dump(2) << '\n';
  }

 private:
  RunOptions opts_;
  std::ostream& log_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
  ScenarioConfig config_;
};

inline std::vector<std::string> axis_columns(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> cols;
  for (Eigen::Index j = 0; j < n; ++j) cols.push_back(prefix + io::axis_name(j));
  return cols;
}

inline void append(std::vector<double>& row, const Vector& v) {
  for (Eigen::Index j = 0; j < v.size(); ++j) row.push_back(v(j));
}

inline void write_trial_csv(const std::filesystem::path& path, const ScenarioConfig& c, const TrialResult& r) {
  const auto n = c.system.dim();
  io::CsvWriter csv(path);
  std::vector<std::string> cols{"t"};
  for (const char* prefix : {"m_", "mtilde_"})
    for (auto& s : axis_columns(prefix, n)) cols.push_back(s);
  cols.insert(cols.end(), {"sep_l1", "sep_l2", "d_t"});
  for (const char* prefix : {"eps_", "z_"})
    for (auto& s : axis_columns(prefix, n)) cols.push_back(s);
  csv.header(cols);
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const auto& s = r.steps[k];
    const int t = static_cast<int>(k) + 1;
    std::vector<double> row{static_cast<double>(t)};
    append(row, s.m);
    append(row, s.m_tilde);
    row.insert(row.end(), {s.sep_l1, s.sep_l2, c.spec.required(t)});
    append(row, s.eps);
    append(row, s.z);
    csv.row(row);
  }
}

inline void write_summary_csv(const std::filesystem::path& path, const ScenarioConfig& c,
                              const std::vector<TrialResult>& results) {
  io::CsvWriter csv(path);
  csv.header({"step", "mean", "std", "min", "max"});
  const int trials = static_cast<int>(results.size());
  for (int t = 1; t <= c.spec.horizon; ++t) {
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : results) {
      const double v = r.separation(t, c.spec.p);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / trials;
    double ss = 0.0;
    for (const auto& r : results) ss += (r.separation(t, c.spec.p) - mean) * (r.separation(t, c.spec.p) - mean);
    const double sd = trials > 1 ? std::sqrt(ss / (trials - 1)) : 0.0;
    csv.row({static_cast<double>(t), mean, sd, lo, hi});
  }
}

inline SpoofPlan plan_or_throw(const ScenarioConfig& c, std::ostream& log) {
  auto plan = plan_offline(c);
  log << "objective " << io::format_number(plan.objective) << " status " << to_string(plan.status) << " branches "
      << plan.branches_solved << '\n';
  if (plan.status == PlanStatus::infeasible) throw InfeasibleError("no spoofing sequence meets the constraints");
  return plan;
}

}  // namespace detail

/// Writes plan.csv and prints objective/status.
inline void cmd_plan(const RunOptions& opts, std::ostream& log = std::cout) {
  detail::Session s("plan", opts, log);
  const auto plan = detail::plan_or_throw(s.config(), log);
  io::write_plan_csv(s.output("plan.csv"), plan, s.config().system.dim());
  s.finish();
}

/// Replays a plan (given or freshly computed) on trial 0 -> simulate.csv; trials > 1 adds summary.csv.
inline void cmd_simulate(const RunOptions& opts, std::ostream& log = std::cout) {
  detail::Session s("simulate", opts, log);
  auto& c = s.config();
  SpoofPlan plan;
  if (opts.plan_path.empty()) {
    plan = detail::plan_or_throw(c, log);
  } else {
    plan.epsilons = io::read_plan_csv(opts.plan_path);
    if (plan.horizon() != c.spec.horizon)
      throw DimensionError("plan has " + std::to_string(plan.horizon()) + " steps but T = " +
                           std::to_string(c.spec.horizon));
    if (plan.epsilons.front().size() != c.system.dim()) throw DimensionError("plan dimension does not match n");
    plan.objective = weighted_effort(plan.epsilons, c.spec);
  }
  const auto mc = monte_carlo(c, plan, c.trials, c.seed);
  detail::write_trial_csv(s.output("simulate.csv"), c, mc.results.front());
  if (c.trials > 1) detail::write_summary_csv(s.output("summary.csv"), c, mc.results);
  for (const auto& st : mc.steps)
    log << "step " << st.step << " desired " << io::format_number(st.desired) << " mean "
        << io::format_number(st.mean) << " std " << io::format_number(st.stddev) << '\n';
  s.finish();
}

/// Offline plan vs receding horizon on one noise realisation -> divergence.csv, energy.csv.
inline void cmd_online(const RunOptions& opts, std::ostream& log = std::cout) {
  detail::Session s("online", opts, log);
  auto& c = s.config();
  if (c.mode != Mode::online) throw ConfigError("online command needs mode = online");
  const auto cmp = compare_online_offline(c, c.seed);

  io::CsvWriter div(s.output("divergence.csv"));
  div.header({"t", "d_t", "sep_offline", "sep_online", "divergence_offline", "divergence_online"});
  io::CsvWriter energy(s.output("energy.csv"));
  energy.header({"t", "eps_l1_offline", "eps_l1_online", "cumulative_offline", "cumulative_online"});
  double cum_off = 0.0, cum_on = 0.0;
  for (int t = 1; t <= c.spec.horizon; ++t) {
    const auto k = static_cast<std::size_t>(t - 1);
    div.row({static_cast<double>(t), c.spec.required(t), cmp.offline.separation(t, c.spec.p),
             cmp.online.separation(t, c.spec.p), cmp.divergence_offline[k], cmp.divergence_online[k]});
    const double e_off = cmp.offline.steps[k].eps.lpNorm<1>();
    const double e_on = cmp.online.steps[k].eps.lpNorm<1>();
    cum_off += e_off;
    cum_on += e_on;
    energy.row({static_cast<double>(t), e_off, e_on, cum_off, cum_on});
  }
  log << "mean |divergence| offline " << io::format_number(cmp.mean_abs_divergence_offline) << " online "
      << io::format_number(cmp.mean_abs_divergence_online) << '\n'
      << "energy offline " << io::format_number(cmp.energy_offline) << " online "
      << io::format_number(cmp.energy_online) << '\n';
  s.finish();
}

/// Sweeps d at one step (replan + Monte Carlo per value) or seeds (online/offline table).
inline void cmd_sweep(const RunOptions& opts, std::ostream& log = std::cout) {
  detail::Session s("sweep", opts, log);
  auto& c = s.config();
  if (opts.sweep_over == "d") {
    int step = opts.sweep_step;
    if (step == 0) {
      if (c.spec.constraints.empty()) throw ConfigError("sweep over d needs --step or a constrained step");
      step = c.spec.constraints.begin()->first;
    }
    if (step < 1 || step > c.spec.horizon) throw ConfigError("sweep step outside 1..T");
    std::vector<double> values = opts.sweep_values;
    if (values.empty()) values = {1, 2, 3, 4, 5};
    io::CsvWriter csv(s.output("sweep_d.csv"));
    csv.line({"d", "objective", "status", "mean", "std", "min", "max"});
    for (double d : values) {
      auto local = c;
      local.spec.constraints[step] = d;
      const auto report = validate(local);
      if (!report.ok()) throw ConfigError(report.joined());
      const auto plan = plan_offline(local);
      if (plan.status == PlanStatus::infeasible) {
        csv.line({io::format_number(d), "nan", "infeasible", "nan", "nan", "nan", "nan"});
        continue;
      }
      const auto mc = monte_carlo(local, plan, local.trials, local.seed);
      const auto& st = *std::find_if(mc.steps.begin(), mc.steps.end(), [&](const auto& x) { return x.step == step; });
      csv.line({io::format_number(d), io::format_number(plan.objective), to_string(plan.status),
                io::format_number(st.mean), io::format_number(st.stddev), io::format_number(st.min),
                io::format_number(st.max)});
      log << "d " << io::format_number(d) << " mean " << io::format_number(st.mean) << '\n';
    }
  } else if (opts.sweep_over == "seeds") {
    if (opts.sweep_seeds < 1) throw ConfigError("--seeds must be >= 1");
    io::CsvWriter csv(s.output("sweep_seeds.csv"));
    csv.header({"seed", "mean_abs_div_offline", "mean_abs_div_online", "energy_offline", "energy_online",
                "online_energy_le_offline"});
    double div_off = 0.0, div_on = 0.0;
    int dominated = 0;
    for (int i = 0; i < opts.sweep_seeds; ++i) {
      const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
      const auto cmp = compare_online_offline(c, seed);
      const bool le = cmp.energy_online <= cmp.energy_offline;
      dominated += le ? 1 : 0;
      div_off += cmp.mean_abs_divergence_offline;
      div_on += cmp.mean_abs_divergence_online;
      csv.row({static_cast<double>(seed), cmp.mean_abs_divergence_offline, cmp.mean_abs_divergence_online,
               cmp.energy_offline, cmp.energy_online, le ? 1.0 : 0.0});
    }
    log << "mean |divergence| offline " << io::format_number(div_off / opts.sweep_seeds) << " online "
        << io::format_number(div_on / opts.sweep_seeds) << '\n'
        << "online energy <= offline in " << dominated << " of " << opts.sweep_seeds << " runs\n";
  } else {
    throw ConfigError("sweep --over must be d or seeds");
  }
  s.finish();
}

/// Runs a command and maps library errors to exit codes.
inline int run(const std::string& command, const RunOptions& opts, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  try {
    if (command == "plan")
      cmd_plan(opts, log);
    else if (command == "simulate")
      cmd_simulate(opts, log);
    else if (command == "online")
      cmd_online(opts, log);
    else if (command == "sweep")
      cmd_sweep(opts, log);
    else
      throw ConfigError("unknown command " + command);
    return ExitCode::ok;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::validation;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::validation;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << '\n';
    return ExitCode::infeasible;
  } catch (const Error& e) {
    err << "numeric failure: " << e.what() << '\n';
    return ExitCode::numeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::validation;
  }
}

}  // namespace kfspoof::cli
