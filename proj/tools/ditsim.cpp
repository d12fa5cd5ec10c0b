// Copyright 2026 The ditsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ditsim/config.hpp"
#include "ditsim/costmodel.hpp"
#include "ditsim/execute.hpp"
#include "ditsim/freshness.hpp"
#include "ditsim/model.hpp"
#include "ditsim/schedule.hpp"
#include "ditsim/simulate.hpp"

namespace {

using namespace ditsim;

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write output file: " + path);
  out << content;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> values;
  std::string token;
  std::istringstream in(csv);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    values.push_back(std::stoi(token));
  }
  return values;
}

struct GlobalOpts {
  std::string config_path;
  std::string format = "csv";
  std::string out_path;
  std::optional<long long> seed;
};

RunConfig load_or_default(const GlobalOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
  if (opts.seed) cfg.seed = std::uint64_t(*opts.seed);
  return cfg;
}

int cmd_cost(const GlobalOpts& opts, const std::string& mode_name) {
  RunConfig cfg = load_or_default(opts);
  auto mode = cost_mode_from_name(mode_name);
  if (!mode) throw ValidationError("unknown cost mode: " + mode_name);
  std::vector<ParallelPlan> candidates =
      default_candidates(cfg.cluster, cfg.plan.cfg_degree);
  auto rows =
      compare_strategies(cfg.model, cfg.workload, cfg.cluster, candidates,
                         *mode);
  write_output(opts.out_path, opts.format == "json"
                                  ? comparison_to_json(rows)
                                  : comparison_to_csv(rows));
  return 0;
}

Schedule build_from_flags(const std::string& strategy, int n, int m, int steps,
                          int warmup) {
  if (strategy == "distrifusion") {
    return build_distrifusion_schedule(n, steps, warmup);
  }
  if (strategy == "pipefusion") {
    return build_pipefusion_schedule(n, m, steps, warmup);
  }
  throw ValidationError("schedule strategy must be pipefusion or distrifusion");
}

int cmd_schedule(const GlobalOpts& opts, const std::string& strategy, int n,
                 int m, int steps, int warmup, bool gantt) {
  Schedule sched = build_from_flags(strategy, n, m, steps, warmup);
  PlanValidation valid = validate_dependencies(sched);
  if (!valid.ok) throw NumericError("schedule self-check failed: " + valid.message);
  if (gantt) {
    write_output(opts.out_path, schedule_to_gantt(sched));
  } else {
    write_output(opts.out_path, schedule_to_json(sched));
  }
  return 0;
}

int cmd_freshness(const GlobalOpts& opts, const std::string& strategy, int n,
                  int m, int steps, int warmup, bool heat) {
  Schedule sched = build_from_flags(strategy, n, m, steps, warmup);
  if (heat) {
    write_output(opts.out_path, freshness_heat_strip(sched));
    return 0;
  }
  FreshnessMap map = freshness_map(sched);
  if (opts.format == "json") {
    nlohmann::json entries = nlohmann::json::array();
    for (const FreshnessEntry& e : map.entries) {
      entries.push_back({{"slot", e.slot}, {"patch", e.patch}, {"age", e.age}});
    }
    nlohmann::json out = {{"entries", std::move(entries)},
                          {"mean_staleness", mean_staleness(sched)}};
    write_output(opts.out_path, out.dump(2) + "\n");
  } else {
    write_output(opts.out_path, freshness_to_csv(map));
  }
  return 0;
}

int cmd_simulate(const GlobalOpts& opts, const std::string& trace_path,
                 bool gantt) {
  RunConfig cfg = load_or_default(opts);
  Timeline tl = simulate(cfg.plan, cfg.model, cfg.workload, cfg.cluster,
                         cfg.compute, cfg.comm_mode);

  ClusterSpec single = cfg.cluster;
  single.device_count = 1;
  ParallelPlan serial;
  serial.strategy = Strategy::PipeFusion;
  serial.patches = 1;
  Timeline baseline = simulate(serial, cfg.model, cfg.workload, single,
                               cfg.compute, cfg.comm_mode);

  const double share =
      comm_share(tl.makespan_s, baseline.makespan_s, cfg.cluster.device_count);

  nlohmann::json summary = {
      {"strategy", cfg.plan.label()},
      {"devices", cfg.cluster.device_count},
      {"makespan_s", tl.makespan_s},
      {"single_device_makespan_s", baseline.makespan_s},
      {"speedup", baseline.makespan_s / tl.makespan_s},
      {"comm_share", share},
      {"busy_fraction", tl.busy_fraction},
  };
  if (!trace_path.empty()) {
    write_output(trace_path, timeline_to_trace_json(tl));
  }
  std::ostringstream out;
  out << summary.dump(2) << "\n";
  if (gantt) out << timeline_to_gantt(tl);
  write_output(opts.out_path, out.str());
  return 0;
}

int cmd_sweep(const GlobalOpts& opts, const std::string& kind,
              const std::string& values_csv, const std::string& strategies_csv) {
  RunConfig cfg = load_or_default(opts);
  std::vector<int> values = parse_int_list(values_csv);

  if (kind == "patch-number") {
    if (values.empty()) values = {2, 4, 8, 16, 32};
    auto rows = sweep_patch_number(cfg.model, cfg.workload, cfg.cluster,
                                   cfg.compute, values, cfg.comm_mode);
    write_output(opts.out_path, patch_sweep_to_csv(rows));
    return 0;
  }
  if (kind == "warmup") {
    if (values.empty()) values = {0, 1, 2};
    auto rows = sweep_warmup(cfg.model, cfg.workload, cfg.cluster, cfg.compute,
                             values, cfg.comm_mode);
    write_output(opts.out_path, warmup_sweep_to_csv(rows));
    return 0;
  }
  if (kind == "devices") {
    if (values.empty()) values = {1, 2, 4, 8};
    std::vector<ParallelPlan> strategies;
    std::istringstream in(strategies_csv);
    std::string token;
    while (std::getline(in, token, ',')) {
      if (token.empty()) continue;
      auto s = strategy_from_name(token);
      if (!s) throw ValidationError("unknown strategy: " + token);
      ParallelPlan plan;
      plan.strategy = *s;
      if (*s == Strategy::PipeFusion) plan.patches = 0;  // M = N
      if (*s == Strategy::USP) {
        plan.ulysses_degree = cfg.plan.ulysses_degree;
        plan.ring_degree = cfg.plan.ring_degree;
      }
      strategies.push_back(plan);
    }
    auto rows = sweep_devices(cfg.model, cfg.workload, cfg.cluster, cfg.compute,
                              values, strategies, cfg.comm_mode);
    write_output(opts.out_path, device_sweep_to_csv(rows));
    return 0;
  }
  throw ValidationError("sweep kind must be patch-number, warmup, or devices");
}

int cmd_execute(const GlobalOpts& opts, const std::string& strategy_flag,
                bool compare, const std::string& backend_name,
                const std::string& trajectory_path,
                std::optional<double> auto_warmup_threshold) {
  RunConfig cfg = load_or_default(opts);
  cfg.model.validate();
  cfg.workload.validate();
  cfg.cluster.validate();
  if (cfg.plan.cfg_degree != 1) {
    throw ValidationError(
        "execute emulates a single guidance branch; set cfg_degree = 1");
  }

  Backend backend = Backend::Threads;
  if (backend_name == "inline") {
    backend = Backend::Inline;
  } else if (backend_name != "threads") {
    throw ValidationError("backend must be threads or inline");
  }

  std::string strategy = strategy_flag;
  if (strategy.empty()) {
    strategy = cfg.plan.strategy == Strategy::DistriFusion ? "distrifusion"
               : cfg.plan.strategy == Strategy::PipeFusion ? "pipefusion"
                                                           : "serial";
  }

  const int workers = cfg.cluster.device_count / cfg.plan.cfg_degree;
  const int patches = cfg.plan.patches;
  const int steps = cfg.workload.diffusion_steps;
  int warmup = cfg.workload.warmup_steps;
  const double eta = cfg.workload.step_size;

  const auto t0 = std::chrono::steady_clock::now();
  ToyDiT toy = build_toy_model(cfg.seed, cfg.model.layers,
                               cfg.model.hidden_size, cfg.model.heads,
                               cfg.model.mlp_ratio);
  Matrix x_init =
      make_initial_latent(cfg.seed, cfg.workload.seq_len, cfg.model.hidden_size);

  std::optional<AutoWarmupResult> chosen_warmup;
  if (auto_warmup_threshold) {
    chosen_warmup =
        auto_warmup(toy, x_init, steps, eta, *auto_warmup_threshold);
    warmup = chosen_warmup->warmup;
  }

  SerialResult serial =
      serial_reference(toy, x_init, steps, eta, !trajectory_path.empty());
  if (!trajectory_path.empty()) {
    std::ostringstream os;
    for (std::size_t k = 0; k < serial.trajectory.size(); ++k) {
      os << (int(steps) - int(k));
      const Matrix& m = serial.trajectory[k];
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), ",%.17g", m(r, c));
          os << buf;
        }
      }
      os << '\n';
    }
    write_output(trajectory_path, os.str());
  }

  nlohmann::json manifest = {
      {"seed", cfg.seed},
      {"layers", cfg.model.layers},
      {"hidden_size", cfg.model.hidden_size},
      {"heads", cfg.model.heads},
      {"seq_len", cfg.workload.seq_len},
      {"steps", steps},
      {"warmup", warmup},
      {"workers", workers},
      {"patches", patches},
      {"eta", eta},
      {"strategy", compare ? "compare" : strategy},
  };
  if (chosen_warmup) {
    manifest["auto_warmup"] = {{"warmup", chosen_warmup->warmup},
                               {"threshold_met", chosen_warmup->threshold_met}};
  }

  auto run_one = [&](const std::string& name) -> double {
    if (name == "serial") return 0.0;
    if (name == "pipefusion") {
      ParallelRunResult run = run_pipefusion(toy, x_init, steps, workers,
                                             patches, warmup, eta, backend);
      return divergence(run.final, serial.final);
    }
    if (name == "distrifusion") {
      ParallelRunResult run =
          run_distrifusion(toy, x_init, steps, workers, warmup, eta, backend);
      return divergence(run.final, serial.final);
    }
    throw ValidationError(
        "execute strategy must be serial, pipefusion, or distrifusion");
  };

  if (compare) {
    manifest["divergence"] = {{"serial", 0.0},
                              {"pipefusion", run_one("pipefusion")},
                              {"distrifusion", run_one("distrifusion")}};
  } else {
    manifest["divergence"] = run_one(strategy);
  }
  const auto t1 = std::chrono::steady_clock::now();
  manifest["wall_time_s"] =
      std::chrono::duration<double>(t1 - t0).count();

  write_output(opts.out_path, manifest.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analytic cost models, schedules, timeline simulation, and a "
               "numerical staleness emulator for parallel diffusion "
               "transformer inference"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "run configuration file");
  app.add_option("--format", opts.format, "output format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--out", opts.out_path, "output path (default stdout)");
  long long seed_flag = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "seed override");

  auto* cost = app.add_subcommand("cost", "strategy comparison table");
  std::string mode_name = "paper-approx";
  cost->add_option("--mode", mode_name, "paper-approx or exact");

  auto* sched = app.add_subcommand("schedule", "pipeline micro-step grid");
  std::string sched_strategy = "pipefusion";
  int n = 4, m = 4, steps = 4, warmup = 0;
  bool gantt = false;
  sched->add_option("--strategy", sched_strategy, "pipefusion or distrifusion");
  sched->add_option("--n", n, "devices");
  sched->add_option("--m", m, "patches");
  sched->add_option("--steps", steps, "diffusion steps");
  sched->add_option("--warmup", warmup, "warmup steps");
  sched->add_flag("--gantt", gantt, "ASCII Gantt instead of JSON");

  auto* fresh = app.add_subcommand("freshness", "per-slot K/V ages");
  bool heat = false;
  fresh->add_option("--strategy", sched_strategy, "pipefusion or distrifusion");
  fresh->add_option("--n", n, "devices");
  fresh->add_option("--m", m, "patches");
  fresh->add_option("--steps", steps, "diffusion steps");
  fresh->add_option("--warmup", warmup, "warmup steps");
  fresh->add_flag("--heat", heat, "ASCII heat strip instead of CSV");

  auto* sim = app.add_subcommand("simulate", "discrete-event timeline");
  std::string trace_path;
  bool sim_gantt = false;
  sim->add_option("--trace", trace_path, "write trace JSON here");
  sim->add_flag("--gantt", sim_gantt, "append an ASCII timeline");

  auto* sweep = app.add_subcommand("sweep", "parameter sweeps");
  std::string sweep_kind;
  std::string sweep_values;
  std::string sweep_strategies =
      "tensor_parallel,sp_ulysses,sp_ring,distrifusion,pipefusion";
  sweep->add_option("kind", sweep_kind, "patch-number, warmup, or devices")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated sweep values");
  sweep->add_option("--strategies", sweep_strategies,
                    "strategies for the devices sweep");

  auto* exec = app.add_subcommand("execute", "toy network staleness emulation");
  std::string exec_strategy;
  std::string backend_name = "threads";
  std::string trajectory_path;
  bool compare = false;
  double warmup_threshold = 0.0;
  exec->add_option("--strategy", exec_strategy,
                   "serial, pipefusion, or distrifusion");
  exec->add_flag("--compare", compare, "run all strategies and report each");
  exec->add_option("--backend", backend_name, "threads or inline");
  exec->add_option("--dump-trajectory", trajectory_path,
                   "CSV of the serial latent per step");
  auto* warmup_opt = exec->add_option(
      "--auto-warmup", warmup_threshold,
      "pick the warmup step count from this latent-change threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (seed_opt->count() > 0) opts.seed = seed_flag;
    if (cost->parsed()) return cmd_cost(opts, mode_name);
    if (sched->parsed()) {
      return cmd_schedule(opts, sched_strategy, n, m, steps, warmup, gantt);
    }
    if (fresh->parsed()) {
      return cmd_freshness(opts, sched_strategy, n, m, steps, warmup, heat);
    }
    if (sim->parsed()) return cmd_simulate(opts, trace_path, sim_gantt);
    if (sweep->parsed()) {
      return cmd_sweep(opts, sweep_kind, sweep_values, sweep_strategies);
    }
    if (exec->parsed()) {
      std::optional<double> threshold;
      if (warmup_opt->count() > 0) threshold = warmup_threshold;
      return cmd_execute(opts, exec_strategy, compare, backend_name,
                         trajectory_path, threshold);
    }
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
