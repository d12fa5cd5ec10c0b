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

#include "ditsim/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace ditsim {

std::string_view cost_mode_name(CostMode mode) {
  return mode == CostMode::PaperApprox ? "paper-approx" : "exact";
}

std::optional<CostMode> cost_mode_from_name(std::string_view name) {
  if (name == "paper-approx" || name == "paper_approx" || name == "approx") {
    return CostMode::PaperApprox;
  }
  if (name == "exact") return CostMode::Exact;
  return std::nullopt;
}

namespace {

std::int64_t round_elements(double v) {
  return static_cast<std::int64_t>(std::llround(v));
}

// Collective send-volume factors. In paper-approx mode (n-1)/n is taken as 1.
double allreduce_factor(int n, CostMode mode) {
  if (mode == CostMode::PaperApprox) return 2.0;
  return 2.0 * double(n - 1) / double(n);
}

double allgather_factor(int n, CostMode mode) {
  if (mode == CostMode::PaperApprox) return 1.0;
  return double(n - 1) / double(n);
}

}  // namespace

CommReport comm_cost(const ParallelPlan& plan, const ModelSpec& model,
                     const WorkloadSpec& workload, const ClusterSpec& cluster,
                     CostMode mode) {
  model.validate();
  workload.validate();
  cluster.validate();
  const int n = resolved_degree(plan, cluster);

  const double p = double(workload.seq_len);
  const double hs = double(model.hidden_size);
  const double L = double(model.layers);
  const double phs = p * hs;

  CommReport report;
  report.strategy = plan.label();
  report.mode = mode;

  double per_layer = 0.0;
  double total = 0.0;
  switch (plan.strategy) {
    case Strategy::TensorParallel:
      // Two per-layer all-reduces of p x hs each.
      per_layer = (n > 1) ? 2.0 * phs * allreduce_factor(n, mode) : 0.0;
      total = per_layer * L;
      report.overlappable = false;
      break;
    case Strategy::SPUlysses:
      // Four all-to-alls per layer, each moving p*hs/n per device.
      per_layer = (n > 1) ? 4.0 * phs / double(n) : 0.0;
      total = per_layer * L;
      report.overlappable = false;
      break;
    case Strategy::SPRing:
      // K and V circulate the full spatial shape once per layer.
      per_layer = (n > 1) ? 2.0 * phs * allgather_factor(n, mode) : 0.0;
      total = per_layer * L;
      report.overlappable = true;
      break;
    case Strategy::DistriFusion:
      // Asynchronous K/V all-gather per layer.
      per_layer = (n > 1) ? 2.0 * phs * allgather_factor(n, mode) : 0.0;
      total = per_layer * L;
      report.overlappable = true;
      break;
    case Strategy::USP: {
      // Ulysses all-to-all over u-groups on a sequence already split r ways,
      // plus ring K/V circulation over r-groups of p/u-token shards. The two
      // terms vanish at their degenerate group sizes, which pins the formula
      // to the pure strategies at the mesh endpoints.
      const int u = plan.ulysses_degree;
      const int r = plan.ring_degree;
      const double ulysses =
          (u > 1) ? 4.0 * phs / double(u) / double(r) : 0.0;
      const double ring =
          (r > 1) ? 2.0 * (p / double(u)) * hs * allgather_factor(r, mode)
                  : 0.0;
      per_layer = ulysses + ring;
      total = per_layer * L;
      report.overlappable = (u == 1 && r > 1);
      break;
    }
    case Strategy::PipeFusion:
      // Stage input plus stage output per device per step, independent of
      // both L and the patch count M. P2P factor is 1 in both modes.
      total = (n > 1) ? 2.0 * phs : 0.0;
      per_layer = total;
      report.overlappable = true;
      break;
  }

  report.elements_total = round_elements(total);
  report.per_layer_elements = round_elements(per_layer);
  report.bytes_total = report.elements_total * model.bytes_per_element;
  return report;
}

MemoryReport memory_cost(const ParallelPlan& plan, const ModelSpec& model,
                         const WorkloadSpec& workload,
                         const ClusterSpec& cluster) {
  model.validate();
  workload.validate();
  cluster.validate();
  const int n = resolved_degree(plan, cluster);

  MemoryReport report;
  report.unit_kv = 2 * workload.seq_len * model.hidden_size;
  const double full_kv = double(report.unit_kv) * model.layers;
  const double params = double(model.param_count);

  switch (plan.strategy) {
    case Strategy::TensorParallel:
      report.param_elements = round_elements(params / n);
      report.kv_buffer_elements = round_elements(full_kv / n);
      break;
    case Strategy::SPUlysses:
    case Strategy::SPRing:
    case Strategy::USP:
      report.param_elements = model.param_count;
      report.kv_buffer_elements = round_elements(full_kv / n);
      break;
    case Strategy::DistriFusion:
      report.param_elements = model.param_count;
      report.kv_buffer_elements = round_elements(full_kv);
      break;
    case Strategy::PipeFusion:
      report.param_elements = round_elements(params / n);
      report.kv_buffer_elements = round_elements(full_kv / n);
      break;
  }
  return report;
}

int crossover_parallel_degree(const ModelSpec& model) {
  return 2 * model.layers;
}

std::vector<StrategyComparison> compare_strategies(
    const ModelSpec& model, const WorkloadSpec& workload,
    const ClusterSpec& cluster, const std::vector<ParallelPlan>& candidates,
    CostMode mode) {
  if (candidates.empty()) {
    throw ValidationError("compare_strategies requires at least one candidate");
  }
  std::vector<StrategyComparison> rows;
  rows.reserve(candidates.size());
  for (const ParallelPlan& plan : candidates) {
    StrategyComparison row;
    row.plan = plan;
    row.comm = comm_cost(plan, model, workload, cluster, mode);
    row.memory = memory_cost(plan, model, workload, cluster);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const StrategyComparison& a, const StrategyComparison& b) {
              if (a.comm.elements_total != b.comm.elements_total) {
                return a.comm.elements_total < b.comm.elements_total;
              }
              if (a.memory.kv_buffer_elements != b.memory.kv_buffer_elements) {
                return a.memory.kv_buffer_elements <
                       b.memory.kv_buffer_elements;
              }
              return a.comm.strategy < b.comm.strategy;
            });
  return rows;
}

std::vector<ParallelPlan> default_candidates(const ClusterSpec& cluster,
                                             int cfg_degree) {
  std::vector<ParallelPlan> plans;
  const int group = cluster.device_count / cfg_degree;
  auto add = [&](Strategy s) {
    ParallelPlan plan;
    plan.strategy = s;
    plan.cfg_degree = cfg_degree;
    if (s == Strategy::PipeFusion) plan.patches = group;
    plans.push_back(plan);
  };
  add(Strategy::TensorParallel);
  add(Strategy::SPUlysses);
  add(Strategy::SPRing);
  add(Strategy::DistriFusion);
  add(Strategy::PipeFusion);
  for (int u = 2; u < group; ++u) {
    if (group % u != 0) continue;
    const int r = group / u;
    if (r < 2) continue;
    ParallelPlan plan;
    plan.strategy = Strategy::USP;
    plan.ulysses_degree = u;
    plan.ring_degree = r;
    plan.cfg_degree = cfg_degree;
    plans.push_back(plan);
  }
  return plans;
}

std::int64_t cfg_exchange_elements(const ModelSpec& model,
                                   const WorkloadSpec& workload) {
  return workload.seq_len * model.latent_channels;
}

std::string comparison_to_csv(const std::vector<StrategyComparison>& rows) {
  std::ostringstream os;
  os << "strategy,elements_total,bytes_total,overlappable,param_elements,"
        "kv_buffer_elements\n";
  for (const StrategyComparison& row : rows) {
    os << row.comm.strategy << ',' << row.comm.elements_total << ','
       << row.comm.bytes_total << ',' << (row.comm.overlappable ? 1 : 0) << ','
       << row.memory.param_elements << ',' << row.memory.kv_buffer_elements
       << '\n';
  }
  return os.str();
}

std::string comparison_to_json(const std::vector<StrategyComparison>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const StrategyComparison& row : rows) {
    out.push_back({
        {"strategy", row.comm.strategy},
        {"elements_total", row.comm.elements_total},
        {"bytes_total", row.comm.bytes_total},
        {"overlappable", row.comm.overlappable},
        {"param_elements", row.memory.param_elements},
        {"kv_buffer_elements", row.memory.kv_buffer_elements},
    });
  }
  return out.dump(2) + "\n";
}

}  // namespace ditsim
