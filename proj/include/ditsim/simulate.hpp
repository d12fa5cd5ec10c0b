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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ditsim/costmodel.hpp"
#include "ditsim/model.hpp"

namespace ditsim {

// Surrogate per-layer cost: attention is alpha * q_tokens * kv_tokens * hs,
// projections plus MLP are beta * tokens * hs^2 with beta defaulting to
// 8 + 4 * mlp_ratio. The sampler update is element-wise and costs
// update_cost_per_element * p * hs flops per step (0 by default).
struct ComputeModel {
  double attention_coeff = 4.0;               // alpha
  std::optional<double> linear_coeff;         // beta
  double per_message_overhead_s = 50e-6;
  double update_cost_per_element = 0.0;

  bool operator==(const ComputeModel&) const = default;

  double beta(const ModelSpec& model) const;
  double attention_flops(double q_tokens, double kv_tokens,
                         const ModelSpec& model) const;
  double linear_flops(double tokens, const ModelSpec& model) const;
  double layer_flops(double q_tokens, double kv_tokens,
                     const ModelSpec& model) const;
};

enum class StreamKind { Compute, Comm };

struct TimelineEvent {
  int device = 0;
  StreamKind stream = StreamKind::Compute;
  std::string label;
  double start_s = 0.0;
  double duration_s = 0.0;
  int patch = -1;
  int timestep = -1;

  double end_s() const { return start_s + duration_s; }
};

struct Timeline {
  std::vector<TimelineEvent> events;
  double makespan_s = 0.0;
  std::vector<double> busy_fraction;  // compute stream, per device
};

Timeline simulate(const ParallelPlan& plan, const ModelSpec& model,
                  const WorkloadSpec& workload, const ClusterSpec& cluster,
                  const ComputeModel& compute,
                  CostMode mode = CostMode::Exact);

// cfg_degree = 2: two identical groups run the plan independently and join
// on one latent exchange per diffusion step.
Timeline simulate_cfg(const ParallelPlan& plan, const ModelSpec& model,
                      const WorkloadSpec& workload, const ClusterSpec& cluster,
                      const ComputeModel& compute,
                      CostMode mode = CostMode::Exact);

// (T_parallel - T_single/N) / T_parallel.
double comm_share(double parallel_makespan_s, double single_device_latency_s,
                  int devices);

struct PatchSweepRow {
  int patches = 0;
  double makespan_s = 0.0;
};

struct WarmupSweepRow {
  int warmup = 0;
  double makespan_s = 0.0;
  double relative_increase = 0.0;  // vs the W = 0 baseline
};

struct DeviceSweepRow {
  int devices = 0;
  std::string strategy;
  double makespan_s = 0.0;
  double speedup = 0.0;
  std::string note;  // empty for valid rows, reason when skipped
};

std::vector<PatchSweepRow> sweep_patch_number(
    const ModelSpec& model, const WorkloadSpec& workload,
    const ClusterSpec& cluster, const ComputeModel& compute,
    const std::vector<int>& patch_values, CostMode mode = CostMode::Exact);

std::vector<WarmupSweepRow> sweep_warmup(const ModelSpec& model,
                                         const WorkloadSpec& workload,
                                         const ClusterSpec& cluster,
                                         const ComputeModel& compute,
                                         const std::vector<int>& warmup_values,
                                         CostMode mode = CostMode::Exact);

// Plan templates with degree 0 adapt to each swept device count; a
// PipeFusion template with patches = 0 uses M = N.
std::vector<DeviceSweepRow> sweep_devices(
    const ModelSpec& model, const WorkloadSpec& workload,
    const ClusterSpec& cluster_template, const ComputeModel& compute,
    const std::vector<int>& device_values,
    const std::vector<ParallelPlan>& strategies, CostMode mode = CostMode::Exact);

std::string patch_sweep_to_csv(const std::vector<PatchSweepRow>& rows);
std::string warmup_sweep_to_csv(const std::vector<WarmupSweepRow>& rows);
std::string device_sweep_to_csv(const std::vector<DeviceSweepRow>& rows);

// Event array with fields {name, device, stream, start_us, dur_us, patch,
// timestep}, sorted by (start_us, device, stream, name).
std::string timeline_to_trace_json(const Timeline& timeline);

// Time-bucketed view: '#' busy compute, '-' busy comm, '.' idle.
std::string timeline_to_gantt(const Timeline& timeline, int columns = 80);

}  // namespace ditsim
