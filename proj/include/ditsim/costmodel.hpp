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

#include <cstdint>
#include <string>
#include <vector>

#include "ditsim/model.hpp"

namespace ditsim {

// paper_approx drops the (n-1)/n collective factors; exact keeps them
// (AllReduce 2(n-1)/n, AllGather (n-1)/n, AllToAll 1, P2P 1).
enum class CostMode { PaperApprox, Exact };

std::string_view cost_mode_name(CostMode mode);
std::optional<CostMode> cost_mode_from_name(std::string_view name);

// Activation traffic per device per diffusion step. Elements are activation
// element counts; one O(p x hs) term is pinned to exactly p*hs elements so
// rows are comparable across strategies.
struct CommReport {
  std::string strategy;                 // plan label
  std::int64_t elements_total = 0;      // per device per diffusion step
  std::int64_t bytes_total = 0;
  std::int64_t per_layer_elements = 0;  // per-step total for PipeFusion
  bool overlappable = false;
  CostMode mode = CostMode::PaperApprox;
};

struct MemoryReport {
  std::int64_t param_elements = 0;
  std::int64_t kv_buffer_elements = 0;
  std::int64_t unit_kv = 0;  // 2 * p * hs: one layer's K+V at full shape
};

CommReport comm_cost(const ParallelPlan& plan, const ModelSpec& model,
                     const WorkloadSpec& workload, const ClusterSpec& cluster,
                     CostMode mode);

MemoryReport memory_cost(const ParallelPlan& plan, const ModelSpec& model,
                         const WorkloadSpec& workload,
                         const ClusterSpec& cluster);

// 2*L: the device count below which the patch pipeline's approximate
// communication volume is strictly the lowest of all strategies.
int crossover_parallel_degree(const ModelSpec& model);

struct StrategyComparison {
  ParallelPlan plan;
  CommReport comm;
  MemoryReport memory;
};

// Rows sorted ascending by elements_total, ties broken by kv buffer size,
// then by strategy label.
std::vector<StrategyComparison> compare_strategies(
    const ModelSpec& model, const WorkloadSpec& workload,
    const ClusterSpec& cluster, const std::vector<ParallelPlan>& candidates,
    CostMode mode);

// Default candidate set for a cluster: the five canonical strategies plus
// every proper u x r factorization of the group size.
std::vector<ParallelPlan> default_candidates(const ClusterSpec& cluster,
                                             int cfg_degree);

// One latent exchange per diffusion step per CFG group.
std::int64_t cfg_exchange_elements(const ModelSpec& model,
                                   const WorkloadSpec& workload);

std::string comparison_to_csv(const std::vector<StrategyComparison>& rows);
std::string comparison_to_json(const std::vector<StrategyComparison>& rows);

}  // namespace ditsim
