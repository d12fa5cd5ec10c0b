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

#include "ditsim/costmodel.hpp"
#include "ditsim/model.hpp"
#include "ditsim/simulate.hpp"

namespace ditsim {

// Sectioned key/value run configuration. Unknown sections or keys are
// rejected by name; absent keys keep their defaults; parse -> serialize ->
// parse is value-identical.
struct RunConfig {
  ModelSpec model;
  WorkloadSpec workload;
  ClusterSpec cluster;
  ParallelPlan plan;
  ComputeModel compute;
  CostMode comm_mode = CostMode::Exact;
  std::uint64_t seed = 0;

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& config);

}  // namespace ditsim
