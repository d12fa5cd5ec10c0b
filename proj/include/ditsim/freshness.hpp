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

#include <string>
#include <vector>

#include "ditsim/schedule.hpp"

namespace ditsim {

struct FreshnessEntry {
  int slot = 0;
  int patch = 0;
  int age = 0;  // diffusion steps behind the observer's current timestep
};

// Per-slot K/V ages as seen by the observing device. For the patch pipeline
// the observer is the active device computing the newest in-flight timestep;
// for the shard strategy it is a single device's view (all views agree up to
// patch relabeling). Warmup slots are fresh by construction.
struct FreshnessMap {
  ScheduleKind strategy = ScheduleKind::PipeFusion;
  int patches = 1;
  std::vector<FreshnessEntry> entries;  // slot-major, patch-minor
};

FreshnessMap freshness_map(const Schedule& schedule);

// Fraction of patches with age 0 at each slot.
std::vector<double> fresh_area_series(const Schedule& schedule);

// Time-average age over every (slot, patch) entry.
double mean_staleness(const Schedule& schedule);

std::string freshness_to_csv(const FreshnessMap& map);

// '#' = fresh, '-' = stale; one strip per slot, blank line between timesteps.
std::string freshness_heat_strip(const Schedule& schedule);

}  // namespace ditsim
