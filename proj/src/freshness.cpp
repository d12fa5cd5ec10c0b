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

#include "ditsim/freshness.hpp"

#include <sstream>

namespace ditsim {

namespace {

// Smallest active device at a slot: the one working on the newest in-flight
// timestep. Returns nullptr for all-bubble slots.
const MicroStep* observer_cell(const Schedule& schedule, int slot) {
  for (int d = 0; d < schedule.devices; ++d) {
    const MicroStep& cell = schedule.at(d, slot);
    if (cell.patch >= 0) return &cell;
  }
  return nullptr;
}

}  // namespace

FreshnessMap freshness_map(const Schedule& schedule) {
  PlanValidation valid = validate_dependencies(schedule);
  if (!valid.ok) throw ValidationError(valid.message);

  FreshnessMap map;
  map.strategy = schedule.kind;
  map.patches = schedule.patches;
  map.entries.reserve(std::size_t(schedule.total_slots()) * schedule.patches);

  for (int slot = 0; slot < schedule.total_slots(); ++slot) {
    const MicroStep* obs = observer_cell(schedule, slot);
    for (int patch = 0; patch < schedule.patches; ++patch) {
      int age = 0;
      if (obs != nullptr && obs->kind == SlotKind::Steady) {
        if (schedule.kind == ScheduleKind::DistriFusion) {
          // Each device holds exactly its own shard fresh.
          age = (patch == obs->patch) ? 0 : 1;
        } else {
          // The observer has recomputed patches 0..j of its current step,
          // counting the patch finishing in this very slot.
          age = (patch <= obs->patch) ? 0 : 1;
        }
      }
      map.entries.push_back({slot, patch, age});
    }
  }
  return map;
}

std::vector<double> fresh_area_series(const Schedule& schedule) {
  const FreshnessMap map = freshness_map(schedule);
  std::vector<double> series(std::size_t(schedule.total_slots()), 0.0);
  std::vector<int> fresh(std::size_t(schedule.total_slots()), 0);
  for (const FreshnessEntry& entry : map.entries) {
    if (entry.age == 0) ++fresh[std::size_t(entry.slot)];
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    series[s] = double(fresh[s]) / schedule.patches;
  }
  return series;
}

double mean_staleness(const Schedule& schedule) {
  const FreshnessMap map = freshness_map(schedule);
  if (map.entries.empty()) return 0.0;
  std::int64_t sum = 0;
  for (const FreshnessEntry& entry : map.entries) sum += entry.age;
  return double(sum) / double(map.entries.size());
}

std::string freshness_to_csv(const FreshnessMap& map) {
  std::ostringstream os;
  os << "slot,patch,age\n";
  for (const FreshnessEntry& entry : map.entries) {
    os << entry.slot << ',' << entry.patch << ',' << entry.age << '\n';
  }
  return os.str();
}

std::string freshness_heat_strip(const Schedule& schedule) {
  const FreshnessMap map = freshness_map(schedule);
  std::ostringstream os;
  int last_timestep = -2;
  for (int slot = 0; slot < schedule.total_slots(); ++slot) {
    const MicroStep* obs = observer_cell(schedule, slot);
    const int t = obs != nullptr ? obs->timestep : -1;
    if (t != last_timestep && slot > 0) os << '\n';
    last_timestep = t;
    os << "t=" << (t >= 0 ? std::to_string(t) : std::string("-")) << " slot="
       << slot << ' ';
    for (int patch = 0; patch < schedule.patches; ++patch) {
      const FreshnessEntry& entry =
          map.entries[std::size_t(slot) * schedule.patches + patch];
      os << (entry.age == 0 ? '#' : '-');
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ditsim
