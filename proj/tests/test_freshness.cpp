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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>

#include "ditsim/freshness.hpp"
#include "doctest.h"

using namespace ditsim;

namespace {

// Brute-force oracle: replay the grid slot by slot, tracking for every
// device the set of patches it has recomputed within its current timestep,
// then read ages off the lowest active device.
std::vector<std::vector<int>> oracle_ages(const Schedule& s) {
  struct DeviceState {
    int timestep = -1;
    std::map<int, bool> done;
  };
  std::vector<DeviceState> state(std::size_t(s.devices));
  std::vector<std::vector<int>> ages(
      std::size_t(s.total_slots()),
      std::vector<int>(std::size_t(s.patches), 0));

  for (int k = 0; k < s.total_slots(); ++k) {
    for (int d = 0; d < s.devices; ++d) {
      const MicroStep& cell = s.at(d, k);
      if (cell.patch < 0) continue;
      DeviceState& ds = state[std::size_t(d)];
      if (cell.timestep != ds.timestep) {
        ds.timestep = cell.timestep;
        ds.done.clear();
      }
      ds.done[cell.patch] = true;
    }
    const MicroStep* obs = nullptr;
    for (int d = 0; d < s.devices && obs == nullptr; ++d) {
      if (s.at(d, k).patch >= 0) obs = &s.at(d, k);
    }
    for (int patch = 0; patch < s.patches; ++patch) {
      int age = 0;
      if (obs != nullptr && obs->kind == SlotKind::Steady) {
        if (s.kind == ScheduleKind::DistriFusion) {
          age = patch == obs->patch ? 0 : 1;
        } else {
          age = state[std::size_t(obs->device)].done.count(patch) ? 0 : 1;
        }
      }
      ages[std::size_t(k)][std::size_t(patch)] = age;
    }
  }
  return ages;
}

}  // namespace

TEST_CASE("freshness map agrees with the brute-force grid replay") {
  for (int n : {1, 2, 3, 4, 6}) {
    for (int m : {1, 2, 4, 6}) {
      Schedule s = build_pipefusion_schedule(n, m, 5, 1);
      auto expected = oracle_ages(s);
      FreshnessMap map = freshness_map(s);
      for (const FreshnessEntry& e : map.entries) {
        CHECK(e.age == expected[std::size_t(e.slot)][std::size_t(e.patch)]);
      }
    }
    Schedule df = build_distrifusion_schedule(n, 6, 1);
    auto expected = oracle_ages(df);
    for (const FreshnessEntry& e : freshness_map(df).entries) {
      CHECK(e.age == expected[std::size_t(e.slot)][std::size_t(e.patch)]);
    }
  }
}

TEST_CASE("micro-step five shows two fresh and two stale patches") {
  Schedule s = build_pipefusion_schedule(4, 4, 2, 0);
  FreshnessMap map = freshness_map(s);
  auto age_at = [&](int slot, int patch) {
    return map.entries[std::size_t(slot) * 4 + patch].age;
  };
  CHECK(age_at(5, 0) == 0);
  CHECK(age_at(5, 1) == 0);
  CHECK(age_at(5, 2) == 1);
  CHECK(age_at(5, 3) == 1);
}

TEST_CASE("shard strategy holds one fresh patch per observer") {
  Schedule s = build_distrifusion_schedule(4, 6, 0);
  auto series = fresh_area_series(s);
  for (double f : series) CHECK(f == doctest::Approx(0.25));

  FreshnessMap map = freshness_map(s);
  for (const FreshnessEntry& e : map.entries) {
    CHECK(e.age == (e.patch == 0 ? 0 : 1));  // observer is device 0
  }
}

TEST_CASE("all-warmup schedules are entirely fresh") {
  Schedule s = build_pipefusion_schedule(3, 3, 2, 2);
  for (const FreshnessEntry& e : freshness_map(s).entries) CHECK(e.age == 0);
  CHECK(mean_staleness(s) == 0.0);

  Schedule df = build_distrifusion_schedule(3, 2, 2);
  CHECK(mean_staleness(df) == 0.0);
}

TEST_CASE("fresh area ramps within a timestep and resets at its boundary") {
  Schedule s = build_pipefusion_schedule(4, 4, 3, 0);
  auto series = fresh_area_series(s);
  // Per timestep the front device walks 0.25 -> 1.0.
  for (int q = 0; q < 3; ++q) {
    for (int j = 0; j < 4; ++j) {
      CHECK(series[std::size_t(4 * q + j)] == doctest::Approx((j + 1) / 4.0));
    }
  }
  // Drain slots keep the final step fully fresh.
  for (int k = 12; k < s.total_slots(); ++k) {
    CHECK(series[std::size_t(k)] == 1.0);
  }
}

TEST_CASE("single device with a single patch is always fresh") {
  Schedule pipe = build_pipefusion_schedule(1, 1, 6, 0);
  for (double f : fresh_area_series(pipe)) CHECK(f == 1.0);
  CHECK(mean_staleness(pipe) == 0.0);

  Schedule df = build_distrifusion_schedule(1, 6, 0);
  for (double f : fresh_area_series(df)) CHECK(f == 1.0);
  CHECK(mean_staleness(df) == 0.0);
}

TEST_CASE("ages never exceed one step") {
  for (int n : {2, 4, 8}) {
    Schedule pipe = build_pipefusion_schedule(n, n, 10, 1);
    for (const FreshnessEntry& e : freshness_map(pipe).entries) {
      CHECK(e.age <= 1);
    }
    Schedule df = build_distrifusion_schedule(n, 10, 1);
    for (const FreshnessEntry& e : freshness_map(df).entries) {
      CHECK(e.age <= 1);
    }
  }
}

TEST_CASE("patch pipeline stays fresher than the shard strategy") {
  for (int n = 2; n <= 8; ++n) {
    for (int steps : {5, 12, 20}) {
      for (int warmup : {0, 1}) {
        Schedule pipe = build_pipefusion_schedule(n, n, steps, warmup);
        Schedule df = build_distrifusion_schedule(n, steps, warmup);
        CHECK(mean_staleness(pipe) < mean_staleness(df));
      }
    }
  }
}

TEST_CASE("csv and heat strip exports") {
  Schedule s = build_pipefusion_schedule(2, 2, 2, 1);
  FreshnessMap map = freshness_map(s);
  const std::string csv = freshness_to_csv(map);
  CHECK(csv.rfind("slot,patch,age\n", 0) == 0);

  const std::string strip = freshness_heat_strip(s);
  CHECK(strip.find('#') != std::string::npos);
  CHECK(strip.find('-') != std::string::npos);
}
