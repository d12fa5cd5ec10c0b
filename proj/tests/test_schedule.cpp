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
#include <set>

#include "ditsim/schedule.hpp"
#include "doctest.h"

using namespace ditsim;

namespace {

// Independent replay oracle: walk the grid per device and measure active
// spans, startup idles, and interior wait gaps directly from the cells.
struct DeviceReplay {
  int first_active = -1;
  int last_active = -1;
  int active = 0;
  int interior_gaps = 0;
};

std::vector<DeviceReplay> replay_steady(const Schedule& s) {
  std::vector<DeviceReplay> out(std::size_t(s.devices));
  for (int d = 0; d < s.devices; ++d) {
    DeviceReplay& r = out[std::size_t(d)];
    int prev_active = -1;
    for (int k = s.warmup_slots; k < s.total_slots(); ++k) {
      if (s.at(d, k).patch < 0) continue;
      if (r.first_active < 0) r.first_active = k;
      if (prev_active >= 0) r.interior_gaps += k - prev_active - 1;
      prev_active = k;
      r.last_active = k;
      ++r.active;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("two-device two-patch single-step pipeline lays out as expected") {
  Schedule s = build_pipefusion_schedule(2, 2, 1, 0);
  REQUIRE(s.total_slots() == 3);
  CHECK(s.at(0, 0).patch == 0);
  CHECK(s.at(0, 1).patch == 1);
  CHECK(s.at(0, 2).kind == SlotKind::Bubble);
  CHECK(s.at(1, 0).kind == SlotKind::Bubble);
  CHECK(s.at(1, 1).patch == 0);
  CHECK(s.at(1, 2).patch == 1);
}

TEST_CASE("degenerate single-cell pipeline") {
  Schedule s = build_pipefusion_schedule(1, 1, 1, 0);
  CHECK(s.total_slots() == 1);
  CHECK(bubble_count(s).total == 0);
}

TEST_CASE("steady slot five carries the expected patch/timestep pattern") {
  Schedule s = build_pipefusion_schedule(4, 4, 2, 0);
  CHECK(s.at(0, 5).patch == 1);
  CHECK(s.at(0, 5).timestep == 0);
  CHECK(s.at(1, 5).patch == 0);
  CHECK(s.at(1, 5).timestep == 0);
  CHECK(s.at(2, 5).patch == 3);
  CHECK(s.at(2, 5).timestep == 1);
  CHECK(s.at(3, 5).patch == 2);
  CHECK(s.at(3, 5).timestep == 1);
}

TEST_CASE("steady segment length and startup-only bubbles when M >= N") {
  for (int n = 1; n <= 8; ++n) {
    for (int m = n; m <= 8; ++m) {
      for (int steps : {1, 3, 20}) {
        Schedule s = build_pipefusion_schedule(n, m, steps, 0);
        CHECK(s.steady_slots == m * steps + n - 1);
        auto replay = replay_steady(s);
        BubbleReport bubbles = bubble_count(s);
        for (int d = 0; d < n; ++d) {
          const DeviceReplay& r = replay[std::size_t(d)];
          CHECK(r.active == m * steps);
          CHECK(r.first_active == s.warmup_slots + d);
          CHECK(r.interior_gaps == 0);  // active span is contiguous
          CHECK(bubbles.per_device[std::size_t(d)] == n - 1);
        }
        CHECK(bubbles.total == std::int64_t(n) * (n - 1));
      }
    }
  }
}

TEST_CASE("undersized patch counts wait N - M slots per timestep boundary") {
  for (int n = 2; n <= 8; ++n) {
    for (int m = 1; m < n; ++m) {
      for (int steps : {2, 5, 20}) {
        Schedule s = build_pipefusion_schedule(n, m, steps, 0);
        auto replay = replay_steady(s);
        for (int d = 0; d < n; ++d) {
          const DeviceReplay& r = replay[std::size_t(d)];
          CHECK(r.active == m * steps);
          CHECK(r.interior_gaps == (steps - 1) * (n - m));
        }
      }
    }
  }
  Schedule s = build_pipefusion_schedule(4, 2, 10, 0);
  auto replay = replay_steady(s);
  for (const DeviceReplay& r : replay) {
    CHECK(r.interior_gaps == 9 * 2);  // 2 extra waits per boundary
  }
}

TEST_CASE("warmup expands to serialized patch slots before the pipeline") {
  Schedule s = build_pipefusion_schedule(3, 2, 4, 2);
  CHECK(s.warmup_slots == 2 * 3 * 2);
  // One active device per warmup slot.
  for (int k = 0; k < s.warmup_slots; ++k) {
    int active = 0;
    for (int d = 0; d < s.devices; ++d) {
      if (s.at(d, k).patch >= 0) {
        ++active;
        CHECK(s.at(d, k).kind == SlotKind::Warmup);
      }
    }
    CHECK(active == 1);
  }
  // Warmup timesteps count down from S-1.
  CHECK(s.at(0, 0).timestep == 3);
  CHECK(s.at(0, 2 * 3).timestep == 2);
}

TEST_CASE("every work item appears exactly once") {
  for (int n : {1, 2, 4}) {
    for (int m : {1, 3, 4}) {
      Schedule s = build_pipefusion_schedule(n, m, 5, 2);
      std::set<std::tuple<int, int, int>> seen;
      for (const MicroStep& cell : s.micro_steps) {
        if (cell.patch < 0) continue;
        CHECK(seen.insert({cell.device, cell.patch, cell.timestep}).second);
      }
      CHECK(seen.size() == std::size_t(n) * m * 5);
    }
  }
}

TEST_CASE("shard schedule places every device in every slot") {
  Schedule s = build_distrifusion_schedule(4, 3, 1);
  CHECK(s.total_slots() == 3);
  CHECK(s.at(2, 0).kind == SlotKind::Warmup);
  CHECK(s.at(2, 1).kind == SlotKind::Steady);
  CHECK(s.at(2, 1).patch == 2);
  CHECK(bubble_count(s).total == 0);

  Schedule serial = build_distrifusion_schedule(1, 5, 0);
  CHECK(serial.total_slots() == 5);

  Schedule paper_default = build_distrifusion_schedule(8, 20, 1);
  CHECK(paper_default.warmup_slots == 1);
  CHECK(validate_dependencies(paper_default).ok);
}

TEST_CASE("effective compute ratio matches the closed form") {
  CHECK(effective_compute_ratio(4, 4, 50) == doctest::Approx(0.985).epsilon(5e-4));
  CHECK(effective_compute_ratio(1, 3, 7) == 1.0);
  CHECK(effective_compute_ratio(8, 8, 20) == doctest::Approx(160.0 / 167.0));
}

TEST_CASE("ratio formula agrees exactly with the constructed grid") {
  for (int n = 1; n <= 6; ++n) {
    for (int m = n; m <= 6; ++m) {
      for (int steps : {1, 4, 9}) {
        Schedule s = build_pipefusion_schedule(n, m, steps, 0);
        auto replay = replay_steady(s);
        for (const DeviceReplay& r : replay) {
          CHECK(double(r.active) / double(s.steady_slots) ==
                effective_compute_ratio(n, m, steps));
        }
      }
    }
  }
}

TEST_CASE("dependency validation accepts built schedules") {
  CHECK(validate_dependencies(build_pipefusion_schedule(4, 4, 6, 1)).ok);
  CHECK(validate_dependencies(build_pipefusion_schedule(4, 2, 6, 0)).ok);
  CHECK(validate_dependencies(build_distrifusion_schedule(4, 6, 2)).ok);
  CHECK(validate_dependencies(Schedule{}).ok);  // vacuous
}

TEST_CASE("dependency validation catches corrupted grids") {
  Schedule s = build_pipefusion_schedule(2, 2, 2, 0);
  // Swap two cells on device 0 (slots 0 and 1): the producer of the first
  // handoff now lands after its consumer.
  MicroStep& a = s.micro_steps[std::size_t(0) * s.devices + 0];
  MicroStep& b = s.micro_steps[std::size_t(1) * s.devices + 0];
  std::swap(a.patch, b.patch);
  std::swap(a.timestep, b.timestep);
  PlanValidation v = validate_dependencies(s);
  CHECK_FALSE(v.ok);
  CHECK(v.message.find("ordering") != std::string::npos);

  Schedule dup = build_pipefusion_schedule(2, 2, 2, 0);
  MicroStep& c = dup.micro_steps[std::size_t(1) * dup.devices + 0];
  c.patch = 0;  // duplicates (device 0, patch 0, timestep 1)
  CHECK_FALSE(validate_dependencies(dup).ok);
}

TEST_CASE("builders reject invalid shapes") {
  CHECK_THROWS_AS(build_pipefusion_schedule(4, 4, 2, 3), ValidationError);
  CHECK_THROWS_AS(build_pipefusion_schedule(0, 4, 2, 0), ValidationError);
  CHECK_THROWS_AS(build_distrifusion_schedule(4, 0, 0), ValidationError);
}

TEST_CASE("gantt rows expose the pipeline shape") {
  Schedule s = build_pipefusion_schedule(2, 2, 2, 1);
  const std::string gantt = schedule_to_gantt(s);
  CHECK(gantt.find("w0 |") != std::string::npos);
  CHECK(gantt.find("d0 |") != std::string::npos);
  CHECK(gantt.find('.') != std::string::npos);

  const std::string json = schedule_to_json(s);
  CHECK(json.find("\"events\"") != std::string::npos);
  CHECK(json.find("\"warmup_slots\": 4") != std::string::npos);
}
