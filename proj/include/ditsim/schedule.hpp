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

enum class SlotKind { Warmup, Steady, Bubble };

// One cell of the device x slot grid. Bubble cells carry patch = timestep = -1.
struct MicroStep {
  int device = 0;
  int slot = 0;
  int patch = -1;
  int timestep = -1;  // counts down, S-1 .. 0
  SlotKind kind = SlotKind::Bubble;
};

enum class ScheduleKind { PipeFusion, DistriFusion };

// producer/consumer are indices into Schedule::micro_steps.
struct DependencyEdge {
  std::size_t producer = 0;
  std::size_t consumer = 0;
};

// The full grid including bubble cells, ordered slot-major then device.
// For the patch pipeline the steady segment strides by max(M, N) slots per
// timestep: asynchronous P2P gives a one-slot producer->consumer lag, and the
// wrap-around dependency of stage 0 on the previous step's last stage forces
// N - M extra wait slots per timestep when M < N.
struct Schedule {
  ScheduleKind kind = ScheduleKind::PipeFusion;
  int devices = 1;   // N
  int patches = 1;   // M
  int steps = 1;     // S
  int warmup = 0;    // W
  int warmup_slots = 0;
  int steady_slots = 0;
  std::vector<MicroStep> micro_steps;
  std::vector<DependencyEdge> dependencies;

  int total_slots() const { return warmup_slots + steady_slots; }
  const MicroStep& at(int device, int slot) const;
};

Schedule build_pipefusion_schedule(int devices, int patches, int steps,
                                   int warmup);

// One slot per diffusion step; every device computes its own shard through
// all layers, with stale-K/V edges lagging one step behind.
Schedule build_distrifusion_schedule(int devices, int steps, int warmup);

// M*S / (M*S + N - 1), the useful fraction of the zero-warmup pipeline.
double effective_compute_ratio(int devices, int patches, int steps);

struct BubbleReport {
  std::vector<std::int64_t> per_device;  // steady-segment bubbles only
  std::int64_t total = 0;
};

BubbleReport bubble_count(const Schedule& schedule);

// Acyclicity, slot ordering of every edge, and exactly-once coverage of the
// (device, patch, timestep) work items.
PlanValidation validate_dependencies(const Schedule& schedule);

std::string schedule_to_json(const Schedule& schedule);

// One row per device, one glyph per slot; '.' marks a bubble and patch
// indices print as 0-9 then a-v. Warmup rows are prefixed 'w'.
std::string schedule_to_gantt(const Schedule& schedule);

}  // namespace ditsim
