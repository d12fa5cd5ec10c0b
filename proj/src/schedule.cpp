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

#include "ditsim/schedule.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "json.hpp"

namespace ditsim {

const MicroStep& Schedule::at(int device, int slot) const {
  return micro_steps[std::size_t(slot) * devices + device];
}

namespace {

void check_args(int devices, int patches, int steps, int warmup) {
  if (devices < 1) throw ValidationError("schedule devices must be >= 1");
  if (patches < 1) throw ValidationError("schedule patches must be >= 1");
  if (steps < 1) throw ValidationError("schedule steps must be >= 1");
  if (warmup < 0) throw ValidationError("schedule warmup must be >= 0");
  if (warmup > steps) {
    std::ostringstream os;
    os << "warmup (" << warmup << ") must not exceed steps (" << steps << ")";
    throw ValidationError(os.str());
  }
}

std::vector<MicroStep> bubble_grid(int devices, int slots) {
  std::vector<MicroStep> grid(std::size_t(slots) * devices);
  for (int s = 0; s < slots; ++s) {
    for (int d = 0; d < devices; ++d) {
      MicroStep& cell = grid[std::size_t(s) * devices + d];
      cell.device = d;
      cell.slot = s;
    }
  }
  return grid;
}

// Common edge set: stage d of (j, t) consumes stage d-1 of (j, t), and
// stage 0 of (j, t) consumes the previous step's final stage of (j, t+1)
// (the element-wise sampler update is attached to stage 0).
void add_stage_edges(Schedule& sched,
                     const std::map<std::tuple<int, int, int>, std::size_t>&
                         index_of) {
  auto find = [&](int device, int patch, int timestep) {
    auto it = index_of.find({device, patch, timestep});
    return it == index_of.end() ? std::size_t(-1) : it->second;
  };
  for (int t = sched.steps - 1; t >= 0; --t) {
    for (int j = 0; j < sched.patches; ++j) {
      for (int d = 1; d < sched.devices; ++d) {
        std::size_t prod = find(d - 1, j, t);
        std::size_t cons = find(d, j, t);
        if (prod != std::size_t(-1) && cons != std::size_t(-1)) {
          sched.dependencies.push_back({prod, cons});
        }
      }
      if (t < sched.steps - 1) {
        std::size_t prod = find(sched.devices - 1, j, t + 1);
        std::size_t cons = find(0, j, t);
        if (prod != std::size_t(-1) && cons != std::size_t(-1)) {
          sched.dependencies.push_back({prod, cons});
        }
      }
    }
  }
}

}  // namespace

Schedule build_pipefusion_schedule(int devices, int patches, int steps,
                                   int warmup) {
  check_args(devices, patches, steps, warmup);
  const int n = devices;
  const int m = patches;
  const int steady_steps = steps - warmup;
  // Per-timestep slot stride; N - M wait slots appear when M < N.
  const int stride = std::max(m, n);

  Schedule sched;
  sched.kind = ScheduleKind::PipeFusion;
  sched.devices = n;
  sched.patches = m;
  sched.steps = steps;
  sched.warmup = warmup;
  sched.warmup_slots = warmup * n * m;
  sched.steady_slots =
      steady_steps > 0 ? (steady_steps - 1) * stride + m + n - 1 : 0;
  sched.micro_steps = bubble_grid(n, sched.total_slots());

  std::map<std::tuple<int, int, int>, std::size_t> index_of;
  auto place = [&](int device, int slot, int patch, int timestep,
                   SlotKind kind) {
    const std::size_t idx = std::size_t(slot) * n + device;
    MicroStep& cell = sched.micro_steps[idx];
    cell.patch = patch;
    cell.timestep = timestep;
    cell.kind = kind;
    index_of[{device, patch, timestep}] = idx;
  };

  // Warmup: one device active per slot, stages strictly in sequence.
  for (int w = 0; w < warmup; ++w) {
    const int t = steps - 1 - w;
    for (int d = 0; d < n; ++d) {
      for (int j = 0; j < m; ++j) {
        place(d, w * n * m + d * m + j, j, t, SlotKind::Warmup);
      }
    }
  }

  // Steady pipeline: device d handles patch j of steady step q one slot
  // after device d-1 did.
  for (int q = 0; q < steady_steps; ++q) {
    const int t = steady_steps - 1 - q;
    for (int d = 0; d < n; ++d) {
      for (int j = 0; j < m; ++j) {
        place(d, sched.warmup_slots + d + q * stride + j, j, t,
              SlotKind::Steady);
      }
    }
  }

  add_stage_edges(sched, index_of);
  return sched;
}

Schedule build_distrifusion_schedule(int devices, int steps, int warmup) {
  check_args(devices, devices, steps, warmup);

  Schedule sched;
  sched.kind = ScheduleKind::DistriFusion;
  sched.devices = devices;
  sched.patches = devices;  // one patch shard per device
  sched.steps = steps;
  sched.warmup = warmup;
  sched.warmup_slots = warmup;
  sched.steady_slots = steps - warmup;
  sched.micro_steps = bubble_grid(devices, steps);

  for (int s = 0; s < steps; ++s) {
    const int t = steps - 1 - s;
    for (int d = 0; d < devices; ++d) {
      MicroStep& cell = sched.micro_steps[std::size_t(s) * devices + d];
      cell.patch = d;
      cell.timestep = t;
      cell.kind = s < warmup ? SlotKind::Warmup : SlotKind::Steady;
    }
  }

  // Stale K/V edges: every shard of step t+1 feeds every device at step t.
  for (int s = 1; s < steps; ++s) {
    for (int producer = 0; producer < devices; ++producer) {
      for (int consumer = 0; consumer < devices; ++consumer) {
        sched.dependencies.push_back(
            {std::size_t(s - 1) * devices + producer,
             std::size_t(s) * devices + consumer});
      }
    }
  }
  return sched;
}

double effective_compute_ratio(int devices, int patches, int steps) {
  check_args(devices, patches, steps, 0);
  const double work = double(patches) * steps;
  return work / (work + devices - 1);
}

BubbleReport bubble_count(const Schedule& schedule) {
  BubbleReport report;
  report.per_device.assign(schedule.devices, 0);
  for (int s = schedule.warmup_slots; s < schedule.total_slots(); ++s) {
    for (int d = 0; d < schedule.devices; ++d) {
      if (schedule.at(d, s).kind == SlotKind::Bubble) {
        ++report.per_device[d];
        ++report.total;
      }
    }
  }
  return report;
}

PlanValidation validate_dependencies(const Schedule& schedule) {
  if (schedule.micro_steps.empty() && schedule.dependencies.empty()) {
    return {true, ""};  // vacuous
  }
  std::map<std::tuple<int, int, int>, int> seen;
  std::int64_t active = 0;
  for (const MicroStep& cell : schedule.micro_steps) {
    const bool has_work = cell.patch >= 0;
    if ((cell.kind == SlotKind::Bubble) == has_work) {
      std::ostringstream os;
      os << "cell (device " << cell.device << ", slot " << cell.slot
         << ") has inconsistent kind/patch";
      return {false, os.str()};
    }
    if (!has_work) continue;
    ++active;
    int& count = seen[{cell.device, cell.patch, cell.timestep}];
    if (++count > 1) {
      std::ostringstream os;
      os << "duplicate work item (device " << cell.device << ", patch "
         << cell.patch << ", timestep " << cell.timestep << ")";
      return {false, os.str()};
    }
  }

  const std::int64_t expected =
      schedule.kind == ScheduleKind::PipeFusion
          ? std::int64_t(schedule.devices) * schedule.patches * schedule.steps
          : std::int64_t(schedule.devices) * schedule.steps;
  if (active != expected) {
    std::ostringstream os;
    os << "schedule covers " << active << " work items, expected " << expected;
    return {false, os.str()};
  }

  for (const DependencyEdge& edge : schedule.dependencies) {
    const MicroStep& prod = schedule.micro_steps[edge.producer];
    const MicroStep& cons = schedule.micro_steps[edge.consumer];
    if (prod.slot >= cons.slot) {
      std::ostringstream os;
      os << "dependency ordering violated: producer (device " << prod.device
         << ", patch " << prod.patch << ", timestep " << prod.timestep
         << ") at slot " << prod.slot << " does not precede consumer (device "
         << cons.device << ", patch " << cons.patch << ", timestep "
         << cons.timestep << ") at slot " << cons.slot;
      return {false, os.str()};
    }
  }

  // Re-derive the semantic producer/consumer relation from the cell contents
  // so content corruption is caught, not just edge-index damage. Every edge
  // strictly increasing the slot index also makes the graph acyclic.
  std::map<std::tuple<int, int, int>, int> slot_of;
  for (const MicroStep& cell : schedule.micro_steps) {
    if (cell.patch < 0) continue;
    slot_of[{cell.device, cell.patch, cell.timestep}] = cell.slot;
  }
  auto require_before = [&](int prod_device, int prod_patch, int prod_t,
                            int cons_device, int cons_patch, int cons_t,
                            PlanValidation& out) {
    auto prod = slot_of.find({prod_device, prod_patch, prod_t});
    auto cons = slot_of.find({cons_device, cons_patch, cons_t});
    if (prod == slot_of.end() || cons == slot_of.end()) return true;
    if (prod->second >= cons->second) {
      std::ostringstream os;
      os << "dependency ordering violated for (device " << cons_device
         << ", patch " << cons_patch << ", timestep " << cons_t
         << "): producer at slot " << prod->second
         << " does not precede consumer at slot " << cons->second;
      out = {false, os.str()};
      return false;
    }
    return true;
  };

  PlanValidation violation{true, ""};
  if (schedule.kind == ScheduleKind::PipeFusion) {
    for (int t = schedule.steps - 1; t >= 0; --t) {
      for (int j = 0; j < schedule.patches; ++j) {
        for (int d = 1; d < schedule.devices; ++d) {
          if (!require_before(d - 1, j, t, d, j, t, violation)) {
            return violation;
          }
        }
        if (t < schedule.steps - 1) {
          if (!require_before(schedule.devices - 1, j, t + 1, 0, j, t,
                              violation)) {
            return violation;
          }
        }
      }
    }
  } else {
    for (int t = schedule.steps - 2; t >= 0; --t) {
      for (int producer = 0; producer < schedule.devices; ++producer) {
        for (int consumer = 0; consumer < schedule.devices; ++consumer) {
          if (!require_before(producer, producer, t + 1, consumer, consumer,
                              t, violation)) {
            return violation;
          }
        }
      }
    }
  }
  return {true, ""};
}

std::string schedule_to_json(const Schedule& schedule) {
  nlohmann::json events = nlohmann::json::array();
  for (const MicroStep& cell : schedule.micro_steps) {
    nlohmann::json event = {
        {"device", cell.device},
        {"slot", cell.slot},
        {"kind", cell.kind == SlotKind::Warmup
                     ? "warmup"
                     : cell.kind == SlotKind::Steady ? "steady" : "bubble"},
    };
    if (cell.patch >= 0) {
      event["patch"] = cell.patch;
      event["timestep"] = cell.timestep;
    } else {
      event["patch"] = nullptr;
      event["timestep"] = nullptr;
    }
    events.push_back(std::move(event));
  }
  nlohmann::json out = {
      {"kind", schedule.kind == ScheduleKind::PipeFusion ? "pipefusion"
                                                         : "distrifusion"},
      {"devices", schedule.devices},
      {"patches", schedule.patches},
      {"steps", schedule.steps},
      {"warmup", schedule.warmup},
      {"warmup_slots", schedule.warmup_slots},
      {"steady_slots", schedule.steady_slots},
      {"events", std::move(events)},
  };
  return out.dump(2) + "\n";
}

namespace {

char patch_glyph(int patch) {
  if (patch < 10) return char('0' + patch);
  if (patch < 32) return char('a' + (patch - 10));
  return '+';
}

}  // namespace

std::string schedule_to_gantt(const Schedule& schedule) {
  std::ostringstream os;
  auto emit_rows = [&](int from, int to, const char* prefix) {
    for (int d = 0; d < schedule.devices; ++d) {
      os << prefix << d << " |";
      for (int s = from; s < to; ++s) {
        const MicroStep& cell = schedule.at(d, s);
        os << (cell.patch >= 0 ? patch_glyph(cell.patch) : '.');
      }
      os << "|\n";
    }
  };
  if (schedule.warmup_slots > 0) {
    emit_rows(0, schedule.warmup_slots, "w");
  }
  if (schedule.steady_slots > 0) {
    emit_rows(schedule.warmup_slots, schedule.total_slots(), "d");
  }
  return os.str();
}

}  // namespace ditsim
