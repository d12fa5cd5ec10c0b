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

#include "ditsim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace ditsim {

double ComputeModel::beta(const ModelSpec& model) const {
  return linear_coeff.value_or(8.0 + 4.0 * model.mlp_ratio);
}

double ComputeModel::attention_flops(double q_tokens, double kv_tokens,
                                     const ModelSpec& model) const {
  return attention_coeff * q_tokens * kv_tokens * model.hidden_size;
}

double ComputeModel::linear_flops(double tokens,
                                  const ModelSpec& model) const {
  return beta(model) * tokens * model.hidden_size * model.hidden_size;
}

double ComputeModel::layer_flops(double q_tokens, double kv_tokens,
                                 const ModelSpec& model) const {
  return attention_flops(q_tokens, kv_tokens, model) +
         linear_flops(q_tokens, model);
}

namespace {

// Appends events while keeping per-(device, stream) cursors so events on one
// stream never overlap.
class TimelineBuilder {
 public:
  explicit TimelineBuilder(int devices)
      : compute_free_(devices, 0.0), comm_free_(devices, 0.0) {}

  double compute(int device, double earliest, double duration,
                 std::string label, int patch, int timestep) {
    return emit(StreamKind::Compute, compute_free_, device, earliest, duration,
                std::move(label), patch, timestep);
  }

  double comm(int device, double earliest, double duration, std::string label,
              int patch, int timestep) {
    return emit(StreamKind::Comm, comm_free_, device, earliest, duration,
                std::move(label), patch, timestep);
  }

  double comm_free(int device) const { return comm_free_[device]; }

  Timeline finish() {
    Timeline tl;
    tl.events = std::move(events_);
    tl.makespan_s = 0.0;
    for (const TimelineEvent& ev : tl.events) {
      tl.makespan_s = std::max(tl.makespan_s, ev.end_s());
    }
    tl.busy_fraction.assign(compute_free_.size(), 0.0);
    if (tl.makespan_s > 0.0) {
      for (const TimelineEvent& ev : tl.events) {
        if (ev.stream == StreamKind::Compute) {
          tl.busy_fraction[ev.device] += ev.duration_s;
        }
      }
      for (double& f : tl.busy_fraction) f /= tl.makespan_s;
    }
    return tl;
  }

 private:
  double emit(StreamKind stream, std::vector<double>& cursors, int device,
              double earliest, double duration, std::string label, int patch,
              int timestep) {
    const double start = std::max(earliest, cursors[device]);
    events_.push_back(
        {device, stream, std::move(label), start, duration, patch, timestep});
    cursors[device] = start + duration;
    return cursors[device];
  }

  std::vector<double> compute_free_;
  std::vector<double> comm_free_;
  std::vector<TimelineEvent> events_;
};

struct SimContext {
  const ModelSpec& model;
  const WorkloadSpec& workload;
  const ClusterSpec& cluster;
  const ComputeModel& compute;
  CostMode mode;

  double seconds_for_flops(double flops) const {
    return flops / cluster.device_flops;
  }

  double message_seconds(double elements) const {
    if (elements <= 0.0) return 0.0;
    return compute.per_message_overhead_s + cluster.link_latency +
           elements * model.bytes_per_element / cluster.link_bandwidth;
  }

  // Async sends: initiation blocks the sender's compute stream, the wire
  // time overlaps on the comm stream. This is what makes oversized patch
  // counts pay for their extra handoffs.
  double initiation_seconds(double elements) const {
    return elements <= 0.0 ? 0.0 : compute.per_message_overhead_s;
  }

  double wire_seconds(double elements) const {
    if (elements <= 0.0) return 0.0;
    return cluster.link_latency +
           elements * model.bytes_per_element / cluster.link_bandwidth;
  }

  double update_flops(double tokens) const {
    return compute.update_cost_per_element * tokens * model.hidden_size;
  }
};

std::string step_label(const char* what, int timestep) {
  std::ostringstream os;
  os << what << " t" << timestep;
  return os.str();
}

std::string layer_label(const char* what, int timestep, int layer) {
  std::ostringstream os;
  os << what << " t" << timestep << " l" << layer;
  return os.str();
}

std::string patch_label(const char* what, int timestep, int patch) {
  std::ostringstream os;
  os << what << " t" << timestep << " p" << patch;
  return os.str();
}

void simulate_serial(const SimContext& ctx, TimelineBuilder& builder,
                     int device) {
  const double p = double(ctx.workload.seq_len);
  const double step_flops =
      ctx.model.layers * ctx.compute.layer_flops(p, p, ctx.model) +
      ctx.update_flops(p);
  const double dur = ctx.seconds_for_flops(step_flops);
  for (int t = ctx.workload.diffusion_steps - 1; t >= 0; --t) {
    builder.compute(device, 0.0, dur, step_label("step", t), -1, t);
  }
}

// Per-layer compute with communication serialized behind it (TP, SP-Ulysses,
// and the all-to-all part of USP), or overlapped alongside it (SP-Ring and
// the ring part of USP).
void simulate_layerwise(const SimContext& ctx, TimelineBuilder& builder,
                        int group_base, int group_size, double serial_elements,
                        double overlap_elements, const char* comm_name) {
  const double p = double(ctx.workload.seq_len);
  const double layer_dur =
      ctx.seconds_for_flops(ctx.compute.layer_flops(p, p, ctx.model) /
                            group_size) +
      ctx.initiation_seconds(overlap_elements);
  const double serial_dur = ctx.message_seconds(serial_elements);
  const double overlap_dur = ctx.wire_seconds(overlap_elements);
  const double update_dur =
      ctx.seconds_for_flops(ctx.update_flops(p) / group_size);

  std::vector<double> ready(group_size, 0.0);
  for (int t = ctx.workload.diffusion_steps - 1; t >= 0; --t) {
    for (int l = 0; l < ctx.model.layers; ++l) {
      for (int d = 0; d < group_size; ++d) {
        const int dev = group_base + d;
        const double compute_end = builder.compute(
            dev, ready[d], layer_dur, layer_label("layer", t, l), -1, t);
        double gate = compute_end;
        if (overlap_dur > 0.0) {
          gate = std::max(gate, builder.comm(dev, ready[d], overlap_dur,
                                             layer_label("ring", t, l), -1, t));
        }
        if (serial_dur > 0.0) {
          gate = std::max(gate,
                          builder.comm(dev, compute_end, serial_dur,
                                       layer_label(comm_name, t, l), -1, t));
        }
        ready[d] = gate;
      }
    }
    if (update_dur > 0.0) {
      for (int d = 0; d < group_size; ++d) {
        ready[d] = builder.compute(group_base + d, ready[d], update_dur,
                                   step_label("update", t), -1, t);
      }
    }
  }
}

void simulate_distrifusion(const SimContext& ctx, TimelineBuilder& builder,
                           int group_base, int group_size,
                           double per_layer_elements) {
  const double p = double(ctx.workload.seq_len);
  const double shard = p / group_size;
  const double layer_dur =
      ctx.seconds_for_flops(ctx.compute.layer_flops(shard, p, ctx.model)) +
      ctx.initiation_seconds(per_layer_elements);
  const double comm_dur = ctx.wire_seconds(per_layer_elements);
  const double step_dur = layer_dur * ctx.model.layers +
                          ctx.seconds_for_flops(ctx.update_flops(shard));
  const int steps = ctx.workload.diffusion_steps;
  const int warmup = ctx.workload.warmup_steps;

  std::vector<double> ready(group_size, 0.0);
  for (int s = 0; s < steps; ++s) {
    const int t = steps - 1 - s;
    for (int d = 0; d < group_size; ++d) {
      const int dev = group_base + d;
      if (s < warmup) {
        // Synchronous shard parallelism: the gather gates every layer.
        double at = ready[d];
        for (int l = 0; l < ctx.model.layers; ++l) {
          at = builder.compute(dev, at, layer_dur,
                               layer_label("warmup", t, l), d, t);
          if (comm_dur > 0.0) {
            at = builder.comm(dev, at, comm_dur, layer_label("gather", t, l),
                              d, t);
          }
        }
        ready[d] = at;
      } else {
        const double compute_end = builder.compute(
            dev, ready[d], step_dur, step_label("step", t), d, t);
        double comm_end = compute_end;
        if (comm_dur > 0.0 && t > 0) {
          // Asynchronous gathers land in the next step's buffers; the final
          // step has no consumer.
          for (int l = 0; l < ctx.model.layers; ++l) {
            comm_end = builder.comm(dev, ready[d], comm_dur,
                                    layer_label("gather", t, l), d, t);
          }
        }
        ready[d] = std::max(compute_end, comm_end);
      }
    }
  }
}

void simulate_pipefusion(const SimContext& ctx, TimelineBuilder& builder,
                         int group_base, int group_size, int patches) {
  const double p = double(ctx.workload.seq_len);
  const int n = group_size;
  const int m = patches;
  const double stage_layers = double(ctx.model.layers) / n;
  const double full_elements = p * ctx.model.hidden_size;
  const double patch_elements = p / m * ctx.model.hidden_size;
  const double stage_full_dur =
      ctx.seconds_for_flops(stage_layers *
                            ctx.compute.layer_flops(p, p, ctx.model)) +
      (n > 1 ? ctx.initiation_seconds(full_elements) : 0.0);
  const double stage_patch_dur =
      ctx.seconds_for_flops(stage_layers *
                            ctx.compute.layer_flops(p / m, p, ctx.model)) +
      (n > 1 ? ctx.initiation_seconds(patch_elements) : 0.0);
  const double update_dur = ctx.seconds_for_flops(ctx.update_flops(p / m));
  const double full_msg_dur = n > 1 ? ctx.wire_seconds(full_elements) : 0.0;
  const double patch_msg_dur = n > 1 ? ctx.wire_seconds(patch_elements) : 0.0;

  const int steps = ctx.workload.diffusion_steps;
  const int warmup = ctx.workload.warmup_steps;
  const int steady_steps = steps - warmup;

  std::vector<double> ready(n, 0.0);

  // Warmup runs stage-sequentially over the full sequence.
  double warmup_eps_delivery = 0.0;
  for (int w = 0; w < warmup; ++w) {
    const int t = steps - 1 - w;
    double delivery = warmup_eps_delivery;
    for (int d = 0; d < n; ++d) {
      const int dev = group_base + d;
      const double compute_end =
          builder.compute(dev, std::max(ready[d], delivery), stage_full_dur,
                          step_label("warmup", t), -1, t);
      ready[d] = compute_end;
      delivery = n > 1 ? builder.comm(dev, compute_end, full_msg_dur,
                                      step_label("send", t), -1, t)
                       : compute_end;
    }
    warmup_eps_delivery = delivery;
  }

  if (steady_steps <= 0) return;

  // delivery[(d, j, q)] = when the stage output of patch j, steady step q
  // becomes available to its consumer.
  auto key = [m, steady_steps](int d, int j, int q) {
    return (std::size_t(d) * steady_steps + q) * m + j;
  };
  std::vector<double> delivery(std::size_t(n) * steady_steps * m, 0.0);

  for (int q = 0; q < steady_steps; ++q) {
    const int t = steady_steps - 1 - q;
    for (int j = 0; j < m; ++j) {
      for (int d = 0; d < n; ++d) {
        const int dev = group_base + d;
        double input = 0.0;
        if (d > 0) {
          input = delivery[key(d - 1, j, q)];
        } else if (q > 0) {
          input = delivery[key(n - 1, j, q - 1)];
        } else {
          input = warmup_eps_delivery;
        }
        double dur = stage_patch_dur;
        if (d == 0) dur += update_dur;
        const double compute_end =
            builder.compute(dev, std::max(ready[d], input), dur,
                            patch_label("stage", t, j), j, t);
        ready[d] = compute_end;
        delivery[key(d, j, q)] =
            n > 1 ? builder.comm(dev, compute_end, patch_msg_dur,
                                 patch_label("send", t, j), j, t)
                  : compute_end;
      }
    }
  }
}

void simulate_group(const ParallelPlan& plan, const SimContext& ctx,
                    TimelineBuilder& builder, int group_base, int group_size) {
  if (group_size == 1) {
    simulate_serial(ctx, builder, group_base);
    return;
  }

  ParallelPlan group_plan = plan;
  group_plan.cfg_degree = 1;
  ClusterSpec group_cluster = ctx.cluster;
  group_cluster.device_count = group_size;
  const CommReport comm =
      comm_cost(group_plan, ctx.model, ctx.workload, group_cluster, ctx.mode);

  switch (plan.strategy) {
    case Strategy::TensorParallel:
      simulate_layerwise(ctx, builder, group_base, group_size,
                         double(comm.per_layer_elements), 0.0, "allreduce");
      break;
    case Strategy::SPUlysses:
      simulate_layerwise(ctx, builder, group_base, group_size,
                         double(comm.per_layer_elements), 0.0, "all2all");
      break;
    case Strategy::SPRing:
      simulate_layerwise(ctx, builder, group_base, group_size, 0.0,
                         double(comm.per_layer_elements), "ring");
      break;
    case Strategy::USP: {
      const int u = plan.ulysses_degree;
      const int r = plan.ring_degree;
      const double p = double(ctx.workload.seq_len);
      const double hs = double(ctx.model.hidden_size);
      const double ulysses = u > 1 ? 4.0 * p * hs / u / r : 0.0;
      double ring = 0.0;
      if (r > 1) {
        ring = 2.0 * (p / u) * hs;
        if (ctx.mode == CostMode::Exact) ring *= double(r - 1) / r;
      }
      simulate_layerwise(ctx, builder, group_base, group_size, ulysses, ring,
                         "all2all");
      break;
    }
    case Strategy::DistriFusion:
      simulate_distrifusion(ctx, builder, group_base, group_size,
                            double(comm.per_layer_elements));
      break;
    case Strategy::PipeFusion:
      simulate_pipefusion(ctx, builder, group_base, group_size, plan.patches);
      break;
  }
}

}  // namespace

Timeline simulate(const ParallelPlan& plan, const ModelSpec& model,
                  const WorkloadSpec& workload, const ClusterSpec& cluster,
                  const ComputeModel& compute, CostMode mode) {
  model.validate();
  workload.validate();
  cluster.validate();
  PlanValidation valid = validate_plan(plan, cluster);
  if (!valid.ok) throw ValidationError(valid.message);

  if (plan.cfg_degree == 2) {
    return simulate_cfg(plan, model, workload, cluster, compute, mode);
  }

  SimContext ctx{model, workload, cluster, compute, mode};
  TimelineBuilder builder(cluster.device_count);
  simulate_group(plan, ctx, builder, 0, cluster.device_count);
  return builder.finish();
}

Timeline simulate_cfg(const ParallelPlan& plan, const ModelSpec& model,
                      const WorkloadSpec& workload, const ClusterSpec& cluster,
                      const ComputeModel& compute, CostMode mode) {
  model.validate();
  workload.validate();
  cluster.validate();
  if (plan.cfg_degree != 2) {
    throw ValidationError("simulate_cfg requires cfg_degree = 2");
  }
  if (cluster.device_count % 2 != 0) {
    throw ValidationError("cfg_degree = 2 requires an even device count");
  }
  PlanValidation valid = validate_plan(plan, cluster);
  if (!valid.ok) throw ValidationError(valid.message);

  SimContext ctx{model, workload, cluster, compute, mode};
  TimelineBuilder builder(cluster.device_count);
  const int group = cluster.device_count / 2;
  simulate_group(plan, ctx, builder, 0, group);
  simulate_group(plan, ctx, builder, group, group);

  Timeline tl = builder.finish();

  // Both guidance branches join on one latent exchange per diffusion step.
  // The exchange is accounted on top of the group makespan rather than as a
  // pipeline barrier, so pipelined steps stay pipelined.
  const double exchange_dur =
      ctx.message_seconds(double(cfg_exchange_elements(model, workload)));
  if (exchange_dur > 0.0) {
    double at = tl.makespan_s;
    for (int t = workload.diffusion_steps - 1; t >= 0; --t) {
      for (int leader : {0, group}) {
        tl.events.push_back({leader, StreamKind::Comm,
                             step_label("cfg_exchange", t), at, exchange_dur,
                             -1, t});
      }
      at += exchange_dur;
    }
    tl.makespan_s = at;
    for (double& f : tl.busy_fraction) {
      f = f * (at - workload.diffusion_steps * exchange_dur) / at;
    }
  }
  return tl;
}

double comm_share(double parallel_makespan_s, double single_device_latency_s,
                  int devices) {
  if (parallel_makespan_s <= 0.0) {
    throw ValidationError("comm_share requires a positive parallel makespan");
  }
  if (devices < 1) throw ValidationError("comm_share requires devices >= 1");
  return (parallel_makespan_s - single_device_latency_s / devices) /
         parallel_makespan_s;
}

std::vector<PatchSweepRow> sweep_patch_number(
    const ModelSpec& model, const WorkloadSpec& workload,
    const ClusterSpec& cluster, const ComputeModel& compute,
    const std::vector<int>& patch_values, CostMode mode) {
  if (patch_values.empty()) {
    throw ValidationError("patch-number sweep requires at least one M value");
  }
  std::vector<PatchSweepRow> rows;
  for (int m : patch_values) {
    ParallelPlan plan;
    plan.strategy = Strategy::PipeFusion;
    plan.patches = m;
    Timeline tl = simulate(plan, model, workload, cluster, compute, mode);
    rows.push_back({m, tl.makespan_s});
  }
  return rows;
}

std::vector<WarmupSweepRow> sweep_warmup(const ModelSpec& model,
                                         const WorkloadSpec& workload,
                                         const ClusterSpec& cluster,
                                         const ComputeModel& compute,
                                         const std::vector<int>& warmup_values,
                                         CostMode mode) {
  if (warmup_values.empty()) {
    throw ValidationError("warmup sweep requires at least one W value");
  }
  ParallelPlan plan;
  plan.strategy = Strategy::PipeFusion;
  plan.patches = cluster.device_count;

  auto run = [&](int w) {
    WorkloadSpec wl = workload;
    wl.warmup_steps = w;
    wl.validate();
    return simulate(plan, model, wl, cluster, compute, mode).makespan_s;
  };

  const double baseline = run(0);
  std::vector<WarmupSweepRow> rows;
  for (int w : warmup_values) {
    const double makespan = run(w);
    rows.push_back({w, makespan, makespan / baseline - 1.0});
  }
  return rows;
}

std::vector<DeviceSweepRow> sweep_devices(
    const ModelSpec& model, const WorkloadSpec& workload,
    const ClusterSpec& cluster_template, const ComputeModel& compute,
    const std::vector<int>& device_values,
    const std::vector<ParallelPlan>& strategies, CostMode mode) {
  if (device_values.empty() || strategies.empty()) {
    throw ValidationError("devices sweep requires device values and strategies");
  }
  ClusterSpec single = cluster_template;
  single.device_count = 1;
  ParallelPlan serial;
  serial.strategy = Strategy::PipeFusion;
  serial.patches = 1;
  const double baseline =
      simulate(serial, model, workload, single, compute, mode).makespan_s;

  std::vector<DeviceSweepRow> rows;
  for (int n : device_values) {
    ClusterSpec cluster = cluster_template;
    cluster.device_count = n;
    for (const ParallelPlan& tpl : strategies) {
      ParallelPlan plan = tpl;
      if (plan.strategy == Strategy::PipeFusion && plan.patches == 0) {
        plan.patches = std::max(1, n / plan.cfg_degree);
      }
      DeviceSweepRow row;
      row.devices = n;
      row.strategy = plan.label();
      PlanValidation valid = validate_plan(plan, cluster);
      if (!valid.ok) {
        row.note = valid.message;
        rows.push_back(std::move(row));
        continue;
      }
      Timeline tl = simulate(plan, model, workload, cluster, compute, mode);
      row.makespan_s = tl.makespan_s;
      row.speedup = baseline / tl.makespan_s;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::string patch_sweep_to_csv(const std::vector<PatchSweepRow>& rows) {
  std::ostringstream os;
  os << "patches,makespan_s\n";
  for (const PatchSweepRow& row : rows) {
    os << row.patches << ',' << fmt_double(row.makespan_s) << '\n';
  }
  return os.str();
}

std::string warmup_sweep_to_csv(const std::vector<WarmupSweepRow>& rows) {
  std::ostringstream os;
  os << "warmup,makespan_s,relative_increase\n";
  for (const WarmupSweepRow& row : rows) {
    os << row.warmup << ',' << fmt_double(row.makespan_s) << ','
       << fmt_double(row.relative_increase) << '\n';
  }
  return os.str();
}

std::string device_sweep_to_csv(const std::vector<DeviceSweepRow>& rows) {
  std::ostringstream os;
  os << "devices,strategy,makespan_s,speedup,note\n";
  for (const DeviceSweepRow& row : rows) {
    os << row.devices << ',' << row.strategy << ',';
    if (row.note.empty()) {
      os << fmt_double(row.makespan_s) << ',' << fmt_double(row.speedup);
    } else {
      os << ",";
    }
    os << ',' << row.note << '\n';
  }
  return os.str();
}

std::string timeline_to_trace_json(const Timeline& timeline) {
  std::vector<const TimelineEvent*> order;
  order.reserve(timeline.events.size());
  for (const TimelineEvent& ev : timeline.events) order.push_back(&ev);
  std::sort(order.begin(), order.end(),
            [](const TimelineEvent* a, const TimelineEvent* b) {
              if (a->start_s != b->start_s) return a->start_s < b->start_s;
              if (a->device != b->device) return a->device < b->device;
              if (a->stream != b->stream) return a->stream < b->stream;
              return a->label < b->label;
            });

  nlohmann::json events = nlohmann::json::array();
  for (const TimelineEvent* ev : order) {
    nlohmann::json event = {
        {"name", ev->label},
        {"device", ev->device},
        {"stream", ev->stream == StreamKind::Compute ? "compute" : "comm"},
        {"start_us", ev->start_s * 1e6},
        {"dur_us", ev->duration_s * 1e6},
    };
    if (ev->patch >= 0) {
      event["patch"] = ev->patch;
    } else {
      event["patch"] = nullptr;
    }
    if (ev->timestep >= 0) {
      event["timestep"] = ev->timestep;
    } else {
      event["timestep"] = nullptr;
    }
    events.push_back(std::move(event));
  }
  nlohmann::json out = {
      {"makespan_us", timeline.makespan_s * 1e6},
      {"events", std::move(events)},
  };
  return out.dump(2) + "\n";
}

std::string timeline_to_gantt(const Timeline& timeline, int columns) {
  if (timeline.makespan_s <= 0.0 || timeline.events.empty()) return "";
  int devices = 0;
  for (const TimelineEvent& ev : timeline.events) {
    devices = std::max(devices, ev.device + 1);
  }
  const double bucket = timeline.makespan_s / columns;
  std::vector<std::string> compute_rows(devices, std::string(columns, '.'));
  std::vector<std::string> comm_rows(devices, std::string(columns, '.'));
  for (const TimelineEvent& ev : timeline.events) {
    const int from = std::min(columns - 1, int(ev.start_s / bucket));
    const int to = std::min(columns - 1, int(ev.end_s() / bucket));
    auto& row = ev.stream == StreamKind::Compute ? compute_rows[ev.device]
                                                 : comm_rows[ev.device];
    for (int c = from; c <= to; ++c) {
      row[c] = ev.stream == StreamKind::Compute ? '#' : '-';
    }
  }
  std::ostringstream os;
  for (int d = 0; d < devices; ++d) {
    os << "d" << d << " cmp |" << compute_rows[d] << "|\n";
    os << "d" << d << " com |" << comm_rows[d] << "|\n";
  }
  os << "scale: " << fmt_double(bucket * 1e6) << " us/col, makespan "
     << fmt_double(timeline.makespan_s) << " s\n";
  return os.str();
}

}  // namespace ditsim
