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

#include "ditsim/model.hpp"

#include <sstream>

namespace ditsim {

void ModelSpec::validate() const {
  if (layers < 1) throw ValidationError("model.layers must be >= 1");
  if (hidden_size < 1) throw ValidationError("model.hidden_size must be >= 1");
  if (heads < 1) throw ValidationError("model.heads must be >= 1");
  if (hidden_size % heads != 0) {
    std::ostringstream os;
    os << "model.hidden_size (" << hidden_size
       << ") must be divisible by model.heads (" << heads << ")";
    throw ValidationError(os.str());
  }
  if (param_count < 0) throw ValidationError("model.param_count must be >= 0");
  if (latent_channels < 1) {
    throw ValidationError("model.latent_channels must be >= 1");
  }
  if (mlp_ratio <= 0.0) throw ValidationError("model.mlp_ratio must be > 0");
  if (bytes_per_element != 1 && bytes_per_element != 2 &&
      bytes_per_element != 4 && bytes_per_element != 8) {
    throw ValidationError("model.bytes_per_element must be one of 1,2,4,8");
  }
}

void WorkloadSpec::validate() const {
  if (seq_len < 1) throw ValidationError("workload.seq_len must be >= 1");
  if (diffusion_steps < 1) {
    throw ValidationError("workload.diffusion_steps must be >= 1");
  }
  if (warmup_steps < 0) {
    throw ValidationError("workload.warmup_steps must be >= 0");
  }
  if (warmup_steps > diffusion_steps) {
    std::ostringstream os;
    os << "workload.warmup_steps (" << warmup_steps
       << ") must not exceed diffusion_steps (" << diffusion_steps << ")";
    throw ValidationError(os.str());
  }
  if (step_size <= 0.0) throw ValidationError("workload.step_size must be > 0");
}

void ClusterSpec::validate() const {
  if (device_count < 1) {
    throw ValidationError("cluster.device_count must be >= 1");
  }
  if (device_flops <= 0.0) {
    throw ValidationError("cluster.device_flops must be > 0");
  }
  if (link_bandwidth <= 0.0) {
    throw ValidationError("cluster.link_bandwidth must be > 0");
  }
  if (link_latency < 0.0) {
    throw ValidationError("cluster.link_latency must be >= 0");
  }
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::TensorParallel: return "tensor_parallel";
    case Strategy::SPUlysses: return "sp_ulysses";
    case Strategy::SPRing: return "sp_ring";
    case Strategy::USP: return "usp";
    case Strategy::DistriFusion: return "distrifusion";
    case Strategy::PipeFusion: return "pipefusion";
  }
  return "unknown";
}

std::optional<Strategy> strategy_from_name(std::string_view name) {
  if (name == "tensor_parallel" || name == "tp") {
    return Strategy::TensorParallel;
  }
  if (name == "sp_ulysses" || name == "ulysses") return Strategy::SPUlysses;
  if (name == "sp_ring" || name == "ring") return Strategy::SPRing;
  if (name == "usp") return Strategy::USP;
  if (name == "distrifusion") return Strategy::DistriFusion;
  if (name == "pipefusion") return Strategy::PipeFusion;
  return std::nullopt;
}

std::string ParallelPlan::label() const {
  std::ostringstream os;
  os << strategy_name(strategy);
  if (strategy == Strategy::USP) {
    os << "(u=" << ulysses_degree << ",r=" << ring_degree << ")";
  } else if (strategy == Strategy::PipeFusion) {
    os << "(m=" << patches << ")";
  }
  if (cfg_degree > 1) os << "+cfg" << cfg_degree;
  return os.str();
}

std::int64_t tokens_from_resolution(int height_px, int width_px,
                                    int vae_factor, int patchify) {
  if (height_px < 1 || width_px < 1) {
    throw ValidationError("pixel dimensions must be >= 1");
  }
  if (vae_factor < 1 || patchify < 1) {
    throw ValidationError("vae_factor and patchify must be >= 1");
  }
  const std::int64_t down = std::int64_t(vae_factor) * patchify;
  if (height_px % down != 0) {
    std::ostringstream os;
    os << "height " << height_px << " is not divisible by vae_factor*patchify ("
       << down << ")";
    throw ValidationError(os.str());
  }
  if (width_px % down != 0) {
    std::ostringstream os;
    os << "width " << width_px << " is not divisible by vae_factor*patchify ("
       << down << ")";
    throw ValidationError(os.str());
  }
  return (height_px / down) * std::int64_t(width_px / down);
}

namespace {

PlanValidation fail(std::string msg) { return {false, std::move(msg)}; }

}  // namespace

PlanValidation validate_plan(const ParallelPlan& plan,
                             const ClusterSpec& cluster) {
  if (plan.cfg_degree != 1 && plan.cfg_degree != 2) {
    return fail("cfg_degree must be 1 or 2");
  }
  if (cluster.device_count % plan.cfg_degree != 0) {
    std::ostringstream os;
    os << "device_count " << cluster.device_count
       << " is not divisible by cfg_degree " << plan.cfg_degree;
    return fail(os.str());
  }
  const int group = cluster.device_count / plan.cfg_degree;

  if (plan.strategy == Strategy::USP) {
    if (plan.ulysses_degree < 1 || plan.ring_degree < 1) {
      return fail("usp degrees must be >= 1");
    }
    if (plan.ulysses_degree * plan.ring_degree != group) {
      std::ostringstream os;
      os << "usp degree mismatch: ulysses_degree * ring_degree = "
         << plan.ulysses_degree * plan.ring_degree << " but cfg_degree "
         << plan.cfg_degree << " x " << group << " devices are required for "
         << cluster.device_count << " total devices";
      return fail(os.str());
    }
  } else if (plan.degree != 0 && plan.degree != group) {
    std::ostringstream os;
    os << strategy_name(plan.strategy) << " degree " << plan.degree
       << " with cfg_degree " << plan.cfg_degree << " covers "
       << plan.degree * plan.cfg_degree << " devices, but the cluster has "
       << cluster.device_count;
    return fail(os.str());
  }

  if (plan.strategy == Strategy::PipeFusion && plan.patches < 1) {
    return fail("pipefusion patch count M must be >= 1");
  }
  return {true, ""};
}

int resolved_degree(const ParallelPlan& plan, const ClusterSpec& cluster) {
  PlanValidation v = validate_plan(plan, cluster);
  if (!v.ok) throw ValidationError(v.message);
  return cluster.device_count / plan.cfg_degree;
}

}  // namespace ditsim
