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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ditsim {

// Invalid inputs, degree mismatches, divisibility violations. The CLI maps
// this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite intermediates and other numeric failures. CLI exit code 1.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Static description of the transformer backbone. Sizes are element counts,
// not bytes; bytes_per_element selects the precision for memory reports.
struct ModelSpec {
  int layers = 1;                  // L
  int hidden_size = 1;             // hs
  int heads = 1;
  std::int64_t param_count = 0;    // P, parameter elements
  int latent_channels = 4;         // c, channels exchanged by CFG sync
  double mlp_ratio = 4.0;
  int bytes_per_element = 2;

  bool operator==(const ModelSpec&) const = default;
  void validate() const;
};

// One generation job: latent sequence length and the denoising loop shape.
struct WorkloadSpec {
  std::int64_t seq_len = 1;        // p, latent tokens
  int diffusion_steps = 1;         // S
  int warmup_steps = 0;            // W
  double step_size = 0.1;          // eta for the toy sampler

  bool operator==(const WorkloadSpec&) const = default;
  void validate() const;
};

// Uniform all-pairs interconnect; no intra/inter-node asymmetry.
struct ClusterSpec {
  int device_count = 1;            // N
  double device_flops = 1.0;       // FLOP/s
  double link_bandwidth = 1.0;     // bytes/s
  double link_latency = 0.0;       // seconds per message

  bool operator==(const ClusterSpec&) const = default;
  void validate() const;
};

enum class Strategy {
  TensorParallel,
  SPUlysses,
  SPRing,
  USP,
  DistriFusion,
  PipeFusion,
};

std::string_view strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(std::string_view name);

// A strategy choice plus its degrees. `degree` is the per-CFG-group parallel
// degree; 0 means "derive from cluster.device_count / cfg_degree". USP always
// derives its degree from ulysses_degree * ring_degree.
struct ParallelPlan {
  Strategy strategy = Strategy::PipeFusion;
  int degree = 0;
  int patches = 1;        // M, PipeFusion only
  int ulysses_degree = 1; // u, USP only
  int ring_degree = 1;    // r, USP only
  int cfg_degree = 1;     // 1 or 2

  bool operator==(const ParallelPlan&) const = default;

  // Human-readable tag, e.g. "usp(u=2,r=4)" or "pipefusion(m=8)".
  std::string label() const;
};

struct PlanValidation {
  bool ok = false;
  std::string message;
};

// seq_len from pixel dimensions: both the latent-pixel reading (patchify=1)
// and DiT tokenization (patchify>1) are expressible.
std::int64_t tokens_from_resolution(int height_px, int width_px,
                                    int vae_factor, int patchify);

// Accepts iff cfg_degree * strategy degree product == cluster.device_count.
PlanValidation validate_plan(const ParallelPlan& plan,
                             const ClusterSpec& cluster);

// Per-CFG-group parallel degree of a validated plan. Throws ValidationError
// when the plan does not fit the cluster.
int resolved_degree(const ParallelPlan& plan, const ClusterSpec& cluster);

}  // namespace ditsim
