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
#include "ditsim/config.hpp"
#include "doctest.h"

using namespace ditsim;

namespace {

const char* kSample = R"(# sample run
[model]
layers = 28
hidden_size = 1152
heads = 16
param_count = 600000000
mlp_ratio = 4.5
bytes_per_element = 2

[workload]
seq_len = 16384
diffusion_steps = 20
warmup_steps = 1
step_size = 0.1

[cluster]
device_count = 8
device_flops = 9e13
link_bandwidth = 1.6e10
link_latency = 5e-06

[plan]
strategy = usp
ulysses_degree = 2
ring_degree = 4
cfg_degree = 1

[compute_model]
attention_coeff = 4
per_message_overhead = 5e-05
comm_mode = exact

[execute]
seed = 7
)";

}  // namespace

TEST_CASE("parsing fills every section") {
  RunConfig cfg = parse_config(kSample);
  CHECK(cfg.model.layers == 28);
  CHECK(cfg.model.mlp_ratio == 4.5);
  CHECK(cfg.workload.seq_len == 16384);
  CHECK(cfg.cluster.device_flops == 9e13);
  CHECK(cfg.plan.strategy == Strategy::USP);
  CHECK(cfg.plan.ulysses_degree == 2);
  CHECK(cfg.plan.ring_degree == 4);
  CHECK(cfg.compute.per_message_overhead_s == 5e-05);
  CHECK_FALSE(cfg.compute.linear_coeff.has_value());
  CHECK(cfg.comm_mode == CostMode::Exact);
  CHECK(cfg.seed == 7);
}

TEST_CASE("absent keys keep their defaults") {
  RunConfig cfg = parse_config("[model]\nlayers = 2\n");
  CHECK(cfg.model.layers == 2);
  CHECK(cfg.model.hidden_size == 1);
  CHECK(cfg.workload.diffusion_steps == 1);
  CHECK(cfg.compute.attention_coeff == 4.0);
}

TEST_CASE("configs round-trip through serialization") {
  RunConfig cfg = parse_config(kSample);
  RunConfig again = parse_config(serialize_config(cfg));
  CHECK(cfg == again);

  cfg.compute.linear_coeff = 24.0;
  RunConfig with_beta = parse_config(serialize_config(cfg));
  CHECK(cfg == with_beta);

  // Serialization is a fixed point after one pass.
  CHECK(serialize_config(with_beta) == serialize_config(cfg));
}

TEST_CASE("unknown keys and sections are rejected by name") {
  CHECK_THROWS_WITH_AS(parse_config("[model]\nlayerz = 3\n"),
                       doctest::Contains("layerz"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config("[modle]\nlayers = 3\n"),
                       doctest::Contains("modle"), ValidationError);
  CHECK_THROWS_AS(parse_config("layers = 3\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("[model]\nlayers == 3\n"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config("[plan]\nstrategy = gpipe\n"),
                       doctest::Contains("gpipe"), ValidationError);
}

TEST_CASE("comments and blank lines are ignored") {
  RunConfig cfg = parse_config(
      "# leading comment\n\n[model]\n; alt comment\nlayers = 3\n\n");
  CHECK(cfg.model.layers == 3);
}
