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
#include <random>

#include "ditsim/model.hpp"
#include "doctest.h"

using namespace ditsim;

TEST_CASE("tokens_from_resolution matches the latent-pixel reading") {
  CHECK(tokens_from_resolution(1024, 1024, 8, 1) == 16384);
  CHECK(tokens_from_resolution(1024, 1024, 8, 2) == 4096);
  CHECK(tokens_from_resolution(8, 8, 8, 1) == 1);
}

TEST_CASE("tokens_from_resolution rejects non-divisible dimensions by name") {
  CHECK_THROWS_WITH_AS(tokens_from_resolution(1000, 1024, 8, 2),
                       doctest::Contains("height"), ValidationError);
  CHECK_THROWS_WITH_AS(tokens_from_resolution(1024, 1000, 8, 2),
                       doctest::Contains("width"), ValidationError);
}

TEST_CASE("tokens_from_resolution is multiplicative in the pixel dimensions") {
  std::mt19937 rng(7);
  for (int i = 0; i < 50; ++i) {
    const int vae = 1 + int(rng() % 8);
    const int patchify = 1 + int(rng() % 3);
    const int h = vae * patchify * (1 + int(rng() % 64));
    const int w = vae * patchify * (1 + int(rng() % 64));
    CHECK(tokens_from_resolution(2 * h, 2 * w, vae, patchify) ==
          4 * tokens_from_resolution(h, w, vae, patchify));
  }
}

TEST_CASE("validate_plan accepts the reported experiment layouts") {
  ClusterSpec cluster;
  cluster.device_count = 8;

  ParallelPlan pipe;
  pipe.strategy = Strategy::PipeFusion;
  pipe.patches = 4;
  pipe.cfg_degree = 2;
  CHECK(validate_plan(pipe, cluster).ok);
  CHECK(resolved_degree(pipe, cluster) == 4);

  ParallelPlan usp;
  usp.strategy = Strategy::USP;
  usp.ulysses_degree = 2;
  usp.ring_degree = 4;
  CHECK(validate_plan(usp, cluster).ok);
  CHECK(resolved_degree(usp, cluster) == 8);
}

TEST_CASE("validate_plan rejects degree mismatches with a message") {
  ClusterSpec seven;
  seven.device_count = 7;
  ParallelPlan ulysses;
  ulysses.strategy = Strategy::SPUlysses;
  ulysses.cfg_degree = 2;
  PlanValidation v = validate_plan(ulysses, seven);
  CHECK_FALSE(v.ok);
  CHECK(v.message.find("7") != std::string::npos);

  ClusterSpec eight;
  eight.device_count = 8;

  ParallelPlan bad_patches;
  bad_patches.strategy = Strategy::PipeFusion;
  bad_patches.patches = 0;
  CHECK_FALSE(validate_plan(bad_patches, eight).ok);

  ParallelPlan bad_usp;
  bad_usp.strategy = Strategy::USP;
  bad_usp.ulysses_degree = 0;
  bad_usp.ring_degree = 8;
  CHECK_FALSE(validate_plan(bad_usp, eight).ok);

  // An explicit pipeline degree must still cover the cluster exactly.
  ParallelPlan wide;
  wide.strategy = Strategy::PipeFusion;
  wide.patches = 8;
  wide.degree = 8;
  wide.cfg_degree = 2;
  PlanValidation w = validate_plan(wide, eight);
  CHECK_FALSE(w.ok);
  CHECK(w.message.find("16") != std::string::npos);
}

TEST_CASE("accepted plans always satisfy cfg x degree product = device count") {
  for (int n = 1; n <= 16; ++n) {
    ClusterSpec cluster;
    cluster.device_count = n;
    for (int cfg = 1; cfg <= 2; ++cfg) {
      for (Strategy s : {Strategy::TensorParallel, Strategy::SPUlysses,
                         Strategy::SPRing, Strategy::DistriFusion,
                         Strategy::PipeFusion}) {
        ParallelPlan plan;
        plan.strategy = s;
        plan.cfg_degree = cfg;
        if (validate_plan(plan, cluster).ok) {
          CHECK(resolved_degree(plan, cluster) * cfg == n);
        }
      }
      for (int u = 1; u <= 16; ++u) {
        for (int r = 1; r <= 16; ++r) {
          ParallelPlan plan;
          plan.strategy = Strategy::USP;
          plan.ulysses_degree = u;
          plan.ring_degree = r;
          plan.cfg_degree = cfg;
          if (validate_plan(plan, cluster).ok) {
            CHECK(u * r * cfg == n);
          }
        }
      }
    }
  }
}

TEST_CASE("spec invariants reject malformed specs") {
  ModelSpec model;
  model.hidden_size = 30;
  model.heads = 4;
  CHECK_THROWS_AS(model.validate(), ValidationError);
  model.hidden_size = 32;
  model.bytes_per_element = 3;
  CHECK_THROWS_AS(model.validate(), ValidationError);
  model.bytes_per_element = 2;
  CHECK_NOTHROW(model.validate());

  WorkloadSpec workload;
  workload.diffusion_steps = 4;
  workload.warmup_steps = 5;
  CHECK_THROWS_AS(workload.validate(), ValidationError);

  ClusterSpec cluster;
  cluster.link_bandwidth = 0.0;
  CHECK_THROWS_AS(cluster.validate(), ValidationError);
}

TEST_CASE("strategy names round-trip") {
  for (Strategy s : {Strategy::TensorParallel, Strategy::SPUlysses,
                     Strategy::SPRing, Strategy::USP, Strategy::DistriFusion,
                     Strategy::PipeFusion}) {
    auto back = strategy_from_name(strategy_name(s));
    REQUIRE(back.has_value());
    CHECK(*back == s);
  }
  CHECK_FALSE(strategy_from_name("gpipe").has_value());
}
