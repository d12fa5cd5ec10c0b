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

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "ditsim/model.hpp"

namespace ditsim {

using Matrix = Eigen::MatrixXd;

// Deterministic small attention network standing in for the noise predictor.
// Weights are filled from a single mt19937_64 stream (uniform [-1, 1), each
// matrix traversed row-major, layers in order W_q, W_k, W_v, W_o, W_mlp_in,
// W_mlp_out, then condition_bias last) and scaled by 1/sqrt(hidden_size).
struct ToyDiTLayer {
  Matrix w_q, w_k, w_v, w_o;
  Matrix w_mlp_in, w_mlp_out;
};

struct ToyDiT {
  std::uint64_t seed = 0;
  int hidden_size = 0;
  int heads = 1;
  double mlp_ratio = 4.0;
  std::vector<ToyDiTLayer> layers;
  Eigen::RowVectorXd condition_bias;

  int layer_count() const { return int(layers.size()); }
};

struct LatentState {
  Matrix x;           // p x hs
  int timestep = 0;   // counts down; -1 once fully denoised
};

ToyDiT build_toy_model(std::uint64_t seed, int layers, int hidden_size,
                       int heads, double mlp_ratio);

// Initial latent, drawn from a stream decorrelated from the weights.
Matrix make_initial_latent(std::uint64_t seed, std::int64_t seq_len,
                           int hidden_size);

// --- deterministic kernels -------------------------------------------------
//
// All products accumulate strictly left-to-right over the inner dimension and
// attention walks keys in row order, so a block of query rows produces
// bit-identical outputs no matter how the sequence is partitioned.

Matrix matmul_rows(const Eigen::Ref<const Matrix>& x,
                   const Eigen::Ref<const Matrix>& w);

Matrix attention_rows(const Eigen::Ref<const Matrix>& q,
                      const Eigen::Ref<const Matrix>& k_full,
                      const Eigen::Ref<const Matrix>& v_full, int heads);

// One transformer layer over the rows [row0, row0+h.rows()): fresh K/V for
// those rows are written into k_buf/v_buf before attending over the full
// buffers. h is updated in place (attention residual, then MLP residual).
void toy_layer_forward(const ToyDiTLayer& layer, int heads,
                       Eigen::Ref<Matrix> h, Eigen::Ref<Matrix> k_buf,
                       Eigen::Ref<Matrix> v_buf, int row0);

// Split form of the same layer for protocols that must exchange K/V between
// projection and attention.
struct LayerProjection {
  Matrix q, k, v;
};

LayerProjection toy_layer_project(const ToyDiTLayer& layer,
                                  const Eigen::Ref<const Matrix>& h);

void toy_layer_finish(const ToyDiTLayer& layer, int heads,
                      Eigen::Ref<Matrix> h, const Matrix& q,
                      const Eigen::Ref<const Matrix>& k_buf,
                      const Eigen::Ref<const Matrix>& v_buf);

// ----------------------------------------------------------------------------

struct SerialResult {
  LatentState final;
  // trajectory[0] is the initial latent; trajectory[k] the state after k
  // update steps. Populated only when keep_trajectory is set.
  std::vector<Matrix> trajectory;
};

SerialResult serial_reference(const ToyDiT& toy, const Matrix& x_init,
                              int steps, double eta,
                              bool keep_trajectory = false);

enum class Backend { Threads, Inline };

struct StalenessStats {
  std::int64_t fresh_patch_reads = 0;
  std::int64_t stale_patch_reads = 0;
  // Per worker, the buffer fresh fraction after each of its steady patch
  // completions, in completion order.
  std::vector<std::vector<double>> per_worker_fresh_fraction;
};

struct ParallelRunResult {
  LatentState final;
  StalenessStats stats;
};

// Patch pipeline: worker d owns layers [d*L/N, (d+1)*L/N); patches circulate
// in order; the last stage returns per-patch noise to stage 0, which applies
// the element-wise update. Warmup steps run fully synchronously.
ParallelRunResult run_pipefusion(const ToyDiT& toy, const Matrix& x_init,
                                 int steps, int workers, int patches,
                                 int warmup, double eta,
                                 Backend backend = Backend::Threads);

// Shard parallelism with one-step-stale remote K/V; the gather lands in the
// next step's buffers.
ParallelRunResult run_distrifusion(const ToyDiT& toy, const Matrix& x_init,
                                   int steps, int workers, int warmup,
                                   double eta,
                                   Backend backend = Backend::Threads);

// Relative Frobenius distance ||a - b|| / ||b||.
double divergence(const LatentState& a, const LatentState& b);

struct AutoWarmupResult {
  int warmup = 0;
  bool threshold_met = false;
};

// Steps synchronously until the relative step-to-step latent change drops
// below threshold; returns the number of synchronous steps taken.
AutoWarmupResult auto_warmup(const ToyDiT& toy, const Matrix& x_init,
                             int steps, double eta, double threshold);

}  // namespace ditsim
