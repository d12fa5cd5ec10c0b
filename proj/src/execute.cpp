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

#include <cstring>
#include <exception>
#include <memory>
#include <sstream>
#include <thread>
#include <vector>

#include "channel.hpp"
#include "ditsim/execute.hpp"

namespace ditsim {

namespace {

struct WorkerStats {
  std::int64_t fresh = 0;
  std::int64_t stale = 0;
  std::vector<double> fresh_fraction;  // per steady patch completion
};

// One pipeline stage's K/V buffers: full spatial shape for each local layer,
// a source timestep per (layer, patch), and the sentinel "steps" standing in
// for the zero-initialized state (one step ahead of the first timestep).
struct StageBuffers {
  std::vector<Matrix> k, v;
  std::vector<std::vector<int>> src;

  StageBuffers(int local_layers, std::int64_t rows, int cols, int patches,
               int sentinel) {
    k.assign(std::size_t(local_layers), Matrix::Zero(rows, cols));
    v.assign(std::size_t(local_layers), Matrix::Zero(rows, cols));
    src.assign(std::size_t(local_layers),
               std::vector<int>(std::size_t(patches), sentinel));
  }
};

void check_staleness_and_count(const std::vector<int>& src, int t,
                               WorkerStats& stats) {
  for (std::size_t pi = 0; pi < src.size(); ++pi) {
    if (src[pi] == t) {
      ++stats.fresh;
    } else if (src[pi] == t + 1) {
      ++stats.stale;
    } else {
      std::ostringstream os;
      os << "staleness bound violated: patch " << pi << " carries timestep "
         << src[pi] << " while computing timestep " << t;
      throw NumericError(os.str());
    }
  }
}

double fresh_fraction(const std::vector<int>& src, int t) {
  int fresh = 0;
  for (int s : src) {
    if (s == t) ++fresh;
  }
  return double(fresh) / double(src.size());
}

void require_finite(const Eigen::Ref<const Matrix>& h, int timestep,
                    int layer) {
  if (!h.allFinite()) {
    std::ostringstream os;
    os << "non-finite activation at timestep " << timestep << ", layer "
       << layer;
    throw NumericError(os.str());
  }
}

// --- patch pipeline ---------------------------------------------------------

struct PipeConfig {
  int steps = 0;
  int workers = 0;
  int patches = 0;
  int warmup = 0;
  int layers_per_stage = 0;
  std::int64_t patch_rows = 0;
  double eta = 0.0;
};

PipeConfig check_pipefusion_args(const ToyDiT& toy, const Matrix& x_init,
                                 int steps, int workers, int patches,
                                 int warmup, double eta) {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (workers < 1 || patches < 1) {
    throw ValidationError("workers and patches must be >= 1");
  }
  if (warmup < 0 || warmup > steps) {
    throw ValidationError("warmup must lie in [0, steps]");
  }
  if (toy.layer_count() % workers != 0) {
    std::ostringstream os;
    os << "layer count " << toy.layer_count()
       << " is not divisible by workers " << workers;
    throw ValidationError(os.str());
  }
  if (x_init.rows() % patches != 0) {
    std::ostringstream os;
    os << "seq_len " << x_init.rows() << " is not divisible by patches "
       << patches;
    throw ValidationError(os.str());
  }
  if (x_init.cols() != toy.hidden_size) {
    throw ValidationError("latent width does not match the model hidden size");
  }
  PipeConfig cfg;
  cfg.steps = steps;
  cfg.workers = workers;
  cfg.patches = patches;
  cfg.warmup = warmup;
  cfg.layers_per_stage = toy.layer_count() / workers;
  cfg.patch_rows = x_init.rows() / patches;
  cfg.eta = eta;
  return cfg;
}

// All M patches through one stage at full freshness (synchronous warmup).
void stage_forward_full(const ToyDiT& toy, const PipeConfig& cfg, int stage,
                        StageBuffers& bufs, Eigen::Ref<Matrix> h, int t,
                        WorkerStats& stats) {
  for (int lf = 0; lf < cfg.layers_per_stage; ++lf) {
    const ToyDiTLayer& layer =
        toy.layers[std::size_t(stage) * cfg.layers_per_stage + lf];
    auto& src = bufs.src[std::size_t(lf)];
    for (std::size_t pi = 0; pi < src.size(); ++pi) src[pi] = t;
    stats.fresh += cfg.patches;
    toy_layer_forward(layer, toy.heads, h, bufs.k[std::size_t(lf)],
                      bufs.v[std::size_t(lf)], 0);
    require_finite(h, t, stage * cfg.layers_per_stage + lf);
  }
}

// One patch through one stage against the mixed-freshness buffers.
void stage_forward_patch(const ToyDiT& toy, const PipeConfig& cfg, int stage,
                         StageBuffers& bufs, Eigen::Ref<Matrix> h, int patch,
                         int t, WorkerStats& stats) {
  const int row0 = int(patch * cfg.patch_rows);
  for (int lf = 0; lf < cfg.layers_per_stage; ++lf) {
    const ToyDiTLayer& layer =
        toy.layers[std::size_t(stage) * cfg.layers_per_stage + lf];
    auto& src = bufs.src[std::size_t(lf)];
    src[std::size_t(patch)] = t;
    check_staleness_and_count(src, t, stats);
    toy_layer_forward(layer, toy.heads, h, bufs.k[std::size_t(lf)],
                      bufs.v[std::size_t(lf)], row0);
    require_finite(h, t, stage * cfg.layers_per_stage + lf);
  }
  stats.fresh_fraction.push_back(fresh_fraction(bufs.src[0], t));
}

ParallelRunResult run_pipefusion_inline(const ToyDiT& toy,
                                        const Matrix& x_init,
                                        const PipeConfig& cfg) {
  const std::int64_t p = x_init.rows();
  const int hs = toy.hidden_size;

  Matrix x = x_init;
  std::vector<StageBuffers> bufs;
  std::vector<WorkerStats> stats(static_cast<std::size_t>(cfg.workers));
  bufs.reserve(static_cast<std::size_t>(cfg.workers));
  for (int d = 0; d < cfg.workers; ++d) {
    bufs.emplace_back(cfg.layers_per_stage, p, hs, cfg.patches, cfg.steps);
  }

  for (int w = 0; w < cfg.warmup; ++w) {
    const int t = cfg.steps - 1 - w;
    Matrix h = x;
    h.rowwise() += toy.condition_bias;
    for (int d = 0; d < cfg.workers; ++d) {
      stage_forward_full(toy, cfg, d, bufs[std::size_t(d)], h, t,
                         stats[std::size_t(d)]);
    }
    x -= cfg.eta * h;
  }

  const int steady = cfg.steps - cfg.warmup;
  Matrix eps(p, hs);
  Matrix pending(p, hs);
  for (int q = 0; q < steady; ++q) {
    const int t = steady - 1 - q;
    for (int j = 0; j < cfg.patches; ++j) {
      if (q > 0) {
        x.middleRows(j * cfg.patch_rows, cfg.patch_rows) -=
            cfg.eta * pending.middleRows(j * cfg.patch_rows, cfg.patch_rows);
      }
      Matrix h = x.middleRows(j * cfg.patch_rows, cfg.patch_rows);
      h.rowwise() += toy.condition_bias;
      for (int d = 0; d < cfg.workers; ++d) {
        stage_forward_patch(toy, cfg, d, bufs[std::size_t(d)], h, j, t,
                            stats[std::size_t(d)]);
      }
      eps.middleRows(j * cfg.patch_rows, cfg.patch_rows) = h;
    }
    pending = eps;
  }
  if (steady > 0) x -= cfg.eta * pending;

  ParallelRunResult result;
  result.final = {std::move(x), -1};
  for (WorkerStats& ws : stats) {
    result.stats.fresh_patch_reads += ws.fresh;
    result.stats.stale_patch_reads += ws.stale;
    result.stats.per_worker_fresh_fraction.push_back(
        std::move(ws.fresh_fraction));
  }
  return result;
}

struct PatchMsg {
  int patch = -1;  // -1 marks a full-sequence warmup activation
  int timestep = 0;
  Matrix h;
};

ParallelRunResult run_pipefusion_threads(const ToyDiT& toy,
                                         const Matrix& x_init,
                                         const PipeConfig& cfg) {
  const std::int64_t p = x_init.rows();
  const int n = cfg.workers;
  const int steady = cfg.steps - cfg.warmup;

  // act[d] feeds stage d from stage d-1; eps feeds stage 0 from stage n-1.
  std::vector<std::unique_ptr<Channel<PatchMsg>>> act(static_cast<std::size_t>(n));
  for (int d = 1; d < n; ++d) {
    act[std::size_t(d)] =
        std::make_unique<Channel<PatchMsg>>(std::size_t(cfg.patches) + 1);
  }
  Channel<PatchMsg> eps_ch(std::size_t(cfg.patches) + 1);

  auto close_all = [&] {
    for (auto& ch : act) {
      if (ch) ch->close();
    }
    eps_ch.close();
  };

  std::vector<WorkerStats> stats(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  Matrix final_x;

  auto expect = [](const PatchMsg& m, int patch, int timestep) {
    if (m.patch != patch || m.timestep != timestep) {
      std::ostringstream os;
      os << "protocol violation: expected patch " << patch << " timestep "
         << timestep << ", got patch " << m.patch << " timestep "
         << m.timestep;
      throw NumericError(os.str());
    }
  };

  auto worker = [&](int d) {
    try {
      StageBuffers bufs(cfg.layers_per_stage, p, toy.hidden_size, cfg.patches,
                        cfg.steps);
      WorkerStats& ws = stats[std::size_t(d)];
      Matrix x;
      if (d == 0) x = x_init;

      auto send_out = [&](PatchMsg msg) {
        if (d + 1 < n) {
          act[std::size_t(d) + 1]->push(std::move(msg));
        } else {
          eps_ch.push(std::move(msg));
        }
      };

      for (int w = 0; w < cfg.warmup; ++w) {
        const int t = cfg.steps - 1 - w;
        Matrix h;
        if (d == 0) {
          if (w > 0) {
            PatchMsg m = eps_ch.pop();
            expect(m, -1, t + 1);
            x -= cfg.eta * m.h;
          }
          h = x;
          h.rowwise() += toy.condition_bias;
        } else {
          PatchMsg m = act[std::size_t(d)]->pop();
          expect(m, -1, t);
          h = std::move(m.h);
        }
        stage_forward_full(toy, cfg, d, bufs, h, t, ws);
        send_out({-1, t, std::move(h)});
      }

      for (int q = 0; q < steady; ++q) {
        const int t = steady - 1 - q;
        for (int j = 0; j < cfg.patches; ++j) {
          Matrix h;
          if (d == 0) {
            if (q == 0 && j == 0 && cfg.warmup > 0) {
              PatchMsg m = eps_ch.pop();
              expect(m, -1, t + 1);
              x -= cfg.eta * m.h;
            }
            if (q > 0) {
              PatchMsg m = eps_ch.pop();
              expect(m, j, t + 1);
              x.middleRows(j * cfg.patch_rows, cfg.patch_rows) -=
                  cfg.eta * m.h;
            }
            h = x.middleRows(j * cfg.patch_rows, cfg.patch_rows);
            h.rowwise() += toy.condition_bias;
          } else {
            PatchMsg m = act[std::size_t(d)]->pop();
            expect(m, j, t);
            h = std::move(m.h);
          }
          stage_forward_patch(toy, cfg, d, bufs, h, j, t, ws);
          send_out({j, t, std::move(h)});
        }
      }

      if (d == 0) {
        if (steady > 0) {
          for (int j = 0; j < cfg.patches; ++j) {
            PatchMsg m = eps_ch.pop();
            expect(m, j, 0);
            x.middleRows(j * cfg.patch_rows, cfg.patch_rows) -= cfg.eta * m.h;
          }
        } else if (cfg.warmup > 0) {
          PatchMsg m = eps_ch.pop();
          expect(m, -1, 0);
          x -= cfg.eta * m.h;
        }
        final_x = std::move(x);
      }
    } catch (...) {
      errors[std::size_t(d)] = std::current_exception();
      close_all();
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) threads.emplace_back(worker, d);
  }

  // Prefer a root-cause error over the channel-closed cascades it triggers.
  std::exception_ptr first;
  for (const std::exception_ptr& err : errors) {
    if (!err) continue;
    if (!first) first = err;
    try {
      std::rethrow_exception(err);
    } catch (const NumericError& e) {
      if (std::strcmp(e.what(), "channel closed mid-run") != 0) {
        first = err;
        break;
      }
    } catch (...) {
      first = err;
      break;
    }
  }
  if (first) std::rethrow_exception(first);

  ParallelRunResult result;
  result.final = {std::move(final_x), -1};
  for (WorkerStats& ws : stats) {
    result.stats.fresh_patch_reads += ws.fresh;
    result.stats.stale_patch_reads += ws.stale;
    result.stats.per_worker_fresh_fraction.push_back(
        std::move(ws.fresh_fraction));
  }
  return result;
}

// --- shard parallelism ------------------------------------------------------

struct ShardConfig {
  int steps = 0;
  int workers = 0;
  int warmup = 0;
  std::int64_t shard_rows = 0;
  double eta = 0.0;
};

ShardConfig check_distrifusion_args(const ToyDiT& toy, const Matrix& x_init,
                                    int steps, int workers, int warmup,
                                    double eta) {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (warmup < 0 || warmup > steps) {
    throw ValidationError("warmup must lie in [0, steps]");
  }
  if (x_init.rows() % workers != 0) {
    std::ostringstream os;
    os << "seq_len " << x_init.rows() << " is not divisible by workers "
       << workers;
    throw ValidationError(os.str());
  }
  if (x_init.cols() != toy.hidden_size) {
    throw ValidationError("latent width does not match the model hidden size");
  }
  ShardConfig cfg;
  cfg.steps = steps;
  cfg.workers = workers;
  cfg.warmup = warmup;
  cfg.shard_rows = x_init.rows() / workers;
  cfg.eta = eta;
  return cfg;
}

struct KvMsg {
  int layer = 0;
  int timestep = 0;
  Matrix k, v;
};

ParallelRunResult run_distrifusion_inline(const ToyDiT& toy,
                                          const Matrix& x_init,
                                          const ShardConfig& cfg) {
  const std::int64_t p = x_init.rows();
  const int hs = toy.hidden_size;
  const int L = toy.layer_count();
  const int n = cfg.workers;

  Matrix x = x_init;
  std::vector<StageBuffers> bufs;  // per worker: all L layers, n shards
  std::vector<WorkerStats> stats(static_cast<std::size_t>(n));
  bufs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) bufs.emplace_back(L, p, hs, n, cfg.steps);

  auto install = [&](StageBuffers& b, int layer, int shard, const Matrix& k,
                     const Matrix& v, int t) {
    b.k[std::size_t(layer)].middleRows(shard * cfg.shard_rows,
                                       cfg.shard_rows) = k;
    b.v[std::size_t(layer)].middleRows(shard * cfg.shard_rows,
                                       cfg.shard_rows) = v;
    b.src[std::size_t(layer)][std::size_t(shard)] = t;
  };

  for (int s = 0; s < cfg.steps; ++s) {
    const int t = cfg.steps - 1 - s;
    if (s < cfg.warmup) {
      // Layer-lockstep synchronous shard parallelism: every device sees every
      // other device's fresh K/V before attending.
      std::vector<Matrix> h(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        h[std::size_t(i)] = x.middleRows(i * cfg.shard_rows, cfg.shard_rows);
        h[std::size_t(i)].rowwise() += toy.condition_bias;
      }
      for (int l = 0; l < L; ++l) {
        std::vector<LayerProjection> proj(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          proj[std::size_t(i)] =
              toy_layer_project(toy.layers[std::size_t(l)], h[std::size_t(i)]);
        }
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            install(bufs[std::size_t(i)], l, j, proj[std::size_t(j)].k,
                    proj[std::size_t(j)].v, t);
          }
        }
        for (int i = 0; i < n; ++i) {
          check_staleness_and_count(bufs[std::size_t(i)].src[std::size_t(l)],
                                    t, stats[std::size_t(i)]);
          toy_layer_finish(toy.layers[std::size_t(l)], toy.heads,
                           h[std::size_t(i)], proj[std::size_t(i)].q,
                           bufs[std::size_t(i)].k[std::size_t(l)],
                           bufs[std::size_t(i)].v[std::size_t(l)]);
          require_finite(h[std::size_t(i)], t, l);
        }
      }
      for (int i = 0; i < n; ++i) {
        x.middleRows(i * cfg.shard_rows, cfg.shard_rows) -=
            cfg.eta * h[std::size_t(i)];
      }
    } else {
      // Fresh local K/V, remote rows one step old; the gather lands in the
      // next step's buffers.
      std::vector<std::vector<KvMsg>> outbox(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        WorkerStats& ws = stats[std::size_t(i)];
        Matrix h = x.middleRows(i * cfg.shard_rows, cfg.shard_rows);
        h.rowwise() += toy.condition_bias;
        for (int l = 0; l < L; ++l) {
          LayerProjection proj =
              toy_layer_project(toy.layers[std::size_t(l)], h);
          install(bufs[std::size_t(i)], l, i, proj.k, proj.v, t);
          outbox[std::size_t(i)].push_back({l, t, proj.k, proj.v});
          check_staleness_and_count(bufs[std::size_t(i)].src[std::size_t(l)],
                                    t, ws);
          toy_layer_finish(toy.layers[std::size_t(l)], toy.heads, h, proj.q,
                           bufs[std::size_t(i)].k[std::size_t(l)],
                           bufs[std::size_t(i)].v[std::size_t(l)]);
          require_finite(h, t, l);
        }
        ws.fresh_fraction.push_back(fresh_fraction(bufs[std::size_t(i)].src[0], t));
        x.middleRows(i * cfg.shard_rows, cfg.shard_rows) -= cfg.eta * h;
      }
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          for (const KvMsg& m : outbox[std::size_t(j)]) {
            install(bufs[std::size_t(i)], m.layer, j, m.k, m.v, m.timestep);
          }
        }
      }
    }
  }

  ParallelRunResult result;
  result.final = {std::move(x), -1};
  for (WorkerStats& ws : stats) {
    result.stats.fresh_patch_reads += ws.fresh;
    result.stats.stale_patch_reads += ws.stale;
    result.stats.per_worker_fresh_fraction.push_back(
        std::move(ws.fresh_fraction));
  }
  return result;
}

ParallelRunResult run_distrifusion_threads(const ToyDiT& toy,
                                           const Matrix& x_init,
                                           const ShardConfig& cfg) {
  const std::int64_t p = x_init.rows();
  const int hs = toy.hidden_size;
  const int L = toy.layer_count();
  const int n = cfg.workers;

  // ch[i][j]: messages from worker i to worker j. A worker may run a full
  // step ahead of a peer, so size for two steps of per-layer messages.
  std::vector<std::vector<std::unique_ptr<Channel<KvMsg>>>> ch(
      static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ch[std::size_t(i)].resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      ch[std::size_t(i)][std::size_t(j)] =
          std::make_unique<Channel<KvMsg>>(std::size_t(2 * L + 2));
    }
  }
  auto close_all = [&] {
    for (auto& row : ch) {
      for (auto& c : row) {
        if (c) c->close();
      }
    }
  };

  std::vector<WorkerStats> stats(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<Matrix> shards(static_cast<std::size_t>(n));

  auto expect = [](const KvMsg& m, int layer, int timestep) {
    if (m.layer != layer || m.timestep != timestep) {
      std::ostringstream os;
      os << "protocol violation: expected layer " << layer << " timestep "
         << timestep << ", got layer " << m.layer << " timestep "
         << m.timestep;
      throw NumericError(os.str());
    }
  };

  auto worker = [&](int i) {
    try {
      StageBuffers bufs(L, p, hs, n, cfg.steps);
      WorkerStats& ws = stats[std::size_t(i)];
      Matrix x_shard = x_init.middleRows(i * cfg.shard_rows, cfg.shard_rows);

      auto install = [&](int layer, int shard, const Matrix& k,
                         const Matrix& v, int t) {
        bufs.k[std::size_t(layer)].middleRows(shard * cfg.shard_rows,
                                              cfg.shard_rows) = k;
        bufs.v[std::size_t(layer)].middleRows(shard * cfg.shard_rows,
                                              cfg.shard_rows) = v;
        bufs.src[std::size_t(layer)][std::size_t(shard)] = t;
      };

      for (int s = 0; s < cfg.steps; ++s) {
        const int t = cfg.steps - 1 - s;
        Matrix h = x_shard;
        h.rowwise() += toy.condition_bias;
        if (s < cfg.warmup) {
          for (int l = 0; l < L; ++l) {
            LayerProjection proj =
                toy_layer_project(toy.layers[std::size_t(l)], h);
            install(l, i, proj.k, proj.v, t);
            for (int j = 0; j < n; ++j) {
              if (j == i) continue;
              ch[std::size_t(i)][std::size_t(j)]->push({l, t, proj.k, proj.v});
            }
            for (int j = 0; j < n; ++j) {
              if (j == i) continue;
              KvMsg m = ch[std::size_t(j)][std::size_t(i)]->pop();
              expect(m, l, t);
              install(l, j, m.k, m.v, t);
            }
            check_staleness_and_count(bufs.src[std::size_t(l)], t, ws);
            toy_layer_finish(toy.layers[std::size_t(l)], toy.heads, h, proj.q,
                             bufs.k[std::size_t(l)], bufs.v[std::size_t(l)]);
            require_finite(h, t, l);
          }
        } else {
          for (int l = 0; l < L; ++l) {
            LayerProjection proj =
                toy_layer_project(toy.layers[std::size_t(l)], h);
            install(l, i, proj.k, proj.v, t);
            for (int j = 0; j < n; ++j) {
              if (j == i) continue;
              ch[std::size_t(i)][std::size_t(j)]->push({l, t, proj.k, proj.v});
            }
            check_staleness_and_count(bufs.src[std::size_t(l)], t, ws);
            toy_layer_finish(toy.layers[std::size_t(l)], toy.heads, h, proj.q,
                             bufs.k[std::size_t(l)], bufs.v[std::size_t(l)]);
            require_finite(h, t, l);
          }
          ws.fresh_fraction.push_back(fresh_fraction(bufs.src[0], t));
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            for (int l = 0; l < L; ++l) {
              KvMsg m = ch[std::size_t(j)][std::size_t(i)]->pop();
              expect(m, l, t);
              install(l, j, m.k, m.v, t);
            }
          }
        }
        x_shard -= cfg.eta * h;
      }
      shards[std::size_t(i)] = std::move(x_shard);
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
      close_all();
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) threads.emplace_back(worker, i);
  }

  std::exception_ptr first;
  for (const std::exception_ptr& err : errors) {
    if (!err) continue;
    if (!first) first = err;
    try {
      std::rethrow_exception(err);
    } catch (const NumericError& e) {
      if (std::strcmp(e.what(), "channel closed mid-run") != 0) {
        first = err;
        break;
      }
    } catch (...) {
      first = err;
      break;
    }
  }
  if (first) std::rethrow_exception(first);

  Matrix x(p, hs);
  for (int i = 0; i < n; ++i) {
    x.middleRows(i * cfg.shard_rows, cfg.shard_rows) = shards[std::size_t(i)];
  }

  ParallelRunResult result;
  result.final = {std::move(x), -1};
  for (WorkerStats& ws : stats) {
    result.stats.fresh_patch_reads += ws.fresh;
    result.stats.stale_patch_reads += ws.stale;
    result.stats.per_worker_fresh_fraction.push_back(
        std::move(ws.fresh_fraction));
  }
  return result;
}

}  // namespace

ParallelRunResult run_pipefusion(const ToyDiT& toy, const Matrix& x_init,
                                 int steps, int workers, int patches,
                                 int warmup, double eta, Backend backend) {
  const PipeConfig cfg =
      check_pipefusion_args(toy, x_init, steps, workers, patches, warmup, eta);
  if (backend == Backend::Inline || workers == 1) {
    return run_pipefusion_inline(toy, x_init, cfg);
  }
  return run_pipefusion_threads(toy, x_init, cfg);
}

ParallelRunResult run_distrifusion(const ToyDiT& toy, const Matrix& x_init,
                                   int steps, int workers, int warmup,
                                   double eta, Backend backend) {
  const ShardConfig cfg =
      check_distrifusion_args(toy, x_init, steps, workers, warmup, eta);
  if (backend == Backend::Inline || workers == 1) {
    return run_distrifusion_inline(toy, x_init, cfg);
  }
  return run_distrifusion_threads(toy, x_init, cfg);
}

}  // namespace ditsim
