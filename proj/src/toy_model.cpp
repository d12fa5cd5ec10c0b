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

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ditsim/execute.hpp"

namespace ditsim {

namespace {

// Uniform in [-1, 1) from the top 53 bits; no distribution object so the
// stream is identical across standard libraries.
double next_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-52 - 1.0;
}

Matrix fill_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = next_uniform(rng) * scale;
    }
  }
  return m;
}

}  // namespace

ToyDiT build_toy_model(std::uint64_t seed, int layers, int hidden_size,
                       int heads, double mlp_ratio) {
  if (layers < 1) throw ValidationError("toy model needs layers >= 1");
  if (hidden_size < 1 || heads < 1) {
    throw ValidationError("toy model needs hidden_size >= 1 and heads >= 1");
  }
  if (hidden_size % heads != 0) {
    std::ostringstream os;
    os << "hidden_size (" << hidden_size << ") must be divisible by heads ("
       << heads << ")";
    throw ValidationError(os.str());
  }
  const int mlp_hidden = int(std::lround(mlp_ratio * hidden_size));
  if (mlp_hidden < 1) {
    throw ValidationError("mlp_ratio * hidden_size must be >= 1");
  }

  ToyDiT toy;
  toy.seed = seed;
  toy.hidden_size = hidden_size;
  toy.heads = heads;
  toy.mlp_ratio = mlp_ratio;

  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(double(hidden_size));
  toy.layers.reserve(std::size_t(layers));
  for (int l = 0; l < layers; ++l) {
    ToyDiTLayer layer;
    layer.w_q = fill_matrix(rng, hidden_size, hidden_size, scale);
    layer.w_k = fill_matrix(rng, hidden_size, hidden_size, scale);
    layer.w_v = fill_matrix(rng, hidden_size, hidden_size, scale);
    layer.w_o = fill_matrix(rng, hidden_size, hidden_size, scale);
    layer.w_mlp_in = fill_matrix(rng, hidden_size, mlp_hidden, scale);
    layer.w_mlp_out = fill_matrix(rng, mlp_hidden, hidden_size, scale);
    toy.layers.push_back(std::move(layer));
  }
  toy.condition_bias = fill_matrix(rng, 1, hidden_size, 1.0).row(0);
  return toy;
}

Matrix make_initial_latent(std::uint64_t seed, std::int64_t seq_len,
                           int hidden_size) {
  if (seq_len < 1 || hidden_size < 1) {
    throw ValidationError("latent needs seq_len >= 1 and hidden_size >= 1");
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return fill_matrix(rng, int(seq_len), hidden_size, 1.0);
}

Matrix matmul_rows(const Eigen::Ref<const Matrix>& x,
                   const Eigen::Ref<const Matrix>& w) {
  Matrix out = Matrix::Zero(x.rows(), w.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      out.row(i) += x(i, k) * w.row(k);
    }
  }
  return out;
}

Matrix attention_rows(const Eigen::Ref<const Matrix>& q,
                      const Eigen::Ref<const Matrix>& k_full,
                      const Eigen::Ref<const Matrix>& v_full, int heads) {
  const Eigen::Index kv_rows = k_full.rows();
  const Eigen::Index hs = k_full.cols();
  const Eigen::Index dh = hs / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));

  Matrix out(q.rows(), hs);
  std::vector<double> scores(static_cast<std::size_t>(kv_rows));
  std::vector<double> acc(static_cast<std::size_t>(dh));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = Eigen::Index(h) * dh;
      double score_max = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < kv_rows; ++j) {
        double s = 0.0;
        for (Eigen::Index d = 0; d < dh; ++d) {
          s += q(i, c0 + d) * k_full(j, c0 + d);
        }
        s *= inv_sqrt_dh;
        scores[std::size_t(j)] = s;
        if (s > score_max) score_max = s;
      }
      double z = 0.0;
      for (Eigen::Index d = 0; d < dh; ++d) acc[std::size_t(d)] = 0.0;
      for (Eigen::Index j = 0; j < kv_rows; ++j) {
        const double e = std::exp(scores[std::size_t(j)] - score_max);
        z += e;
        for (Eigen::Index d = 0; d < dh; ++d) {
          acc[std::size_t(d)] += e * v_full(j, c0 + d);
        }
      }
      for (Eigen::Index d = 0; d < dh; ++d) {
        out(i, c0 + d) = acc[std::size_t(d)] / z;
      }
    }
  }
  return out;
}

LayerProjection toy_layer_project(const ToyDiTLayer& layer,
                                  const Eigen::Ref<const Matrix>& h) {
  return {matmul_rows(h, layer.w_q), matmul_rows(h, layer.w_k),
          matmul_rows(h, layer.w_v)};
}

void toy_layer_finish(const ToyDiTLayer& layer, int heads,
                      Eigen::Ref<Matrix> h, const Matrix& q,
                      const Eigen::Ref<const Matrix>& k_buf,
                      const Eigen::Ref<const Matrix>& v_buf) {
  const Matrix attn = attention_rows(q, k_buf, v_buf, heads);
  h += matmul_rows(attn, layer.w_o);

  Matrix z = matmul_rows(h, layer.w_mlp_in);
  // Scalar tanh keeps the value independent of block shape; Eigen's packet
  // tanh takes shape-dependent code paths.
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      z(r, c) = std::tanh(z(r, c));
    }
  }
  h += matmul_rows(z, layer.w_mlp_out);
}

void toy_layer_forward(const ToyDiTLayer& layer, int heads,
                       Eigen::Ref<Matrix> h, Eigen::Ref<Matrix> k_buf,
                       Eigen::Ref<Matrix> v_buf, int row0) {
  const Eigen::Index rows = h.rows();
  LayerProjection proj = toy_layer_project(layer, h);
  k_buf.middleRows(row0, rows) = proj.k;
  v_buf.middleRows(row0, rows) = proj.v;
  toy_layer_finish(layer, heads, h, proj.q, k_buf, v_buf);
}

namespace {

// One full forward pass; scratch buffers are refreshed per layer.
Matrix toy_forward(const ToyDiT& toy, const Matrix& x, int timestep) {
  Matrix h = x;
  h.rowwise() += toy.condition_bias;
  Matrix k_buf(x.rows(), toy.hidden_size);
  Matrix v_buf(x.rows(), toy.hidden_size);
  for (int l = 0; l < toy.layer_count(); ++l) {
    toy_layer_forward(toy.layers[std::size_t(l)], toy.heads, h, k_buf, v_buf,
                      0);
    if (!h.allFinite()) {
      std::ostringstream os;
      os << "non-finite activation at timestep " << timestep << ", layer " << l;
      throw NumericError(os.str());
    }
  }
  return h;
}

}  // namespace

SerialResult serial_reference(const ToyDiT& toy, const Matrix& x_init,
                              int steps, double eta, bool keep_trajectory) {
  if (steps < 1) throw ValidationError("serial_reference needs steps >= 1");
  SerialResult result;
  Matrix x = x_init;
  if (keep_trajectory) result.trajectory.push_back(x);
  for (int t = steps - 1; t >= 0; --t) {
    const Matrix eps = toy_forward(toy, x, t);
    x -= eta * eps;
    if (keep_trajectory) result.trajectory.push_back(x);
  }
  result.final = {std::move(x), -1};
  return result;
}

double divergence(const LatentState& a, const LatentState& b) {
  if (a.x.rows() != b.x.rows() || a.x.cols() != b.x.cols()) {
    std::ostringstream os;
    os << "divergence shape mismatch: " << a.x.rows() << "x" << a.x.cols()
       << " vs " << b.x.rows() << "x" << b.x.cols();
    throw ValidationError(os.str());
  }
  const double denom = b.x.norm();
  if (denom == 0.0) {
    throw ValidationError("divergence undefined against a zero reference");
  }
  return (a.x - b.x).norm() / denom;
}

AutoWarmupResult auto_warmup(const ToyDiT& toy, const Matrix& x_init,
                             int steps, double eta, double threshold) {
  if (steps < 1) throw ValidationError("auto_warmup needs steps >= 1");
  Matrix x = x_init;
  for (int k = 1; k <= steps; ++k) {
    const int t = steps - k;
    const Matrix eps = toy_forward(toy, x, t);
    const Matrix next = x - eta * eps;
    const double denom = x.norm();
    const double change = (next - x).norm();
    const double relative =
        denom > 0.0 ? change / denom
                    : (change == 0.0
                           ? 0.0
                           : std::numeric_limits<double>::infinity());
    x = next;
    if (relative < threshold) return {k, true};
  }
  return {steps, false};
}

}  // namespace ditsim
