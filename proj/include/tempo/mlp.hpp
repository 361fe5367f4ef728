#pragma once

// Plain MLP with per-layer optional batch normalization and ReLU,
// forward in train/eval mode plus exact backprop. Everything is
// double precision so finite-difference gradient checks are meaningful.

#include <json.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "tempo/errors.hpp"
#include "tempo/linalg.hpp"

namespace tempo {

constexpr double kBnEps = 1e-5;

struct LayerSpec {
  size_t in = 0, out = 0;
  bool batch_norm = false;
  bool relu = false;
};

struct MlpSpec {
  std::vector<LayerSpec> layers;

  size_t input_dim() const { return layers.front().in; }
  size_t output_dim() const { return layers.back().out; }

  void validate() const {
    if (layers.empty()) throw ConfigInvalid("mlp needs at least one layer");
    for (size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].in == 0 || layers[i].out == 0)
        throw ConfigInvalid("mlp layer widths must be positive");
      if (i > 0 && layers[i].in != layers[i - 1].out)
        throw ConfigInvalid("mlp layer widths do not chain");
    }
  }
};

struct LayerParams {
  Matrix weight;               // in x out
  std::vector<double> bias;    // out
  // batch-norm parameters and running statistics (empty when unused)
  std::vector<double> gamma, beta, run_mean, run_var;
};

struct MlpParams {
  std::vector<LayerParams> layers;
};

inline MlpParams init_mlp(const MlpSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  MlpParams p;
  for (const auto& l : spec.layers) {
    LayerParams lp;
    lp.weight = Matrix(l.in, l.out);
    double bound = std::sqrt(6.0 / double(l.in + l.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : lp.weight.data) w = u(rng);
    // Small nonzero biases: with zero bias, a row whose relu units are
    // all dead maps to an exactly-zero output vector, where the cosine
    // loss is non-smooth and its gradient is unbounded.
    std::uniform_real_distribution<double> ub(-0.01, 0.01);
    lp.bias.assign(l.out, 0.0);
    for (double& b : lp.bias) b = ub(rng);
    if (l.batch_norm) {
      lp.gamma.assign(l.out, 1.0);
      lp.beta.assign(l.out, 0.0);
      lp.run_mean.assign(l.out, 0.0);
      lp.run_var.assign(l.out, 1.0);
    }
    p.layers.push_back(std::move(lp));
  }
  return p;
}

enum class Mode { Train, Eval };

struct LayerCache {
  Matrix input;           // layer input
  Matrix linear;          // x W + b
  std::vector<double> mean, var;  // batch stats (train mode)
  Matrix xhat;            // normalized pre-activation
  Matrix pre_act;         // after bn (or linear), before relu
  Matrix output;
};

struct MlpCache {
  std::vector<LayerCache> layers;
};

// Train mode normalizes with batch statistics (and records them in the
// cache); it does not touch running statistics — commit_running_stats
// applies that separately so the forward pass stays pure.
inline Matrix mlp_forward(const MlpSpec& spec, const MlpParams& params,
                          const Matrix& batch, Mode mode,
                          MlpCache* cache = nullptr) {
  if (batch.cols != spec.input_dim())
    throw ShapeMismatch("mlp input width " + std::to_string(batch.cols) +
                        " != " + std::to_string(spec.input_dim()));
  if (cache) cache->layers.assign(spec.layers.size(), {});
  Matrix x = batch;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& ls = spec.layers[li];
    const LayerParams& lp = params.layers[li];
    LayerCache* lc = cache ? &cache->layers[li] : nullptr;
    if (lc) lc->input = x;

    Matrix lin = matmul(x, lp.weight);
    for (size_t r = 0; r < lin.rows; ++r)
      for (size_t c = 0; c < lin.cols; ++c) lin.at(r, c) += lp.bias[c];
    if (lc) lc->linear = lin;

    Matrix pre = lin;
    if (ls.batch_norm) {
      size_t m = lin.rows;
      if (mode == Mode::Train && m < 2)
        throw DegenerateBatch("batch of " + std::to_string(m) +
                              " in train mode with batch norm");
      std::vector<double> mean(ls.out), var(ls.out);
      if (mode == Mode::Train) {
        for (size_t c = 0; c < ls.out; ++c) {
          double mu = 0.0;
          for (size_t r = 0; r < m; ++r) mu += lin.at(r, c);
          mu /= double(m);
          double v = 0.0;
          for (size_t r = 0; r < m; ++r) {
            double d = lin.at(r, c) - mu;
            v += d * d;
          }
          mean[c] = mu;
          var[c] = v / double(m);
        }
      } else {
        mean = lp.run_mean;
        var = lp.run_var;
      }
      Matrix xhat(m, ls.out);
      for (size_t c = 0; c < ls.out; ++c) {
        double inv = 1.0 / std::sqrt(var[c] + kBnEps);
        for (size_t r = 0; r < m; ++r) {
          xhat.at(r, c) = (lin.at(r, c) - mean[c]) * inv;
          pre.at(r, c) = lp.gamma[c] * xhat.at(r, c) + lp.beta[c];
        }
      }
      if (lc) {
        lc->mean = std::move(mean);
        lc->var = std::move(var);
        lc->xhat = std::move(xhat);
      }
    }
    if (lc) lc->pre_act = pre;

    if (ls.relu)
      for (double& v : pre.data)
        if (v < 0.0) v = 0.0;
    if (lc) lc->output = pre;
    x = std::move(pre);
  }
  return x;
}

// Folds the batch statistics recorded in `cache` into the running
// statistics with the given momentum.
inline void commit_running_stats(const MlpSpec& spec, MlpParams& params,
                                 const MlpCache& cache, double momentum) {
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    if (!spec.layers[li].batch_norm) continue;
    LayerParams& lp = params.layers[li];
    const LayerCache& lc = cache.layers[li];
    for (size_t c = 0; c < lp.run_mean.size(); ++c) {
      lp.run_mean[c] = momentum * lp.run_mean[c] + (1 - momentum) * lc.mean[c];
      lp.run_var[c] = momentum * lp.run_var[c] + (1 - momentum) * lc.var[c];
    }
  }
}

struct MlpGrads {
  std::vector<LayerParams> layers;  // same shapes, gradients
};

inline MlpGrads zero_grads(const MlpSpec& spec) {
  MlpGrads g;
  for (const auto& l : spec.layers) {
    LayerParams lp;
    lp.weight = Matrix(l.in, l.out);
    lp.bias.assign(l.out, 0.0);
    if (l.batch_norm) {
      lp.gamma.assign(l.out, 0.0);
      lp.beta.assign(l.out, 0.0);
    }
    g.layers.push_back(std::move(lp));
  }
  return g;
}

// Backprop through the cached train-mode forward pass. Accumulates into
// `grads`, returns the gradient w.r.t. the batch input.
inline Matrix mlp_backward(const MlpSpec& spec, const MlpParams& params,
                           const MlpCache& cache, const Matrix& d_output,
                           MlpGrads* grads) {
  Matrix d = d_output;
  for (size_t li = spec.layers.size(); li-- > 0;) {
    const LayerSpec& ls = spec.layers[li];
    const LayerParams& lp = params.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerParams& g = grads->layers[li];

    if (ls.relu)
      for (size_t i = 0; i < d.data.size(); ++i)
        if (lc.pre_act.data[i] <= 0.0) d.data[i] = 0.0;

    if (ls.batch_norm) {
      size_t m = d.rows;
      Matrix d_lin(m, ls.out);
      for (size_t c = 0; c < ls.out; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (size_t r = 0; r < m; ++r) {
          sum_dy += d.at(r, c);
          sum_dy_xhat += d.at(r, c) * lc.xhat.at(r, c);
        }
        g.gamma[c] += sum_dy_xhat;
        g.beta[c] += sum_dy;
        double inv = 1.0 / std::sqrt(lc.var[c] + kBnEps);
        double scale = lp.gamma[c] * inv / double(m);
        for (size_t r = 0; r < m; ++r)
          d_lin.at(r, c) = scale * (double(m) * d.at(r, c) - sum_dy -
                                    lc.xhat.at(r, c) * sum_dy_xhat);
      }
      d = std::move(d_lin);
    }

    // linear layer
    Matrix dW = matmul_tn(lc.input, d);
    for (size_t i = 0; i < dW.data.size(); ++i) g.weight.data[i] += dW.data[i];
    for (size_t c = 0; c < ls.out; ++c) {
      double s = 0.0;
      for (size_t r = 0; r < d.rows; ++r) s += d.at(r, c);
      g.bias[c] += s;
    }
    d = matmul_nt(d, lp.weight);
  }
  return d;
}

// Trainable parameters in a stable order (weights, bias, gamma, beta).
// Running statistics are deliberately not included.
inline std::vector<double*> param_ptrs(MlpParams& p) {
  std::vector<double*> out;
  for (auto& l : p.layers) {
    for (double& v : l.weight.data) out.push_back(&v);
    for (double& v : l.bias) out.push_back(&v);
    for (double& v : l.gamma) out.push_back(&v);
    for (double& v : l.beta) out.push_back(&v);
  }
  return out;
}

inline std::vector<double*> grad_ptrs(MlpGrads& g) {
  std::vector<double*> out;
  for (auto& l : g.layers) {
    for (double& v : l.weight.data) out.push_back(&v);
    for (double& v : l.bias) out.push_back(&v);
    for (double& v : l.gamma) out.push_back(&v);
    for (double& v : l.beta) out.push_back(&v);
  }
  return out;
}

// All state including running statistics, for EMA updates and serialization.
inline std::vector<double*> state_ptrs(MlpParams& p) {
  std::vector<double*> out;
  for (auto& l : p.layers) {
    for (double& v : l.weight.data) out.push_back(&v);
    for (double& v : l.bias) out.push_back(&v);
    for (double& v : l.gamma) out.push_back(&v);
    for (double& v : l.beta) out.push_back(&v);
    for (double& v : l.run_mean) out.push_back(&v);
    for (double& v : l.run_var) out.push_back(&v);
  }
  return out;
}

inline nlohmann::json mlp_to_json(const MlpSpec& spec, const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& ls = spec.layers[i];
    const auto& lp = p.layers[i];
    layers.push_back({{"in", ls.in},
                      {"out", ls.out},
                      {"batch_norm", ls.batch_norm},
                      {"relu", ls.relu},
                      {"weight", lp.weight.data},
                      {"bias", lp.bias},
                      {"gamma", lp.gamma},
                      {"beta", lp.beta},
                      {"run_mean", lp.run_mean},
                      {"run_var", lp.run_var}});
  }
  return layers;
}

inline void mlp_from_json(const nlohmann::json& j, MlpSpec* spec,
                          MlpParams* p) {
  spec->layers.clear();
  p->layers.clear();
  for (const auto& l : j) {
    LayerSpec ls{l.at("in").get<size_t>(), l.at("out").get<size_t>(),
                 l.at("batch_norm").get<bool>(), l.at("relu").get<bool>()};
    LayerParams lp;
    lp.weight = Matrix(ls.in, ls.out);
    lp.weight.data = l.at("weight").get<std::vector<double>>();
    lp.bias = l.at("bias").get<std::vector<double>>();
    lp.gamma = l.at("gamma").get<std::vector<double>>();
    lp.beta = l.at("beta").get<std::vector<double>>();
    lp.run_mean = l.at("run_mean").get<std::vector<double>>();
    lp.run_var = l.at("run_var").get<std::vector<double>>();
    if (lp.weight.data.size() != ls.in * ls.out)
      throw ShapeMismatch("mlp json: weight size mismatch");
    spec->layers.push_back(ls);
    p->layers.push_back(std::move(lp));
  }
  spec->validate();
}

}  // namespace tempo
