#pragma once

// BYOL pre-training over binary feature vectors: online network
// (encoder, projector, predictor) chases an EMA target (encoder,
// projector) across two feature-dropout views, with the symmetric
// cosine loss. One model per modality.

#include <json.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tempo/errors.hpp"
#include "tempo/mlp.hpp"
#include "tempo/sha256.hpp"

namespace tempo {

constexpr double kCosEps = 1e-12;

// Feature dropout: present features are independently masked with
// probability p; absent features are never introduced.
inline std::vector<uint8_t> augment_bits(const std::vector<uint8_t>& bits,
                                         double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigInvalid("dropout rate must be in [0,1)");
  std::vector<uint8_t> out(bits.size(), 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i] = (u(rng) >= p) ? 1 : 0;
  return out;
}

inline Matrix augment_rows(const Matrix& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigInvalid("dropout rate must be in [0,1)");
  Matrix out = x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : out.data)
    if (v != 0.0 && u(rng) < p) v = 0.0;
  return out;
}

inline double cosine(const std::vector<double>& a,
                     const std::vector<double>& b) {
  double na = std::max(norm2(a), kCosEps);
  double nb = std::max(norm2(b), kCosEps);
  return dot(a, b) / (na * nb);
}

// Symmetric two-term loss; targets are constants. Range [0, 8].
inline double byol_loss(const std::vector<double>& q1,
                        const std::vector<double>& z2,
                        const std::vector<double>& q2,
                        const std::vector<double>& z1) {
  return (2.0 - 2.0 * cosine(q1, z2)) + (2.0 - 2.0 * cosine(q2, z1));
}

namespace byoldetail {

// Mean over rows of 2-2cos(q_i, z_i); writes dL/dq into d_q (same shape).
inline double cosine_loss_batch(const Matrix& q, const Matrix& z, Matrix* d_q) {
  if (q.rows != z.rows || q.cols != z.cols)
    throw ShapeMismatch("cosine loss: view shapes differ");
  *d_q = Matrix(q.rows, q.cols);
  double total = 0.0;
  double inv_b = 1.0 / double(q.rows);
  for (size_t r = 0; r < q.rows; ++r) {
    const double* qr = q.row(r);
    const double* zr = z.row(r);
    double qq = 0, zz = 0, qz = 0;
    for (size_t c = 0; c < q.cols; ++c) {
      qq += qr[c] * qr[c];
      zz += zr[c] * zr[c];
      qz += qr[c] * zr[c];
    }
    double nq = std::max(std::sqrt(qq), kCosEps);
    double nz = std::max(std::sqrt(zz), kCosEps);
    double cos = qz / (nq * nz);
    total += 2.0 - 2.0 * cos;
    double* dr = d_q->row(r);
    for (size_t c = 0; c < q.cols; ++c)
      dr[c] = -2.0 * inv_b * (zr[c] / (nq * nz) - cos * qr[c] / (nq * nq));
  }
  return total * inv_b;
}

}  // namespace byoldetail

struct ByolNetwork {
  MlpSpec encoder_spec, projector_spec;
  MlpParams encoder, projector;
};

struct ByolModel {
  std::string modality;
  ByolNetwork online;
  MlpSpec predictor_spec;
  MlpParams predictor;
  ByolNetwork target;  // no predictor by construction
  double tau = 0.99;
  uint64_t seed = 0;
  std::string input_fingerprint;  // vocabulary / feature-list fingerprint
  nlohmann::json config_record;   // hyperparameters, for reproducibility

  nlohmann::json to_json() const {
    return {{"format", "tempo-byol-v1"},
            {"modality", modality},
            {"tau", tau},
            {"seed", seed},
            {"input_fingerprint", input_fingerprint},
            {"config", config_record},
            {"online_encoder", mlp_to_json(online.encoder_spec, online.encoder)},
            {"online_projector",
             mlp_to_json(online.projector_spec, online.projector)},
            {"predictor", mlp_to_json(predictor_spec, predictor)},
            {"target_encoder", mlp_to_json(target.encoder_spec, target.encoder)},
            {"target_projector",
             mlp_to_json(target.projector_spec, target.projector)}};
  }

  static ByolModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "tempo-byol-v1")
      throw ConfigInvalid("not a tempo-byol-v1 model file");
    ByolModel m;
    m.modality = j.at("modality").get<std::string>();
    m.tau = j.at("tau").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    m.input_fingerprint = j.at("input_fingerprint").get<std::string>();
    m.config_record = j.value("config", nlohmann::json::object());
    mlp_from_json(j.at("online_encoder"), &m.online.encoder_spec,
                  &m.online.encoder);
    mlp_from_json(j.at("online_projector"), &m.online.projector_spec,
                  &m.online.projector);
    mlp_from_json(j.at("predictor"), &m.predictor_spec, &m.predictor);
    mlp_from_json(j.at("target_encoder"), &m.target.encoder_spec,
                  &m.target.encoder);
    mlp_from_json(j.at("target_projector"), &m.target.projector_spec,
                  &m.target.projector);
    return m;
  }

  std::string fingerprint() const { return sha256_hex(to_json().dump()); }
};

// theta_target <- tau * theta_target + (1 - tau) * theta_online,
// elementwise over weights, bn parameters and running statistics.
inline void ema_update(MlpParams& target, MlpParams& online, double tau) {
  auto t = state_ptrs(target);
  auto o = state_ptrs(online);
  if (t.size() != o.size())
    throw ShapeMismatch("ema_update: parameter counts differ");
  for (size_t i = 0; i < t.size(); ++i)
    *t[i] = tau * *t[i] + (1.0 - tau) * *o[i];
}

inline void ema_update(ByolModel& m) {
  ema_update(m.target.encoder, m.online.encoder, m.tau);
  ema_update(m.target.projector, m.online.projector, m.tau);
}

struct ByolConfig {
  std::string modality;
  size_t input_dim = 0;
  std::vector<size_t> encoder_hidden = {512, 256};
  size_t embed_dim = 128;
  size_t projector_hidden = 256;
  size_t projector_out = 64;
  size_t predictor_hidden = 256;
  size_t epochs = 30;
  size_t batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double tau = 0.99;
  double dropout_p = 0.2;
  double bn_momentum = 0.9;
  uint64_t seed = 0;
  std::string input_fingerprint;

  void validate() const {
    if (input_dim == 0) throw ConfigInvalid("byol: input_dim required");
    if (epochs == 0 || batch_size < 2)
      throw ConfigInvalid("byol: epochs >= 1 and batch_size >= 2 required");
    if (tau < 0.0 || tau > 1.0) throw ConfigInvalid("byol: tau must be in [0,1]");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw ConfigInvalid("byol: dropout must be in [0,1)");
  }

  nlohmann::json to_json() const {
    return {{"modality", modality},       {"input_dim", input_dim},
            {"encoder_hidden", encoder_hidden},
            {"embed_dim", embed_dim},     {"projector_hidden", projector_hidden},
            {"projector_out", projector_out},
            {"predictor_hidden", predictor_hidden},
            {"epochs", epochs},           {"batch_size", batch_size},
            {"lr", lr},                   {"momentum", momentum},
            {"tau", tau},                 {"dropout_p", dropout_p},
            {"bn_momentum", bn_momentum}, {"seed", seed}};
  }
};

// Encoder: three layers, bn+relu between them. Projector/predictor:
// two layers with bn on the hidden layer.
inline MlpSpec make_encoder_spec(const ByolConfig& c) {
  MlpSpec s;
  size_t prev = c.input_dim;
  for (size_t h : c.encoder_hidden) {
    s.layers.push_back({prev, h, true, true});
    prev = h;
  }
  s.layers.push_back({prev, c.embed_dim, false, false});
  return s;
}

inline MlpSpec make_projector_spec(const ByolConfig& c) {
  return MlpSpec{{{c.embed_dim, c.projector_hidden, true, true},
                  {c.projector_hidden, c.projector_out, false, false}}};
}

inline MlpSpec make_predictor_spec(const ByolConfig& c) {
  return MlpSpec{{{c.projector_out, c.predictor_hidden, true, true},
                  {c.predictor_hidden, c.projector_out, false, false}}};
}

inline ByolModel init_byol(const ByolConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  ByolModel m;
  m.modality = c.modality;
  m.tau = c.tau;
  m.seed = c.seed;
  m.input_fingerprint = c.input_fingerprint;
  m.config_record = c.to_json();
  m.online.encoder_spec = make_encoder_spec(c);
  m.online.projector_spec = make_projector_spec(c);
  m.predictor_spec = make_predictor_spec(c);
  m.online.encoder = init_mlp(m.online.encoder_spec, rng);
  m.online.projector = init_mlp(m.online.projector_spec, rng);
  m.predictor = init_mlp(m.predictor_spec, rng);
  // target starts as a copy of the online encoder/projector
  m.target.encoder_spec = m.online.encoder_spec;
  m.target.projector_spec = m.online.projector_spec;
  m.target.encoder = m.online.encoder;
  m.target.projector = m.online.projector;
  return m;
}

namespace byoldetail {

struct SgdState {
  std::vector<double> velocity;
};

inline void sgd_step(std::vector<double*>& params, std::vector<double*>& grads,
                     SgdState& state, double lr, double momentum) {
  if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    state.velocity[i] = momentum * state.velocity[i] + *grads[i];
    *params[i] -= lr * state.velocity[i];
  }
}

}  // namespace byoldetail

struct ByolTrainResult {
  ByolModel model;
  std::vector<double> loss_curve;  // mean loss per epoch
};

inline ByolTrainResult train_byol(const Matrix& features, ByolConfig config) {
  config.validate();
  if (features.rows < 2) throw DegenerateBatch("byol needs at least 2 samples");
  if (features.cols != config.input_dim)
    throw ShapeMismatch("byol: features have width " +
                        std::to_string(features.cols) + ", config says " +
                        std::to_string(config.input_dim));

  ByolTrainResult result;
  result.model = init_byol(config);
  ByolModel& m = result.model;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  size_t n = features.rows;
  size_t bs = std::min(config.batch_size, n);
  size_t steps_per_epoch = n / bs;
  if (steps_per_epoch == 0) steps_per_epoch = 1;
  size_t total_steps = steps_per_epoch * config.epochs;

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  byoldetail::SgdState sgd;
  size_t step = 0;

  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t s = 0; s < steps_per_epoch; ++s) {
      Matrix batch(bs, features.cols);
      for (size_t i = 0; i < bs; ++i) {
        const double* src = features.row(order[s * bs + i]);
        std::copy(src, src + features.cols, batch.row(i));
      }
      Matrix v1 = augment_rows(batch, config.dropout_p, rng);
      Matrix v2 = augment_rows(batch, config.dropout_p, rng);

      // online pass over both views
      MlpCache ec1, pc1, qc1, ec2, pc2, qc2;
      Matrix e1 = mlp_forward(m.online.encoder_spec, m.online.encoder, v1,
                              Mode::Train, &ec1);
      Matrix p1 = mlp_forward(m.online.projector_spec, m.online.projector, e1,
                              Mode::Train, &pc1);
      Matrix q1 = mlp_forward(m.predictor_spec, m.predictor, p1, Mode::Train,
                              &qc1);
      Matrix e2 = mlp_forward(m.online.encoder_spec, m.online.encoder, v2,
                              Mode::Train, &ec2);
      Matrix p2 = mlp_forward(m.online.projector_spec, m.online.projector, e2,
                              Mode::Train, &pc2);
      Matrix q2 = mlp_forward(m.predictor_spec, m.predictor, p2, Mode::Train,
                              &qc2);

      // target pass, no gradients
      Matrix z1 = mlp_forward(
          m.target.projector_spec, m.target.projector,
          mlp_forward(m.target.encoder_spec, m.target.encoder, v1, Mode::Train),
          Mode::Train);
      Matrix z2 = mlp_forward(
          m.target.projector_spec, m.target.projector,
          mlp_forward(m.target.encoder_spec, m.target.encoder, v2, Mode::Train),
          Mode::Train);

      Matrix dq1, dq2;
      double loss = byoldetail::cosine_loss_batch(q1, z2, &dq1) +
                    byoldetail::cosine_loss_batch(q2, z1, &dq2);
      epoch_loss += loss;

      MlpGrads g_enc = zero_grads(m.online.encoder_spec);
      MlpGrads g_proj = zero_grads(m.online.projector_spec);
      MlpGrads g_pred = zero_grads(m.predictor_spec);
      Matrix dp1 = mlp_backward(m.predictor_spec, m.predictor, qc1, dq1, &g_pred);
      Matrix de1 = mlp_backward(m.online.projector_spec, m.online.projector,
                                pc1, dp1, &g_proj);
      mlp_backward(m.online.encoder_spec, m.online.encoder, ec1, de1, &g_enc);
      Matrix dp2 = mlp_backward(m.predictor_spec, m.predictor, qc2, dq2, &g_pred);
      Matrix de2 = mlp_backward(m.online.projector_spec, m.online.projector,
                                pc2, dp2, &g_proj);
      mlp_backward(m.online.encoder_spec, m.online.encoder, ec2, de2, &g_enc);

      double lr = config.lr * 0.5 *
                  (1.0 + std::cos(M_PI * double(step) / double(total_steps)));
      std::vector<double*> params, grads;
      for (auto* v : param_ptrs(m.online.encoder)) params.push_back(v);
      for (auto* v : param_ptrs(m.online.projector)) params.push_back(v);
      for (auto* v : param_ptrs(m.predictor)) params.push_back(v);
      for (auto* v : grad_ptrs(g_enc)) grads.push_back(v);
      for (auto* v : grad_ptrs(g_proj)) grads.push_back(v);
      for (auto* v : grad_ptrs(g_pred)) grads.push_back(v);
      byoldetail::sgd_step(params, grads, sgd, lr, config.momentum);

      commit_running_stats(m.online.encoder_spec, m.online.encoder, ec1,
                           config.bn_momentum);
      commit_running_stats(m.online.projector_spec, m.online.projector, pc1,
                           config.bn_momentum);
      commit_running_stats(m.predictor_spec, m.predictor, qc1,
                           config.bn_momentum);
      ema_update(m);
      ++step;
    }
    result.loss_curve.push_back(epoch_loss / double(steps_per_epoch));
  }
  return result;
}

// Eval-mode online-encoder output for one modality.
inline Matrix byol_embed(const ByolModel& m, const Matrix& features) {
  return mlp_forward(m.online.encoder_spec, m.online.encoder, features,
                     Mode::Eval);
}

// Fixed concatenation order: opcode, api, permission.
inline Matrix concat_embeddings(const Matrix& opcode, const Matrix& api,
                                const Matrix& permission) {
  if (opcode.rows != api.rows || api.rows != permission.rows)
    throw ShapeMismatch("embedding row counts differ across modalities");
  Matrix out(opcode.rows, opcode.cols + api.cols + permission.cols);
  for (size_t r = 0; r < out.rows; ++r) {
    double* dst = out.row(r);
    std::copy(opcode.row(r), opcode.row(r) + opcode.cols, dst);
    std::copy(api.row(r), api.row(r) + api.cols, dst + opcode.cols);
    std::copy(permission.row(r), permission.row(r) + permission.cols,
              dst + opcode.cols + api.cols);
  }
  return out;
}

}  // namespace tempo
