#pragma once

// Class-weighted L2-regularized logistic regression on BYOL embeddings:
// deterministic full-batch optimization, time-based CV grid search, and
// the evaluation metrics.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tempo/dataset.hpp"
#include "tempo/errors.hpp"
#include "tempo/linalg.hpp"
#include "tempo/sha256.hpp"

namespace tempo {

struct ClassWeights {
  double benign = 1.0;
  double malware = 1.0;
  double of(int label) const { return label == 1 ? malware : benign; }
};

// Inverse-frequency weighting: w_c = N / (2 * N_c).
inline ClassWeights class_weights(const std::vector<int>& labels) {
  size_t n_mal = 0, n_ben = 0;
  for (int y : labels) (y == 1 ? n_mal : n_ben)++;
  if (n_mal == 0 || n_ben == 0)
    throw SingleClass("both classes must be present to weight them");
  double n = double(labels.size());
  return ClassWeights{n / (2.0 * double(n_ben)), n / (2.0 * double(n_mal))};
}

// Per-dimension standardization fitted on the training split only.
struct Scaler {
  std::vector<double> mean, inv_std;

  static Scaler fit(const Matrix& x) {
    Scaler s;
    s.mean.assign(x.cols, 0.0);
    s.inv_std.assign(x.cols, 1.0);
    for (size_t c = 0; c < x.cols; ++c) {
      double mu = 0.0;
      for (size_t r = 0; r < x.rows; ++r) mu += x.at(r, c);
      mu /= double(x.rows);
      double v = 0.0;
      for (size_t r = 0; r < x.rows; ++r) {
        double d = x.at(r, c) - mu;
        v += d * d;
      }
      v /= double(x.rows);
      s.mean[c] = mu;
      s.inv_std[c] = v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& x) const {
    if (x.cols != mean.size()) throw ShapeMismatch("scaler width mismatch");
    Matrix out = x;
    for (size_t r = 0; r < x.rows; ++r)
      for (size_t c = 0; c < x.cols; ++c)
        out.at(r, c) = (x.at(r, c) - mean[c]) * inv_std[c];
    return out;
  }
};

struct LrModel {
  std::vector<double> weights;
  double bias = 0.0;
  double reg_c = 1.0;  // inverse regularization strength
  ClassWeights weights_by_class;
  double threshold = 0.5;
  Scaler scaler;
  std::set<std::string> train_ids;
  std::string train_fingerprint;
  std::string embedding_fingerprint;
  std::string stop_condition;  // "gradient" or "max_iterations"
  size_t iterations = 0;

  nlohmann::json to_json() const {
    return {{"format", "tempo-lr-v1"},
            {"weights", weights},
            {"bias", bias},
            {"reg_c", reg_c},
            {"class_weights", {{"benign", weights_by_class.benign},
                               {"malware", weights_by_class.malware}}},
            {"threshold", threshold},
            {"scaler_mean", scaler.mean},
            {"scaler_inv_std", scaler.inv_std},
            {"train_ids", std::vector<std::string>(train_ids.begin(),
                                                   train_ids.end())},
            {"train_fingerprint", train_fingerprint},
            {"embedding_fingerprint", embedding_fingerprint},
            {"stop_condition", stop_condition},
            {"iterations", iterations}};
  }

  static LrModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "tempo-lr-v1")
      throw ConfigInvalid("not a tempo-lr-v1 model file");
    LrModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.reg_c = j.at("reg_c").get<double>();
    m.weights_by_class.benign = j.at("class_weights").at("benign").get<double>();
    m.weights_by_class.malware =
        j.at("class_weights").at("malware").get<double>();
    m.threshold = j.at("threshold").get<double>();
    m.scaler.mean = j.at("scaler_mean").get<std::vector<double>>();
    m.scaler.inv_std = j.at("scaler_inv_std").get<std::vector<double>>();
    auto ids = j.at("train_ids").get<std::vector<std::string>>();
    m.train_ids.insert(ids.begin(), ids.end());
    m.train_fingerprint = j.value("train_fingerprint", "");
    m.embedding_fingerprint = j.value("embedding_fingerprint", "");
    m.stop_condition = j.value("stop_condition", "");
    m.iterations = j.value("iterations", size_t(0));
    return m;
  }
};

// Weighted cross-entropy (mean over samples) plus (1/(2C)) * ||w||^2.
// Inputs are expected pre-standardized; bias is not regularized.
inline double lr_loss_and_grad(const Matrix& x, const std::vector<int>& y,
                               const ClassWeights& cw, double reg_c,
                               const std::vector<double>& w, double b,
                               std::vector<double>* dw, double* db) {
  size_t n = x.rows, d = x.cols;
  dw->assign(d, 0.0);
  *db = 0.0;
  double loss = 0.0;
  double inv_n = 1.0 / double(n);
  for (size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r);
    double z = b;
    for (size_t c = 0; c < d; ++c) z += w[c] * xr[c];
    double weight = cw.of(y[r]);
    // log(1+exp(-|z|)) form keeps this finite for large |z|
    double log1pe = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += weight * (log1pe - double(y[r]) * z) * inv_n;
    double p = 1.0 / (1.0 + std::exp(-z));
    double g = weight * (p - double(y[r])) * inv_n;
    for (size_t c = 0; c < d; ++c) (*dw)[c] += g * xr[c];
    *db += g;
  }
  double reg = 0.0;
  for (size_t c = 0; c < d; ++c) {
    reg += w[c] * w[c];
    (*dw)[c] += w[c] / reg_c;
  }
  loss += reg / (2.0 * reg_c);
  return loss;
}

struct LrTrainOptions {
  double tol = 1e-6;       // gradient-norm stopping tolerance
  size_t max_iters = 5000;
  double init_step = 1.0;  // backtracking line search starts here
};

// Deterministic full-batch gradient descent with Armijo backtracking.
// The loss is convex, so this converges to the unique optimum.
inline LrModel train_lr(const Matrix& x_raw, const std::vector<int>& y,
                        const std::vector<std::string>& ids,
                        const ClassWeights& cw, double reg_c,
                        const LrTrainOptions& opts = {}) {
  if (x_raw.rows != y.size() || (!ids.empty() && ids.size() != y.size()))
    throw ShapeMismatch("train_lr: rows, labels and ids must align");
  for (double v : x_raw.data)
    if (!std::isfinite(v)) throw NonFinite("train_lr: non-finite feature");

  LrModel m;
  m.reg_c = reg_c;
  m.weights_by_class = cw;
  m.scaler = Scaler::fit(x_raw);
  Matrix x = m.scaler.apply(x_raw);

  m.weights.assign(x.cols, 0.0);
  m.bias = 0.0;
  std::vector<double> dw;
  double db = 0.0;
  double step = opts.init_step;
  double loss = lr_loss_and_grad(x, y, cw, reg_c, m.weights, m.bias, &dw, &db);
  m.stop_condition = "max_iterations";
  for (size_t it = 0; it < opts.max_iters; ++it) {
    double gnorm = std::sqrt(dot(dw, dw) + db * db);
    if (gnorm < opts.tol) {
      m.stop_condition = "gradient";
      m.iterations = it;
      break;
    }
    // backtracking on the current descent direction
    double g2 = gnorm * gnorm;
    std::vector<double> w_try(x.cols);
    double b_try, loss_try;
    std::vector<double> dw_try;
    double db_try;
    while (true) {
      for (size_t c = 0; c < x.cols; ++c) w_try[c] = m.weights[c] - step * dw[c];
      b_try = m.bias - step * db;
      loss_try = lr_loss_and_grad(x, y, cw, reg_c, w_try, b_try, &dw_try, &db_try);
      if (loss_try <= loss - 1e-4 * step * g2 || step < 1e-12) break;
      step *= 0.5;
    }
    m.weights = std::move(w_try);
    m.bias = b_try;
    loss = loss_try;
    dw = std::move(dw_try);
    db = db_try;
    step = std::min(step * 2.0, 1e6);  // allow the step to grow back
    m.iterations = it + 1;
  }
  m.train_ids.insert(ids.begin(), ids.end());
  Sha256 h;
  for (const auto& id : m.train_ids) h.update(id + "\n");
  m.train_fingerprint = h.hex_digest();
  return m;
}

struct Prediction {
  std::string sha256;
  double probability = 0.0;
  int label = 0;
  int true_label = 0;
};

inline double predict_probability(const LrModel& m,
                                  const std::vector<double>& embedding) {
  if (embedding.size() != m.weights.size())
    throw ShapeMismatch("predict: embedding width " +
                        std::to_string(embedding.size()) + " != model width " +
                        std::to_string(m.weights.size()));
  double z = m.bias;
  for (size_t c = 0; c < embedding.size(); ++c)
    z += m.weights[c] * (embedding[c] - m.scaler.mean[c]) * m.scaler.inv_std[c];
  return 1.0 / (1.0 + std::exp(-z));
}

inline Prediction predict(const LrModel& m, const std::vector<double>& embedding,
                          const std::string& sha = "") {
  Prediction p;
  p.sha256 = sha;
  p.probability = predict_probability(m, embedding);
  p.label = p.probability >= m.threshold ? 1 : 0;
  return p;
}

struct MetricsReport {
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<Prediction> predictions;

  static MetricsReport from_counts(size_t tp, size_t fp, size_t tn, size_t fn) {
    MetricsReport r;
    r.tp = tp; r.fp = fp; r.tn = tn; r.fn = fn;
    size_t n = tp + fp + tn + fn;
    r.accuracy = n ? double(tp + tn) / double(n) : 0.0;
    r.precision = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
    r.recall = (tp + fn) ? double(tp) / double(tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
  }
};

// Positive class is malware. Test ids are checked against the model's
// recorded training set; overlap is a hard error, not a warning.
inline MetricsReport evaluate(const LrModel& m, const Matrix& x,
                              const std::vector<int>& y,
                              const std::vector<std::string>& ids) {
  if (x.rows == 0) throw EmptyTestSet("evaluate: empty test set");
  if (x.rows != y.size() || ids.size() != y.size())
    throw ShapeMismatch("evaluate: rows, labels and ids must align");
  for (const auto& id : ids)
    if (m.train_ids.count(id))
      throw Error("temporal hygiene violation: test id " + id +
                  " was in the training set");
  size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<Prediction> preds;
  preds.reserve(x.rows);
  for (size_t r = 0; r < x.rows; ++r) {
    std::vector<double> row(x.row(r), x.row(r) + x.cols);
    Prediction p = predict(m, row, ids[r]);
    p.true_label = y[r];
    if (p.label == 1 && y[r] == 1) ++tp;
    else if (p.label == 1 && y[r] == 0) ++fp;
    else if (p.label == 0 && y[r] == 0) ++tn;
    else ++fn;
    preds.push_back(std::move(p));
  }
  MetricsReport rep = MetricsReport::from_counts(tp, fp, tn, fn);
  rep.predictions = std::move(preds);
  return rep;
}

struct CvCell {
  double reg_c = 0.0;
  size_t fold = 0;
  double f1 = 0.0;
};

struct GridSearchResult {
  LrModel best;
  double best_reg_c = 0.0;
  double best_mean_f1 = 0.0;
  std::vector<CvCell> table;
};

// Mean validation F1 per grid point across the chronological folds;
// ties break toward stronger regularization (smaller C). The winner is
// refit on the full training set.
inline GridSearchResult grid_search(const Matrix& x,
                                    const std::vector<int>& y,
                                    const std::vector<std::string>& ids,
                                    const FoldPlan& folds,
                                    const std::vector<double>& grid,
                                    const LrTrainOptions& opts = {}) {
  if (grid.empty()) throw ConfigInvalid("grid_search: empty grid");
  std::unordered_map<std::string, size_t> row_of;
  for (size_t i = 0; i < ids.size(); ++i) row_of[ids[i]] = i;
  auto subset = [&](const std::vector<std::string>& which, Matrix* mx,
                    std::vector<int>* my, std::vector<std::string>* mids) {
    *mx = Matrix(which.size(), x.cols);
    my->clear();
    mids->clear();
    for (size_t i = 0; i < which.size(); ++i) {
      auto it = row_of.find(which[i]);
      if (it == row_of.end())
        throw MissingArtifact("grid_search: no embedding for id " + which[i]);
      const double* src = x.row(it->second);
      std::copy(src, src + x.cols, mx->row(i));
      my->push_back(y[it->second]);
      mids->push_back(which[i]);
    }
  };

  GridSearchResult out;
  double best_f1 = -1.0, best_c = 0.0;
  for (double c : grid) {
    double sum_f1 = 0.0;
    for (size_t fi = 0; fi < folds.folds.size(); ++fi) {
      Matrix tx, vx;
      std::vector<int> ty, vy;
      std::vector<std::string> tids, vids;
      subset(folds.folds[fi].train_ids, &tx, &ty, &tids);
      subset(folds.folds[fi].validation_ids, &vx, &vy, &vids);
      double f1 = 0.0;
      try {
        ClassWeights cw = class_weights(ty);
        LrModel fold_model = train_lr(tx, ty, tids, cw, c, opts);
        f1 = evaluate(fold_model, vx, vy, vids).f1;
      } catch (const SingleClass&) {
        // a fold whose training block is single-class scores zero
      }
      out.table.push_back({c, fi + 1, f1});
      sum_f1 += f1;
    }
    double mean_f1 = sum_f1 / double(folds.folds.size());
    if (mean_f1 > best_f1 || (mean_f1 == best_f1 && c < best_c)) {
      best_f1 = mean_f1;
      best_c = c;
    }
  }
  out.best_reg_c = best_c;
  out.best_mean_f1 = best_f1;
  out.best = train_lr(x, y, ids, class_weights(y), best_c, opts);
  return out;
}

}  // namespace tempo
