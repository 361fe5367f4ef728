#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tempo/classifier.hpp"

using tempo::ClassWeights;
using tempo::LrModel;
using tempo::Matrix;

namespace {

Matrix random_matrix(size_t r, size_t c, std::mt19937_64& rng) {
  Matrix m(r, c);
  std::normal_distribution<double> g(0, 1);
  for (double& v : m.data) v = g(rng);
  return m;
}

std::vector<std::string> make_ids(size_t n, const std::string& prefix = "s") {
  std::vector<std::string> ids;
  for (size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

// Two shifted gaussian blobs; separation controls difficulty.
void blobs(size_t n, double sep, std::mt19937_64& rng, Matrix* x,
           std::vector<int>* y) {
  *x = random_matrix(n, 3, rng);
  y->resize(n);
  for (size_t r = 0; r < n; ++r) {
    (*y)[r] = r % 4 == 0 ? 1 : 0;  // imbalanced
    if ((*y)[r]) for (size_t c = 0; c < 3; ++c) x->at(r, c) += sep;
  }
}

}  // namespace

TEST_CASE("inverse-frequency class weights") {
  std::vector<int> labels(1000, 0);
  for (size_t i = 0; i < 100; ++i) labels[i] = 1;
  ClassWeights cw = tempo::class_weights(labels);
  CHECK(cw.malware == Catch::Approx(5.0).margin(1e-4));
  CHECK(cw.benign == Catch::Approx(0.5556).margin(1e-4));

  std::vector<int> skewed(10000, 0);
  for (size_t i = 0; i < 100; ++i) skewed[i] = 1;
  ClassWeights cw2 = tempo::class_weights(skewed);
  CHECK(cw2.malware == Catch::Approx(50.0).margin(1e-9));
  CHECK(cw2.benign == Catch::Approx(0.50505).margin(1e-4));

  CHECK_THROWS_AS(tempo::class_weights(std::vector<int>(5, 0)),
                  tempo::SingleClass);
  CHECK_THROWS_AS(tempo::class_weights(std::vector<int>(5, 1)),
                  tempo::SingleClass);
}

TEST_CASE("lr loss gradient matches finite differences tightly") {
  std::mt19937_64 rng(50);
  Matrix x = random_matrix(20, 4, rng);
  std::vector<int> y(20);
  for (size_t i = 0; i < 20; ++i) y[i] = i % 3 == 0;
  ClassWeights cw{0.6, 4.2};
  std::vector<double> w = {0.3, -0.7, 0.1, 0.9};
  double b = -0.2;
  const double reg_c = 0.5;

  std::vector<double> dw;
  double db;
  tempo::lr_loss_and_grad(x, y, cw, reg_c, w, b, &dw, &db);

  auto loss_at = [&](const std::vector<double>& wv, double bv) {
    std::vector<double> scratch;
    double sdb;
    return tempo::lr_loss_and_grad(x, y, cw, reg_c, wv, bv, &scratch, &sdb);
  };
  const double eps = 1e-6;
  double worst = 0.0;
  for (size_t c = 0; c < w.size(); ++c) {
    std::vector<double> wp = w, wm = w;
    wp[c] += eps;
    wm[c] -= eps;
    double numeric = (loss_at(wp, b) - loss_at(wm, b)) / (2 * eps);
    worst = std::max(worst, std::abs(dw[c] - numeric));
  }
  double numeric_b = (loss_at(w, b + eps) - loss_at(w, b - eps)) / (2 * eps);
  worst = std::max(worst, std::abs(db - numeric_b));
  CHECK(worst < 1e-6);
}

TEST_CASE("well-separated blobs train to convergence") {
  std::mt19937_64 rng(51);
  Matrix x;
  std::vector<int> y;
  blobs(80, 6.0, rng, &x, &y);
  auto ids = make_ids(80);
  LrModel m = tempo::train_lr(x, y, ids, tempo::class_weights(y), 1.0);
  CHECK(m.stop_condition == "gradient");
  CHECK(m.iterations < 5000);
  size_t correct = 0;
  for (size_t r = 0; r < x.rows; ++r) {
    std::vector<double> row(x.row(r), x.row(r) + x.cols);
    if (tempo::predict(m, row).label == y[r]) ++correct;
  }
  CHECK(double(correct) / double(x.rows) >= 0.95);
}

TEST_CASE("duplicating the dataset leaves the optimum unchanged") {
  std::mt19937_64 rng(52);
  Matrix x;
  std::vector<int> y;
  blobs(40, 2.0, rng, &x, &y);
  Matrix x2(80, 3);
  std::vector<int> y2;
  for (int rep = 0; rep < 2; ++rep)
    for (size_t r = 0; r < 40; ++r) {
      std::copy(x.row(r), x.row(r) + 3, x2.row(size_t(rep) * 40 + r));
      y2.push_back(y[r]);
    }
  ClassWeights cw = tempo::class_weights(y);
  LrModel a = tempo::train_lr(x, y, make_ids(40), cw, 1.0);
  LrModel b = tempo::train_lr(x2, y2, make_ids(80), cw, 1.0);
  for (size_t c = 0; c < 3; ++c)
    CHECK(a.weights[c] == Catch::Approx(b.weights[c]).margin(1e-5));
  CHECK(a.bias == Catch::Approx(b.bias).margin(1e-5));
}

TEST_CASE("scaling both class weights rescales nothing that matters") {
  std::mt19937_64 rng(53);
  Matrix x;
  std::vector<int> y;
  blobs(60, 2.0, rng, &x, &y);
  ClassWeights cw = tempo::class_weights(y);
  // scaling the data term by k is equivalent to shrinking C by k
  ClassWeights cw3{cw.benign * 3.0, cw.malware * 3.0};
  LrModel a = tempo::train_lr(x, y, make_ids(60), cw, 1.0);
  LrModel b = tempo::train_lr(x, y, make_ids(60), cw3, 1.0 / 3.0);
  for (size_t c = 0; c < 3; ++c)
    CHECK(a.weights[c] == Catch::Approx(b.weights[c]).margin(1e-4));
  CHECK(a.bias == Catch::Approx(b.bias).margin(1e-4));
}

TEST_CASE("stronger regularization shrinks the weights") {
  std::mt19937_64 rng(54);
  Matrix x;
  std::vector<int> y;
  blobs(60, 3.0, rng, &x, &y);
  ClassWeights cw = tempo::class_weights(y);
  LrModel strong = tempo::train_lr(x, y, make_ids(60), cw, 0.01);
  LrModel weak = tempo::train_lr(x, y, make_ids(60), cw, 100.0);
  CHECK(tempo::norm2(strong.weights) < tempo::norm2(weak.weights));
}

TEST_CASE("the scaler standardizes and survives constant columns") {
  Matrix x(4, 2);
  x.data = {1, 7, 2, 7, 3, 7, 6, 7};
  auto s = tempo::Scaler::fit(x);
  Matrix z = s.apply(x);
  double mu = 0, var = 0;
  for (size_t r = 0; r < 4; ++r) mu += z.at(r, 0);
  mu /= 4;
  for (size_t r = 0; r < 4; ++r) var += (z.at(r, 0) - mu) * (z.at(r, 0) - mu);
  CHECK(mu == Catch::Approx(0.0).margin(1e-12));
  CHECK(var / 4 == Catch::Approx(1.0).margin(1e-9));
  // constant column: centered, unit inverse stddev, no NaNs
  for (size_t r = 0; r < 4; ++r) CHECK(z.at(r, 1) == 0.0);
}

TEST_CASE("non-finite features are rejected") {
  Matrix x(4, 2);
  x.data = {1, 2, 3, std::nan(""), 5, 6, 7, 8};
  std::vector<int> y = {0, 1, 0, 1};
  CHECK_THROWS_AS(
      tempo::train_lr(x, y, make_ids(4), ClassWeights{1, 1}, 1.0),
      tempo::NonFinite);
}

TEST_CASE("metric identities from the confusion counts") {
  auto r = tempo::MetricsReport::from_counts(89, 11, 3889, 11);
  CHECK(r.precision == Catch::Approx(0.89).margin(1e-12));
  CHECK(r.recall == Catch::Approx(0.89).margin(1e-12));
  CHECK(r.f1 == Catch::Approx(0.89).margin(1e-12));
  CHECK(r.accuracy == Catch::Approx(0.9945).margin(1e-12));

  auto zero = tempo::MetricsReport::from_counts(0, 0, 10, 5);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  auto perfect = tempo::MetricsReport::from_counts(5, 0, 10, 0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.accuracy == 1.0);
}

TEST_CASE("raising the threshold never adds positives") {
  std::mt19937_64 rng(55);
  Matrix x;
  std::vector<int> y;
  blobs(100, 1.0, rng, &x, &y);
  LrModel m = tempo::train_lr(x, y, make_ids(100), tempo::class_weights(y), 1.0);
  size_t prev = SIZE_MAX;
  for (double th : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    m.threshold = th;
    size_t positives = 0;
    for (size_t r = 0; r < x.rows; ++r) {
      std::vector<double> row(x.row(r), x.row(r) + x.cols);
      positives += tempo::predict(m, row).label;
    }
    CHECK(positives <= prev);
    prev = positives;
  }
}

TEST_CASE("evaluation refuses ids it trained on") {
  std::mt19937_64 rng(56);
  Matrix x;
  std::vector<int> y;
  blobs(40, 3.0, rng, &x, &y);
  auto ids = make_ids(40);
  LrModel m = tempo::train_lr(x, y, ids, tempo::class_weights(y), 1.0);

  Matrix tx(2, 3);
  std::copy(x.row(0), x.row(0) + 3, tx.row(0));
  std::copy(x.row(1), x.row(1) + 3, tx.row(1));
  std::vector<int> ty = {y[0], y[1]};
  CHECK_THROWS_AS(tempo::evaluate(m, tx, ty, {"s0", "fresh"}), tempo::Error);
  CHECK_NOTHROW(tempo::evaluate(m, tx, ty, {"new0", "new1"}));
  CHECK_THROWS_AS(tempo::evaluate(m, Matrix(0, 3), {}, {}),
                  tempo::EmptyTestSet);
}

TEST_CASE("grid search scores every cell and refits on everything") {
  std::mt19937_64 rng(57);
  Matrix x;
  std::vector<int> y;
  blobs(120, 5.0, rng, &x, &y);
  auto ids = make_ids(120);

  tempo::FoldPlan folds;
  folds.k = 3;
  for (size_t b = 0; b < 4; ++b)
    folds.blocks.emplace_back(ids.begin() + b * 30, ids.begin() + (b + 1) * 30);
  for (size_t i = 1; i <= 3; ++i) {
    tempo::Fold f;
    for (size_t b = 0; b < i; ++b)
      f.train_ids.insert(f.train_ids.end(), folds.blocks[b].begin(),
                         folds.blocks[b].end());
    f.validation_ids = folds.blocks[i];
    folds.folds.push_back(std::move(f));
  }

  std::vector<double> grid = {0.1, 1.0, 10.0};
  auto r = tempo::grid_search(x, y, ids, folds, grid);
  CHECK(r.table.size() == 9);
  for (const auto& cell : r.table) {
    CHECK(cell.f1 >= 0.0);
    CHECK(cell.f1 <= 1.0);
  }
  CHECK(r.best.train_ids.size() == 120);
  // an easily separable problem scores 1.0 everywhere; the tie must
  // resolve toward the strongest regularization
  if (r.best_mean_f1 == 1.0) {
    bool all_perfect = true;
    for (const auto& cell : r.table) all_perfect &= cell.f1 == 1.0;
    if (all_perfect) CHECK(r.best_reg_c == 0.1);
  }
  CHECK_THROWS_AS(tempo::grid_search(x, y, ids, folds, {}),
                  tempo::ConfigInvalid);
}

TEST_CASE("a single-class fold scores zero instead of crashing") {
  Matrix x(8, 1);
  x.data = {0, 0, 0, 0, 1, 1, 5, 6};
  std::vector<int> y = {0, 0, 0, 0, 1, 1, 1, 1};
  auto ids = make_ids(8);
  tempo::FoldPlan folds;
  folds.k = 1;
  folds.blocks = {{ids[0], ids[1], ids[2], ids[3]},
                  {ids[4], ids[5], ids[6], ids[7]}};
  folds.folds.push_back({folds.blocks[0], folds.blocks[1]});
  auto r = tempo::grid_search(x, y, ids, folds, {1.0});
  REQUIRE(r.table.size() == 1);
  CHECK(r.table[0].f1 == 0.0);
  CHECK(r.best_mean_f1 == 0.0);
}

TEST_CASE("lr models roundtrip through json") {
  std::mt19937_64 rng(58);
  Matrix x;
  std::vector<int> y;
  blobs(40, 3.0, rng, &x, &y);
  LrModel m = tempo::train_lr(x, y, make_ids(40), tempo::class_weights(y), 0.7);
  m.embedding_fingerprint = "fp";
  LrModel back = LrModel::from_json(m.to_json());
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.reg_c == 0.7);
  CHECK(back.train_ids == m.train_ids);
  CHECK(back.train_fingerprint == m.train_fingerprint);
  CHECK(back.embedding_fingerprint == "fp");
  CHECK(back.stop_condition == m.stop_condition);
  std::vector<double> probe(x.row(5), x.row(5) + x.cols);
  CHECK(tempo::predict_probability(back, probe) ==
        Catch::Approx(tempo::predict_probability(m, probe)).margin(1e-15));
  auto j = m.to_json();
  j["format"] = "nope";
  CHECK_THROWS_AS(LrModel::from_json(j), tempo::ConfigInvalid);
}
