#include "toy_data.hpp"
#include "tsa/train.hpp"

#include <doctest.h>

#include <sstream>

using namespace tsa;

namespace {

std::vector<const GraphSample*> pointers(const std::vector<GraphSample>& v, std::size_t lo, std::size_t hi) {
  std::vector<const GraphSample*> p;
  for (std::size_t i = lo; i < hi; ++i) p.push_back(&v[i]);
  return p;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.model.layers = 2;
  cfg.model.hidden = 8;
  cfg.epochs = epochs;
  cfg.lr = 1e-2;
  cfg.batch_size = 16;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("metrics worked example") {
  std::vector<int> labels, preds;
  for (int i = 0; i < 7; ++i) labels.push_back(1), preds.push_back(1);
  for (int i = 0; i < 2; ++i) labels.push_back(0), preds.push_back(0);
  labels.push_back(0), preds.push_back(1);
  const auto m = compute_metrics(labels, preds);
  CHECK(m.tp == 7);
  CHECK(m.tn == 2);
  CHECK(m.fp == 1);
  CHECK(m.fn == 0);
  CHECK(m.acc == doctest::Approx(0.9));
  CHECK(m.tpr == doctest::Approx(1.0));
  CHECK(m.tnr == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(14.0 / 15.0));
}

TEST_CASE("perfect predictions") {
  const std::vector<int> y{1, 0, 1, 0, 0};
  const auto m = compute_metrics(y, y);
  CHECK(m.acc == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.tpr == 1.0);
  CHECK(m.tnr == 1.0);
}

TEST_CASE("undefined rates are zero and flagged") {
  const std::vector<int> y{1, 1, 1};
  const auto m = compute_metrics(y, y);
  CHECK(m.tnr == 0.0);
  CHECK(m.tnr_undefined);
  CHECK_FALSE(m.tpr_undefined);
  const std::vector<int> neg{0, 0};
  const auto n = compute_metrics(neg, neg);
  CHECK(n.tpr_undefined);
  CHECK(n.f1_undefined);
  CHECK(n.acc == 1.0);
  CHECK_THROWS(compute_metrics(std::vector<int>{}, std::vector<int>{}));
  CHECK_THROWS(compute_metrics(std::vector<int>{1}, std::vector<int>{1, 0}));
}

TEST_CASE("metrics agree with naive counting") {
  Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 1 + rng.index(50);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(rng.index(2)), p[i] = static_cast<int>(rng.index(2));
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += y[i] == 1 && p[i] == 1;
      tn += y[i] == 0 && p[i] == 0;
      fp += y[i] == 0 && p[i] == 1;
      fn += y[i] == 1 && p[i] == 0;
    }
    const auto m = compute_metrics(y, p);
    CHECK(m.tp == tp);
    CHECK(m.tn == tn);
    CHECK(m.fp == fp);
    CHECK(m.fn == fn);
    CHECK(m.acc == static_cast<double>(tp + tn) / static_cast<double>(n));
    if (tp + fn) CHECK(m.tpr == static_cast<double>(tp) / static_cast<double>(tp + fn));
    if (tn + fp) CHECK(m.tnr == static_cast<double>(tn) / static_cast<double>(tn + fp));
    if (tp + fp + fn) CHECK(m.f1 == static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn));
  }
}

TEST_CASE("separable toy graphs are learned") {
  const auto data = toy_dataset(120, 1);
  const auto tr = pointers(data, 0, 90), va = pointers(data, 90, 120);
  for (auto pool : {Pooling::dal, Pooling::mean, Pooling::sum}) {
    auto cfg = small_config(50);
    cfg.model.pooling = pool;
    const auto res = train_fold(tr, va, cfg);
    CAPTURE(pooling_name(pool));
    CHECK(res.val_metrics.acc == 1.0);
  }
}

TEST_CASE("training is deterministic") {
  const auto data = toy_dataset(60, 2);
  const auto tr = pointers(data, 0, 45), va = pointers(data, 45, 60);
  const auto a = train_fold(tr, va, small_config(5)), b = train_fold(tr, va, small_config(5));
  CHECK(a.val_metrics == b.val_metrics);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.model.fc_w == b.model.fc_w);
}

TEST_CASE("zero epochs returns the initial model") {
  const auto data = toy_dataset(30, 3);
  const auto res = train_fold(pointers(data, 0, 20), pointers(data, 20, 30), small_config(0));
  CHECK(res.best_epoch == 0);
  CHECK(res.epoch_loss.empty());
  CHECK(res.val_metrics.total() == 10);
}

TEST_CASE("training needs both classes and both splits") {
  auto data = toy_dataset(30, 4);
  for (auto& s : data) s.label = 1;
  CHECK_THROWS_AS(train_fold(pointers(data, 0, 20), pointers(data, 20, 30), small_config(1)), TrainError);
  const auto ok = toy_dataset(30, 4);
  CHECK_THROWS_AS(train_fold(pointers(ok, 0, 20), {}, small_config(1)), TrainError);
}

TEST_CASE("validation split is stratified and disjoint") {
  const auto data = toy_dataset(100, 5);
  std::vector<std::size_t> idx(100);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto [tr, va] = split_validation(data, idx, 0.1, 9);
  CHECK(tr.size() + va.size() == 100);
  std::size_t unstable = 0;
  for (auto i : va) unstable += data[i].label == 0;
  CHECK(unstable == 3);  // round(0.1 · 34)
  std::vector<int> seen(100, 0);
  for (auto i : tr) ++seen[i];
  for (auto i : va) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("two-fold cross-validation") {
  const auto data = toy_dataset(100, 6);
  const auto plan = make_folds(data, 2, 1);
  const auto report = cross_validate(data, plan, small_config(3), 2);
  REQUIRE(report.folds.size() == 2);
  CHECK(report.mean.acc == doctest::Approx((report.folds[0].acc + report.folds[1].acc) / 2));
  CHECK(report.test_predictions.size() == 100);
  const auto again = cross_validate(data, plan, small_config(3), 1);
  CHECK(again.folds == report.folds);
}

TEST_CASE("identical folds have zero spread") {
  Metrics m;
  m.acc = 0.9;
  m.f1 = 0.8;
  m.tnr = 0.7;
  m.tpr = 0.6;
  const auto r = summarize_folds({m, m, m});
  CHECK(r.stddev.acc < 1e-12);
  CHECK(r.stddev.tpr < 1e-12);
  CHECK(r.mean.f1 == doctest::Approx(0.8));
}

TEST_CASE("report CSV layout") {
  Metrics m;
  m.acc = 0.5;
  const auto r = summarize_folds({m, m});
  std::ostringstream out;
  write_cv_report(r, out);
  CHECK(out.str() ==
        "fold,acc,f1,tnr,tpr\n0,50.0000,0.0000,0.0000,0.0000\n1,50.0000,0.0000,0.0000,0.0000\n"
        "mean,50.0000,0.0000,0.0000,0.0000\nstd,0.0000,0.0000,0.0000,0.0000\n");
}

TEST_CASE("credibility rating") {
  const std::vector<Prediction> preds{{1, 1, 0.9}, {0, 0, 0.8}, {1, 1, 0.6}, {0, 0, 0.2}, {1, 0, 0.95}};
  CHECK(cr_at(preds, 0.5) == 0.75);
  CHECK(cr_at(preds, 0.0) == 1.0);
  CHECK(cr_at(preds, 1.01) == 0.0);
  const auto grid = threshold_grid(100);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  const auto curve = compute_cr_curve(preds, grid);
  CHECK(curve.cr.front() == 1.0);
  for (std::size_t i = 1; i < curve.cr.size(); ++i) CHECK(curve.cr[i] <= curve.cr[i - 1]);
  // cr ≥ 0.75 holds up to the 0.6 margin.
  CHECK(select_threshold(curve, 0.75) == doctest::Approx(grid[59]));
  const std::vector<Prediction> wrong{{1, 0, 0.3}};
  CHECK_THROWS_AS(cr_at(wrong, 0.1), TrainError);
  std::ostringstream out;
  write_cr_curve(curve, out);
  CHECK(out.str().rfind("k,cr\n0.0000,1.0000\n", 0) == 0);
}
