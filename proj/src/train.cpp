#include "tsa/train.hpp"

#include "tsa/parallel.hpp"
#include "tsa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace tsa {

namespace {

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

Metrics compute_metrics(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("labels and predictions differ in length");
  if (labels.empty()) throw std::invalid_argument("metrics need at least one sample");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] != 0, pred = predictions[i] != 0;
    if (truth && pred) ++m.tp;
    else if (!truth && !pred) ++m.tn;
    else if (pred) ++m.fp;
    else ++m.fn;
  }
  bool unused = false;
  m.acc = ratio(m.tp + m.tn, m.total(), unused);
  m.tpr = ratio(m.tp, m.tp + m.fn, m.tpr_undefined);
  m.tnr = ratio(m.tn, m.tn + m.fp, m.tnr_undefined);
  m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn, m.f1_undefined);
  return m;
}

std::vector<Prediction> predict(const TsaModel& model, std::span<const GraphSample* const> samples,
                                std::size_t batch_size) {
  batch_size = std::max<std::size_t>(1, batch_size);
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto batch = samples.subspan(start, std::min(batch_size, samples.size() - start));
    const auto probs = classify_batch(model, batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double s0 = probs(static_cast<Eigen::Index>(i), 0), s1 = probs(static_cast<Eigen::Index>(i), 1);
      out.push_back({batch[i]->label, s1 > s0 ? 1 : 0, std::abs(s0 - s1)});
    }
  }
  return out;
}

Metrics metrics_of(std::span<const Prediction> predictions) {
  std::vector<int> labels, preds;
  for (const auto& p : predictions) {
    labels.push_back(p.label);
    preds.push_back(p.predicted);
  }
  return compute_metrics(labels, preds);
}

TrainResult train_fold(std::span<const GraphSample* const> train, std::span<const GraphSample* const> val,
                       const TrainConfig& cfg) {
  if (train.empty() || val.empty()) throw TrainError("training and validation splits must be non-empty");
  bool has[2] = {false, false};
  for (const auto* s : train) has[s->label != 0] = true;
  if (!has[0] || !has[1]) throw TrainError("training split is missing a class");
  if (cfg.batch_size == 0) throw TrainError("batch size must be positive");

  TrainResult result;
  TsaModel model = init_model(cfg.model);
  model.normalizer = Normalizer::fit(train);
  calibrate_init(model, train.first(std::min<std::size_t>(train.size(), 128)));

  result.model = model;
  result.val_metrics = metrics_of(predict(model, val));

  nn::OptimizerState opt;
  opt.config.lr = cfg.lr;
  Rng rng(derive_seed(cfg.seed, 0x5EED));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<const GraphSample*> batch;
  std::vector<int> labels;
  std::vector<nn::Matrix> grads;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train[order[i]]);
        labels.push_back(train[order[i]]->label);
      }
      nn::Tape tape;
      const auto pass = forward(tape, model, batch, true);
      const auto loss = nn::softmax_cross_entropy(pass.logits, labels);
      tape.backward(loss);
      loss_sum += loss.scalar() * static_cast<double>(batch.size());
      grads.clear();
      for (const auto& p : pass.params) grads.push_back(p.grad());
      auto params = model.parameters();
      nn::adam_step(params, grads, opt);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const auto m = metrics_of(predict(model, val));
    if (m.acc > result.val_metrics.acc) {
      result.val_metrics = m;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(
    const std::vector<GraphSample>& samples, const std::vector<std::size_t>& indices, double fraction,
    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("validation fraction must be in (0, 1)");
  std::vector<std::size_t> by_class[2];
  for (auto i : indices) by_class[samples.at(i).label != 0].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, val;
  for (auto& group : by_class) {
    std::sort(group.begin(), group.end());
    rng.shuffle(group.begin(), group.end());
    auto nv = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(group.size())));
    if (nv == 0 && group.size() >= 2) nv = 1;
    if (nv >= group.size() && !group.empty()) nv = group.size() - 1;
    val.insert(val.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(nv));
    train.insert(train.end(), group.begin() + static_cast<std::ptrdiff_t>(nv), group.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

CvReport summarize_folds(std::vector<Metrics> folds) {
  if (folds.empty()) throw std::invalid_argument("no folds to summarise");
  CvReport r;
  const double k = static_cast<double>(folds.size());
  for (const auto& m : folds) {
    r.mean.acc += m.acc / k;
    r.mean.f1 += m.f1 / k;
    r.mean.tnr += m.tnr / k;
    r.mean.tpr += m.tpr / k;
  }
  for (const auto& m : folds) {
    r.stddev.acc += (m.acc - r.mean.acc) * (m.acc - r.mean.acc) / k;
    r.stddev.f1 += (m.f1 - r.mean.f1) * (m.f1 - r.mean.f1) / k;
    r.stddev.tnr += (m.tnr - r.mean.tnr) * (m.tnr - r.mean.tnr) / k;
    r.stddev.tpr += (m.tpr - r.mean.tpr) * (m.tpr - r.mean.tpr) / k;
  }
  r.stddev = {std::sqrt(r.stddev.acc), std::sqrt(r.stddev.f1), std::sqrt(r.stddev.tnr), std::sqrt(r.stddev.tpr)};
  r.folds = std::move(folds);
  return r;
}

CvReport cross_validate(const std::vector<GraphSample>& samples, const FoldPlan& plan, const TrainConfig& cfg,
                        std::size_t threads) {
  if (plan.assignments.size() != samples.size()) throw TrainError("fold plan does not match the dataset size");
  struct FoldOutput {
    Metrics test;
    std::vector<std::size_t> test_idx;
    std::vector<Prediction> test_pred, val_pred;
    TsaModel model;
  };
  std::vector<FoldOutput> out(plan.k);
  parallel_for(plan.k, threads, [&](std::size_t f) {
    auto& o = out[f];
    o.test_idx = plan.members(f);
    if (o.test_idx.empty()) throw TrainError("fold " + std::to_string(f) + " is empty");
    const auto [tr_idx, va_idx] = split_validation(samples, plan.complement(f), cfg.val_fraction, derive_seed(cfg.seed, f));
    auto ptrs = [&](const std::vector<std::size_t>& idx) {
      std::vector<const GraphSample*> p;
      for (auto i : idx) p.push_back(&samples[i]);
      return p;
    };
    const auto tr = ptrs(tr_idx), va = ptrs(va_idx), te = ptrs(o.test_idx);
    TrainConfig fc = cfg;
    fc.seed = derive_seed(cfg.seed, 100 + f);
    fc.model.seed = derive_seed(cfg.seed, 200 + f);
    auto res = train_fold(tr, va, fc);
    o.test_pred = predict(res.model, te);
    o.val_pred = predict(res.model, va);
    o.test = metrics_of(o.test_pred);
    o.model = std::move(res.model);
  });

  std::vector<Metrics> folds;
  for (const auto& o : out) folds.push_back(o.test);
  auto report = summarize_folds(std::move(folds));
  report.test_predictions.resize(samples.size());
  for (auto& o : out) {
    for (std::size_t i = 0; i < o.test_idx.size(); ++i) report.test_predictions[o.test_idx[i]] = o.test_pred[i];
    report.val_predictions.insert(report.val_predictions.end(), o.val_pred.begin(), o.val_pred.end());
    report.models.push_back(std::move(o.model));
  }
  return report;
}

void write_cv_report(const CvReport& report, std::ostream& out) {
  out << "fold,acc,f1,tnr,tpr\n";
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    const auto& m = report.folds[f];
    out << f << ',' << fixed(100 * m.acc) << ',' << fixed(100 * m.f1) << ',' << fixed(100 * m.tnr) << ','
        << fixed(100 * m.tpr) << '\n';
  }
  auto row = [&](const char* name, const MetricSummary& s) {
    out << name << ',' << fixed(100 * s.acc) << ',' << fixed(100 * s.f1) << ',' << fixed(100 * s.tnr) << ','
        << fixed(100 * s.tpr) << '\n';
  };
  row("mean", report.mean);
  row("std", report.stddev);
}

std::vector<double> threshold_grid(std::size_t n) {
  if (n < 2) throw std::invalid_argument("threshold grid needs at least two points");
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return k;
}

double cr_at(std::span<const Prediction> predictions, double k) {
  std::size_t correct = 0, confident = 0;
  for (const auto& p : predictions) {
    if (!p.correct()) continue;
    ++correct;
    if (p.margin >= k) ++confident;
  }
  if (correct == 0) throw TrainError("credibility rating is undefined: no correct predictions");
  return static_cast<double>(confident) / static_cast<double>(correct);
}

CrCurve compute_cr_curve(std::span<const Prediction> predictions, std::span<const double> thresholds) {
  CrCurve c;
  c.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double k : thresholds) c.cr.push_back(cr_at(predictions, k));
  return c;
}

CrCurve compute_cr_curve(const TsaModel& model, std::span<const GraphSample* const> samples,
                         std::span<const double> thresholds) {
  const auto preds = predict(model, samples);
  return compute_cr_curve(preds, thresholds);
}

double select_threshold(const CrCurve& curve, double target) {
  double best = 0.0;
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    if (curve.cr[i] >= target) best = std::max(best, curve.thresholds[i]);
  return best;
}

void write_cr_curve(const CrCurve& curve, std::ostream& out) {
  out << "k,cr\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << fixed(curve.thresholds[i]) << ',' << fixed(curve.cr[i]) << '\n';
}

}  // namespace tsa
