#pragma once

#include "tsa/dataset.hpp"
#include "tsa/gin.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

namespace tsa {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary classification metrics with "stable" (label 1) as the positive
/// class. A rate whose denominator is empty is reported as 0 and flagged.
struct Metrics {
  double acc = 0.0;
  double f1 = 0.0;
  double tnr = 0.0;
  double tpr = 0.0;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  bool tpr_undefined = false;
  bool tnr_undefined = false;
  bool f1_undefined = false;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(std::span<const int> labels, std::span<const int> predictions);

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  double val_fraction = 0.1;  // carved from each training fold
  std::uint64_t seed = 1;
};

struct TrainResult {
  TsaModel model;      // best epoch by validation accuracy
  Metrics val_metrics;
  std::size_t best_epoch = 0;  // 0 = initialisation
  std::vector<double> epoch_loss;
};

/// Mini-batch Adam on softmax cross-entropy. The normaliser is fitted on
/// `train`. Deterministic for a given config.
TrainResult train_fold(std::span<const GraphSample* const> train, std::span<const GraphSample* const> val,
                       const TrainConfig& cfg);

/// Per-sample classifier output.
struct Prediction {
  int label = 0;       // ground truth
  int predicted = 0;   // argmax(S0, S1)
  double margin = 0;   // |S0 - S1|
  bool correct() const { return label == predicted; }
};

std::vector<Prediction> predict(const TsaModel& model, std::span<const GraphSample* const> samples,
                                std::size_t batch_size = 256);
Metrics metrics_of(std::span<const Prediction> predictions);

/// Stratified split of `indices` into (train, validation); each class
/// contributes round(fraction·count) samples, at least one when it has two.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(
    const std::vector<GraphSample>& samples, const std::vector<std::size_t>& indices, double fraction,
    std::uint64_t seed);

struct MetricSummary {
  double acc = 0, f1 = 0, tnr = 0, tpr = 0;
  bool operator==(const MetricSummary&) const = default;
};

struct CvReport {
  std::vector<Metrics> folds;  // held-out test metrics
  MetricSummary mean;
  MetricSummary stddev;        // population (divide by k)
  std::vector<Prediction> test_predictions;  // indexed like the dataset
  std::vector<Prediction> val_predictions;   // concatenated over folds
  std::vector<TsaModel> models;
};

CvReport summarize_folds(std::vector<Metrics> folds);

/// k rounds of train-on-complement / test-on-fold; folds run in parallel.
CvReport cross_validate(const std::vector<GraphSample>& samples, const FoldPlan& plan, const TrainConfig& cfg,
                        std::size_t threads = 1);

/// CSV: fold,acc,f1,tnr,tpr with values ×100, then mean and std rows.
void write_cv_report(const CvReport& report, std::ostream& out);

struct CrCurve {
  std::vector<double> thresholds;
  std::vector<double> cr;
};

/// n evenly spaced thresholds covering [0, 1].
std::vector<double> threshold_grid(std::size_t n = 100);

/// cr(k) = |correct ∧ margin ≥ k| / |correct|. Throws TrainError when no
/// prediction is correct.
CrCurve compute_cr_curve(std::span<const Prediction> predictions, std::span<const double> thresholds);
CrCurve compute_cr_curve(const TsaModel& model, std::span<const GraphSample* const> samples,
                         std::span<const double> thresholds);

/// Value of the curve at k, evaluated directly on the predictions.
double cr_at(std::span<const Prediction> predictions, double k);

/// Largest grid threshold whose cr still reaches `target`.
double select_threshold(const CrCurve& curve, double target);

/// CSV: k,cr.
void write_cr_curve(const CrCurve& curve, std::ostream& out);

}  // namespace tsa
