#pragma once

#include "tsa/autograd.hpp"
#include "tsa/dataset.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tsa {

enum class Pooling { mean, sum, dal };

const char* pooling_name(Pooling p);
Pooling parse_pooling(const std::string& name);

/// Per-feature z-score fitted on a training fold.
struct Normalizer {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> stddev{1.0, 1.0};

  static Normalizer fit(std::span<const GraphSample* const> samples);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
  bool operator==(const Normalizer&) const = default;
};

/// h_v ← MLP((1 + ε)·h_v + Σ_{u∈N(v)} h_u), MLP = Linear → ReLU → Linear.
struct GinLayer {
  double epsilon = 0.0;
  nn::Matrix w1, b1;  // in×hidden, 1×hidden
  nn::Matrix w2, b2;  // hidden×out, 1×out

  Eigen::Index in_dim() const { return w1.rows(); }
  Eigen::Index out_dim() const { return w2.cols(); }
};

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t hidden = 64;
  Pooling pooling = Pooling::dal;
  std::uint64_t seed = 1;
};

struct TsaModel {
  std::vector<GinLayer> layers;
  Pooling pooling = Pooling::dal;
  nn::Matrix fc_w;  // f×2
  nn::Matrix fc_b;  // 1×2
  Normalizer normalizer;

  Eigen::Index embedding_dim() const { return layers.back().out_dim(); }
  /// Parameters in a fixed order: per layer w1, b1, w2, b2; then fc_w, fc_b.
  std::vector<nn::Matrix*> parameters();
  /// Throws std::invalid_argument when dimensions do not chain.
  void check() const;
};

/// Uniform initialisation: GIN weights in ±√(6/fan_in) (Kaiming, ReLU gain),
/// classifier weights in ±√(3/fan_in); biases zero.
TsaModel init_model(const ModelConfig& cfg, Eigen::Index in_dim = 2);

/// Data-dependent rescaling of a fresh model: each layer's second weight
/// matrix is scaled so its output has unit RMS on `batch`, then the
/// classifier is scaled to unit-RMS logits. Sum aggregation and second-order
/// pooling otherwise start with activations far outside the softmax's range.
void calibrate_init(TsaModel& model, std::span<const GraphSample* const> batch);

/// Block-diagonal (1 + ε)I + A over a batch of graphs.
nn::SparseMatrix aggregation_matrix(std::span<const GraphSample* const> batch, double epsilon);

struct ForwardPass {
  std::vector<nn::Value> params;  // same order as TsaModel::parameters()
  nn::Value embeddings;           // stacked final-layer H of the batch
  nn::Value pooled;               // B × f graph representations
  nn::Value logits;               // B × 2
};

/// Records the batch forward pass on `tape`. Features are normalised with
/// the model's normaliser. Parameters are tape variables when `trainable`.
ForwardPass forward(nn::Tape& tape, const TsaModel& model, std::span<const GraphSample* const> batch,
                    bool trainable);

/// Final-layer node embeddings H (n×f) for one graph.
Eigen::MatrixXd gin_forward(const TsaModel& model, const GraphSample& sample);

/// Softmax class probabilities (S0, S1); S0 is "unstable", S1 "stable".
std::array<double, 2> classify(const TsaModel& model, const GraphSample& sample);
/// Row i = (S0, S1) of batch[i].
Eigen::MatrixXd classify_batch(const TsaModel& model, std::span<const GraphSample* const> batch);

/// Versioned JSON checkpoint; every double is written as a hex float so a
/// reload is bit-exact.
void save_model(const TsaModel& model, std::ostream& out);
void save_model(const TsaModel& model, const std::filesystem::path& path);
TsaModel load_model(std::istream& in);
TsaModel load_model(const std::filesystem::path& path);

}  // namespace tsa
