#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

/// Dense reverse-mode automatic differentiation, just large enough for GIN
/// layers, second-order pooling and a softmax classifier.
namespace tsa::nn {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;

  const Matrix& data() const;
  /// Gradient of the last backward() target; zero-sized if none reached here.
  const Matrix& grad() const;
  Eigen::Index rows() const { return data().rows(); }
  Eigen::Index cols() const { return data().cols(); }
  double scalar() const { return data()(0, 0); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Value variable(Matrix m);
  /// Leaf treated as a constant.
  Value constant(Matrix m);

  /// Reverse sweep from a 1×1 loss. Gradients of variables accumulate across
  /// calls; intermediate gradients are recomputed on every call. Callers that
  /// reuse a tape for several steps must zero_grad() in between.
  void backward(const Value& loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(const Value& v) const { return nodes_[v.id()].requires_grad; }

  // Used by the operation implementations.
  Value record(Matrix data, std::span<const Value> parents, BackwardFn fn);
  Value record(Matrix data, std::initializer_list<Value> parents, BackwardFn fn) {
    return record(std::move(data), std::span<const Value>(parents.begin(), parents.size()), std::move(fn));
  }
  void accumulate(const Value& v, const Matrix& g);
  /// Adds g into rows [start, start + g.rows()) of v's gradient.
  void accumulate_rows(const Value& v, Eigen::Index start, const Matrix& g);
  const Matrix& data(std::size_t id) const { return nodes_[id].data; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Matrix data;
    Matrix grad;
    bool requires_grad = false;
    bool leaf = true;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable references across push_back
};

Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
/// a (n×f) + row (1×f) broadcast over rows.
Value add_row(const Value& a, const Value& row);
Value relu(const Value& a);
Value scale(const Value& a, double c);
Value transpose(const Value& a);
/// Average of the rows: n×f → 1×f.
Value mean_over_rows(const Value& a);
/// Sum of the rows: n×f → 1×f.
Value sum_over_rows(const Value& a);
/// Average of the columns: n×f → n×1.
Value mean_over_cols(const Value& a);
/// Sum of every entry: → 1×1.
Value sum(const Value& a);
/// (1/n)·H̃ᵀH̃ with H̃ the column-centred input: n×f → f×f.
Value covariance(const Value& h);
/// s (constant, sparse) · a.
Value sparse_matmul(const SparseMatrix& s, const Value& a);
Value slice_rows(const Value& a, Eigen::Index start, Eigen::Index count);
Value vstack(std::span<const Value> parts);
/// Mean over rows of -log softmax(logits)[label]; logits B×C, labels in [0, C).
Value softmax_cross_entropy(const Value& logits, std::span<const int> labels);

/// Row-wise softmax of a plain matrix.
Matrix softmax_rows(const Matrix& logits);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
};

/// Bias-corrected Adam update of `params` with matching `grads`.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state);

}  // namespace tsa::nn
