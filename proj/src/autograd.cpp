#include "tsa/autograd.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tsa::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace

const Matrix& Value::data() const { return tape_->data(id_); }
const Matrix& Value::grad() const { return tape_->grad(id_); }

Value Tape::variable(Matrix m) {
  nodes_.push_back(Node{std::move(m), Matrix(), true, true, nullptr});
  return Value(this, nodes_.size() - 1);
}

Value Tape::constant(Matrix m) {
  nodes_.push_back(Node{std::move(m), Matrix(), false, true, nullptr});
  return Value(this, nodes_.size() - 1);
}

Value Tape::record(Matrix data, std::span<const Value> parents, BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) {
    assert(p.tape() == this);
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(data), Matrix(), needs, false, needs ? std::move(fn) : nullptr});
  return Value(this, nodes_.size() - 1);
}

void Tape::accumulate(const Value& v, const Matrix& g) {
  auto& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0)
    node.grad = g;
  else
    node.grad += g;
}

void Tape::accumulate_rows(const Value& v, Eigen::Index start, const Matrix& g) {
  auto& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.data.rows(), node.data.cols());
  node.grad.middleRows(start, g.rows()) += g;
}

void Tape::backward(const Value& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward() needs a 1x1 loss");
  for (auto& n : nodes_)
    if (!n.leaf) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss, Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.leaf || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.resize(0, 0);
}

Value matmul(const Value& a, const Value& b) {
  require(a.cols() == b.rows(), "matmul");
  Tape& t = *a.tape();
  return t.record(a.data() * b.data(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.data().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.data().transpose() * g);
  });
}

Value add(const Value& a, const Value& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape& t = *a.tape();
  return t.record(a.data() + b.data(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Value add_row(const Value& a, const Value& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape& t = *a.tape();
  Matrix out = a.data().rowwise() + row.data().row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) tp.accumulate(row, g.colwise().sum());
  });
}

Value relu(const Value& a) {
  Tape& t = *a.tape();
  return t.record(a.data().cwiseMax(0.0), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (a.data().array() > 0.0).select(g, 0.0));
  });
}

Value scale(const Value& a, double c) {
  Tape& t = *a.tape();
  return t.record(a.data() * c, {a}, [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g * c); });
}

Value transpose(const Value& a) {
  Tape& t = *a.tape();
  return t.record(a.data().transpose(), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Value mean_over_rows(const Value& a) {
  require(a.rows() > 0, "mean_over_rows of empty matrix");
  Tape& t = *a.tape();
  const auto n = static_cast<double>(a.rows());
  return t.record(a.data().colwise().mean(), {a}, [a, n](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.replicate(a.rows(), 1) / n);
  });
}

Value sum_over_rows(const Value& a) {
  Tape& t = *a.tape();
  return t.record(a.data().colwise().sum(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.replicate(a.rows(), 1));
  });
}

Value mean_over_cols(const Value& a) {
  require(a.cols() > 0, "mean_over_cols of empty matrix");
  Tape& t = *a.tape();
  const auto f = static_cast<double>(a.cols());
  return t.record(a.data().rowwise().mean(), {a}, [a, f](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.replicate(1, a.cols()) / f);
  });
}

Value sum(const Value& a) {
  Tape& t = *a.tape();
  return t.record(Matrix::Constant(1, 1, a.data().sum()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Value covariance(const Value& h) {
  require(h.rows() > 0, "covariance of empty matrix");
  Tape& t = *h.tape();
  const auto n = static_cast<double>(h.rows());
  Matrix centred = h.data().rowwise() - h.data().colwise().mean();
  Matrix cov = (centred.transpose() * centred) / n;
  // Exact symmetry regardless of summation order in the product kernel.
  cov = 0.5 * (cov + cov.transpose()).eval();
  return t.record(std::move(cov), {h}, [h, n, centred = std::move(centred)](Tape& tp, const Matrix& g) {
    // Columns of the centred matrix sum to zero, so the centring Jacobian
    // drops out: dL/dH = H̃ (G + Gᵀ) / n.
    tp.accumulate(h, centred * (g + g.transpose()) / n);
  });
}

Value sparse_matmul(const SparseMatrix& s, const Value& a) {
  require(s.cols() == a.rows(), "sparse_matmul");
  Tape& t = *a.tape();
  Matrix out = s * a.data();
  return t.record(std::move(out), {a}, [s, a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, s.transpose() * g);
  });
}

Value slice_rows(const Value& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  Tape& t = *a.tape();
  return t.record(a.data().middleRows(start, count), {a}, [a, start, count](Tape& tp, const Matrix& g) {
    assert(g.rows() == count);
    tp.accumulate_rows(a, start, g);
  });
}

Value vstack(std::span<const Value> parts) {
  require(!parts.empty(), "vstack of nothing");
  Tape& t = *parts.front().tape();
  Eigen::Index rows = 0;
  const auto cols = parts.front().cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, "vstack");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.data();
    r += p.rows();
  }
  std::vector<Value> owned(parts.begin(), parts.end());
  return t.record(std::move(out), std::span<const Value>(owned), [owned](Tape& tp, const Matrix& g) {
    Eigen::Index row = 0;
    for (const auto& p : owned) {
      tp.accumulate(p, g.middleRows(row, p.rows()));
      row += p.rows();
    }
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

Value softmax_cross_entropy(const Value& logits, std::span<const int> labels) {
  require(static_cast<std::size_t>(logits.rows()) == labels.size() && !labels.empty(), "softmax_cross_entropy");
  Tape& t = *logits.tape();
  const Matrix& z = logits.data();
  const Matrix shifted = z.colwise() - z.rowwise().maxCoeff();
  const Eigen::VectorXd log_norm = shifted.array().exp().rowwise().sum().log();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < z.cols(), "label out of range");
    loss -= shifted(r, y) - log_norm[r];
  }
  const auto b = static_cast<double>(z.rows());
  std::vector<int> ys(labels.begin(), labels.end());
  return t.record(Matrix::Constant(1, 1, loss / b), {logits}, [logits, ys, b](Tape& tp, const Matrix& g) {
    Matrix grad = softmax_rows(logits.data());
    for (std::size_t r = 0; r < ys.size(); ++r) grad(static_cast<Eigen::Index>(r), ys[r]) -= 1.0;
    tp.accumulate(logits, grad * (g(0, 0) / b));
  });
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads size mismatch");
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.size() == 0) continue;  // parameter not reached by the loss
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.rows() != g.rows() || m.cols() != g.cols()) throw std::invalid_argument("adam_step: shape mismatch");
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
    params[i]->array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  }
}

}  // namespace tsa::nn
