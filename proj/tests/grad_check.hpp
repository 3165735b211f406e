#pragma once

#include "tsa/autograd.hpp"

#include <algorithm>
#include <functional>

// Central finite differences against the tape gradient. Returns
// ‖analytic − numeric‖∞ / max(‖numeric‖∞, 1e-8).
inline double gradient_error(const tsa::nn::Matrix& x0,
                             const std::function<tsa::nn::Value(tsa::nn::Tape&, const tsa::nn::Value&)>& f,
                             double h = 1e-5) {
  using namespace tsa::nn;
  Matrix analytic;
  {
    Tape tape;
    const auto x = tape.variable(x0);
    const auto loss = f(tape, x);
    tape.backward(loss);
    analytic = x.grad().size() ? x.grad() : Matrix::Zero(x0.rows(), x0.cols());
  }
  Matrix numeric(x0.rows(), x0.cols());
  auto eval = [&](const Matrix& x) {
    Tape tape;
    return f(tape, tape.constant(x)).scalar();
  };
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Matrix xp = x0, xm = x0;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    numeric.data()[i] = (eval(xp) - eval(xm)) / (2 * h);
  }
  return (analytic - numeric).cwiseAbs().maxCoeff() / std::max(numeric.cwiseAbs().maxCoeff(), 1e-8);
}
