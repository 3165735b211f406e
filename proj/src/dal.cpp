#include "tsa/dal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace tsa {

PoolResult dal_pool(const Eigen::MatrixXd& h) {
  if (h.rows() == 0) throw std::invalid_argument("dal_pool needs at least one row");
  PoolResult r;
  r.mu = h.colwise().mean().transpose();
  const Eigen::MatrixXd centred = h.rowwise() - r.mu.transpose();
  r.sigma = (centred.transpose() * centred) / static_cast<double>(h.rows());
  r.sigma = 0.5 * (r.sigma + r.sigma.transpose()).eval();
  r.z = r.sigma * r.mu;
  return r;
}

DalNodes dal_pool(const nn::Value& h) {
  DalNodes out;
  out.mu = nn::mean_over_rows(h);
  out.sigma = nn::covariance(h);
  // μᵀΣ is the row form of Σμ because Σ is symmetric.
  out.z = nn::matmul(out.mu, out.sigma);
  return out;
}

Eigen::VectorXd mean_pool(const Eigen::MatrixXd& h) {
  if (h.rows() == 0) throw std::invalid_argument("mean_pool needs at least one row");
  return h.colwise().mean().transpose();
}

Eigen::VectorXd sum_pool(const Eigen::MatrixXd& h) { return h.colwise().sum().transpose(); }

EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& input, int max_sweeps) {
  const auto n = input.rows();
  if (input.cols() != n) throw std::invalid_argument("jacobi_eigen needs a square matrix");
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  EigenDecomposition out;
  int sweep = 0;
  for (; sweep < max_sweeps && off_norm() > 1e-14 * scale; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A ← JᵀAJ applied to rows/columns p and q.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() > 1e-12 * scale)
    throw SpectralError("Jacobi eigensolver did not converge in " + std::to_string(max_sweeps) + " sweeps");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  out.sweeps = sweep;
  return out;
}

SpectralDiagnostics spectral_check(const PoolResult& result) {
  const auto& sigma = result.sigma;
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw SpectralError("covariance is not symmetric");
  const auto eig = jacobi_eigen(sigma);
  SpectralDiagnostics d;
  d.eigenvalues = eig.values;
  d.eigenvectors = eig.vectors;
  d.sweeps = eig.sweeps;
  d.alpha = eig.vectors.transpose() * result.mu;
  d.reconstruction = Eigen::VectorXd::Zero(result.mu.size());
  for (Eigen::Index i = 0; i < eig.values.size(); ++i)
    d.reconstruction += eig.values[i] * d.alpha[i] * eig.vectors.col(i);
  const Eigen::VectorXd direct = sigma * result.mu;
  d.residual = (direct - d.reconstruction).norm();
  const auto n = eig.vectors.cols();
  d.orthogonality = (eig.vectors.transpose() * eig.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
  const double cut = 1e-12 * std::max(1.0, eig.values.size() ? eig.values[0] : 0.0);
  d.rank = static_cast<std::size_t>((eig.values.array() > cut).count());
  return d;
}

}  // namespace tsa
