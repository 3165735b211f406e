#pragma once

#include "tsa/autograd.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace tsa {

/// Distribution-aware readout of node embeddings H (n×f):
///   μ = mean of the rows, Σ = (1/n)·H̃ᵀH̃, z = Σμ.
/// A single row gives Σ = 0 and therefore z = 0.
struct PoolResult {
  Eigen::VectorXd z;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

PoolResult dal_pool(const Eigen::MatrixXd& h);

/// Same readout on the autograd tape. `z` and `mu` are 1×f rows.
struct DalNodes {
  nn::Value z;
  nn::Value mu;
  nn::Value sigma;
};
DalNodes dal_pool(const nn::Value& h);

Eigen::VectorXd mean_pool(const Eigen::MatrixXd& h);
Eigen::VectorXd sum_pool(const Eigen::MatrixXd& h);

class SpectralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EigenDecomposition {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi rotations for a symmetric matrix. Throws SpectralError if
/// the off-diagonal mass does not vanish within `max_sweeps`.
EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& a, int max_sweeps = 100);

/// Eigen-space view of z = Σμ: α = Uᵀμ and z ≈ Σᵢ λᵢ αᵢ uᵢ.
struct SpectralDiagnostics {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  Eigen::VectorXd alpha;
  Eigen::VectorXd reconstruction;
  double residual = 0.0;       // ‖Σμ − Σᵢ λᵢ αᵢ uᵢ‖
  double orthogonality = 0.0;  // max |UᵀU − I|
  std::size_t rank = 0;        // eigenvalues above 1e-12·max(1, λ₁)
  int sweeps = 0;
};

SpectralDiagnostics spectral_check(const PoolResult& result);

}  // namespace tsa
