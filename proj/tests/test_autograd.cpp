#include "grad_check.hpp"
#include "tsa/rng.hpp"

#include <doctest.h>

using namespace tsa;
using namespace tsa::nn;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}

// Weighted sum so every output entry gets a distinct upstream gradient.
Value weighted(Tape& t, const Value& v, std::uint64_t seed) {
  Rng rng(seed);
  const auto w = t.constant(random_matrix(rng, v.cols(), 1));
  return sum(matmul(v, w));
}

Matrix naive_covariance(const Matrix& h) {
  const auto n = h.rows(), f = h.cols();
  Matrix mu = Matrix::Zero(1, f);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < f; ++a) mu(0, a) += h(i, a) / static_cast<double>(n);
  Matrix s = Matrix::Zero(f, f);
  for (Eigen::Index a = 0; a < f; ++a)
    for (Eigen::Index b = 0; b < f; ++b)
      for (Eigen::Index i = 0; i < n; ++i)
        s(a, b) += (h(i, a) - mu(0, a)) * (h(i, b) - mu(0, b)) / static_cast<double>(n);
  return s;
}

}  // namespace

TEST_CASE("relu") {
  Tape t;
  Matrix x(1, 2);
  x << -1, 2;
  const auto y = relu(t.constant(x));
  CHECK(y.data()(0, 0) == 0.0);
  CHECK(y.data()(0, 1) == 2.0);
}

TEST_CASE("covariance examples") {
  Tape t;
  Matrix h(2, 2);
  h << 1, 2, 3, 4;
  const auto c = covariance(t.constant(h));
  CHECK((c.data() - Matrix::Ones(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  CHECK(covariance(t.constant(same)).data().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariance matches a double loop, is symmetric and PSD") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.index(30)), f = static_cast<Eigen::Index>(1 + rng.index(12));
    const auto h = random_matrix(rng, n, f);
    Tape t;
    const Matrix c = covariance(t.constant(h)).data();
    CHECK((c - naive_covariance(h)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(c);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("gradient of x'x") {
  Tape t;
  Matrix x0(2, 1);
  x0 << 1, 2;
  const auto x = t.variable(x0);
  const auto loss = matmul(transpose(x), x);
  t.backward(loss);
  CHECK(x.grad()(0, 0) == doctest::Approx(2.0));
  CHECK(x.grad()(1, 0) == doctest::Approx(4.0));
}

TEST_CASE("primitive gradients match finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.index(6)), f = static_cast<Eigen::Index>(1 + rng.index(5));
    const auto x0 = random_matrix(rng, n, f);
    const auto other = random_matrix(rng, f, 3);
    const auto row = random_matrix(rng, 1, f);
    const auto seed = rng.next();

    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, matmul(x, t.constant(other)), seed); }) < 1e-6);
    CHECK(gradient_error(other, [&](Tape& t, const Value& w) { return weighted(t, matmul(t.constant(x0), w), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, add(x, x), seed); }) < 1e-6);
    CHECK(gradient_error(row, [&](Tape& t, const Value& r) { return weighted(t, add_row(t.constant(x0), r), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, add_row(x, t.constant(row)), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, relu(x), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, scale(x, -2.5), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, transpose(x), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, mean_over_rows(x), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, sum_over_rows(x), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, mean_over_cols(x), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, covariance(x), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) { return weighted(t, slice_rows(x, 1, n - 1), seed); }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) {
            const Value parts[] = {slice_rows(x, 0, 1), x, slice_rows(x, n - 1, 1)};
            return weighted(t, vstack(parts), seed);
          }) < 1e-6);
    CHECK(gradient_error(x0, [&](Tape& t, const Value& x) {
            SparseMatrix s(n, n);
            const auto last = static_cast<int>(n - 1);
            std::vector<Eigen::Triplet<double>> trips{{0, 0, 1.5}, {0, last, 1.0}, {last, 0, -2.0}};
            s.setFromTriplets(trips.begin(), trips.end());
            return weighted(t, sparse_matmul(s, x), seed);
          }) < 1e-6);
    const auto logits = random_matrix(rng, n, 2);
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.index(2)));
    CHECK(gradient_error(logits, [&](Tape&, const Value& z) { return softmax_cross_entropy(z, labels); }) < 1e-6);
  }
}

TEST_CASE("covariance entry gradient") {
  Rng rng(5);
  const auto h0 = random_matrix(rng, 6, 3);
  CHECK(gradient_error(h0, [](Tape& t, const Value& h) {
          const auto c = covariance(h);
          Matrix pick = Matrix::Zero(3, 1);
          pick(2, 0) = 1.0;
          Matrix left = Matrix::Zero(1, 3);
          left(0, 0) = 1.0;
          return matmul(matmul(t.constant(left), c), t.constant(pick));  // Σ_02
        }) < 1e-6);
}

TEST_CASE("fan-out accumulates and repeated backward accumulates on leaves") {
  Tape t;
  const auto x = t.variable(Matrix::Constant(1, 1, 3.0));
  const auto y = add(x, x);  // dy/dx = 2
  t.backward(sum(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(2.0));
  t.backward(sum(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(4.0));
  t.zero_grad();
  t.backward(sum(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("backward needs a scalar") {
  Tape t;
  const auto x = t.variable(Matrix::Ones(2, 2));
  CHECK_THROWS(t.backward(x));
}

TEST_CASE("softmax cross-entropy value") {
  Tape t;
  Matrix z(2, 2);
  z << 0, 0, 2, 0;
  const int labels[] = {0, 1};
  const auto loss = softmax_cross_entropy(t.constant(z), labels);
  const double expected = (std::log(2.0) + (std::log(std::exp(2.0) + 1.0))) / 2.0;
  CHECK(loss.scalar() == doctest::Approx(expected).epsilon(1e-14));
  const auto p = softmax_rows(z);
  CHECK(p.rowwise().sum().isApprox(Eigen::VectorXd::Ones(2)));
}

TEST_CASE("Adam") {
  SUBCASE("hand-computed first step") {
    Matrix theta = Matrix::Constant(1, 1, 1.0);
    Matrix* params[] = {&theta};
    const Matrix grads[] = {Matrix::Constant(1, 1, 0.5)};
    OptimizerState st;
    st.config.lr = 0.1;
    adam_step(params, grads, st);
    // m̂ = 0.5, v̂ = 0.25 → step = 0.1 · 0.5 / (0.5 + 1e-8)
    CHECK(theta(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
    CHECK(st.step == 1);
  }
  SUBCASE("zero gradient leaves parameters") {
    Matrix theta = Matrix::Constant(2, 2, 0.3);
    const Matrix before = theta;
    Matrix* params[] = {&theta};
    const Matrix grads[] = {Matrix::Zero(2, 2)};
    OptimizerState st;
    for (int i = 0; i < 5; ++i) adam_step(params, grads, st);
    CHECK(theta == before);
  }
  SUBCASE("constant gradient descends") {
    Matrix theta = Matrix::Constant(1, 1, 0.0);
    Matrix* params[] = {&theta};
    const Matrix grads[] = {Matrix::Constant(1, 1, -3.0)};
    OptimizerState st;
    for (int i = 0; i < 100; ++i) adam_step(params, grads, st);
    CHECK(theta(0, 0) > 0.05);
  }
}
