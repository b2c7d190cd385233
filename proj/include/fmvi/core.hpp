#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace fmvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Single-layer Gaussian latent linear model:
//   p(y_j) = N(0, sigma_y2),  p(x_i | y) = N(b_i + w_i . y, sigma_x2).
// W and b are fixed inputs, never trained. Values are immutable once built;
// all operations on them are pure.
struct GaussianDefModel {
  int n = 0;  // observed variables
  int m = 0;  // latent variables
  RowMatrix W;  // n x m
  Vector b;     // length n
  double sigma_x2 = 1.0;
  double sigma_y2 = 1.0;
};

GaussianDefModel make_model(RowMatrix W, Vector b, double sigma_x2, double sigma_y2);

// Factorized Gaussian variational state: q(y_j | x) = N(mu[j], sigma2[j]).
struct VariationalState {
  Vector mu;
  Vector sigma2;
};

// Prior moments: mu = 0, sigma2 = sigma_y2. Shared starting point for all
// algorithms so traces are comparable.
VariationalState default_init(const GaussianDefModel& model);

// Compressed row and column views of W. Update loops walk these so that
// per-iteration cost is O(nnz(W)) rather than O(n*m); the window models are
// more than 90% zeros. Entries are stored in index order, which pins the
// reduction order and keeps results independent of the thread count.
struct SparseWeights {
  std::vector<int> row_ptr;  // size n+1
  std::vector<int> row_col;
  std::vector<double> row_val;
  std::vector<int> col_ptr;  // size m+1
  std::vector<int> col_row;
  std::vector<double> col_val;
  std::vector<int> zero_rows;  // rows of W without any nonzero entry

  static SparseWeights from(const RowMatrix& W);
};

struct TraceRow {
  long iteration = 0;
  double ridge_loss = 0.0;
  double elbo = 0.0;
  std::optional<double> fm_bound;  // populated only for FM traces
  std::optional<double> gap;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
};

// Throw std::invalid_argument naming the violated invariant: dimension
// mismatch, non-positive variance, or non-finite entry.
void validate_model(const GaussianDefModel& model);
void validate_state(const GaussianDefModel& model, const VariationalState& q);
void validate_observation(const GaussianDefModel& model, const Vector& x);

// b + W mu, walked row-wise over the sparse view.
Vector predictor_mean(const GaussianDefModel& model, const SparseWeights& sw, const Vector& mu);

// Mean-field evidence lower bound, all Gaussian expectations in closed form:
//   sum_i E[log p(x_i|y)] + sum_j (E[log p(y_j)] + H(y_j | x))
double elbo(const GaussianDefModel& model, const Vector& x, const VariationalState& q);
double elbo(const GaussianDefModel& model, const SparseWeights& sw, const Vector& x,
            const VariationalState& q);

// (1/2 sigma_x2) sum_i (x_i - (b_i + w_i . mu))^2 + (1/2 sigma_y2) sum_j mu_j^2.
// Minimizing this over mu is equivalent to maximizing the ELBO over the
// variational means.
double ridge_loss(const GaussianDefModel& model, const Vector& x, const Vector& mu);
double ridge_loss(const GaussianDefModel& model, const SparseWeights& sw, const Vector& x,
                  const Vector& mu);

struct Posterior {
  Vector mean;        // unique ridge-loss minimizer
  Matrix covariance;  // inverse of Lambda = (1/sigma_y2) I + (1/sigma_x2) W^T W
};

// Exact Gaussian posterior p(y | x) via Cholesky factorization of Lambda.
// Lambda is positive definite whenever sigma_y2 > 0; a factorization failure
// is an invariant violation and throws std::logic_error.
Posterior exact_posterior(const GaussianDefModel& model, const Vector& x);

}  // namespace fmvi
