#include "fmvi/core.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fmvi/summation.hpp"

namespace fmvi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

GaussianDefModel make_model(RowMatrix W, Vector b, double sigma_x2, double sigma_y2) {
  GaussianDefModel model;
  model.n = static_cast<int>(W.rows());
  model.m = static_cast<int>(W.cols());
  model.W = std::move(W);
  model.b = std::move(b);
  model.sigma_x2 = sigma_x2;
  model.sigma_y2 = sigma_y2;
  validate_model(model);
  return model;
}

VariationalState default_init(const GaussianDefModel& model) {
  VariationalState q;
  q.mu = Vector::Zero(model.m);
  q.sigma2 = Vector::Constant(model.m, model.sigma_y2);
  return q;
}

SparseWeights SparseWeights::from(const RowMatrix& W) {
  const int n = static_cast<int>(W.rows());
  const int m = static_cast<int>(W.cols());
  SparseWeights sw;
  sw.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  sw.col_ptr.assign(static_cast<std::size_t>(m) + 1, 0);

  std::size_t nnz = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (W(i, j) != 0.0) ++nnz;
    }
  }
  sw.row_col.reserve(nnz);
  sw.row_val.reserve(nnz);

  std::vector<int> col_count(m, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double w = W(i, j);
      if (w != 0.0) {
        sw.row_col.push_back(j);
        sw.row_val.push_back(w);
        ++col_count[j];
      }
    }
    sw.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(sw.row_col.size());
    if (sw.row_ptr[i] == sw.row_ptr[static_cast<std::size_t>(i) + 1]) sw.zero_rows.push_back(i);
  }

  for (int j = 0; j < m; ++j) sw.col_ptr[static_cast<std::size_t>(j) + 1] = sw.col_ptr[j] + col_count[j];
  sw.col_row.assign(nnz, 0);
  sw.col_val.assign(nnz, 0.0);
  std::vector<int> cursor(sw.col_ptr.begin(), sw.col_ptr.end() - 1);
  for (int i = 0; i < n; ++i) {
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = sw.row_col[k];
      const int at = cursor[j]++;
      sw.col_row[at] = i;  // rows appear in ascending order per column
      sw.col_val[at] = sw.row_val[k];
    }
  }
  return sw;
}

void validate_model(const GaussianDefModel& model) {
  if (model.n < 1 || model.m < 1) {
    throw std::invalid_argument("model: dimension mismatch, need n >= 1 and m >= 1");
  }
  if (model.W.rows() != model.n || model.W.cols() != model.m) {
    throw std::invalid_argument("model: dimension mismatch, W must be n x m");
  }
  if (model.b.size() != model.n) {
    throw std::invalid_argument("model: dimension mismatch, len(b) must equal rows of W");
  }
  if (!(model.sigma_x2 > 0.0) || !std::isfinite(model.sigma_x2) ||
      !(model.sigma_y2 > 0.0) || !std::isfinite(model.sigma_y2)) {
    throw std::invalid_argument("model: non-positive variance, sigma_x2 and sigma_y2 must be > 0");
  }
  if (!model.W.allFinite() || !model.b.allFinite()) {
    throw std::invalid_argument("model: non-finite entry in W or b");
  }
}

void validate_state(const GaussianDefModel& model, const VariationalState& q) {
  if (q.mu.size() != model.m || q.sigma2.size() != model.m) {
    throw std::invalid_argument("state: dimension mismatch, mu and sigma2 must have length m");
  }
  for (int j = 0; j < model.m; ++j) {
    if (!(q.sigma2[j] > 0.0) || !std::isfinite(q.sigma2[j])) {
      throw std::invalid_argument("state: non-positive variance at index " + std::to_string(j));
    }
  }
  if (!q.mu.allFinite()) throw std::invalid_argument("state: non-finite entry in mu");
}

void validate_observation(const GaussianDefModel& model, const Vector& x) {
  if (x.size() != model.n) {
    throw std::invalid_argument("observation: dimension mismatch, len(x) must equal n");
  }
  if (!x.allFinite()) throw std::invalid_argument("observation: non-finite entry in x");
}

Vector predictor_mean(const GaussianDefModel& model, const SparseWeights& sw, const Vector& mu) {
  Vector eta(model.n);
  for (int i = 0; i < model.n; ++i) {
    double acc = model.b[i];
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      acc += sw.row_val[k] * mu[sw.row_col[k]];
    }
    eta[i] = acc;
  }
  return eta;
}

double elbo(const GaussianDefModel& model, const SparseWeights& sw, const Vector& x,
            const VariationalState& q) {
  const double sx2 = model.sigma_x2;
  const double sy2 = model.sigma_y2;
  CompensatedSum acc;
  for (int i = 0; i < model.n; ++i) {
    double mean_eta = model.b[i];
    double var_eta = 0.0;
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const double w = sw.row_val[k];
      const int j = sw.row_col[k];
      mean_eta += w * q.mu[j];
      var_eta += w * w * q.sigma2[j];
    }
    const double r = x[i] - mean_eta;
    acc.add(-0.5 * (kLog2Pi + std::log(sx2)) - (r * r + var_eta) / (2.0 * sx2));
  }
  for (int j = 0; j < model.m; ++j) {
    const double prior = -0.5 * (kLog2Pi + std::log(sy2)) -
                         (q.mu[j] * q.mu[j] + q.sigma2[j]) / (2.0 * sy2);
    const double entropy = 0.5 * (kLog2Pi + 1.0 + std::log(q.sigma2[j]));
    acc.add(prior + entropy);
  }
  return acc.value();
}

double elbo(const GaussianDefModel& model, const Vector& x, const VariationalState& q) {
  validate_observation(model, x);
  validate_state(model, q);
  return elbo(model, SparseWeights::from(model.W), x, q);
}

double ridge_loss(const GaussianDefModel& model, const SparseWeights& sw, const Vector& x,
                  const Vector& mu) {
  CompensatedSum acc;
  for (int i = 0; i < model.n; ++i) {
    double mean_eta = model.b[i];
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      mean_eta += sw.row_val[k] * mu[sw.row_col[k]];
    }
    const double r = x[i] - mean_eta;
    acc.add(r * r / (2.0 * model.sigma_x2));
  }
  for (int j = 0; j < model.m; ++j) acc.add(mu[j] * mu[j] / (2.0 * model.sigma_y2));
  return acc.value();
}

double ridge_loss(const GaussianDefModel& model, const Vector& x, const Vector& mu) {
  validate_observation(model, x);
  if (mu.size() != model.m) {
    throw std::invalid_argument("ridge_loss: dimension mismatch, len(mu) must equal m");
  }
  return ridge_loss(model, SparseWeights::from(model.W), x, mu);
}

Posterior exact_posterior(const GaussianDefModel& model, const Vector& x) {
  validate_model(model);
  validate_observation(model, x);
  const SparseWeights sw = SparseWeights::from(model.W);

  Matrix lambda = Matrix::Zero(model.m, model.m);
  lambda.diagonal().setConstant(1.0 / model.sigma_y2);
  Vector rhs = Vector::Zero(model.m);
  const double inv_sx2 = 1.0 / model.sigma_x2;
  for (int i = 0; i < model.n; ++i) {
    const double res = x[i] - model.b[i];
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = sw.row_col[k];
      const double w = sw.row_val[k];
      rhs[j] += inv_sx2 * w * res;
      for (int k2 = sw.row_ptr[i]; k2 < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k2) {
        lambda(j, sw.row_col[k2]) += inv_sx2 * w * sw.row_val[k2];
      }
    }
  }

  Eigen::LLT<Matrix> llt(lambda);
  if (llt.info() != Eigen::Success) {
    throw std::logic_error("exact_posterior: Cholesky factorization failed on a PD matrix");
  }
  Posterior post;
  post.mean = llt.solve(rhs);
  post.covariance = llt.solve(Matrix::Identity(model.m, model.m));
  return post;
}

}  // namespace fmvi
