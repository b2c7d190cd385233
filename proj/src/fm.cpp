#include "fmvi/fm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fmvi/parallel.hpp"
#include "fmvi/summation.hpp"

namespace fmvi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// KL(N(mu, s2) || N(0, sy2)) in closed form.
double gaussian_kl(double mu, double s2, double sy2) {
  return 0.5 * (s2 / sy2 + mu * mu / sy2 - 1.0 + std::log(sy2 / s2));
}

AuxParams optimal_aux_impl(const RowMatrix& W, const Vector& b, const SparseWeights& sw,
                           const VariationalState& q) {
  const int n = static_cast<int>(W.rows());
  const int m = static_cast<int>(W.cols());
  const Vector sd = q.sigma2.cwiseSqrt();

  AuxParams aux;
  aux.eps = RowMatrix::Zero(n, m);
  aux.bhat = RowMatrix::Zero(n, m);

  for (int i = 0; i < n; ++i) {
    const int lo = sw.row_ptr[i];
    const int hi = sw.row_ptr[static_cast<std::size_t>(i) + 1];
    if (lo == hi) {
      // Row without children: any simplex point is optimal, pick uniform.
      aux.eps.row(i).setConstant(1.0 / m);
      aux.bhat.row(i).setConstant(b[i]);
      continue;
    }
    double eta = b[i];
    double denom = 0.0;
    for (int k = lo; k < hi; ++k) {
      const int j = sw.row_col[k];
      const double w = sw.row_val[k];
      eta += w * q.mu[j];
      denom += std::fabs(w) * sd[j];
    }
    aux.bhat.row(i).setConstant(eta);  // zero-weight entries carry no w term
    for (int k = lo; k < hi; ++k) {
      const int j = sw.row_col[k];
      const double w = sw.row_val[k];
      const double e = std::fabs(w) * sd[j] / denom;
      aux.eps(i, j) = e;
      aux.bhat(i, j) = eta - w * q.mu[j] / e;
    }
  }
  return aux;
}

}  // namespace

void validate_aux(const GaussianDefModel& model, const AuxParams& aux) {
  if (aux.eps.rows() != model.n || aux.eps.cols() != model.m ||
      aux.bhat.rows() != model.n || aux.bhat.cols() != model.m) {
    throw std::invalid_argument("aux: dimension mismatch, eps and bhat must be n x m");
  }
  if (!aux.eps.allFinite() || !aux.bhat.allFinite()) {
    throw std::invalid_argument("aux: non-finite entry");
  }
  for (int i = 0; i < model.n; ++i) {
    CompensatedSum simplex;
    CompensatedSum split;
    for (int j = 0; j < model.m; ++j) {
      const double e = aux.eps(i, j);
      if (e < 0.0) {
        throw std::invalid_argument("aux: negative eps at row " + std::to_string(i));
      }
      simplex.add(e);
      if (e > 0.0) split.add(e * aux.bhat(i, j));
    }
    if (std::fabs(simplex.value() - 1.0) > 1e-12) {
      throw std::invalid_argument("aux: eps row " + std::to_string(i) +
                                  " does not lie on the simplex");
    }
    if (std::fabs(split.value() - model.b[i]) > 1e-9) {
      throw std::invalid_argument("aux: bias split violated at row " + std::to_string(i));
    }
  }
}

AuxParams optimal_aux(const GaussianDefModel& model, const VariationalState& q) {
  validate_state(model, q);
  return optimal_aux_impl(model.W, model.b, SparseWeights::from(model.W), q);
}

VariationalState fm_variational_step(const GaussianDefModel& model, const Vector& x,
                                     const VariationalState& q, const AuxParams& aux) {
  validate_observation(model, x);
  validate_state(model, q);
  if (aux.eps.rows() != model.n || aux.eps.cols() != model.m) {
    throw std::invalid_argument("fm_variational_step: dimension mismatch in aux");
  }
  const SparseWeights sw = SparseWeights::from(model.W);
  const Vector eta = predictor_mean(model, sw, q.mu);
  const double sx2 = model.sigma_x2;
  const double sy2 = model.sigma_y2;

  VariationalState next;
  next.mu = Vector(model.m);
  next.sigma2 = Vector(model.m);
  for (int j = 0; j < model.m; ++j) {
    double scaled_precision = 0.0;  // sum_i w_ij^2 / eps_ij
    double wsum = 0.0;              // (x - E[eta]) . w_:j
    for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
      const int i = sw.col_row[k];
      const double w = sw.col_val[k];
      const double e = aux.eps(i, j);
      if (!(e > 0.0)) {
        throw std::invalid_argument("fm_variational_step: division hazard, eps is zero at (" +
                                    std::to_string(i) + "," + std::to_string(j) +
                                    ") where w is nonzero");
      }
      scaled_precision += w * w / e;
      wsum += w * (x[i] - eta[i]);
    }
    next.mu[j] = (wsum + q.mu[j] * scaled_precision) / (sx2 / sy2 + scaled_precision);
    next.sigma2[j] = 1.0 / (1.0 / sy2 + scaled_precision / sx2);
  }
  return next;
}

double fm_bound(const GaussianDefModel& model, const Vector& x, const VariationalState& q,
                const AuxParams& aux) {
  validate_observation(model, x);
  validate_state(model, q);
  if (aux.eps.rows() != model.n || aux.eps.cols() != model.m ||
      aux.bhat.rows() != model.n || aux.bhat.cols() != model.m) {
    throw std::invalid_argument("fm_bound: dimension mismatch in aux");
  }
  const double sx2 = model.sigma_x2;
  const double sy2 = model.sigma_y2;
  const double log_term = -0.5 * (kLog2Pi + std::log(sx2));

  CompensatedSum acc;
  for (int i = 0; i < model.n; ++i) {
    for (int j = 0; j < model.m; ++j) {
      const double w = model.W(i, j);
      const double e = aux.eps(i, j);
      if (w != 0.0) {
        if (!(e > 0.0)) {
          throw std::invalid_argument("fm_bound: division hazard, eps is zero at (" +
                                      std::to_string(i) + "," + std::to_string(j) +
                                      ") where w is nonzero");
        }
        const double etahat = aux.bhat(i, j) + w * q.mu[j] / e;
        const double resid = x[i] - etahat;
        const double varhat = w * w * q.sigma2[j] / (e * e);
        acc.add(e * (log_term - (resid * resid + varhat) / (2.0 * sx2)));
      } else if (e > 0.0) {
        const double resid = x[i] - aux.bhat(i, j);
        acc.add(e * (log_term - resid * resid / (2.0 * sx2)));
      }
    }
  }
  for (int j = 0; j < model.m; ++j) acc.add(-gaussian_kl(q.mu[j], q.sigma2[j], sy2));
  return acc.value();
}

double jensen_gap(const GaussianDefModel& model, const SparseWeights& sw,
                  const VariationalState& q) {
  const Vector sd = q.sigma2.cwiseSqrt();
  CompensatedSum acc;
  for (int i = 0; i < model.n; ++i) {
    double l1 = 0.0;
    double l2sq = 0.0;
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = sw.row_col[k];
      const double w = sw.row_val[k];
      l1 += std::fabs(w) * sd[j];
      l2sq += w * w * q.sigma2[j];
    }
    acc.add((l1 * l1 - l2sq) / (2.0 * model.sigma_x2));
  }
  return acc.value();
}

double jensen_gap(const GaussianDefModel& model, const VariationalState& q) {
  validate_state(model, q);
  return jensen_gap(model, SparseWeights::from(model.W), q);
}

namespace {

// FM bound at the optimal auxiliary parameters for (mu, s2), sharing the
// precomputed predictor means and per-row |w| . sd sums with the caller.
// The per-entry eps and bhat are rebuilt explicitly so the recorded value
// exercises the same algebra as the general evaluator.
double fm_bound_at_optimal(const GaussianDefModel& model, const SparseWeights& sw,
                           const Vector& x, const Vector& mu, const Vector& s2,
                           const Vector& sd, const Vector& eta, const Vector& row_l1) {
  const double sx2 = model.sigma_x2;
  const double log_term = -0.5 * (kLog2Pi + std::log(sx2));
  CompensatedSum acc;
  for (int i = 0; i < model.n; ++i) {
    const int lo = sw.row_ptr[i];
    const int hi = sw.row_ptr[static_cast<std::size_t>(i) + 1];
    if (lo == hi) {
      const double resid = x[i] - model.b[i];
      acc.add(log_term - resid * resid / (2.0 * sx2));
      continue;
    }
    for (int k = lo; k < hi; ++k) {
      const int j = sw.row_col[k];
      const double w = sw.row_val[k];
      const double e = std::fabs(w) * sd[j] / row_l1[i];
      const double lever = w * mu[j] / e;
      const double etahat = (eta[i] - lever) + lever;
      const double resid = x[i] - etahat;
      const double varhat = w * w * s2[j] / (e * e);
      acc.add(e * (log_term - (resid * resid + varhat) / (2.0 * sx2)));
    }
  }
  for (int j = 0; j < model.m; ++j) acc.add(-gaussian_kl(mu[j], s2[j], model.sigma_y2));
  return acc.value();
}

}  // namespace

FmRunResult fm_run(const GaussianDefModel& model, const Vector& x, const VariationalState& init,
                   long iterations, int threads) {
  validate_model(model);
  validate_observation(model, x);
  validate_state(model, init);
  if (iterations < 0) throw std::invalid_argument("fm_run: iterations must be >= 0");

  const SparseWeights sw = SparseWeights::from(model.W);
  const double sx2 = model.sigma_x2;
  const double sy2 = model.sigma_y2;

  Vector mu = init.mu;
  Vector s2 = init.sigma2;
  Vector sd(model.m), eta(model.n), row_l1(model.n);
  Vector next_mu(model.m), next_s2(model.m);

  FmRunResult out;
  out.trace.rows.reserve(static_cast<std::size_t>(iterations) + 1);

  for (long t = 0;; ++t) {
    for (int j = 0; j < model.m; ++j) sd[j] = std::sqrt(s2[j]);

    parallel_for(0, model.n, threads, [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) {
        double e = model.b[i];
        double l1 = 0.0;
        for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
          const int j = sw.row_col[k];
          const double w = sw.row_val[k];
          e += w * mu[j];
          l1 += std::fabs(w) * sd[j];
        }
        eta[i] = e;
        row_l1[i] = l1;
      }
    });

    const VariationalState q{mu, s2};
    TraceRow row;
    row.iteration = t;
    row.ridge_loss = ridge_loss(model, sw, x, mu);
    row.elbo = elbo(model, sw, x, q);
    row.fm_bound = fm_bound_at_optimal(model, sw, x, mu, s2, sd, eta, row_l1);
    row.gap = jensen_gap(model, sw, q);
    out.trace.rows.push_back(row);
    if (t == iterations) break;

    parallel_for(0, model.m, threads, [&](int lo, int hi) {
      for (int j = lo; j < hi; ++j) {
        double scaled_precision = 0.0;
        double wsum = 0.0;
        for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
          const int i = sw.col_row[k];
          const double w = sw.col_val[k];
          const double e = std::fabs(w) * sd[j] / row_l1[i];
          scaled_precision += w * w / e;
          wsum += w * (x[i] - eta[i]);
        }
        next_mu[j] = (wsum + mu[j] * scaled_precision) / (sx2 / sy2 + scaled_precision);
        next_s2[j] = 1.0 / (1.0 / sy2 + scaled_precision / sx2);
      }
    });
    mu.swap(next_mu);
    s2.swap(next_s2);
  }

  out.state = VariationalState{std::move(mu), std::move(s2)};
  return out;
}

void validate_deep_model(const DeepGaussianModel& model) {
  const std::size_t layers = model.W.size();
  if (layers < 1) throw std::invalid_argument("deep model: needs at least one layer");
  if (model.layer_dims.size() != layers + 1 || model.b.size() != layers ||
      model.sigma2.size() != layers) {
    throw std::invalid_argument("deep model: dimension mismatch across layer containers");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (model.layer_dims[l] < 1 || model.layer_dims[l + 1] < 1) {
      throw std::invalid_argument("deep model: layer dims must be >= 1");
    }
    if (model.W[l].rows() != model.layer_dims[l] || model.W[l].cols() != model.layer_dims[l + 1]) {
      throw std::invalid_argument("deep model: W[" + std::to_string(l) +
                                  "] inconsistent with layer_dims");
    }
    if (model.b[l].size() != model.layer_dims[l]) {
      throw std::invalid_argument("deep model: b[" + std::to_string(l) + "] has wrong length");
    }
    if (!(model.sigma2[l] > 0.0) || !std::isfinite(model.sigma2[l])) {
      throw std::invalid_argument("deep model: non-positive variance at layer " +
                                  std::to_string(l));
    }
    if (!model.W[l].allFinite() || !model.b[l].allFinite()) {
      throw std::invalid_argument("deep model: non-finite entry at layer " + std::to_string(l));
    }
  }
  if (!(model.sigma2_top > 0.0) || !std::isfinite(model.sigma2_top)) {
    throw std::invalid_argument("deep model: non-positive top prior variance");
  }
}

std::vector<AuxParams> deep_optimal_aux(const DeepGaussianModel& model,
                                        const std::vector<VariationalState>& q) {
  validate_deep_model(model);
  const std::size_t layers = model.W.size();
  if (q.size() != layers) {
    throw std::invalid_argument("deep_optimal_aux: need one variational state per latent layer");
  }
  std::vector<AuxParams> aux;
  aux.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    if (q[l].mu.size() != model.layer_dims[l + 1] || q[l].sigma2.size() != model.layer_dims[l + 1]) {
      throw std::invalid_argument("deep_optimal_aux: state " + std::to_string(l) +
                                  " has wrong length");
    }
    aux.push_back(optimal_aux_impl(model.W[l], model.b[l], SparseWeights::from(model.W[l]), q[l]));
  }
  return aux;
}

double deep_fm_bound(const DeepGaussianModel& model, const Vector& observed,
                     const std::vector<VariationalState>& q,
                     const std::vector<AuxParams>& aux) {
  validate_deep_model(model);
  const std::size_t layers = model.W.size();
  if (observed.size() != model.layer_dims[0] || !observed.allFinite()) {
    throw std::invalid_argument("deep_fm_bound: observed layer has wrong length or NaNs");
  }
  if (q.size() != layers || aux.size() != layers) {
    throw std::invalid_argument("deep_fm_bound: need one state and one aux per layer");
  }

  CompensatedSum acc;
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = model.layer_dims[l];
    const int cols = model.layer_dims[l + 1];
    if (q[l].mu.size() != cols || q[l].sigma2.size() != cols) {
      throw std::invalid_argument("deep_fm_bound: state " + std::to_string(l) +
                                  " has wrong length");
    }
    if (aux[l].eps.rows() != rows || aux[l].eps.cols() != cols ||
        aux[l].bhat.rows() != rows || aux[l].bhat.cols() != cols) {
      throw std::invalid_argument("deep_fm_bound: aux " + std::to_string(l) +
                                  " has wrong shape");
    }
    const double s2 = model.sigma2[l];
    const double log_term = -0.5 * (kLog2Pi + std::log(s2));
    for (int i = 0; i < rows; ++i) {
      const double row_mean = (l == 0) ? observed[i] : q[l - 1].mu[i];
      const double row_var = (l == 0) ? 0.0 : q[l - 1].sigma2[i];
      for (int j = 0; j < cols; ++j) {
        const double w = model.W[l](i, j);
        const double e = aux[l].eps(i, j);
        if (w != 0.0) {
          if (!(e > 0.0)) {
            throw std::invalid_argument("deep_fm_bound: division hazard at layer " +
                                        std::to_string(l));
          }
          const double etahat = aux[l].bhat(i, j) + w * q[l].mu[j] / e;
          const double resid = row_mean - etahat;
          const double varhat = w * w * q[l].sigma2[j] / (e * e);
          acc.add(e * (log_term - (row_var + resid * resid + varhat) / (2.0 * s2)));
        } else if (e > 0.0) {
          const double resid = row_mean - aux[l].bhat(i, j);
          acc.add(e * (log_term - (row_var + resid * resid) / (2.0 * s2)));
        }
      }
    }
  }

  // Entropies of every latent layer, then the top-layer prior terms.
  for (std::size_t l = 1; l <= layers; ++l) {
    const VariationalState& state = q[l - 1];
    for (int i = 0; i < state.sigma2.size(); ++i) {
      acc.add(0.5 * (kLog2Pi + 1.0 + std::log(state.sigma2[i])));
    }
  }
  const VariationalState& top = q[layers - 1];
  for (int i = 0; i < top.mu.size(); ++i) {
    acc.add(-0.5 * (kLog2Pi + std::log(model.sigma2_top)) -
            (top.mu[i] * top.mu[i] + top.sigma2[i]) / (2.0 * model.sigma2_top));
  }
  return acc.value();
}

}  // namespace fmvi
