#include "fmvi/baselines.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fmvi/parallel.hpp"
#include "fmvi/summation.hpp"

namespace fmvi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct CoordinateUpdate {
  double mu = 0.0;
  double sigma2 = 0.0;
};

// CAVI update of coordinate j given the residual x - E[eta] of the incoming
// state. Written as (w . r + mu_j * S_j) / (sx2/sy2 + S_j) so the FM update
// with one-hot eps reduces to it bit for bit.
CoordinateUpdate coordinate_update(const GaussianDefModel& model, const SparseWeights& sw,
                                   const Vector& residual, const Vector& mu, int j) {
  double precision_sum = 0.0;  // sum_i w_ij^2
  double wsum = 0.0;
  for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
    const double w = sw.col_val[k];
    precision_sum += w * w;
    wsum += w * residual[sw.col_row[k]];
  }
  CoordinateUpdate upd;
  upd.mu = (wsum + mu[j] * precision_sum) / (model.sigma_x2 / model.sigma_y2 + precision_sum);
  upd.sigma2 = 1.0 / (1.0 / model.sigma_y2 + precision_sum / model.sigma_x2);
  return upd;
}

Vector residual_of(const GaussianDefModel& model, const SparseWeights& sw, const Vector& x,
                   const Vector& mu) {
  Vector r = x - predictor_mean(model, sw, mu);
  return r;
}

// Trace-row objectives from running aggregates: the residual vector is
// maintained incrementally, everything else is summed fresh per row.
TraceRow baseline_trace_row(const GaussianDefModel& model, const Vector& col_precision,
                            const Vector& residual, const Vector& mu, const Vector& s2, long t) {
  CompensatedSum ssr;
  for (int i = 0; i < model.n; ++i) ssr.add(residual[i] * residual[i]);

  CompensatedSum penalty;
  for (int j = 0; j < model.m; ++j) penalty.add(mu[j] * mu[j]);

  CompensatedSum latent_terms;  // prior expectations plus entropies
  CompensatedSum var_eta;       // sum_i Var[eta_i] = sum_j (sum_i w_ij^2) s2_j
  for (int j = 0; j < model.m; ++j) {
    const double prior = -0.5 * (kLog2Pi + std::log(model.sigma_y2)) -
                         (mu[j] * mu[j] + s2[j]) / (2.0 * model.sigma_y2);
    const double entropy = 0.5 * (kLog2Pi + 1.0 + std::log(s2[j]));
    latent_terms.add(prior + entropy);
    var_eta.add(col_precision[j] * s2[j]);
  }

  TraceRow row;
  row.iteration = t;
  row.ridge_loss = ssr.value() / (2.0 * model.sigma_x2) + penalty.value() / (2.0 * model.sigma_y2);
  row.elbo = -0.5 * model.n * (kLog2Pi + std::log(model.sigma_x2)) -
             (ssr.value() + var_eta.value()) / (2.0 * model.sigma_x2) + latent_terms.value();
  return row;
}

}  // namespace

void validate_partition(const BlockPartition& partition, int m) {
  if (partition.blocks.empty()) throw std::invalid_argument("partition: no blocks");
  std::vector<char> seen(m, 0);
  std::size_t covered = 0;
  for (const auto& block : partition.blocks) {
    if (block.empty()) throw std::invalid_argument("partition: empty block");
    for (int j : block) {
      if (j < 0 || j >= m) {
        throw std::invalid_argument("partition: index " + std::to_string(j) + " out of range");
      }
      if (seen[j]) {
        throw std::invalid_argument("partition: index " + std::to_string(j) +
                                    " appears in more than one block");
      }
      seen[j] = 1;
      ++covered;
    }
  }
  if (covered != static_cast<std::size_t>(m)) {
    throw std::invalid_argument("partition: blocks do not cover all latent indices");
  }
}

VariationalState cavi_update(const GaussianDefModel& model, const Vector& x,
                             const VariationalState& q, int j) {
  validate_observation(model, x);
  validate_state(model, q);
  if (j < 0 || j >= model.m) {
    throw std::out_of_range("cavi_update: index " + std::to_string(j) + " out of range");
  }
  const SparseWeights sw = SparseWeights::from(model.W);
  const Vector residual = residual_of(model, sw, x, q.mu);
  const CoordinateUpdate upd = coordinate_update(model, sw, residual, q.mu, j);
  VariationalState next = q;
  next.mu[j] = upd.mu;
  next.sigma2[j] = upd.sigma2;
  return next;
}

VariationalState block_round(const GaussianDefModel& model, const Vector& x,
                             const VariationalState& q, const BlockPartition& partition,
                             long round) {
  validate_observation(model, x);
  validate_state(model, q);
  validate_partition(partition, model.m);
  if (round < 0) throw std::invalid_argument("block_round: round must be >= 0");

  const SparseWeights sw = SparseWeights::from(model.W);
  const Vector residual = residual_of(model, sw, x, q.mu);

  VariationalState next = q;
  for (const auto& block : partition.blocks) {
    const int j = block[static_cast<std::size_t>(round % static_cast<long>(block.size()))];
    const CoordinateUpdate upd = coordinate_update(model, sw, residual, q.mu, j);
    next.mu[j] = upd.mu;
    next.sigma2[j] = upd.sigma2;
  }
  return next;
}

bool blocks_conditionally_independent(const GaussianDefModel& model,
                                      const BlockPartition& partition) {
  validate_partition(partition, model.m);
  std::vector<int> block_of(model.m, -1);
  for (std::size_t bk = 0; bk < partition.blocks.size(); ++bk) {
    for (int j : partition.blocks[bk]) block_of[j] = static_cast<int>(bk);
  }
  const SparseWeights sw = SparseWeights::from(model.W);
  for (int i = 0; i < model.n; ++i) {
    int first = -1;
    for (int k = sw.row_ptr[i]; k < sw.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const int bk = block_of[sw.row_col[k]];
      if (first == -1) {
        first = bk;
      } else if (bk != first) {
        return false;
      }
    }
  }
  return true;
}

BaselineRunResult cavi_run(const GaussianDefModel& model, const Vector& x,
                           const VariationalState& init, long iterations) {
  validate_model(model);
  validate_observation(model, x);
  validate_state(model, init);
  if (iterations < 0) throw std::invalid_argument("cavi_run: iterations must be >= 0");

  const SparseWeights sw = SparseWeights::from(model.W);
  Vector col_precision(model.m);
  for (int j = 0; j < model.m; ++j) {
    double s = 0.0;
    for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
      s += sw.col_val[k] * sw.col_val[k];
    }
    col_precision[j] = s;
  }

  Vector mu = init.mu;
  Vector s2 = init.sigma2;
  Vector residual = residual_of(model, sw, x, mu);

  BaselineRunResult out;
  out.trace.rows.reserve(static_cast<std::size_t>(iterations) + 1);
  for (long t = 0;; ++t) {
    out.trace.rows.push_back(baseline_trace_row(model, col_precision, residual, mu, s2, t));
    if (t == iterations) break;
    const int j = static_cast<int>(t % model.m);
    const CoordinateUpdate upd = coordinate_update(model, sw, residual, mu, j);
    const double delta = upd.mu - mu[j];
    for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
      residual[sw.col_row[k]] -= sw.col_val[k] * delta;
    }
    mu[j] = upd.mu;
    s2[j] = upd.sigma2;
  }
  out.state = VariationalState{std::move(mu), std::move(s2)};
  return out;
}

BaselineRunResult block_run(const GaussianDefModel& model, const Vector& x,
                            const VariationalState& init, long iterations,
                            const BlockPartition& partition, int threads) {
  validate_model(model);
  validate_observation(model, x);
  validate_state(model, init);
  validate_partition(partition, model.m);
  if (iterations < 0) throw std::invalid_argument("block_run: iterations must be >= 0");

  const SparseWeights sw = SparseWeights::from(model.W);
  Vector col_precision(model.m);
  for (int j = 0; j < model.m; ++j) {
    double s = 0.0;
    for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
      s += sw.col_val[k] * sw.col_val[k];
    }
    col_precision[j] = s;
  }

  const int blocks = static_cast<int>(partition.blocks.size());
  Vector mu = init.mu;
  Vector s2 = init.sigma2;
  Vector residual = residual_of(model, sw, x, mu);
  std::vector<int> selected(blocks);
  std::vector<CoordinateUpdate> updates(blocks);

  BaselineRunResult out;
  out.trace.rows.reserve(static_cast<std::size_t>(iterations) + 1);
  for (long t = 0;; ++t) {
    out.trace.rows.push_back(baseline_trace_row(model, col_precision, residual, mu, s2, t));
    if (t == iterations) break;

    // Jacobi semantics: all selections read the same incoming state.
    parallel_for(0, blocks, threads, [&](int lo, int hi) {
      for (int bk = lo; bk < hi; ++bk) {
        const auto& block = partition.blocks[bk];
        const int j = block[static_cast<std::size_t>(t % static_cast<long>(block.size()))];
        selected[bk] = j;
        updates[bk] = coordinate_update(model, sw, residual, mu, j);
      }
    });
    for (int bk = 0; bk < blocks; ++bk) {
      const int j = selected[bk];
      const double delta = updates[bk].mu - mu[j];
      for (int k = sw.col_ptr[j]; k < sw.col_ptr[static_cast<std::size_t>(j) + 1]; ++k) {
        residual[sw.col_row[k]] -= sw.col_val[k] * delta;
      }
      mu[j] = updates[bk].mu;
      s2[j] = updates[bk].sigma2;
    }
  }
  out.state = VariationalState{std::move(mu), std::move(s2)};
  return out;
}

}  // namespace fmvi
