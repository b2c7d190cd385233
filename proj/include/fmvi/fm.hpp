#pragma once

#include <vector>

#include "fmvi/core.hpp"

namespace fmvi {

// Auxiliary parameters of the forest-mixture bound. Each row eps[i] is a
// point on the simplex (sum_j eps_ij = 1, eps_ij >= 0) and the bias split
// satisfies sum_j eps_ij * bhat_ij = b_i, entries with eps_ij = 0 counting
// as zero.
struct AuxParams {
  RowMatrix eps;   // n x m
  RowMatrix bhat;  // n x m
};

// Checks the simplex (1e-12) and bias-split (1e-9) invariants against the
// model; throws std::invalid_argument on violation.
void validate_aux(const GaussianDefModel& model, const AuxParams& aux);

// Bound-optimal auxiliary parameters for a fixed q:
//   eps*_ij  = |w_ij| Std[y_j] / sum_j' |w_ij'| Std[y_j']
//   bhat*_ij = E[eta_i] - w_ij E[y_j] / eps*_ij
// Entries with w_ij = 0 get eps = 0 and bhat = E[eta_i]; an all-zero row
// gets uniform eps and bhat_ij = b_i (any simplex point is optimal there,
// uniform keeps the output deterministic).
AuxParams optimal_aux(const GaussianDefModel& model, const VariationalState& q);

// One parallel update of every q(y_j | x) holding aux fixed:
//   sigma*_j^2 = 1 / (1/sigma_y2 + (1/sigma_x2) sum_i w_ij^2 / eps_ij)
//   mu*_j      = [ (x - E[eta]) . w_:j + mu_j sum_i w_ij^2/eps_ij ]
//                / ( sigma_x2/sigma_y2 + sum_i w_ij^2/eps_ij )
// Terms with w_ij = 0 contribute nothing regardless of eps_ij; eps_ij = 0
// with w_ij != 0 is a division hazard and throws.
VariationalState fm_variational_step(const GaussianDefModel& model, const Vector& x,
                                     const VariationalState& q, const AuxParams& aux);

// Forest-mixture lower bound on log p(x):
//   sum_i sum_j eps_ij E[log phat(x_i | y_j)] - sum_j KL(q(y_j|x) || p(y_j))
// with E[log phat] expanded in closed form around etahat_ij = bhat_ij +
// w_ij y_j / eps_ij. Always <= elbo for valid inputs.
double fm_bound(const GaussianDefModel& model, const Vector& x, const VariationalState& q,
                const AuxParams& aux);

// Gap between the ELBO and the FM bound at the optimal auxiliary parameters:
//   (1/2 sigma_x2) sum_i ( ||w_i .* Std[y]||_1^2 - ||w_i .* Std[y]||_2^2 )
// Zero exactly when every row of W has at most one nonzero entry.
double jensen_gap(const GaussianDefModel& model, const VariationalState& q);
double jensen_gap(const GaussianDefModel& model, const SparseWeights& sw,
                  const VariationalState& q);

struct FmRunResult {
  VariationalState state;
  ConvergenceTrace trace;
};

// Alternating maximization: per iteration, recompute the optimal auxiliary
// parameters for the current q, then update all q(y_j | x) in parallel.
// Trace row t records ridge loss, ELBO, FM bound and gap at q_t with
// aux_t = optimal_aux(q_t); rows 0..iterations inclusive. The aux and
// variational phases are bulk-synchronous and deterministic for any
// `threads` value.
FmRunResult fm_run(const GaussianDefModel& model, const Vector& x, const VariationalState& init,
                   long iterations, int threads = 1);

// Multi-layer Gaussian model: observed layer y^(0) of size layer_dims[0],
// latent layers y^(1)..y^(L). Layer l in 0..L-1 has
//   p(y^(l)_i | y^(l+1)) = N(b[l]_i + W[l] row i . y^(l+1), sigma2[l])
// and the top layer prior is p(y^(L)_j) = N(0, sigma2_top).
struct DeepGaussianModel {
  std::vector<int> layer_dims;   // m_0 .. m_L
  std::vector<RowMatrix> W;      // W[l]: m_l x m_{l+1}
  std::vector<Vector> b;         // b[l]: length m_l
  std::vector<double> sigma2;    // conditional variance per layer l
  double sigma2_top = 1.0;
};

void validate_deep_model(const DeepGaussianModel& model);

// q[l] describes latent layer l+1; aux[l] pairs with W[l].
std::vector<AuxParams> deep_optimal_aux(const DeepGaussianModel& model,
                                        const std::vector<VariationalState>& q);

// Evaluates the layered forest-mixture lower bound on log p(observed):
// bounded conditional terms for every layer plus entropies of the latent
// layers and the top-layer prior terms. Evaluation only; no update rules
// for interior layers are provided.
double deep_fm_bound(const DeepGaussianModel& model, const Vector& observed,
                     const std::vector<VariationalState>& q,
                     const std::vector<AuxParams>& aux);

}  // namespace fmvi
