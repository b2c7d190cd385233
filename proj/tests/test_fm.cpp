#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fmvi/baselines.hpp"
#include "fmvi/fm.hpp"
#include "fmvi/rng.hpp"

using namespace fmvi;

namespace {

GaussianDefModel forest_f1() {
  RowMatrix W(2, 2);
  W << 1, 0, 0, 2;
  return make_model(W, Vector::Zero(2), 1.0, 1.0);
}

GaussianDefModel dense_d1() {
  RowMatrix W(1, 2);
  W << 1, 1;
  return make_model(W, Vector::Zero(1), 1.0, 1.0);
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector random_vector(Rng& rng, int size, double lo, double hi) {
  Vector v(size);
  for (int i = 0; i < size; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

GaussianDefModel random_model(Rng& rng, int max_n = 12, int max_m = 12, double zero_prob = 0.0) {
  const int n = rng.uniform_int(1, max_n);
  const int m = rng.uniform_int(1, max_m);
  RowMatrix W(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      W(i, j) = rng.uniform() < zero_prob ? 0.0 : rng.uniform(-2.0, 2.0);
    }
  }
  Vector b(n);
  for (int i = 0; i < n; ++i) b[i] = rng.uniform(-1.0, 1.0);
  return make_model(std::move(W), std::move(b), rng.uniform(0.25, 4.0), rng.uniform(0.25, 4.0));
}

VariationalState random_state(Rng& rng, int m) {
  VariationalState q;
  q.mu = random_vector(rng, m, -3.0, 3.0);
  q.sigma2 = random_vector(rng, m, 0.1, 4.0);
  return q;
}

// Constraint-satisfying auxiliary parameters from arbitrary unconstrained
// draws: eps rows via softmax (strictly positive, sums to one), bias rows via
// bhat_ij = b_i - gamma_j + eps_i . gamma_i, which splits b_i for any gamma.
AuxParams random_valid_aux(Rng& rng, const GaussianDefModel& model, double tau_lo = -2.0,
                           double tau_hi = 2.0) {
  AuxParams aux;
  aux.eps = RowMatrix(model.n, model.m);
  aux.bhat = RowMatrix(model.n, model.m);
  for (int i = 0; i < model.n; ++i) {
    Vector tau = random_vector(rng, model.m, tau_lo, tau_hi);
    Vector eps = (tau.array() - tau.maxCoeff()).exp();
    eps /= eps.sum();
    Vector gamma = random_vector(rng, model.m, -2.0, 2.0);
    const double shift = eps.dot(gamma);
    for (int j = 0; j < model.m; ++j) {
      aux.eps(i, j) = eps[j];
      aux.bhat(i, j) = model.b[i] - gamma[j] + shift;
    }
  }
  return aux;
}

// The per-row auxiliary objective maximized by optimal_aux:
//   L_i = -(1/2 sx2) sum_j [ w_ij^2 Var[y_j]/eps_ij + eps_ij E[etahat_ij]^2 ]
// with zero-weight terms carrying no w contribution.
double aux_objective_row(const GaussianDefModel& model, const VariationalState& q,
                         const AuxParams& aux, int i) {
  double total = 0.0;
  for (int j = 0; j < model.m; ++j) {
    const double w = model.W(i, j);
    const double e = aux.eps(i, j);
    if (w != 0.0) {
      REQUIRE(e > 0.0);
      const double mean_hat = aux.bhat(i, j) + w * q.mu[j] / e;
      total += w * w * q.sigma2[j] / e + e * mean_hat * mean_hat;
    } else if (e > 0.0) {
      total += e * aux.bhat(i, j) * aux.bhat(i, j);
    }
  }
  return -total / (2.0 * model.sigma_x2);
}

}  // namespace

TEST_CASE("optimal_aux selects one-hot rows on forest models") {
  Rng rng(11);
  const GaussianDefModel model = forest_f1();
  for (int trial = 0; trial < 10; ++trial) {
    const VariationalState q = random_state(rng, 2);
    const AuxParams aux = optimal_aux(model, q);
    CHECK(aux.eps(0, 0) == 1.0);
    CHECK(aux.eps(0, 1) == 0.0);
    CHECK(aux.eps(1, 0) == 0.0);
    CHECK(aux.eps(1, 1) == 1.0);
    CHECK_NOTHROW(validate_aux(model, aux));
  }
}

TEST_CASE("optimal_aux splits evenly on the dense fixture") {
  const GaussianDefModel model = dense_d1();
  VariationalState q;
  q.mu = Vector::Zero(2);
  q.sigma2 = Vector::Ones(2);
  const AuxParams aux = optimal_aux(model, q);
  CHECK(aux.eps(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(aux.eps(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  // sum_j eps_ij bhat_ij must reproduce b_i = 0
  CHECK(aux.eps(0, 0) * aux.bhat(0, 0) + aux.eps(0, 1) * aux.bhat(0, 1) ==
        doctest::Approx(0.0).epsilon(1e-15));
  CHECK_NOTHROW(validate_aux(model, aux));
}

TEST_CASE("optimal_aux falls back to uniform rows when all weights vanish") {
  RowMatrix W(2, 2);
  W << 0, 0, 1, 1;
  Vector b = vec2(0.7, 0.0);
  const GaussianDefModel model = make_model(W, b, 1.0, 1.0);
  Rng rng(12);
  const AuxParams aux = optimal_aux(model, random_state(rng, 2));
  CHECK(aux.eps(0, 0) == doctest::Approx(0.5));
  CHECK(aux.eps(0, 1) == doctest::Approx(0.5));
  CHECK(aux.bhat(0, 0) == doctest::Approx(0.7));
  CHECK(aux.bhat(0, 1) == doctest::Approx(0.7));
  CHECK_NOTHROW(validate_aux(model, aux));
}

TEST_CASE("optimal_aux outputs satisfy the simplex and bias-split invariants") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianDefModel model = random_model(rng, 12, 12, trial % 2 ? 0.5 : 0.0);
    const VariationalState q = random_state(rng, model.m);
    CHECK_NOTHROW(validate_aux(model, optimal_aux(model, q)));
  }
}

TEST_CASE("fm_variational_step hand values on the dense fixture") {
  const GaussianDefModel model = dense_d1();
  VariationalState q;
  q.mu = Vector::Zero(2);
  q.sigma2 = Vector::Ones(2);
  const VariationalState next =
      fm_variational_step(model, Vector::Ones(1), q, optimal_aux(model, q));
  CHECK(next.mu[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(next.mu[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(next.sigma2[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(next.sigma2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("fm_variational_step reaches the forest posterior in one step") {
  const GaussianDefModel model = forest_f1();
  const VariationalState init = default_init(model);
  const VariationalState next =
      fm_variational_step(model, vec2(1.0, 2.0), init, optimal_aux(model, init));
  CHECK(next.mu[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(next.mu[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("fm_variational_step with one-hot eps equals the CAVI update bit for bit") {
  Rng rng(14);
  SUBCASE("single latent variable") {
    RowMatrix W(3, 1);
    W << 0.7, -1.2, 0.4;
    const GaussianDefModel model = make_model(W, random_vector(rng, 3, -1, 1), 0.8, 1.3);
    const Vector x = random_vector(rng, 3, -2, 2);
    const VariationalState q = random_state(rng, 1);
    const VariationalState fm_next = fm_variational_step(model, x, q, optimal_aux(model, q));
    const VariationalState cavi_next = cavi_update(model, x, q, 0);
    CHECK(fm_next.mu[0] == cavi_next.mu[0]);
    CHECK(fm_next.sigma2[0] == cavi_next.sigma2[0]);
  }
  SUBCASE("forest model: every column is effectively one-hot") {
    const GaussianDefModel model = forest_f1();
    const Vector x = vec2(0.3, -1.1);
    const VariationalState q = random_state(rng, 2);
    const VariationalState fm_next = fm_variational_step(model, x, q, optimal_aux(model, q));
    for (int j = 0; j < 2; ++j) {
      const VariationalState cavi_next = cavi_update(model, x, q, j);
      CHECK(fm_next.mu[j] == cavi_next.mu[j]);
      CHECK(fm_next.sigma2[j] == cavi_next.sigma2[j]);
    }
  }
}

TEST_CASE("fm operations flag a division hazard on invalid aux") {
  const GaussianDefModel model = dense_d1();
  VariationalState q;
  q.mu = Vector::Zero(2);
  q.sigma2 = Vector::Ones(2);
  AuxParams aux;
  aux.eps = RowMatrix(1, 2);
  aux.eps << 1.0, 0.0;  // zero eps where w != 0
  aux.bhat = RowMatrix::Zero(1, 2);
  CHECK_THROWS_WITH_AS(fm_variational_step(model, Vector::Ones(1), q, aux),
                       doctest::Contains("division hazard"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(fm_bound(model, Vector::Ones(1), q, aux),
                       doctest::Contains("division hazard"), std::invalid_argument);
}

TEST_CASE("fm_bound is tight on forest models and one nat loose on the dense fixture") {
  const GaussianDefModel forest = forest_f1();
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const VariationalState q = random_state(rng, 2);
    const Vector x = random_vector(rng, 2, -2, 2);
    const double bound = fm_bound(forest, x, q, optimal_aux(forest, q));
    CHECK(bound == doctest::Approx(elbo(forest, x, q)).epsilon(1e-12));
  }

  const GaussianDefModel dense = dense_d1();
  VariationalState q;
  q.mu = Vector::Zero(2);
  q.sigma2 = Vector::Ones(2);
  const Vector x = Vector::Ones(1);
  const double bound = fm_bound(dense, x, q, optimal_aux(dense, q));
  CHECK(elbo(dense, x, q) - bound == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fm_bound never exceeds the elbo") {
  Rng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianDefModel model = random_model(rng, 12, 12, trial % 3 ? 0.0 : 0.5);
    const Vector x = random_vector(rng, model.n, -3.0, 3.0);
    const VariationalState q = random_state(rng, model.m);
    const double reference = elbo(model, x, q);
    CHECK(fm_bound(model, x, q, optimal_aux(model, q)) <= reference + 1e-9);
    CHECK(fm_bound(model, x, q, random_valid_aux(rng, model)) <= reference + 1e-9);
  }
}

TEST_CASE("jensen_gap closed form") {
  SUBCASE("forest models have zero gap") {
    Rng rng(17);
    const GaussianDefModel model = forest_f1();
    for (int trial = 0; trial < 10; ++trial) {
      CHECK(jensen_gap(model, random_state(rng, 2)) == doctest::Approx(0.0).epsilon(1e-15));
    }
  }
  SUBCASE("dense fixture with unit deviations") {
    VariationalState q;
    q.mu = vec2(0.4, -0.2);
    q.sigma2 = Vector::Ones(2);
    CHECK(jensen_gap(dense_d1(), q) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("matches elbo minus fm_bound at the optimal aux") {
    Rng rng(18);
    for (int trial = 0; trial < 100; ++trial) {
      const GaussianDefModel model = random_model(rng, 20, 20, trial % 2 ? 0.6 : 0.0);
      const Vector x = random_vector(rng, model.n, -3.0, 3.0);
      const VariationalState q = random_state(rng, model.m);
      const double direct = elbo(model, x, q) - fm_bound(model, x, q, optimal_aux(model, q));
      const double gap = jensen_gap(model, q);
      CHECK(std::fabs(direct - gap) < 1e-9);
      CHECK(gap >= 0.0);
    }
  }
}

TEST_CASE("auxiliary objective peaks at the optimal parameters") {
  Rng rng(19);
  for (int trial = 0; trial < 40; ++trial) {
    const GaussianDefModel model = random_model(rng, 8, 8, trial % 2 ? 0.4 : 0.0);
    const VariationalState q = random_state(rng, model.m);
    const AuxParams best = optimal_aux(model, q);
    for (int pert = 0; pert < 10; ++pert) {
      const AuxParams other = random_valid_aux(rng, model);
      for (int i = 0; i < model.n; ++i) {
        CHECK(aux_objective_row(model, q, other, i) <=
              aux_objective_row(model, q, best, i) + 1e-9);
      }
    }
  }
}

TEST_CASE("fm_run converges in one iteration on forest models") {
  const GaussianDefModel model = forest_f1();
  const FmRunResult res = fm_run(model, vec2(1.0, 2.0), default_init(model), 1);
  CHECK(res.state.mu[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(res.state.mu[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(res.trace.rows.size() == 2);
}

TEST_CASE("fm_run reaches the dense fixed point and stays there") {
  const GaussianDefModel model = dense_d1();
  const FmRunResult res = fm_run(model, Vector::Ones(1), default_init(model), 50);
  CHECK(std::fabs(res.state.mu[0] - 1.0 / 3.0) < 1e-9);
  CHECK(std::fabs(res.state.mu[1] - 1.0 / 3.0) < 1e-9);
  // this instance lands on the fixed point after the first step
  CHECK(res.trace.rows[1].ridge_loss == doctest::Approx(res.trace.rows[50].ridge_loss));
}

TEST_CASE("fm_run with zero iterations returns the init and a single row") {
  const GaussianDefModel model = dense_d1();
  const VariationalState init = default_init(model);
  const FmRunResult res = fm_run(model, Vector::Ones(1), init, 0);
  CHECK(res.trace.rows.size() == 1);
  CHECK(res.state.mu == init.mu);
  CHECK(res.state.sigma2 == init.sigma2);
}

TEST_CASE("one fm_run iteration is exactly optimal_aux followed by the step") {
  Rng rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianDefModel model = random_model(rng, 10, 10, trial % 2 ? 0.5 : 0.0);
    const Vector x = random_vector(rng, model.n, -2.0, 2.0);
    const VariationalState init = random_state(rng, model.m);
    const FmRunResult res = fm_run(model, x, init, 1);
    const VariationalState direct = fm_variational_step(model, x, init, optimal_aux(model, init));
    for (int j = 0; j < model.m; ++j) {
      CHECK(res.state.mu[j] == direct.mu[j]);
      CHECK(res.state.sigma2[j] == direct.sigma2[j]);
    }
  }
}

TEST_CASE("each fm phase is an exact block maximizer") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const GaussianDefModel model = random_model(rng, 10, 10);
    const Vector x = random_vector(rng, model.n, -2.0, 2.0);
    VariationalState q = random_state(rng, model.m);
    AuxParams prev_aux = optimal_aux(model, q);
    for (int t = 0; t < 4; ++t) {
      const AuxParams aux = optimal_aux(model, q);
      CHECK(fm_bound(model, x, q, aux) >= fm_bound(model, x, q, prev_aux) - 1e-12);
      const VariationalState next = fm_variational_step(model, x, q, aux);
      CHECK(fm_bound(model, x, next, aux) >= fm_bound(model, x, q, aux) - 1e-12);
      prev_aux = aux;
      q = next;
    }
  }
}

TEST_CASE("fm_run trace bound column is non-decreasing and dominated by the elbo") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianDefModel model = random_model(rng, 12, 12, trial % 2 ? 0.5 : 0.0);
    const Vector x = random_vector(rng, model.n, -2.0, 2.0);
    const FmRunResult res = fm_run(model, x, default_init(model), 60);
    for (std::size_t t = 0; t < res.trace.rows.size(); ++t) {
      const TraceRow& row = res.trace.rows[t];
      CHECK(*row.fm_bound <= row.elbo + 1e-9);
      CHECK(std::fabs(*row.gap - (row.elbo - *row.fm_bound)) < 1e-9);
      if (t > 0) CHECK(*row.fm_bound >= *res.trace.rows[t - 1].fm_bound - 1e-12);
    }
  }
}

TEST_CASE("fm_run converges to the exact posterior mean") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianDefModel model = random_model(rng, 8, 8);
    const Vector x = random_vector(rng, model.n, -2.0, 2.0);
    const Vector target = exact_posterior(model, x).mean;
    VariationalState q = default_init(model);
    for (int chunk = 0; chunk < 40; ++chunk) {
      const FmRunResult res = fm_run(model, x, q, 2000);
      const bool settled = (res.state.mu - q.mu).cwiseAbs().maxCoeff() < 1e-13;
      q = res.state;
      if (settled) break;
    }
    CHECK((q.mu - target).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("fm variances never exceed the CAVI stationary variances") {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const GaussianDefModel model = random_model(rng, 12, 12, trial % 2 ? 0.5 : 0.0);
    const Vector x = random_vector(rng, model.n, -2.0, 2.0);
    const FmRunResult res = fm_run(model, x, default_init(model), 25);
    for (int j = 0; j < model.m; ++j) {
      double col_precision = 0.0;
      for (int i = 0; i < model.n; ++i) col_precision += model.W(i, j) * model.W(i, j);
      const double cavi_var = 1.0 / (1.0 / model.sigma_y2 + col_precision / model.sigma_x2);
      CHECK(res.state.sigma2[j] <= cavi_var + 1e-12);
    }
  }
}

TEST_CASE("fm_run is deterministic across thread counts") {
  Rng rng(25);
  RowMatrix W(40, 30);
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 30; ++j) W(i, j) = rng.uniform() < 0.3 ? rng.uniform(-2, 2) : 0.0;
  }
  const GaussianDefModel model = make_model(W, random_vector(rng, 40, -1, 1), 1.0, 1.0);
  const Vector x = random_vector(rng, 40, -2, 2);
  const FmRunResult serial = fm_run(model, x, default_init(model), 30, 1);
  const FmRunResult threaded = fm_run(model, x, default_init(model), 30, 8);
  for (int j = 0; j < model.m; ++j) {
    CHECK(serial.state.mu[j] == threaded.state.mu[j]);
    CHECK(serial.state.sigma2[j] == threaded.state.sigma2[j]);
  }
  for (std::size_t t = 0; t < serial.trace.rows.size(); ++t) {
    CHECK(serial.trace.rows[t].ridge_loss == threaded.trace.rows[t].ridge_loss);
    CHECK(serial.trace.rows[t].elbo == threaded.trace.rows[t].elbo);
    CHECK(*serial.trace.rows[t].fm_bound == *threaded.trace.rows[t].fm_bound);
  }
}

// ---------------------------------------------------------------------------
// Deep model evaluation

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Independent closed-form evaluation of the layered ELBO.
double deep_elbo_oracle(const DeepGaussianModel& model, const Vector& observed,
                        const std::vector<VariationalState>& q) {
  const std::size_t layers = model.W.size();
  double acc = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    const double s2 = model.sigma2[l];
    for (int i = 0; i < model.layer_dims[l]; ++i) {
      const double row_mean = (l == 0) ? observed[i] : q[l - 1].mu[i];
      const double row_var = (l == 0) ? 0.0 : q[l - 1].sigma2[i];
      double pred = model.b[l][i];
      double var_pred = 0.0;
      for (int j = 0; j < model.layer_dims[l + 1]; ++j) {
        const double w = model.W[l](i, j);
        pred += w * q[l].mu[j];
        var_pred += w * w * q[l].sigma2[j];
      }
      const double r = row_mean - pred;
      acc += -0.5 * (kLog2Pi + std::log(s2)) - (row_var + r * r + var_pred) / (2.0 * s2);
    }
  }
  for (std::size_t l = 1; l <= layers; ++l) {
    for (int i = 0; i < model.layer_dims[l]; ++i) {
      acc += 0.5 * (kLog2Pi + 1.0 + std::log(q[l - 1].sigma2[i]));
    }
  }
  for (int i = 0; i < model.layer_dims[layers]; ++i) {
    const VariationalState& top = q[layers - 1];
    acc += -0.5 * (kLog2Pi + std::log(model.sigma2_top)) -
           (top.mu[i] * top.mu[i] + top.sigma2[i]) / (2.0 * model.sigma2_top);
  }
  return acc;
}

DeepGaussianModel two_layer_model(Rng& rng, bool forest) {
  DeepGaussianModel model;
  model.layer_dims = {4, 3, 2};
  for (int l = 0; l < 2; ++l) {
    const int rows = model.layer_dims[l];
    const int cols = model.layer_dims[l + 1];
    RowMatrix W = RowMatrix::Zero(rows, cols);
    for (int i = 0; i < rows; ++i) {
      if (forest) {
        W(i, rng.uniform_int(0, cols - 1)) =
            rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      } else {
        for (int j = 0; j < cols; ++j) W(i, j) = rng.uniform(-1.5, 1.5);
      }
    }
    model.W.push_back(W);
    model.b.push_back(random_vector(rng, rows, -1.0, 1.0));
    model.sigma2.push_back(rng.uniform(0.5, 2.0));
  }
  model.sigma2_top = rng.uniform(0.5, 2.0);
  return model;
}

}  // namespace

TEST_CASE("deep_fm_bound with a single layer reduces to fm_bound") {
  Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianDefModel flat = random_model(rng, 8, 8, trial % 2 ? 0.5 : 0.0);
    const Vector x = random_vector(rng, flat.n, -2.0, 2.0);
    const VariationalState q = random_state(rng, flat.m);
    const AuxParams aux = optimal_aux(flat, q);

    DeepGaussianModel deep;
    deep.layer_dims = {flat.n, flat.m};
    deep.W = {flat.W};
    deep.b = {flat.b};
    deep.sigma2 = {flat.sigma_x2};
    deep.sigma2_top = flat.sigma_y2;
    CHECK(deep_fm_bound(deep, x, {q}, {aux}) ==
          doctest::Approx(fm_bound(flat, x, q, aux)).epsilon(1e-12));
  }
}

TEST_CASE("deep_fm_bound is tight when every layer is a forest") {
  Rng rng(27);
  for (int trial = 0; trial < 20; ++trial) {
    const DeepGaussianModel model = two_layer_model(rng, /*forest=*/true);
    const Vector observed = random_vector(rng, model.layer_dims[0], -2.0, 2.0);
    const std::vector<VariationalState> q = {random_state(rng, model.layer_dims[1]),
                                             random_state(rng, model.layer_dims[2])};
    const std::vector<AuxParams> aux = deep_optimal_aux(model, q);
    CHECK(deep_fm_bound(model, observed, q, aux) ==
          doctest::Approx(deep_elbo_oracle(model, observed, q)).epsilon(1e-12));
  }
}

TEST_CASE("deep_fm_bound never exceeds the layered elbo") {
  Rng rng(28);
  for (int trial = 0; trial < 40; ++trial) {
    const DeepGaussianModel model = two_layer_model(rng, /*forest=*/trial % 4 == 0);
    const Vector observed = random_vector(rng, model.layer_dims[0], -2.0, 2.0);
    const std::vector<VariationalState> q = {random_state(rng, model.layer_dims[1]),
                                             random_state(rng, model.layer_dims[2])};
    const double reference = deep_elbo_oracle(model, observed, q);
    CHECK(deep_fm_bound(model, observed, q, deep_optimal_aux(model, q)) <= reference + 1e-9);

    // arbitrary constraint-satisfying aux per layer
    std::vector<AuxParams> aux;
    for (int l = 0; l < 2; ++l) {
      const GaussianDefModel view = make_model(model.W[l], model.b[l], model.sigma2[l], 1.0);
      aux.push_back(random_valid_aux(rng, view));
    }
    CHECK(deep_fm_bound(model, observed, q, aux) <= reference + 1e-9);
  }
}
