#pragma once

#include <vector>

#include "fmvi/core.hpp"

namespace fmvi {

// Disjoint grouping of the latent indices {0..m-1}; blocks and the indices
// within them keep their listed order, which fixes the round-robin schedule.
struct BlockPartition {
  std::vector<std::vector<int>> blocks;
};

void validate_partition(const BlockPartition& partition, int m);

// Coordinate-ascent update of a single latent factor, all others fixed:
//   sigma_j^2 = 1 / (1/sigma_y2 + (1/sigma_x2) sum_i w_ij^2)
//   mu_j      = (1/sigma_x2) sum_i w_ij (x_i - b_i - sum_{j'!=j} w_ij' mu_j')
//               / (1/sigma_y2 + (1/sigma_x2) sum_i w_ij^2)
VariationalState cavi_update(const GaussianDefModel& model, const Vector& x,
                             const VariationalState& q, int j);

// One parallel round: selects the variable at position (round mod |block|)
// within each block and applies the CAVI update to all selections
// simultaneously, every update reading the same incoming q (Jacobi
// semantics).
VariationalState block_round(const GaussianDefModel& model, const Vector& x,
                             const VariationalState& q, const BlockPartition& partition,
                             long round);

// True iff no observed variable has nonzero weights into more than one
// block; in that case simultaneous per-block updates cannot interact.
bool blocks_conditionally_independent(const GaussianDefModel& model,
                                      const BlockPartition& partition);

struct BaselineRunResult {
  VariationalState state;
  ConvergenceTrace trace;
};

// One iteration = one parallel update round. CAVI updates exactly one
// coordinate per iteration in cyclic order; the block runner updates one
// coordinate per block per iteration. This normalization keeps the
// iteration axis comparable across FM, CAVI and block traces.
BaselineRunResult cavi_run(const GaussianDefModel& model, const Vector& x,
                           const VariationalState& init, long iterations);
BaselineRunResult block_run(const GaussianDefModel& model, const Vector& x,
                            const VariationalState& init, long iterations,
                            const BlockPartition& partition, int threads = 1);

}  // namespace fmvi
