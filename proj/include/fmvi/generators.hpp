#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmvi/baselines.hpp"
#include "fmvi/core.hpp"

namespace fmvi {

// Row-major pixel grid; pixel (r, c) has index r * width + c.
struct ImageGrid {
  int height = 0;
  int width = 0;
  int pixels() const { return height * width; }
};

// One latent variable per anchor pixel; window j anchored at (r, c) covers
// [r, r+s) x [c, c+s) clipped to the grid, and w_ij = 1 for every pixel i
// inside window j. m = height * width for every s.
GaussianDefModel window_model(const ImageGrid& grid, int s, const Vector& b, double sigma_x2,
                              double sigma_y2);

struct RegionBlockModel {
  GaussianDefModel model;
  BlockPartition partition;  // latents grouped by region
};

// Splits the grid into square regions of side region_side and builds one
// window per anchor inside each region, clipped to that region. Windows in
// different regions are disjoint, so the region partition is conditionally
// independent by construction.
RegionBlockModel region_block_model(const ImageGrid& grid, int region_side, const Vector& b,
                                    double sigma_x2, double sigma_y2);

// Every observed variable i gets exactly one parent: w_{i, parent[i]} =
// weights[i], everything else zero.
GaussianDefModel forest_model(int n, int m, const std::vector<int>& parent,
                              const Vector& weights, const Vector& b, double sigma_x2,
                              double sigma_y2);

// Forest mixture model: the parent of each observed variable is itself a
// latent categorical draw.
struct FmmSpec {
  RowMatrix parent_prior;  // n x m, rows on the simplex
  double prior_var = 1.0;  // variance of p(y_j)
  double cond_var = 1.0;   // variance of p(x_i | parent)
  RowMatrix edge_weights;  // n x m, weight of edge j -> i when selected
  RowMatrix edge_biases;   // n x m
};

void validate_fmm_spec(const FmmSpec& spec);

struct FmmSample {
  Vector x;
  Vector y;
  std::vector<int> parent;  // e_i, one per observed variable
};

// Draw order (fixed, see Rng for the primitive streams): parents for
// i = 0..n-1, then y_j for j = 0..m-1, then observation noise for
// i = 0..n-1. Bitwise reproducible for a fixed seed.
FmmSample sample_fmm(const FmmSpec& spec, std::uint64_t seed);

struct IdxImages {
  int rows = 0;
  int cols = 0;
  std::vector<Vector> images;  // each of length rows * cols, values in [-1, 1]
};

// Parses an IDX3-ubyte file (big-endian magic 0x00000803, then count, rows,
// cols, then row-major bytes) and rescales each byte v to 2 * (v / 255) - 1.
IdxImages load_idx_images(const std::string& path);

// Arithmetic mean of k images sampled without replacement (all of them if
// fewer are available); deterministic given the seed.
Vector mean_bias(const std::vector<Vector>& images, int k, std::uint64_t seed);

}  // namespace fmvi
