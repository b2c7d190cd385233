#include "fmvi/generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "fmvi/rng.hpp"

namespace fmvi {

GaussianDefModel window_model(const ImageGrid& grid, int s, const Vector& b, double sigma_x2,
                              double sigma_y2) {
  if (grid.height < 1 || grid.width < 1) {
    throw std::invalid_argument("window_model: grid dimensions must be >= 1");
  }
  if (s < 1 || s > std::max(grid.height, grid.width)) {
    throw std::invalid_argument("window_model: invalid window side " + std::to_string(s));
  }
  const int n = grid.pixels();
  RowMatrix W = RowMatrix::Zero(n, n);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const int j = r * grid.width + c;
      const int r_end = std::min(r + s, grid.height);
      const int c_end = std::min(c + s, grid.width);
      for (int rr = r; rr < r_end; ++rr) {
        for (int cc = c; cc < c_end; ++cc) {
          W(rr * grid.width + cc, j) = 1.0;
        }
      }
    }
  }
  return make_model(std::move(W), b, sigma_x2, sigma_y2);
}

RegionBlockModel region_block_model(const ImageGrid& grid, int region_side, const Vector& b,
                                    double sigma_x2, double sigma_y2) {
  if (grid.height < 1 || grid.width < 1) {
    throw std::invalid_argument("region_block_model: grid dimensions must be >= 1");
  }
  if (region_side < 1 || grid.height % region_side != 0 || grid.width % region_side != 0) {
    throw std::invalid_argument(
        "region_block_model: grid dimensions must be divisible by region_side");
  }
  const int n = grid.pixels();
  RowMatrix W = RowMatrix::Zero(n, n);
  BlockPartition partition;
  for (int region_r = 0; region_r < grid.height; region_r += region_side) {
    for (int region_c = 0; region_c < grid.width; region_c += region_side) {
      std::vector<int> block;
      block.reserve(static_cast<std::size_t>(region_side) * region_side);
      const int r_limit = region_r + region_side;
      const int c_limit = region_c + region_side;
      for (int r = region_r; r < r_limit; ++r) {
        for (int c = region_c; c < c_limit; ++c) {
          const int j = r * grid.width + c;
          block.push_back(j);
          // Window of the region's side length, clipped to the region.
          const int r_end = std::min(r + region_side, r_limit);
          const int c_end = std::min(c + region_side, c_limit);
          for (int rr = r; rr < r_end; ++rr) {
            for (int cc = c; cc < c_end; ++cc) {
              W(rr * grid.width + cc, j) = 1.0;
            }
          }
        }
      }
      partition.blocks.push_back(std::move(block));
    }
  }
  RegionBlockModel out;
  out.model = make_model(std::move(W), b, sigma_x2, sigma_y2);
  out.partition = std::move(partition);
  return out;
}

GaussianDefModel forest_model(int n, int m, const std::vector<int>& parent,
                              const Vector& weights, const Vector& b, double sigma_x2,
                              double sigma_y2) {
  if (n < 1 || m < 1) throw std::invalid_argument("forest_model: need n >= 1 and m >= 1");
  if (static_cast<int>(parent.size()) != n || weights.size() != n) {
    throw std::invalid_argument("forest_model: parent and weights must have length n");
  }
  RowMatrix W = RowMatrix::Zero(n, m);
  for (int i = 0; i < n; ++i) {
    if (parent[i] < 0 || parent[i] >= m) {
      throw std::invalid_argument("forest_model: invalid parent index " +
                                  std::to_string(parent[i]) + " at row " + std::to_string(i));
    }
    W(i, parent[i]) = weights[i];
  }
  return make_model(std::move(W), b, sigma_x2, sigma_y2);
}

void validate_fmm_spec(const FmmSpec& spec) {
  const int n = static_cast<int>(spec.parent_prior.rows());
  const int m = static_cast<int>(spec.parent_prior.cols());
  if (n < 1 || m < 1) throw std::invalid_argument("fmm spec: empty parent prior");
  if (spec.edge_weights.rows() != n || spec.edge_weights.cols() != m ||
      spec.edge_biases.rows() != n || spec.edge_biases.cols() != m) {
    throw std::invalid_argument("fmm spec: edge parameter shapes must match parent_prior");
  }
  if (!(spec.prior_var > 0.0) || !(spec.cond_var > 0.0)) {
    throw std::invalid_argument("fmm spec: variances must be positive");
  }
  if (!spec.parent_prior.allFinite() || !spec.edge_weights.allFinite() ||
      !spec.edge_biases.allFinite()) {
    throw std::invalid_argument("fmm spec: non-finite entry");
  }
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      const double p = spec.parent_prior(i, j);
      if (p < 0.0) throw std::invalid_argument("fmm spec: negative prior probability");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("fmm spec: parent prior row " + std::to_string(i) +
                                  " does not sum to 1");
    }
  }
}

FmmSample sample_fmm(const FmmSpec& spec, std::uint64_t seed) {
  validate_fmm_spec(spec);
  const int n = static_cast<int>(spec.parent_prior.rows());
  const int m = static_cast<int>(spec.parent_prior.cols());
  Rng rng(seed);

  FmmSample sample;
  sample.parent.resize(n);
  for (int i = 0; i < n; ++i) {
    sample.parent[i] = rng.categorical(std::span<const double>(spec.parent_prior.row(i).data(),
                                                               static_cast<std::size_t>(m)));
  }
  sample.y = Vector(m);
  const double prior_sd = std::sqrt(spec.prior_var);
  for (int j = 0; j < m; ++j) sample.y[j] = prior_sd * rng.normal();
  sample.x = Vector(n);
  const double cond_sd = std::sqrt(spec.cond_var);
  for (int i = 0; i < n; ++i) {
    const int e = sample.parent[i];
    sample.x[i] = spec.edge_biases(i, e) + spec.edge_weights(i, e) * sample.y[e] +
                  cond_sd * rng.normal();
  }
  return sample;
}

namespace {

std::uint32_t read_be32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace

IdxImages load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw std::runtime_error("idx: truncated header in " + path);

  const std::uint32_t magic = read_be32(bytes.data());
  if (magic != 0x00000803u) {
    throw std::runtime_error("idx: bad magic " + std::to_string(magic) + " in " + path +
                             ", expected 2051 (IDX3-ubyte)");
  }
  const std::uint64_t count = read_be32(bytes.data() + 4);
  const std::uint64_t rows = read_be32(bytes.data() + 8);
  const std::uint64_t cols = read_be32(bytes.data() + 12);
  if (rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 16) ||
      count * rows * cols > (1ull << 33)) {
    throw std::runtime_error("idx: dimension overflow in " + path);
  }
  const std::uint64_t expected = count * rows * cols;
  if (bytes.size() < 16 + expected) throw std::runtime_error("idx: truncated data in " + path);

  IdxImages out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  out.images.reserve(count);
  const unsigned char* p = bytes.data() + 16;
  for (std::uint64_t k = 0; k < count; ++k) {
    Vector img(rows * cols);
    for (std::uint64_t t = 0; t < rows * cols; ++t) {
      img[static_cast<Eigen::Index>(t)] = 2.0 * (static_cast<double>(*p++) / 255.0) - 1.0;
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

Vector mean_bias(const std::vector<Vector>& images, int k, std::uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("mean_bias: no images");
  if (k < 1) throw std::invalid_argument("mean_bias: k must be >= 1");
  const int total = static_cast<int>(images.size());
  const int take = std::min(k, total);

  // Partial Fisher-Yates over the index vector, driven by the documented RNG.
  std::vector<int> index(total);
  std::iota(index.begin(), index.end(), 0);
  Rng rng(seed);
  for (int t = 0; t < take; ++t) {
    const int swap_with = rng.uniform_int(t, total - 1);
    std::swap(index[t], index[swap_with]);
  }

  Vector acc = Vector::Zero(images[0].size());
  for (int t = 0; t < take; ++t) {
    const Vector& img = images[index[t]];
    if (img.size() != acc.size()) {
      throw std::invalid_argument("mean_bias: images have inconsistent sizes");
    }
    acc += img;
  }
  return acc / static_cast<double>(take);
}

}  // namespace fmvi
