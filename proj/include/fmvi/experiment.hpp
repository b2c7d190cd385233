#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmvi/baselines.hpp"
#include "fmvi/core.hpp"
#include "fmvi/generators.hpp"

namespace fmvi {

// Config-driven experiment runner. The JSON schema is strict: unknown keys
// anywhere in the document are a hard error, and every parse error names the
// offending field.
struct ExperimentConfig {
  enum class Source { window, region_block, forest, fmm, file };

  struct WindowParams {
    int height = 28, width = 28, s = 1;
  };
  struct RegionParams {
    int height = 28, width = 28, region_side = 7;
  };
  struct ForestParams {
    int n = 0, m = 0;
    std::vector<int> parent;
    Vector weights;
  };
  struct FmmParams {
    int n = 0, m = 0;
    std::optional<RowMatrix> parent_prior;  // uniform when absent
    std::optional<RowMatrix> edge_weights;  // all ones when absent
    std::optional<RowMatrix> edge_biases;   // all zeros when absent
    std::optional<std::uint64_t> seed;      // falls back to the experiment seed
  };

  struct DataSpec {
    enum class Kind { idx, constant, values, fmm_sample };
    Kind kind = Kind::constant;
    std::string path;      // idx
    int index = 0;         // idx
    double value = 0.0;    // constant
    Vector values;         // values
  };

  struct BiasSpec {
    enum class Kind { zero, mean_of_k, file };
    Kind kind = Kind::zero;
    std::string path;  // mean_of_k idx source, or json array file
    int k = 1000;
    std::uint64_t seed = 0;
  };

  Source source = Source::window;
  WindowParams window;
  RegionParams region_block;
  ForestParams forest;
  FmmParams fmm;
  std::string model_file;

  double sigma_x2 = 1.0;
  double sigma_y2 = 1.0;
  DataSpec data;
  BiasSpec bias;
  std::vector<std::string> algorithms;  // subset of {"fm", "cavi", "block"}
  std::optional<std::vector<std::vector<int>>> partition;
  long iterations = 0;
  std::uint64_t seed = 0;
  std::string output_path;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

struct BuiltExperiment {
  GaussianDefModel model;
  Vector x;
  std::optional<BlockPartition> partition;
};

BuiltExperiment build_experiment(const ExperimentConfig& config);

// Runs every requested algorithm from the shared init (mu = 0, sigma2 =
// sigma_y2) and writes trace_<alg>.csv plus summary_<alg>.txt into
// output_dir (falls back to config.output_path). Identical config and seed
// produce byte-identical files for any thread count.
void run_experiment(const ExperimentConfig& config, const std::string& output_dir, int threads);

// Writes oracle.txt (key=value) and oracle_mean.csv with the exact ridge
// minimizer.
void write_oracle(const ExperimentConfig& config, const std::string& output_dir);

// Shortest round-trip decimal representation.
std::string format_double(double v);

void write_trace_csv(const std::string& path, const std::string& algorithm,
                     const ConvergenceTrace& trace);

// First iteration whose ridge loss is within 1% relative of the oracle loss
// (absolute threshold 1e-12 when the oracle loss is zero); -1 if never.
long iterations_to_1pct(const ConvergenceTrace& trace, double oracle_loss);

}  // namespace fmvi
