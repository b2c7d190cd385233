#include "fmvi/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fmvi/fm.hpp"

namespace fmvi {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& what) {
  throw std::runtime_error("config: " + what);
}

void check_keys(const json& obj, const std::string& context,
                const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      config_error("unknown key '" + item.key() + "' in '" + context + "'");
    }
  }
}

const json& require(const json& obj, const std::string& context, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) config_error("missing '" + key + "' in '" + context + "'");
  return *it;
}

double as_number(const json& v, const std::string& field) {
  if (!v.is_number()) config_error("'" + field + "' must be a number");
  return v.get<double>();
}

long as_integer(const json& v, const std::string& field) {
  if (!v.is_number_integer()) config_error("'" + field + "' must be an integer");
  return v.get<long>();
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) config_error("'" + field + "' must be a string");
  return v.get<std::string>();
}

Vector as_vector(const json& v, const std::string& field) {
  if (!v.is_array()) config_error("'" + field + "' must be an array of numbers");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = as_number(v[i], field);
  return out;
}

RowMatrix as_matrix(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty()) config_error("'" + field + "' must be a nonempty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  if (cols == 0) config_error("'" + field + "' rows must be nonempty arrays");
  RowMatrix out(v.size(), cols);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) {
      config_error("'" + field + "' rows must all have the same length");
    }
    for (std::size_t j = 0; j < cols; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = as_number(v[i][j], field);
    }
  }
  return out;
}

ExperimentConfig::DataSpec parse_data(const json& obj) {
  if (!obj.is_object()) config_error("'data' must be an object");
  ExperimentConfig::DataSpec data;
  const std::string type = as_string(require(obj, "data", "type"), "data.type");
  if (type == "idx") {
    check_keys(obj, "data", {"type", "path", "index"});
    data.kind = ExperimentConfig::DataSpec::Kind::idx;
    data.path = as_string(require(obj, "data", "path"), "data.path");
    data.index = static_cast<int>(as_integer(require(obj, "data", "index"), "data.index"));
  } else if (type == "constant") {
    check_keys(obj, "data", {"type", "value"});
    data.kind = ExperimentConfig::DataSpec::Kind::constant;
    data.value = as_number(require(obj, "data", "value"), "data.value");
  } else if (type == "values") {
    check_keys(obj, "data", {"type", "values"});
    data.kind = ExperimentConfig::DataSpec::Kind::values;
    data.values = as_vector(require(obj, "data", "values"), "data.values");
  } else if (type == "fmm_sample") {
    check_keys(obj, "data", {"type"});
    data.kind = ExperimentConfig::DataSpec::Kind::fmm_sample;
  } else {
    config_error("'data.type' must be one of idx|constant|values|fmm_sample");
  }
  return data;
}

ExperimentConfig::BiasSpec parse_bias(const json& obj) {
  if (!obj.is_object()) config_error("'bias' must be an object");
  ExperimentConfig::BiasSpec bias;
  const std::string type = as_string(require(obj, "bias", "type"), "bias.type");
  if (type == "zero") {
    check_keys(obj, "bias", {"type"});
    bias.kind = ExperimentConfig::BiasSpec::Kind::zero;
  } else if (type == "mean_of_k") {
    check_keys(obj, "bias", {"type", "idx_path", "k", "seed"});
    bias.kind = ExperimentConfig::BiasSpec::Kind::mean_of_k;
    bias.path = as_string(require(obj, "bias", "idx_path"), "bias.idx_path");
    bias.k = obj.contains("k") ? static_cast<int>(as_integer(obj["k"], "bias.k")) : 1000;
    bias.seed = obj.contains("seed")
                    ? static_cast<std::uint64_t>(as_integer(obj["seed"], "bias.seed"))
                    : 0;
  } else if (type == "file") {
    check_keys(obj, "bias", {"type", "path"});
    bias.kind = ExperimentConfig::BiasSpec::Kind::file;
    bias.path = as_string(require(obj, "bias", "path"), "bias.path");
  } else {
    config_error("'bias.type' must be one of zero|mean_of_k|file");
  }
  return bias;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) config_error("top level must be an object");
  check_keys(root, "config",
             {"model_source", "window", "region_block", "forest", "fmm", "model_file",
              "sigma_x2", "sigma_y2", "data", "bias", "algorithms", "partition", "iterations",
              "seed", "output_path"});

  ExperimentConfig cfg;
  const std::string source = as_string(require(root, "config", "model_source"), "model_source");

  if (source == "window") {
    cfg.source = ExperimentConfig::Source::window;
    const json& w = require(root, "config", "window");
    check_keys(w, "window", {"height", "width", "s"});
    cfg.window.height = static_cast<int>(as_integer(require(w, "window", "height"), "window.height"));
    cfg.window.width = static_cast<int>(as_integer(require(w, "window", "width"), "window.width"));
    cfg.window.s = static_cast<int>(as_integer(require(w, "window", "s"), "window.s"));
  } else if (source == "region_block") {
    cfg.source = ExperimentConfig::Source::region_block;
    const json& r = require(root, "config", "region_block");
    check_keys(r, "region_block", {"height", "width", "region_side"});
    cfg.region_block.height =
        static_cast<int>(as_integer(require(r, "region_block", "height"), "region_block.height"));
    cfg.region_block.width =
        static_cast<int>(as_integer(require(r, "region_block", "width"), "region_block.width"));
    cfg.region_block.region_side = static_cast<int>(
        as_integer(require(r, "region_block", "region_side"), "region_block.region_side"));
  } else if (source == "forest") {
    cfg.source = ExperimentConfig::Source::forest;
    const json& f = require(root, "config", "forest");
    check_keys(f, "forest", {"n", "m", "parent", "weights"});
    cfg.forest.n = static_cast<int>(as_integer(require(f, "forest", "n"), "forest.n"));
    cfg.forest.m = static_cast<int>(as_integer(require(f, "forest", "m"), "forest.m"));
    const json& parent = require(f, "forest", "parent");
    if (!parent.is_array()) config_error("'forest.parent' must be an array");
    for (const auto& p : parent) {
      cfg.forest.parent.push_back(static_cast<int>(as_integer(p, "forest.parent")));
    }
    cfg.forest.weights = as_vector(require(f, "forest", "weights"), "forest.weights");
  } else if (source == "fmm") {
    cfg.source = ExperimentConfig::Source::fmm;
    const json& f = require(root, "config", "fmm");
    check_keys(f, "fmm", {"n", "m", "parent_prior", "edge_weights", "edge_biases", "seed"});
    cfg.fmm.n = static_cast<int>(as_integer(require(f, "fmm", "n"), "fmm.n"));
    cfg.fmm.m = static_cast<int>(as_integer(require(f, "fmm", "m"), "fmm.m"));
    if (f.contains("parent_prior")) cfg.fmm.parent_prior = as_matrix(f["parent_prior"], "fmm.parent_prior");
    if (f.contains("edge_weights")) cfg.fmm.edge_weights = as_matrix(f["edge_weights"], "fmm.edge_weights");
    if (f.contains("edge_biases")) cfg.fmm.edge_biases = as_matrix(f["edge_biases"], "fmm.edge_biases");
    if (f.contains("seed")) cfg.fmm.seed = static_cast<std::uint64_t>(as_integer(f["seed"], "fmm.seed"));
  } else if (source == "file") {
    cfg.source = ExperimentConfig::Source::file;
    cfg.model_file = as_string(require(root, "config", "model_file"), "model_file");
  } else {
    config_error("'model_source' must be one of window|region_block|forest|fmm|file");
  }

  if (root.contains("sigma_x2")) cfg.sigma_x2 = as_number(root["sigma_x2"], "sigma_x2");
  if (root.contains("sigma_y2")) cfg.sigma_y2 = as_number(root["sigma_y2"], "sigma_y2");
  cfg.data = parse_data(require(root, "config", "data"));
  if (root.contains("bias")) cfg.bias = parse_bias(root["bias"]);

  const json& algos = require(root, "config", "algorithms");
  if (!algos.is_array() || algos.empty()) config_error("'algorithms' must be a nonempty array");
  for (const auto& a : algos) {
    const std::string name = as_string(a, "algorithms");
    if (name != "fm" && name != "cavi" && name != "block") {
      config_error("'algorithms' entries must be one of fm|cavi|block");
    }
    if (std::find(cfg.algorithms.begin(), cfg.algorithms.end(), name) != cfg.algorithms.end()) {
      config_error("'algorithms' lists '" + name + "' twice");
    }
    cfg.algorithms.push_back(name);
  }

  if (root.contains("partition")) {
    const json& part = root["partition"];
    if (!part.is_array() || part.empty()) config_error("'partition' must be a nonempty array");
    std::vector<std::vector<int>> blocks;
    for (const auto& blk : part) {
      if (!blk.is_array()) config_error("'partition' blocks must be arrays of indices");
      std::vector<int> block;
      for (const auto& idx : blk) block.push_back(static_cast<int>(as_integer(idx, "partition")));
      blocks.push_back(std::move(block));
    }
    cfg.partition = std::move(blocks);
  }

  cfg.iterations = as_integer(require(root, "config", "iterations"), "iterations");
  if (cfg.iterations < 0) config_error("'iterations' must be >= 0");
  if (root.contains("seed")) cfg.seed = static_cast<std::uint64_t>(as_integer(root["seed"], "seed"));
  if (root.contains("output_path")) cfg.output_path = as_string(root["output_path"], "output_path");

  const bool wants_block =
      std::find(cfg.algorithms.begin(), cfg.algorithms.end(), "block") != cfg.algorithms.end();
  if (wants_block && cfg.source != ExperimentConfig::Source::region_block && !cfg.partition) {
    config_error("'algorithms' includes block but no partition source is given "
                 "(use model_source region_block or an explicit 'partition')");
  }
  if (cfg.data.kind == ExperimentConfig::DataSpec::Kind::fmm_sample &&
      cfg.source != ExperimentConfig::Source::fmm) {
    config_error("'data.type' fmm_sample requires model_source fmm");
  }
  if (cfg.source == ExperimentConfig::Source::fmm &&
      cfg.bias.kind != ExperimentConfig::BiasSpec::Kind::zero) {
    config_error("'bias' must be zero for model_source fmm (biases come from the sampled edges)");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

Vector bias_vector(const ExperimentConfig& cfg, int n) {
  switch (cfg.bias.kind) {
    case ExperimentConfig::BiasSpec::Kind::zero:
      return Vector::Zero(n);
    case ExperimentConfig::BiasSpec::Kind::mean_of_k: {
      const IdxImages images = load_idx_images(cfg.bias.path);
      Vector b = mean_bias(images.images, cfg.bias.k, cfg.bias.seed);
      if (b.size() != n) {
        throw std::runtime_error("config: 'bias.idx_path' images have length " +
                                 std::to_string(b.size()) + ", model expects " + std::to_string(n));
      }
      return b;
    }
    case ExperimentConfig::BiasSpec::Kind::file: {
      std::ifstream in(cfg.bias.path);
      if (!in) throw std::runtime_error("config: cannot open 'bias.path' " + cfg.bias.path);
      json v;
      try {
        in >> v;
      } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: 'bias.path' is not valid JSON: ") + e.what());
      }
      Vector b = as_vector(v, "bias.path contents");
      if (b.size() != n) {
        throw std::runtime_error("config: 'bias.path' has length " + std::to_string(b.size()) +
                                 ", model expects " + std::to_string(n));
      }
      return b;
    }
  }
  throw std::logic_error("unreachable bias kind");
}

GaussianDefModel model_from_file(const ExperimentConfig& cfg) {
  std::ifstream in(cfg.model_file);
  if (!in) throw std::runtime_error("config: cannot open 'model_file' " + cfg.model_file);
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: 'model_file' is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) config_error("'model_file' top level must be an object");
  check_keys(root, "model_file", {"n", "m", "W", "b"});
  const int n = static_cast<int>(as_integer(require(root, "model_file", "n"), "model_file.n"));
  const int m = static_cast<int>(as_integer(require(root, "model_file", "m"), "model_file.m"));
  RowMatrix W = as_matrix(require(root, "model_file", "W"), "model_file.W");
  Vector b = as_vector(require(root, "model_file", "b"), "model_file.b");
  if (W.rows() != n || W.cols() != m || b.size() != n) {
    config_error("'model_file' dimensions are inconsistent with n and m");
  }
  return make_model(std::move(W), std::move(b), cfg.sigma_x2, cfg.sigma_y2);
}

}  // namespace

BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  BuiltExperiment built;
  std::optional<FmmSample> fmm_sample_data;

  switch (cfg.source) {
    case ExperimentConfig::Source::window: {
      const ImageGrid grid{cfg.window.height, cfg.window.width};
      built.model = window_model(grid, cfg.window.s, bias_vector(cfg, grid.pixels()),
                                 cfg.sigma_x2, cfg.sigma_y2);
      break;
    }
    case ExperimentConfig::Source::region_block: {
      const ImageGrid grid{cfg.region_block.height, cfg.region_block.width};
      RegionBlockModel rb = region_block_model(grid, cfg.region_block.region_side,
                                               bias_vector(cfg, grid.pixels()), cfg.sigma_x2,
                                               cfg.sigma_y2);
      built.model = std::move(rb.model);
      built.partition = std::move(rb.partition);
      break;
    }
    case ExperimentConfig::Source::forest: {
      built.model = forest_model(cfg.forest.n, cfg.forest.m, cfg.forest.parent,
                                 cfg.forest.weights, bias_vector(cfg, cfg.forest.n),
                                 cfg.sigma_x2, cfg.sigma_y2);
      break;
    }
    case ExperimentConfig::Source::fmm: {
      if (cfg.fmm.n < 1 || cfg.fmm.m < 1) config_error("'fmm' needs n >= 1 and m >= 1");
      FmmSpec spec;
      spec.parent_prior = cfg.fmm.parent_prior
                              ? *cfg.fmm.parent_prior
                              : RowMatrix::Constant(cfg.fmm.n, cfg.fmm.m, 1.0 / cfg.fmm.m);
      spec.edge_weights =
          cfg.fmm.edge_weights ? *cfg.fmm.edge_weights : RowMatrix::Ones(cfg.fmm.n, cfg.fmm.m);
      spec.edge_biases =
          cfg.fmm.edge_biases ? *cfg.fmm.edge_biases : RowMatrix::Zero(cfg.fmm.n, cfg.fmm.m);
      spec.prior_var = cfg.sigma_y2;
      spec.cond_var = cfg.sigma_x2;
      const FmmSample sample = sample_fmm(spec, cfg.fmm.seed.value_or(cfg.seed));
      Vector weights(cfg.fmm.n), biases(cfg.fmm.n);
      for (int i = 0; i < cfg.fmm.n; ++i) {
        weights[i] = spec.edge_weights(i, sample.parent[i]);
        biases[i] = spec.edge_biases(i, sample.parent[i]);
      }
      built.model = forest_model(cfg.fmm.n, cfg.fmm.m, sample.parent, weights, biases,
                                 cfg.sigma_x2, cfg.sigma_y2);
      fmm_sample_data = sample;
      break;
    }
    case ExperimentConfig::Source::file:
      built.model = model_from_file(cfg);
      break;
  }

  switch (cfg.data.kind) {
    case ExperimentConfig::DataSpec::Kind::idx: {
      const IdxImages images = load_idx_images(cfg.data.path);
      if (cfg.data.index < 0 || cfg.data.index >= static_cast<int>(images.images.size())) {
        throw std::runtime_error("config: 'data.index' out of range for " + cfg.data.path);
      }
      built.x = images.images[static_cast<std::size_t>(cfg.data.index)];
      break;
    }
    case ExperimentConfig::DataSpec::Kind::constant:
      built.x = Vector::Constant(built.model.n, cfg.data.value);
      break;
    case ExperimentConfig::DataSpec::Kind::values:
      built.x = cfg.data.values;
      break;
    case ExperimentConfig::DataSpec::Kind::fmm_sample:
      built.x = fmm_sample_data->x;
      break;
  }
  if (built.x.size() != built.model.n) {
    throw std::runtime_error("config: 'data' has length " + std::to_string(built.x.size()) +
                             ", model expects " + std::to_string(built.model.n));
  }

  if (cfg.partition) {
    BlockPartition part;
    part.blocks = *cfg.partition;
    validate_partition(part, built.model.m);
    built.partition = std::move(part);
  }
  return built;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(const std::string& path, const std::string& algorithm,
                     const ConvergenceTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  out << "iteration,algorithm,ridge_loss,elbo,fm_bound,gap\n";
  for (const TraceRow& row : trace.rows) {
    out << row.iteration << ',' << algorithm << ',' << format_double(row.ridge_loss) << ','
        << format_double(row.elbo) << ',';
    if (row.fm_bound) out << format_double(*row.fm_bound);
    out << ',';
    if (row.gap) out << format_double(*row.gap);
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

long iterations_to_1pct(const ConvergenceTrace& trace, double oracle_loss) {
  if (!std::isfinite(oracle_loss)) return -1;
  const double threshold = oracle_loss > 0.0 ? 1.01 * oracle_loss : 1e-12;
  for (const TraceRow& row : trace.rows) {
    if (row.ridge_loss <= threshold) return row.iteration;
  }
  return -1;
}

namespace {

void write_summary(const std::string& path, double final_loss, double oracle_loss,
                   long to_1pct, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  out << "final_loss=" << format_double(final_loss) << '\n';
  out << "oracle_loss=" << format_double(oracle_loss) << '\n';
  out << "iterations_to_1pct=" << to_1pct << '\n';
  out << "sigma_x2=" << format_double(cfg.sigma_x2) << '\n';
  out << "sigma_y2=" << format_double(cfg.sigma_y2) << '\n';
  out << "seed=" << cfg.seed << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg,
                                         const std::string& output_dir) {
  std::filesystem::path dir = output_dir.empty()
                                  ? (cfg.output_path.empty() ? "." : cfg.output_path)
                                  : output_dir;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, const std::string& output_dir, int threads) {
  const BuiltExperiment built = build_experiment(cfg);
  validate_model(built.model);
  const std::filesystem::path dir = resolve_output_dir(cfg, output_dir);
  const VariationalState init = default_init(built.model);

  double oracle_loss = std::numeric_limits<double>::quiet_NaN();
  if (built.model.m <= 10000) {
    const Posterior post = exact_posterior(built.model, built.x);
    oracle_loss = ridge_loss(built.model, built.x, post.mean);
  }

  for (const std::string& alg : cfg.algorithms) {
    ConvergenceTrace trace;
    if (alg == "fm") {
      trace = fm_run(built.model, built.x, init, cfg.iterations, threads).trace;
    } else if (alg == "cavi") {
      trace = cavi_run(built.model, built.x, init, cfg.iterations).trace;
    } else {
      if (!built.partition) throw std::runtime_error("config: block run without a partition");
      trace = block_run(built.model, built.x, init, cfg.iterations, *built.partition, threads).trace;
    }
    write_trace_csv((dir / ("trace_" + alg + ".csv")).string(), alg, trace);
    write_summary((dir / ("summary_" + alg + ".txt")).string(), trace.rows.back().ridge_loss,
                  oracle_loss, iterations_to_1pct(trace, oracle_loss), cfg);
  }
}

void write_oracle(const ExperimentConfig& cfg, const std::string& output_dir) {
  const BuiltExperiment built = build_experiment(cfg);
  validate_model(built.model);
  if (built.model.m > 10000) {
    throw std::runtime_error("oracle: model too large to factor (m > 10000)");
  }
  const std::filesystem::path dir = resolve_output_dir(cfg, output_dir);

  const Posterior post = exact_posterior(built.model, built.x);
  const double loss = ridge_loss(built.model, built.x, post.mean);

  {
    std::ofstream out(dir / "oracle.txt", std::ios::binary);
    if (!out) throw std::runtime_error("cannot open oracle.txt");
    out << "oracle_loss=" << format_double(loss) << '\n';
    out << "n=" << built.model.n << '\n';
    out << "m=" << built.model.m << '\n';
    out << "sigma_x2=" << format_double(cfg.sigma_x2) << '\n';
    out << "sigma_y2=" << format_double(cfg.sigma_y2) << '\n';
    out << "seed=" << cfg.seed << '\n';
  }
  {
    std::ofstream out(dir / "oracle_mean.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot open oracle_mean.csv");
    out << "index,mean\n";
    for (int j = 0; j < post.mean.size(); ++j) {
      out << j << ',' << format_double(post.mean[j]) << '\n';
    }
  }
}

}  // namespace fmvi
