#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fmvi/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fmbench: convergence benchmarks for parallel mean-field inference "
               "in Gaussian latent linear models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  int threads = 1;

  CLI::App* run = app.add_subcommand("run", "run the configured algorithms and write traces");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--output-dir", output_dir, "output directory (default: config output_path)");
  run->add_option("--threads", threads, "parallelism for the FM and block phases")
      ->check(CLI::PositiveNumber);

  CLI::App* oracle = app.add_subcommand("oracle", "write the exact ridge optimum for the config");
  oracle->add_option("--config", config_path, "experiment config (JSON)")->required();
  oracle->add_option("--output-dir", output_dir, "output directory (default: config output_path)");

  CLI11_PARSE(app, argc, argv);

  try {
    const fmvi::ExperimentConfig cfg = fmvi::load_config(config_path);
    if (run->parsed()) {
      fmvi::run_experiment(cfg, output_dir, threads);
    } else {
      fmvi::write_oracle(cfg, output_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
