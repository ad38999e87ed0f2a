// htn: command-line front end for experiments, the circuit compiler and the
// acceptance checks.

#include "htn/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef HTN_DATA_DIR
#define HTN_DATA_DIR "data"
#endif

namespace {

using namespace htn;

struct CommonOptions {
  std::string out = "results";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

int run_experiment_command(const std::string& config_path, const CommonOptions& common,
                           bool require_grid) {
  cli::ExperimentConfig cfg = cli::load_config(config_path);
  if (require_grid && !cfg.has_grid())
    throw cli::ConfigError("grid: the config has no grid lists (use `htn run` for a single cell)");
  if (common.seed) cfg.set_seed(*common.seed);
  const auto summary = cli::run_experiment(cfg, common.out, common.threads);
  std::size_t failed = 0;
  for (const auto& c : summary.cells) {
    if (!c.report) {
      ++failed;
      std::printf("cell %zu chi=%zu xi=%zu: error: %s\n", c.cell.index, c.cell.chi, c.cell.xi,
                  c.error.c_str());
      continue;
    }
    const auto& last = c.report->sweeps.empty() ? c.report->initial : c.report->sweeps.back();
    std::printf("cell %zu chi=%zu xi=%zu: train loss %.6f acc %.4f | test loss %.6f acc %.4f (%.1f s)\n",
                c.cell.index, c.cell.chi, c.cell.xi, last.train.loss, last.train.accuracy,
                last.test.loss, last.test.accuracy, c.seconds);
  }
  std::printf("wrote %s\n", summary.csv_path.string().c_str());
  return failed == 0 ? 0 : 1;
}

void print_state(const char* label, const qc::StateVector& s) {
  std::printf("%s:", label);
  for (Eigen::Index i = 0; i < s.amplitudes.size(); ++i)
    std::printf(" (%.6f%+.6fi)", s.amplitudes(i).real(), s.amplitudes(i).imag());
  std::printf("\n");
}

int demo_toffoli() {
  const auto r = qc::toffoli_separation_demo();
  std::cout << qc::circuit_to_string(r.circuit);
  print_state("|+1> ->", r.output_a);
  print_state("|1+> ->", r.output_b);
  std::printf("fidelity |00>: %.15f  retention: %.15f\n", r.fidelity_a, r.retention_a);
  std::printf("fidelity |11>: %.15f  retention: %.15f\n", r.fidelity_b, r.retention_b);
  std::printf("input overlap %.15f, output overlap %.3g\n", r.input_overlap, r.output_overlap);
  return 0;
}

/// Rows of numbers or [re, im] pairs, either bare or under a "matrix" key.
Matrix parse_matrix_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.is_object()) j = j.at("matrix");
  if (!j.is_array() || j.empty()) throw cli::ConfigError("compile: expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw cli::ConfigError("compile: row " + std::to_string(r) + " has the wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& e = row[static_cast<std::size_t>(c)];
      if (e.is_number())
        m(r, c) = Complex{e.get<double>(), 0.0};
      else if (e.is_array() && e.size() == 2)
        m(r, c) = Complex{e[0].get<double>(), e[1].get<double>()};
      else
        throw cli::ConfigError("compile: entries must be numbers or [re, im] pairs");
    }
  }
  return m;
}

int compile_command(const std::string& path, bool deferred, const std::string& out) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("compile: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto circuit = qc::compile_matrix(parse_matrix_json(ss.str()), deferred);
  if (out.empty())
    qc::write_circuit(std::cout, circuit);
  else
    cli::write_file_atomic(out, qc::circuit_to_string(circuit));
  return 0;
}

int verify_command(bool long_running, const std::vector<int>& only, const std::string& data_dir,
                   const std::string& mnist_dir) {
  verify::VerifyOptions opts;
  opts.data_dir = data_dir;
  opts.mnist_dir = mnist_dir;
  opts.long_running = long_running;
  opts.progress = [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };
  std::vector<int> ids = only;
  if (ids.empty())
    for (int i = 1; i <= verify::kCriterionCount; ++i) ids.push_back(i);
  int failed = 0;
  for (int id : ids) {
    const auto r = verify::run_criterion(id, opts);
    std::printf("%s\n", verify::format_result(r).c_str());
    std::fflush(stdout);
    if (!r.passed && !r.skipped) ++failed;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid tensor network classifiers and post-selection circuits"};
  app.require_subcommand(1);
  app.fallthrough();
  CommonOptions common;
  app.add_option("--out", common.out, "Output directory (run/grid) or file (compile)");
  app.add_option("--seed", common.seed, "Override every seed in the config");
  app.add_option("--threads", common.threads, "Worker threads for grid cells")->check(CLI::PositiveNumber);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* grid = app.add_subcommand("grid", "Run the (chi, xi, t|w) grid of a JSON config");
  grid->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  auto* demo = app.add_subcommand("demo", "Demonstrations");
  demo->require_subcommand(1);
  auto* toffoli = demo->add_subcommand("toffoli", "Post-selected separation of |+1> and |1+>");

  std::string matrix_path;
  bool deferred = false;
  auto* compile = app.add_subcommand("compile", "Compile a matrix into a post-selection circuit");
  compile->add_option("matrix", matrix_path, "JSON matrix file")->required()->check(CLI::ExistingFile);
  compile->add_flag("--deferred", deferred, "One ancilla per singular value");

  bool long_running = false;
  std::vector<int> only;
  std::string data_dir = HTN_DATA_DIR;
  std::string mnist_dir = std::string(HTN_DATA_DIR) + "/mnist";
  auto* verify = app.add_subcommand("verify", "Run the acceptance checks");
  verify->add_flag("--long", long_running, "Include long-running checks");
  verify->add_option("--only", only, "Criterion numbers to run")->check(CLI::Range(1, htn::verify::kCriterionCount));
  verify->add_option("--data-dir", data_dir, "Directory holding iris.csv");
  verify->add_option("--mnist-dir", mnist_dir, "Directory holding the MNIST IDX files");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_experiment_command(config_path, common, false);
    if (*grid) return run_experiment_command(config_path, common, true);
    if (*toffoli) return demo_toffoli();
    if (*compile) return compile_command(matrix_path, deferred, app.get_option("--out")->count() ? common.out : "");
    if (*verify) return verify_command(long_running, only, data_dir, mnist_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "htn: %s\n", e.what());
    return 2;
  }
  return 0;
}
