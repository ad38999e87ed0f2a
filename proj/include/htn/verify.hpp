// verify.hpp: independent dense oracles and the acceptance criteria runners
// shared by the acceptance test binary and `htn verify`.

#pragma once

#include "htn/cli.hpp"
#include "htn/qcompile.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace htn::verify {

// ---- oracles --------------------------------------------------------------

/// Textbook triple-loop product.
Matrix matmul_triple_loop(const Matrix& a, const Matrix& b);

/// Full isometry of the chain as one matrix from (phys_0, ..., phys_{n-1}) to
/// (red_0, out_0, ..., red_{n-1}, out_{n-1}), built by composing the site
/// tensors in the full Hilbert space.
Matrix dense_isometry(const HtnModel& model);

/// tr_B(U sigma U^dag (D_B x I_A)) with every matrix materialized.
Matrix dense_forward(const HtnModel& model, const EncodedState& sigma);

/// Partial trace by explicit index summation over the traced subsystems.
Matrix explicit_partial_trace(const Matrix& rho, const std::vector<std::size_t>& dims,
                              const std::vector<std::size_t>& traced);

/// Dense Stinespring channel rho -> tr_env(V rho V^dag) with V mapping
/// d_in -> d_out * d_env (output most significant).
struct DenseChannel {
  Matrix isometry;
  std::size_t d_out = 1;
  std::size_t d_env = 1;
  Matrix apply(const Matrix& rho) const;
};
DenseChannel random_channel(std::size_t d_in, std::size_t d_out, std::size_t d_env,
                            std::mt19937_64& rng);

/// Central differences of the mean loss with respect to (Re, Im) of every
/// site entry and every reduction parameter, in the layout of LossGradient.
LossGradient finite_difference_gradient(std::span<const Sample> batch, const HtnModel& model,
                                        const LossConfig& cfg, double h);

// ---- random instances -----------------------------------------------------

Matrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
/// Random full-rank density matrix of trace 1.
Matrix random_density(std::size_t d, std::mt19937_64& rng);
/// Random model with n sites, chi, xi, at least two classes and random reduction
/// parameters; retries shapes that cannot be isometric.
HtnModel random_model(std::mt19937_64& rng, std::size_t max_sites, std::size_t max_chi,
                      std::size_t max_xi, std::size_t min_sites = 1);
Sample random_sample(const HtnModel& model, std::mt19937_64& rng);

// ---- acceptance -----------------------------------------------------------

struct VerifyOptions {
  std::filesystem::path data_dir;   // holds iris.csv
  std::filesystem::path mnist_dir;  // holds the four IDX files
  bool long_running = false;
  std::size_t iris_sweeps = 20;
  std::size_t iris_adam_steps = 50;
  /// Progress lines for long criteria; may be empty.
  std::function<void(const std::string&)> progress;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr int kCriterionCount = 12;

CriterionResult run_criterion(int id, const VerifyOptions& opts);

/// "PASS  [n] name: detail" style line.
std::string format_result(const CriterionResult& r);

}  // namespace htn::verify
