// train.hpp: two-site Adam sweeps with cached environments, plus the
// data-derived initialization.

#pragma once

#include "htn/channel.hpp"
#include "htn/model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace htn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

struct SweepConfig {
  std::size_t n_sweeps = 20;
  std::size_t adam_steps_per_site = 50;
  AdamConfig adam;
  std::uint64_t seed = 42;
  /// Recontract every environment after each bond update and compare.
  bool check_cache = false;

  void validate() const;
};

class CacheInconsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-sample environments of the doubled (ket, reduction, bra) chain.
///
/// left(k) is the bond density entering site k. right(k) maps a density on
/// the bond entering site k to the output produced by sites k..n-1, stored as
/// a matrix with rows (out, out') and columns (bond, bond').
class EnvironmentCache {
 public:
  EnvironmentCache(const HtnModel& model, std::span<const Sample> batch);

  void rebuild(const HtnModel& model);
  /// Refresh the two environments that border a just-updated window (k, k+1).
  void refresh_window(const HtnModel& model, std::size_t k);

  const Matrix& left(std::size_t k, std::size_t sample) const { return left_[k][sample]; }
  const Matrix& right(std::size_t k, std::size_t sample) const { return right_[k][sample]; }
  std::size_t size() const { return batch_.size(); }
  std::span<const Sample> batch() const { return batch_; }

  /// Largest entrywise deviation between the window-contracted output and a
  /// from-scratch forward pass, over all samples, for window (k, k+1).
  double window_deviation(const HtnModel& model, std::size_t k) const;

  /// Throws CacheInconsistencyError when window_deviation exceeds tol.
  void verify(const HtnModel& model, std::size_t k, double tol = 1e-8) const;

 private:
  std::span<const Sample> batch_;
  std::vector<std::vector<Matrix>> left_;
  std::vector<std::vector<Matrix>> right_;
};

/// Right environment of site k given the right environment of site k+1.
Matrix extend_right(const channel::SiteMap& map, std::span<const double> reduction,
                    const Matrix& next_right);
/// Output density from a bond density (with spectator legs) and a right environment.
Matrix close_right(const Matrix& rho, const Matrix& right, std::size_t bond);
/// Adjoint of close_right: pulls an output gradient back onto the bond.
Matrix open_right(const Matrix& gradient, const Matrix& right, std::size_t bond);

/// Loss and gradient of the two-site window (k, k+1) using cached environments.
struct WindowEvaluation {
  LossValue loss;
  ComplexTensor grad_left;
  ComplexTensor grad_right;
  std::vector<double> grad_theta_left;
  std::vector<double> grad_theta_right;
};
WindowEvaluation evaluate_window(const HtnModel& model, const EnvironmentCache& cache,
                                 std::size_t k, const LossConfig& cfg, bool with_gradient);

struct SweepMetrics {
  /// Training loss after each bond update, in update order.
  std::vector<double> bond_losses;
  std::vector<std::size_t> bond_positions;
  double final_loss = 0.0;
};

/// One left-to-right then right-to-left pass of two-site updates. Each
/// update runs Adam on both site tensors (re-isometrized after every step)
/// and their reduction parameters, keeping the best iterate seen.
SweepMetrics sweep(HtnModel& model, const LossConfig& loss_cfg, const SweepConfig& sweep_cfg,
                   EnvironmentCache& cache);

/// Data-derived model: each site keeps the leading directions of the
/// class-balanced second moment of the encoded samples in its bond, routes
/// the rest into reduction legs, and splits directions between output values
/// by label. Reduction operators start within 1e-6 of I.
HtnModel init_from_data(std::span<const Sample> dataset, std::size_t chi, std::size_t xi,
                        std::vector<std::size_t> output_dims, std::uint64_t seed);

struct SetMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double abstention = 0.0;
  double retained_trace = 0.0;
};

/// Loss, selective accuracy (over non-abstained samples), abstention rate and
/// mean tr(rho) over a labelled set.
SetMetrics evaluate_set(const HtnModel& model, std::span<const Sample> set,
                        const LossConfig& cfg, std::size_t num_classes);

struct SweepRecord {
  SetMetrics train;
  SetMetrics test;
};

struct TrainedReport {
  SweepRecord initial;
  std::vector<SweepRecord> sweeps;
  std::vector<SweepMetrics> sweep_details;
};

TrainedReport train(HtnModel& model, std::span<const Sample> train_set,
                    std::span<const Sample> test_set, const LossConfig& loss_cfg,
                    const SweepConfig& sweep_cfg, std::size_t num_classes);

}  // namespace htn
