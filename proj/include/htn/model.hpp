// model.hpp: the MPS hybrid tensor network, its forward channel, the
// normalization family and the two training losses.

#pragma once

#include "htn/tncore.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace htn {

class EncodingRangeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The output state was fully post-selected away; normalization is undefined.
class VanishedStateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The matrix logarithm met a non-positive eigenvalue.
class NumericalDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kTraceFloor = 1e-15;
inline constexpr double kLogEigenFloor = 1e-300;
inline constexpr double kReductionFloor = 1e-6;
inline constexpr double kDefaultLambda = 1e-6;

using SiteVector = std::array<Complex, 2>;

/// Product-state encoding of one sample: one qubit per feature, plus the
/// number of |0> ancilla qubits needed for a unitary dilation of the model.
struct EncodedState {
  std::vector<SiteVector> site_vectors;
  std::size_t ancilla_count = 0;

  std::size_t n_sites() const { return site_vectors.size(); }
};

/// Rotational encoding x -> (cos(pi x / 2), sin(pi x / 2)); x must lie in [0, 1].
EncodedState encode_rotational(std::span<const double> features, std::size_t ancilla_count = 0);

/// The pure target |l><l| in a dim-dimensional output space.
struct LabelState {
  std::size_t class_index = 0;
  std::size_t dim = 1;

  LabelState() = default;
  LabelState(std::size_t class_index, std::size_t dim);
  DensityMatrix density() const;
};

struct Sample {
  EncodedState state;
  LabelState label;
};

enum class Normalization { Full, Threshold, Weight, None };
enum class LossKind { CrossEntropy, MSE };

struct LossConfig {
  Normalization norm = Normalization::Full;
  /// Threshold t for Normalization::Threshold.
  double t = 0.0;
  /// Weight w for Normalization::Weight.
  double w = 1.0;
  double lambda = kDefaultLambda;
  LossKind kind = LossKind::CrossEntropy;

  static LossConfig full(double lambda = kDefaultLambda);
  static LossConfig threshold(double t, double lambda = kDefaultLambda);
  static LossConfig weight(double w, double lambda = kDefaultLambda);
  static LossConfig none(double lambda = kDefaultLambda);
  LossConfig with_kind(LossKind k) const;

  void validate() const;
};

/// Reduction operator diagonal: entries sin^2(theta), with the largest entry
/// lifted to kReductionFloor when every entry falls below it.
std::vector<double> reduction_diagonal(std::span<const double> theta);
/// d(entry)/d(theta); zero for an entry that was lifted to the floor.
std::vector<double> reduction_diagonal_derivative(std::span<const double> theta);

/// Per-site shape of the chain. Site k maps (bond_in, phys) isometrically to
/// (bond_out, reduction, output).
struct SiteShape {
  std::size_t bond_in = 1;
  std::size_t bond_out = 1;
  std::size_t reduction = 1;
  std::size_t output = 1;

  std::size_t in_dim() const { return bond_in * 2; }
  std::size_t out_dim() const { return bond_out * reduction * output; }
  std::vector<std::size_t> tensor_dims() const { return {bond_in, 2, bond_out, reduction, output}; }
};

/// Bond schedule: bond k is min(chi, 2^(k+1)), then tightened from the right
/// so each site stays isometric. Output legs sit on the last sites, one per
/// entry of output_dims.
std::vector<SiteShape> chain_shapes(std::size_t n_sites, std::size_t chi, std::size_t xi,
                                    std::span<const std::size_t> output_dims);

/// Site tensor axes.
namespace site_axis {
inline constexpr std::size_t kBondIn = 0;
inline constexpr std::size_t kPhys = 1;
inline constexpr std::size_t kBondOut = 2;
inline constexpr std::size_t kReduction = 3;
inline constexpr std::size_t kOutput = 4;
inline constexpr std::array<std::size_t, 2> kInAxes{kBondIn, kPhys};
}  // namespace site_axis

/// Chain of isometric site tensors joined to their conjugates through
/// diagonal reduction operators.
class HtnModel {
 public:
  HtnModel(std::vector<ComplexTensor> sites, std::vector<std::vector<double>> reduction_params,
           std::size_t chi, std::size_t xi, std::vector<std::size_t> output_dims);

  /// Haar-like random isometries with every reduction operator equal to I.
  static HtnModel random(std::size_t n_sites, std::size_t chi, std::size_t xi,
                         std::vector<std::size_t> output_dims, std::uint64_t seed);

  std::size_t n_sites() const { return sites_.size(); }
  std::size_t chi() const { return chi_; }
  std::size_t xi() const { return xi_; }
  const std::vector<std::size_t>& output_dims() const { return output_dims_; }
  std::size_t output_dim() const;
  const SiteShape& shape(std::size_t k) const { return shapes_.at(k); }
  const std::vector<SiteShape>& shapes() const { return shapes_; }

  const ComplexTensor& site(std::size_t k) const { return sites_.at(k); }
  void set_site(std::size_t k, ComplexTensor t);
  const std::vector<double>& theta(std::size_t k) const { return thetas_.at(k); }
  void set_theta(std::size_t k, std::vector<double> theta);
  std::vector<double> reduction(std::size_t k) const { return reduction_diagonal(thetas_.at(k)); }

  /// Same isometries with every reduction operator set to I.
  HtnModel with_identity_reductions() const;

  /// |0> qubits that pad the input register to a unitary dilation.
  std::size_t ancilla_count() const;

  /// Throws std::domain_error when an isometry or reduction bound fails.
  void check_invariants(double tol = 1e-10) const;

 private:
  std::vector<ComplexTensor> sites_;
  std::vector<std::vector<double>> thetas_;
  std::size_t chi_;
  std::size_t xi_;
  std::vector<std::size_t> output_dims_;
  std::vector<SiteShape> shapes_;
};

/// theta giving D = I.
std::vector<double> identity_theta(std::size_t xi);

/// Output density of the post-selected channel on the output legs. Computed
/// by sweeping a bond density through the chain.
DensityMatrix forward(const HtnModel& model, const EncodedState& sigma);

/// Partial normalization; throws VanishedStateError under Full or Weight when
/// tr(rho) <= kTraceFloor.
DensityMatrix normalize(const DensityMatrix& rho, const LossConfig& cfg);
DensityMatrix depolarize(const DensityMatrix& rho, double lambda);
DensityMatrix randomized_completion(const DensityMatrix& rho_d);

/// -<l| log(rho) |l> through the Hermitian eigendecomposition.
double cross_entropy_term(const DensityMatrix& processed, std::size_t label);
/// 1/2 tr((tau - rho)^2).
double mse_term(const DensityMatrix& processed, std::size_t label);

/// S(rho || sigma) = tr(rho log rho - rho log sigma); +infinity when the
/// support of rho is not inside the support of sigma.
double relative_entropy(const DensityMatrix& rho, const DensityMatrix& sigma);

/// Hermitian matrix logarithm; throws NumericalDomainError on eigenvalues <= 0.
Matrix hermitian_log(const Matrix& h);

/// Loss term of one output state together with dL/d(rho) as a Hermitian
/// matrix G satisfying dL = tr(G d rho).
struct TermResult {
  double value = 0.0;
  Matrix gradient;
  double trace = 0.0;
  bool abstained = false;
};
TermResult loss_term(const Matrix& rho, std::size_t label, const LossConfig& cfg,
                     bool with_gradient);

struct LossValue {
  double value = 0.0;
  std::size_t counted = 0;
  std::size_t abstained = 0;
};

/// Mean loss over the batch using cfg.kind. Samples whose output vanishes
/// under Full or Weight normalization are excluded and counted.
LossValue evaluate_loss(std::span<const Sample> batch, const HtnModel& model,
                        const LossConfig& cfg);
double cross_entropy_loss(std::span<const Sample> batch, const HtnModel& model,
                          const LossConfig& cfg);
double mse_loss(std::span<const Sample> batch, const HtnModel& model, const LossConfig& cfg);

/// Gradients with respect to the raw (unconstrained) site entries and the
/// reduction parameters. For a complex entry z the stored value is
/// dL/dRe(z) + i dL/dIm(z).
struct LossGradient {
  LossValue loss;
  std::vector<ComplexTensor> sites;
  std::vector<std::vector<double>> thetas;
};
LossGradient loss_and_gradient(std::span<const Sample> batch, const HtnModel& model,
                               const LossConfig& cfg);

/// Index of the largest diagonal entry among the first num_classes, lowest
/// index on ties; std::nullopt when the state vanished.
std::optional<std::size_t> predict_density(const DensityMatrix& rho, std::size_t num_classes);
std::optional<std::size_t> predict(const HtnModel& model, const EncodedState& sigma,
                                   const LossConfig& cfg, std::size_t num_classes);

}  // namespace htn
