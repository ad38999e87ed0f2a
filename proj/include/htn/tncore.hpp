// tncore.hpp: dense complex tensors, contraction, SVD splitting, isometries and
// partial traces.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace htn {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Raised when paired axes of a contraction disagree in length.
class ContractionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an isometry is requested from a larger into a smaller space.
class DirectionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a matricization has no nonzero singular value to polarize.
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Relative cutoff below which singular values count as zero.
inline constexpr double kRankCutoff = 1e-14;

/// Dense multi-axis array of complex scalars, row-major (last axis fastest).
/// A tensor with no axes is a scalar holding one element.
class ComplexTensor {
 public:
  ComplexTensor() : data_(1, Complex{0.0, 0.0}) {}
  explicit ComplexTensor(std::vector<std::size_t> dims);
  ComplexTensor(std::vector<std::size_t> dims, std::vector<Complex> data);

  static ComplexTensor scalar(Complex value);
  /// Two-axis tensor (rows, cols) copied from a matrix.
  static ComplexTensor from_matrix(const Matrix& m);
  /// One-axis tensor from a vector.
  static ComplexTensor from_vector(const Vector& v);

  std::size_t rank() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const Complex> data() const { return data_; }
  std::span<Complex> data() { return data_; }

  Complex& operator[](std::size_t flat) { return data_[flat]; }
  const Complex& operator[](std::size_t flat) const { return data_[flat]; }

  Complex& at(std::initializer_list<std::size_t> index);
  const Complex& at(std::initializer_list<std::size_t> index) const;
  std::size_t flat_index(std::span<const std::size_t> index) const;

  /// New tensor whose axis i is axis order[i] of this one.
  ComplexTensor permute(std::span<const std::size_t> order) const;
  ComplexTensor reshape(std::vector<std::size_t> dims) const;
  ComplexTensor conj() const;

  /// Matrix with rows indexed by row_axes and columns by col_axes (both in
  /// the given order, row-major within each group). Together the two groups
  /// must name every axis exactly once.
  Matrix matricize(std::span<const std::size_t> row_axes,
                   std::span<const std::size_t> col_axes) const;
  /// Inverse of matricize for a tensor with the given dims.
  static ComplexTensor from_matricized(const Matrix& m, std::vector<std::size_t> dims,
                                       std::span<const std::size_t> row_axes,
                                       std::span<const std::size_t> col_axes);

  double norm() const;

  ComplexTensor& operator*=(Complex s);
  ComplexTensor& operator+=(const ComplexTensor& other);
  ComplexTensor& operator-=(const ComplexTensor& other);
  friend ComplexTensor operator*(Complex s, ComplexTensor t) { return t *= s; }
  friend ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b) { return a += b; }
  friend ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b) { return a -= b; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Complex> data_;
};

using AxisPairs = std::vector<std::pair<std::size_t, std::size_t>>;

/// Sum over the paired axes. The result carries the unpaired axes of `a`
/// followed by the unpaired axes of `b`, each in their original order.
ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b, const AxisPairs& pairs);

struct SvdSplit {
  /// Axes: left_axes..., bond.
  ComplexTensor left;
  /// Descending, non-negative, length = retained rank.
  std::vector<double> singular_values;
  /// Axes: bond, right_axes...
  ComplexTensor right;
  /// Root-sum-square of the discarded singular values.
  double truncation_error = 0.0;
};

/// Truncated SVD across the bipartition (left_axes | right_axes), keeping at
/// most max_rank values. Values below kRankCutoff times the largest are dropped.
SvdSplit svd_split(const ComplexTensor& t, std::span<const std::size_t> left_axes,
                   std::span<const std::size_t> right_axes, std::size_t max_rank);

/// Nearest isometry (Frobenius) from the in_axes space into the remaining
/// axes, via the polar factor of the out x in matricization. Axis order of the
/// result matches the input.
ComplexTensor isometrize(const ComplexTensor& t, std::span<const std::size_t> in_axes);

/// Polar factor U V^dagger of a tall matrix. Rank-deficient inputs are
/// completed with the remaining left singular vectors of a full SVD.
Matrix polar_isometry(const Matrix& a);

/// max |W^dagger W - I| for a tall matrix.
double isometry_defect(const Matrix& w);

/// Density operator; sub-normalized states are allowed.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(Matrix m);

  static DensityMatrix pure(const Vector& psi);
  static DensityMatrix maximally_mixed(std::size_t dim);
  static DensityMatrix basis(std::size_t dim, std::size_t index);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double trace() const { return m_.trace().real(); }

  /// Throws std::domain_error when the Hermiticity, PSD or trace invariants fail.
  void validate(double tol = 1e-12) const;

 private:
  Matrix m_;
};

/// Trace out the subsystems listed in `traced`; dims gives every subsystem
/// dimension with subsystem 0 most significant.
DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> dims,
                            std::span<const std::size_t> traced);

/// Kronecker product with the first factor most significant.
Matrix kron(const Matrix& a, const Matrix& b);

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
struct HermitianEigen {
  RealVector values;
  Matrix vectors;
};
HermitianEigen hermitian_eigen(const Matrix& h);

}  // namespace htn
