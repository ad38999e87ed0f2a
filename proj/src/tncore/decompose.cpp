#include "htn/tncore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace htn {

SvdSplit svd_split(const ComplexTensor& t, std::span<const std::size_t> left_axes,
                   std::span<const std::size_t> right_axes, std::size_t max_rank) {
  if (max_rank < 1) throw std::invalid_argument("svd_split: max_rank must be >= 1");
  const Matrix m = t.matricize(left_axes, right_axes);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector& s = svd.singularValues();

  const std::size_t full = static_cast<std::size_t>(s.size());
  std::size_t keep = std::min(full, max_rank);
  const double cutoff = full > 0 ? kRankCutoff * s(0) : 0.0;
  while (keep > 1 && s(static_cast<Eigen::Index>(keep - 1)) <= cutoff) --keep;
  keep = std::max<std::size_t>(keep, 1);

  double discarded = 0.0;
  for (std::size_t k = keep; k < full; ++k) discarded += s(k) * s(k);

  SvdSplit out;
  out.truncation_error = std::sqrt(discarded);
  out.singular_values.assign(s.data(), s.data() + keep);
  const auto k = static_cast<Eigen::Index>(keep);

  std::vector<std::size_t> left_dims, right_dims;
  for (auto a : left_axes) left_dims.push_back(t.dim(a));
  left_dims.push_back(keep);
  right_dims.push_back(keep);
  for (auto a : right_axes) right_dims.push_back(t.dim(a));

  std::vector<std::size_t> lrows(left_axes.size()), rcols(right_axes.size());
  std::iota(lrows.begin(), lrows.end(), 0);
  std::iota(rcols.begin(), rcols.end(), 1);
  const std::vector<std::size_t> lcol{left_axes.size()};
  const std::vector<std::size_t> rrow{0};
  out.left = ComplexTensor::from_matricized(svd.matrixU().leftCols(k), left_dims, lrows, lcol);
  out.right =
      ComplexTensor::from_matricized(svd.matrixV().leftCols(k).adjoint(), right_dims, rrow, rcols);
  return out;
}

Matrix polar_isometry(const Matrix& a) {
  const Eigen::Index in = a.cols();
  if (a.rows() < in)
    throw DirectionError("isometrize: input space (" + std::to_string(in) +
                         ") larger than output space (" + std::to_string(a.rows()) + ")");
  // Well-conditioned inputs go through the small Gram matrix, which is much
  // cheaper than a full SVD of a tall matrix and agrees with it to rounding.
  const HermitianEigen g = hermitian_eigen(a.adjoint() * a);
  const double top = g.values(in - 1);
  if (top <= 0.0) throw DegenerateInputError("isometrize: zero input");
  if (g.values(0) > 1e-2 * top) {
    RealVector inv_sqrt = g.values.cwiseSqrt().cwiseInverse();
    return a * g.vectors * inv_sqrt.asDiagonal() * g.vectors.adjoint();
  }

  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeThinV);
  const RealVector& s = svd.singularValues();
  if (s(0) <= 0.0) throw DegenerateInputError("isometrize: zero input");
  // Columns of the full U past the numerical rank are an orthonormal
  // completion of the range, fixed by the decomposition itself.
  return svd.matrixU().leftCols(in) * svd.matrixV().adjoint();
}

double isometry_defect(const Matrix& w) {
  const Matrix g = w.adjoint() * w - Matrix::Identity(w.cols(), w.cols());
  return g.cwiseAbs().maxCoeff();
}

ComplexTensor isometrize(const ComplexTensor& t, std::span<const std::size_t> in_axes) {
  std::vector<std::size_t> out_axes;
  for (std::size_t i = 0; i < t.rank(); ++i)
    if (std::find(in_axes.begin(), in_axes.end(), i) == in_axes.end()) out_axes.push_back(i);
  const Matrix a = t.matricize(out_axes, in_axes);
  return ComplexTensor::from_matricized(polar_isometry(a), t.dims(), out_axes, in_axes);
}

DensityMatrix::DensityMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw std::invalid_argument("DensityMatrix: matrix must be square");
}

DensityMatrix DensityMatrix::pure(const Vector& psi) { return DensityMatrix(psi * psi.adjoint()); }

DensityMatrix DensityMatrix::maximally_mixed(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return DensityMatrix(Matrix::Identity(d, d) / static_cast<double>(dim));
}

DensityMatrix DensityMatrix::basis(std::size_t dim, std::size_t index) {
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix m = Matrix::Zero(d, d);
  m(static_cast<Eigen::Index>(index), static_cast<Eigen::Index>(index)) = 1.0;
  return DensityMatrix(std::move(m));
}

void DensityMatrix::validate(double tol) const {
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  if ((m_ - m_.adjoint()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::domain_error("DensityMatrix: not Hermitian");
  const auto eig = hermitian_eigen(m_);
  if (eig.values.size() > 0 && eig.values(0) < -tol * scale)
    throw std::domain_error("DensityMatrix: negative eigenvalue " + std::to_string(eig.values(0)));
  const Complex tr = m_.trace();
  if (std::abs(tr.imag()) > tol * scale || tr.real() < -tol || tr.real() > 1.0 + tol)
    throw std::domain_error("DensityMatrix: trace outside [0, 1]");
}

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> dims,
                            std::span<const std::size_t> traced) {
  const std::size_t total =
      std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  if (total != rho.dim())
    throw std::invalid_argument("partial_trace: subsystem dims do not multiply to rho.dim()");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (std::find(traced.begin(), traced.end(), i) == traced.end()) kept.push_back(i);
  }
  for (auto t : traced)
    if (t >= dims.size()) throw std::invalid_argument("partial_trace: subsystem out of range");

  // View rho as a tensor with axes (row subsystems..., column subsystems...).
  std::vector<std::size_t> tdims(dims.begin(), dims.end());
  tdims.insert(tdims.end(), dims.begin(), dims.end());
  const std::size_t n = dims.size();
  std::vector<std::size_t> row_axes(n), col_axes(n);
  std::iota(row_axes.begin(), row_axes.end(), 0);
  std::iota(col_axes.begin(), col_axes.end(), n);
  const ComplexTensor t = ComplexTensor::from_matricized(rho.matrix(), tdims, row_axes, col_axes);

  std::size_t kept_dim = 1, traced_dim = 1;
  for (auto k : kept) kept_dim *= dims[k];
  for (auto k : traced) traced_dim *= dims[k];

  // Rows: (kept_row, traced_row); columns: (kept_col, traced_col).
  std::vector<std::size_t> rows, cols;
  for (auto k : kept) rows.push_back(k);
  for (auto k : traced) rows.push_back(k);
  for (auto k : kept) cols.push_back(n + k);
  for (auto k : traced) cols.push_back(n + k);
  const Matrix big = t.matricize(rows, cols);

  const auto kd = static_cast<Eigen::Index>(kept_dim);
  const auto td = static_cast<Eigen::Index>(traced_dim);
  Matrix out = Matrix::Zero(kd, kd);
  for (Eigen::Index b = 0; b < td; ++b)
    for (Eigen::Index j = 0; j < kd; ++j)
      for (Eigen::Index i = 0; i < kd; ++i) out(i, j) += big(i * td + b, j * td + b);
  return DensityMatrix(std::move(out));
}

}  // namespace htn
