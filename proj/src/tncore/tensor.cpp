#include "htn/tncore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace htn {

namespace {

std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
  return s;
}

// Flat offsets of every multi-index over `axes` (row-major within the group).
std::vector<std::size_t> group_offsets(const std::vector<std::size_t>& dims,
                                       const std::vector<std::size_t>& strides,
                                       std::span<const std::size_t> axes) {
  std::size_t count = 1;
  for (auto a : axes) count *= dims[a];
  std::vector<std::size_t> offsets(count, 0);
  std::vector<std::size_t> idx(axes.size(), 0);
  for (std::size_t n = 0; n < count; ++n) {
    std::size_t off = 0;
    for (std::size_t j = 0; j < axes.size(); ++j) off += idx[j] * strides[axes[j]];
    offsets[n] = off;
    for (std::size_t j = axes.size(); j-- > 0;) {
      if (++idx[j] < dims[axes[j]]) break;
      idx[j] = 0;
    }
  }
  return offsets;
}

void check_partition(std::size_t rank, std::span<const std::size_t> a,
                     std::span<const std::size_t> b, const char* what) {
  std::vector<int> seen(rank, 0);
  for (auto x : a) {
    if (x >= rank) throw std::out_of_range(std::string(what) + ": axis out of range");
    ++seen[x];
  }
  for (auto x : b) {
    if (x >= rank) throw std::out_of_range(std::string(what) + ": axis out of range");
    ++seen[x];
  }
  for (int s : seen)
    if (s != 1) throw std::invalid_argument(std::string(what) + ": axes must partition the tensor");
}

}  // namespace

ComplexTensor::ComplexTensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(product(dims_), Complex{0.0, 0.0}) {
  for (auto d : dims_)
    if (d == 0) throw std::invalid_argument("ComplexTensor: axis length must be >= 1");
}

ComplexTensor::ComplexTensor(std::vector<std::size_t> dims, std::vector<Complex> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  for (auto d : dims_)
    if (d == 0) throw std::invalid_argument("ComplexTensor: axis length must be >= 1");
  if (product(dims_) != data_.size())
    throw std::invalid_argument("ComplexTensor: data length does not match dims");
}

ComplexTensor ComplexTensor::scalar(Complex value) { return ComplexTensor({}, {value}); }

ComplexTensor ComplexTensor::from_matrix(const Matrix& m) {
  ComplexTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data_[i * m.cols() + j] = m(i, j);
  return t;
}

ComplexTensor ComplexTensor::from_vector(const Vector& v) {
  return ComplexTensor({static_cast<std::size_t>(v.size())},
                       std::vector<Complex>(v.data(), v.data() + v.size()));
}

std::size_t ComplexTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != dims_.size()) throw std::out_of_range("ComplexTensor: wrong index rank");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= dims_[i]) throw std::out_of_range("ComplexTensor: index out of range");
    flat = flat * dims_[i] + index[i];
  }
  return flat;
}

Complex& ComplexTensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

const Complex& ComplexTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

ComplexTensor ComplexTensor::permute(std::span<const std::size_t> order) const {
  check_partition(rank(), order, {}, "permute");
  std::vector<std::size_t> new_dims(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) new_dims[i] = dims_[order[i]];
  ComplexTensor out(new_dims);
  const auto offsets = group_offsets(dims_, strides_of(dims_), order);
  for (std::size_t n = 0; n < offsets.size(); ++n) out.data_[n] = data_[offsets[n]];
  return out;
}

ComplexTensor ComplexTensor::reshape(std::vector<std::size_t> dims) const {
  return ComplexTensor(std::move(dims), data_);
}

ComplexTensor ComplexTensor::conj() const {
  ComplexTensor out = *this;
  for (auto& x : out.data_) x = std::conj(x);
  return out;
}

Matrix ComplexTensor::matricize(std::span<const std::size_t> row_axes,
                                std::span<const std::size_t> col_axes) const {
  check_partition(rank(), row_axes, col_axes, "matricize");
  const auto strides = strides_of(dims_);
  const auto rows = group_offsets(dims_, strides, row_axes);
  const auto cols = group_offsets(dims_, strides, col_axes);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) m(i, j) = data_[rows[i] + cols[j]];
  return m;
}

ComplexTensor ComplexTensor::from_matricized(const Matrix& m, std::vector<std::size_t> dims,
                                             std::span<const std::size_t> row_axes,
                                             std::span<const std::size_t> col_axes) {
  ComplexTensor t(std::move(dims));
  check_partition(t.rank(), row_axes, col_axes, "from_matricized");
  const auto strides = strides_of(t.dims_);
  const auto rows = group_offsets(t.dims_, strides, row_axes);
  const auto cols = group_offsets(t.dims_, strides, col_axes);
  if (static_cast<std::size_t>(m.rows()) != rows.size() ||
      static_cast<std::size_t>(m.cols()) != cols.size())
    throw std::invalid_argument("from_matricized: matrix shape does not match dims");
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) t.data_[rows[i] + cols[j]] = m(i, j);
  return t;
}

double ComplexTensor::norm() const {
  double s = 0.0;
  for (const auto& x : data_) s += std::norm(x);
  return std::sqrt(s);
}

ComplexTensor& ComplexTensor::operator*=(Complex s) {
  for (auto& x : data_) x *= s;
  return *this;
}

ComplexTensor& ComplexTensor::operator+=(const ComplexTensor& other) {
  if (other.dims_ != dims_) throw std::invalid_argument("ComplexTensor: shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

ComplexTensor& ComplexTensor::operator-=(const ComplexTensor& other) {
  if (other.dims_ != dims_) throw std::invalid_argument("ComplexTensor: shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b, const AxisPairs& pairs) {
  std::vector<std::size_t> a_paired, b_paired;
  for (const auto& [ia, ib] : pairs) {
    if (ia >= a.rank() || ib >= b.rank()) throw ContractionError("contract: axis out of range");
    if (a.dim(ia) != b.dim(ib))
      throw ContractionError("contract: paired axes " + std::to_string(ia) + " and " +
                             std::to_string(ib) + " differ in length (" +
                             std::to_string(a.dim(ia)) + " vs " + std::to_string(b.dim(ib)) + ")");
    a_paired.push_back(ia);
    b_paired.push_back(ib);
  }
  auto free_axes = [](std::size_t rank, const std::vector<std::size_t>& paired) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < rank; ++i)
      if (std::find(paired.begin(), paired.end(), i) == paired.end()) free.push_back(i);
    return free;
  };
  const auto a_free = free_axes(a.rank(), a_paired);
  const auto b_free = free_axes(b.rank(), b_paired);
  if (a_free.size() + a_paired.size() != a.rank() || b_free.size() + b_paired.size() != b.rank())
    throw ContractionError("contract: an axis is paired more than once");

  const Matrix am = a.matricize(a_free, a_paired);
  const Matrix bm = b.matricize(b_paired, b_free);
  const Matrix cm = am * bm;

  std::vector<std::size_t> out_dims;
  for (auto i : a_free) out_dims.push_back(a.dim(i));
  for (auto i : b_free) out_dims.push_back(b.dim(i));
  ComplexTensor out(out_dims);
  // cm is column-major; the result is row-major over (a_free, b_free).
  const auto cols = static_cast<std::size_t>(cm.cols());
  for (Eigen::Index i = 0; i < cm.rows(); ++i)
    for (Eigen::Index j = 0; j < cm.cols(); ++j) out[i * cols + j] = cm(i, j);
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

HermitianEigen hermitian_eigen(const Matrix& h) {
  const Matrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("hermitian_eigen: solver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

}  // namespace htn
