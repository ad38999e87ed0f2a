#include "htn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace htn {

EncodedState encode_rotational(std::span<const double> features, std::size_t ancilla_count) {
  EncodedState out;
  out.ancilla_count = ancilla_count;
  out.site_vectors.reserve(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    const double x = features[k];
    if (!(x >= 0.0 && x <= 1.0))
      throw EncodingRangeError("encode_rotational: feature " + std::to_string(k) + " = " +
                               std::to_string(x) + " outside [0, 1]");
    const double angle = 0.5 * std::numbers::pi * x;
    out.site_vectors.push_back({Complex{std::cos(angle), 0.0}, Complex{std::sin(angle), 0.0}});
  }
  return out;
}

LabelState::LabelState(std::size_t class_index, std::size_t dim) : class_index(class_index), dim(dim) {
  if (class_index >= dim) throw std::invalid_argument("LabelState: class index >= dimension");
}

DensityMatrix LabelState::density() const { return DensityMatrix::basis(dim, class_index); }

LossConfig LossConfig::full(double lambda) { return {Normalization::Full, 0.0, 0.0, lambda}; }
LossConfig LossConfig::threshold(double t, double lambda) {
  return {Normalization::Threshold, t, 0.0, lambda};
}
LossConfig LossConfig::weight(double w, double lambda) {
  return {Normalization::Weight, 0.0, w, lambda};
}
LossConfig LossConfig::none(double lambda) { return {Normalization::None, 0.0, 1.0, lambda}; }

LossConfig LossConfig::with_kind(LossKind k) const {
  LossConfig c = *this;
  c.kind = k;
  return c;
}

void LossConfig::validate() const {
  if (norm == Normalization::Threshold && !(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("LossConfig: threshold t must lie in [0, 1]");
  if (norm == Normalization::Weight && !(w >= 0.0 && w <= 1.0))
    throw std::invalid_argument("LossConfig: weight w must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::invalid_argument("LossConfig: lambda must lie in [0, 1)");
}

std::vector<double> reduction_diagonal(std::span<const double> theta) {
  std::vector<double> d(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double s = std::sin(theta[i]);
    d[i] = s * s;
  }
  if (!d.empty()) {
    auto top = std::max_element(d.begin(), d.end());
    if (*top < kReductionFloor) *top = kReductionFloor;
  }
  return d;
}

std::vector<double> reduction_diagonal_derivative(std::span<const double> theta) {
  std::vector<double> g(theta.size());
  double top = -1.0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    g[i] = std::sin(2.0 * theta[i]);
    const double s = std::sin(theta[i]);
    if (s * s > top) {
      top = s * s;
      arg = i;
    }
  }
  if (!theta.empty() && top < kReductionFloor) g[arg] = 0.0;
  return g;
}

std::vector<double> identity_theta(std::size_t xi) {
  return std::vector<double>(xi, 0.5 * std::numbers::pi);
}

std::vector<SiteShape> chain_shapes(std::size_t n_sites, std::size_t chi, std::size_t xi,
                                    std::span<const std::size_t> output_dims) {
  if (n_sites < 1) throw std::invalid_argument("chain_shapes: need at least one site");
  if (chi < 1 || xi < 1) throw std::invalid_argument("chain_shapes: chi and xi must be >= 1");
  if (output_dims.size() > n_sites)
    throw std::invalid_argument("chain_shapes: more output legs than sites");
  std::vector<SiteShape> shapes(n_sites);
  const std::size_t first_output = n_sites - output_dims.size();
  std::size_t left_cap = 1;
  for (std::size_t k = 0; k < n_sites; ++k) {
    shapes[k].reduction = xi;
    shapes[k].output = k >= first_output ? output_dims[k - first_output] : 1;
    if (shapes[k].output < 1) throw std::invalid_argument("chain_shapes: output dim must be >= 1");
    left_cap = std::min<std::size_t>(left_cap * 2, std::size_t{1} << 30);
    shapes[k].bond_out = k + 1 == n_sites ? 1 : std::min(chi, left_cap);
  }
  for (std::size_t k = n_sites; k-- > 1;) {
    const std::size_t max_in = shapes[k].bond_out * xi * shapes[k].output / 2;
    if (max_in < 1)
      throw std::invalid_argument("chain_shapes: site " + std::to_string(k) +
                                  " cannot be isometric with these dimensions");
    shapes[k - 1].bond_out = std::min(shapes[k - 1].bond_out, max_in);
  }
  for (std::size_t k = 0; k < n_sites; ++k) {
    shapes[k].bond_in = k == 0 ? 1 : shapes[k - 1].bond_out;
    if (shapes[k].in_dim() > shapes[k].out_dim())
      throw std::invalid_argument("chain_shapes: site " + std::to_string(k) +
                                  " cannot be isometric with these dimensions");
  }
  return shapes;
}

HtnModel::HtnModel(std::vector<ComplexTensor> sites,
                   std::vector<std::vector<double>> reduction_params, std::size_t chi,
                   std::size_t xi, std::vector<std::size_t> output_dims)
    : sites_(std::move(sites)),
      thetas_(std::move(reduction_params)),
      chi_(chi),
      xi_(xi),
      output_dims_(std::move(output_dims)),
      shapes_(chain_shapes(sites_.size(), chi_, xi_, output_dims_)) {
  if (thetas_.size() != sites_.size())
    throw ShapeError("HtnModel: one reduction parameter vector per site required");
  for (std::size_t k = 0; k < sites_.size(); ++k) {
    if (sites_[k].dims() != shapes_[k].tensor_dims())
      throw ShapeError("HtnModel: site " + std::to_string(k) + " has the wrong shape");
    if (thetas_[k].size() != xi_)
      throw ShapeError("HtnModel: reduction parameters must have length xi");
  }
  check_invariants();
}

HtnModel HtnModel::random(std::size_t n_sites, std::size_t chi, std::size_t xi,
                          std::vector<std::size_t> output_dims, std::uint64_t seed) {
  const auto shapes = chain_shapes(n_sites, chi, xi, output_dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ComplexTensor> sites;
  std::vector<std::vector<double>> thetas;
  for (const auto& s : shapes) {
    ComplexTensor t(s.tensor_dims());
    for (auto& x : t.data()) x = Complex{normal(rng), normal(rng)};
    sites.push_back(isometrize(t, site_axis::kInAxes));
    thetas.push_back(identity_theta(xi));
  }
  return HtnModel(std::move(sites), std::move(thetas), chi, xi, std::move(output_dims));
}

std::size_t HtnModel::output_dim() const {
  std::size_t d = 1;
  for (auto o : output_dims_) d *= o;
  return d;
}

void HtnModel::set_site(std::size_t k, ComplexTensor t) {
  if (t.dims() != shapes_.at(k).tensor_dims())
    throw ShapeError("HtnModel::set_site: wrong shape for site " + std::to_string(k));
  sites_[k] = std::move(t);
}

void HtnModel::set_theta(std::size_t k, std::vector<double> theta) {
  if (theta.size() != xi_) throw ShapeError("HtnModel::set_theta: length must be xi");
  thetas_.at(k) = std::move(theta);
}

HtnModel HtnModel::with_identity_reductions() const {
  HtnModel copy = *this;
  for (auto& t : copy.thetas_) t = identity_theta(xi_);
  return copy;
}

std::size_t HtnModel::ancilla_count() const {
  double log_out = 0.0;
  for (const auto& s : shapes_) log_out += std::log2(static_cast<double>(s.reduction * s.output));
  const auto total = static_cast<std::size_t>(std::ceil(log_out - 1e-9));
  return total > n_sites() ? total - n_sites() : 0;
}

void HtnModel::check_invariants(double tol) const {
  using namespace site_axis;
  const std::array<std::size_t, 3> out_axes{kBondOut, kReduction, kOutput};
  for (std::size_t k = 0; k < sites_.size(); ++k) {
    const Matrix w = sites_[k].matricize(out_axes, kInAxes);
    const double defect = isometry_defect(w);
    if (defect > tol)
      throw std::domain_error("HtnModel: site " + std::to_string(k) +
                              " is not isometric (defect " + std::to_string(defect) + ")");
    const auto d = reduction(k);
    double top = 0.0;
    for (double x : d) {
      if (x < 0.0 || x > 1.0) throw std::domain_error("HtnModel: reduction entry outside [0, 1]");
      top = std::max(top, x);
    }
    if (top <= 0.0) throw std::domain_error("HtnModel: reduction operator is zero");
  }
  if (output_dim() < 1) throw std::domain_error("HtnModel: empty output space");
}

}  // namespace htn
