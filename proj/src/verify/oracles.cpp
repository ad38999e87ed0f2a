#include "htn/verify.hpp"

#include <numbers>
#include <functional>
#include <numeric>

namespace htn::verify {

Matrix matmul_triple_loop(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul_triple_loop: inner dimensions differ");
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      Complex sum = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
      c(i, j) = sum;
    }
  return c;
}

Matrix dense_isometry(const HtnModel& model) {
  // t maps the inputs seen so far to (accumulated (red, out) legs, open bond).
  Matrix t = Matrix::Ones(1, 1);
  std::size_t acc = 1;
  for (std::size_t k = 0; k < model.n_sites(); ++k) {
    const SiteShape& s = model.shape(k);
    const ComplexTensor& w = model.site(k);
    const std::size_t inputs = static_cast<std::size_t>(t.cols());
    Matrix next = Matrix::Zero(static_cast<Eigen::Index>(acc * s.reduction * s.output * s.bond_out),
                               static_cast<Eigen::Index>(inputs * 2));
    for (std::size_t R = 0; R < acc; ++R)
      for (std::size_t r = 0; r < s.reduction; ++r)
        for (std::size_t o = 0; o < s.output; ++o)
          for (std::size_t c = 0; c < s.bond_out; ++c) {
            const std::size_t row = ((R * s.reduction + r) * s.output + o) * s.bond_out + c;
            for (std::size_t x = 0; x < inputs; ++x)
              for (std::size_t p = 0; p < 2; ++p) {
                Complex sum = 0.0;
                for (std::size_t a = 0; a < s.bond_in; ++a)
                  sum += w.at({a, p, c, r, o}) *
                         t(static_cast<Eigen::Index>(R * s.bond_in + a), static_cast<Eigen::Index>(x));
                next(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(x * 2 + p)) = sum;
              }
          }
    t = std::move(next);
    acc *= s.reduction * s.output;
  }
  return t;  // final bond has dimension 1
}

Matrix explicit_partial_trace(const Matrix& rho, const std::vector<std::size_t>& dims,
                              const std::vector<std::size_t>& traced) {
  std::size_t total = 1;
  for (auto d : dims) total *= d;
  if (static_cast<Eigen::Index>(total) != rho.rows() || rho.rows() != rho.cols())
    throw ShapeError("explicit_partial_trace: dims do not match the matrix");
  std::vector<char> is_traced(dims.size(), 0);
  for (auto t : traced) is_traced.at(t) = 1;
  std::vector<std::size_t> keep_dims, trace_dims;
  for (std::size_t i = 0; i < dims.size(); ++i) (is_traced[i] ? trace_dims : keep_dims).push_back(dims[i]);
  std::size_t keep = 1, env = 1;
  for (auto d : keep_dims) keep *= d;
  for (auto d : trace_dims) env *= d;

  // Global index of (kept multi-index, traced multi-index).
  auto global = [&](std::size_t kept, std::size_t tr) {
    std::vector<std::size_t> digits(dims.size());
    for (std::size_t i = dims.size(); i-- > 0;) {
      if (is_traced[i]) {
        digits[i] = tr % dims[i];
        tr /= dims[i];
      } else {
        digits[i] = kept % dims[i];
        kept /= dims[i];
      }
    }
    std::size_t g = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) g = g * dims[i] + digits[i];
    return static_cast<Eigen::Index>(g);
  };
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(keep), static_cast<Eigen::Index>(keep));
  for (std::size_t i = 0; i < keep; ++i)
    for (std::size_t j = 0; j < keep; ++j)
      for (std::size_t e = 0; e < env; ++e)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += rho(global(i, e), global(j, e));
  return out;
}

Matrix dense_forward(const HtnModel& model, const EncodedState& sigma) {
  if (sigma.n_sites() != model.n_sites()) throw ShapeError("dense_forward: site count mismatch");
  const Matrix v = dense_isometry(model);
  Vector psi = Vector::Ones(1);
  for (const auto& sv : sigma.site_vectors) {
    Vector next(psi.size() * 2);
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
      next(2 * i) = psi(i) * sv[0];
      next(2 * i + 1) = psi(i) * sv[1];
    }
    psi = std::move(next);
  }
  const Matrix u_sigma_u = v * (psi * psi.adjoint()) * v.adjoint();

  std::vector<std::size_t> dims, traced;
  for (std::size_t k = 0; k < model.n_sites(); ++k) {
    traced.push_back(dims.size());
    dims.push_back(model.shape(k).reduction);
    dims.push_back(model.shape(k).output);
  }
  // Right-multiply by D_B (x) I_A.
  std::vector<std::vector<double>> d;
  for (std::size_t k = 0; k < model.n_sites(); ++k) d.push_back(model.reduction(k));
  Matrix weighted = u_sigma_u;
  for (Eigen::Index j = 0; j < weighted.cols(); ++j) {
    std::size_t rem = static_cast<std::size_t>(j);
    double factor = 1.0;
    for (std::size_t k = model.n_sites(); k-- > 0;) {
      rem /= model.shape(k).output;
      factor *= d[k][rem % model.shape(k).reduction];
      rem /= model.shape(k).reduction;
    }
    weighted.col(j) *= factor;
  }
  return explicit_partial_trace(weighted, dims, traced);
}

Matrix DenseChannel::apply(const Matrix& rho) const {
  const Matrix full = isometry * rho * isometry.adjoint();
  return explicit_partial_trace(full, {d_out, d_env}, {1});
}

Matrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex{normal(rng), normal(rng)};
  return m;
}

Matrix random_density(std::size_t d, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(d);
  const Matrix g = random_complex(n, n, rng);
  Matrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return rho;
}

DenseChannel random_channel(std::size_t d_in, std::size_t d_out, std::size_t d_env,
                            std::mt19937_64& rng) {
  if (d_out * d_env < d_in) throw std::invalid_argument("random_channel: output space too small");
  DenseChannel ch;
  ch.d_out = d_out;
  ch.d_env = d_env;
  ch.isometry = polar_isometry(random_complex(static_cast<Eigen::Index>(d_out * d_env),
                                              static_cast<Eigen::Index>(d_in), rng));
  return ch;
}

LossGradient finite_difference_gradient(std::span<const Sample> batch, const HtnModel& model,
                                        const LossConfig& cfg, double h) {
  LossGradient out;
  out.loss = evaluate_loss(batch, model, cfg);
  for (std::size_t k = 0; k < model.n_sites(); ++k) {
    ComplexTensor g(model.shape(k).tensor_dims());
    for (std::size_t i = 0; i < g.data().size(); ++i) {
      Complex value;
      for (int part = 0; part < 2; ++part) {
        const Complex step = part == 0 ? Complex{h, 0.0} : Complex{0.0, h};
        HtnModel plus = model, minus = model;
        ComplexTensor tp = model.site(k), tm = model.site(k);
        tp.data()[i] += step;
        tm.data()[i] -= step;
        plus.set_site(k, std::move(tp));
        minus.set_site(k, std::move(tm));
        const double d =
            (evaluate_loss(batch, plus, cfg).value - evaluate_loss(batch, minus, cfg).value) / (2.0 * h);
        value += part == 0 ? Complex{d, 0.0} : Complex{0.0, d};
      }
      g.data()[i] = value;
    }
    out.sites.push_back(std::move(g));
    std::vector<double> gt(model.xi());
    for (std::size_t r = 0; r < model.xi(); ++r) {
      HtnModel plus = model, minus = model;
      auto tp = model.theta(k), tm = model.theta(k);
      tp[r] += h;
      tm[r] -= h;
      plus.set_theta(k, std::move(tp));
      minus.set_theta(k, std::move(tm));
      gt[r] = (evaluate_loss(batch, plus, cfg).value - evaluate_loss(batch, minus, cfg).value) / (2.0 * h);
    }
    out.thetas.push_back(std::move(gt));
  }
  return out;
}

HtnModel random_model(std::mt19937_64& rng, std::size_t max_sites, std::size_t max_chi,
                      std::size_t max_xi, std::size_t min_sites) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  for (;;) {
    const std::size_t n = min_sites + rng() % (max_sites - min_sites + 1);
    const std::size_t chi = 1 + rng() % max_chi;
    const std::size_t xi = 1 + rng() % max_xi;
    const std::size_t legs = 1 + rng() % std::min<std::size_t>(2, n);
    std::vector<std::size_t> outs(legs);
    for (auto& o : outs) o = 1 + rng() % 2;
    if (std::accumulate(outs.begin(), outs.end(), std::size_t{1}, std::multiplies<>()) < 2) continue;
    try {
      chain_shapes(n, chi, xi, outs);
    } catch (const std::invalid_argument&) {
      continue;
    }
    HtnModel m = HtnModel::random(n, chi, xi, outs, rng());
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> theta(xi);
      for (auto& t : theta) t = angle(rng);
      m.set_theta(k, std::move(theta));
    }
    return m;
  }
}

Sample random_sample(const HtnModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(model.n_sites());
  for (auto& v : x) v = unit(rng);
  return {encode_rotational(x), LabelState(rng() % model.output_dim(), model.output_dim())};
}

}  // namespace htn::verify
