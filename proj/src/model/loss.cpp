#include "htn/channel.hpp"
#include "htn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace htn {

namespace {

void check_sites(const HtnModel& model, const EncodedState& sigma) {
  if (sigma.n_sites() != model.n_sites())
    throw ShapeError("forward: state has " + std::to_string(sigma.n_sites()) +
                     " sites, model has " + std::to_string(model.n_sites()));
}

// Normalizing divisor g(p) and its derivative g'(p) for trace p.
struct Divisor {
  double value = 1.0;
  double slope = 0.0;
  bool vanished = false;
};

Divisor divisor(double p, const LossConfig& cfg) {
  switch (cfg.norm) {
    case Normalization::Full:
      if (p <= kTraceFloor) return {1.0, 0.0, true};
      return {p, 1.0, false};
    case Normalization::Threshold: {
      if (std::max(p, cfg.t) <= kTraceFloor) return {1.0, 0.0, true};
      if (p > cfg.t) return {p, 1.0, false};
      return {cfg.t, 0.0, false};
    }
    case Normalization::Weight: {
      if (p <= kTraceFloor) return {1.0, 0.0, true};
      const double e = 1.0 - cfg.w;
      return {std::pow(p, e), e * std::pow(p, e - 1.0), false};
    }
    case Normalization::None:
      return {1.0, 0.0, false};
  }
  return {};
}

double safe_log(double x) { return std::log(std::max(x, kLogEigenFloor)); }

// First divided difference of log at (a, b).
double log_divided(double a, double b) {
  const double diff = a - b;
  if (std::abs(diff) <= 1e-10 * std::max(a, b)) return 2.0 / (a + b);
  return (safe_log(a) - safe_log(b)) / diff;
}

}  // namespace

DensityMatrix forward(const HtnModel& model, const EncodedState& sigma) {
  check_sites(model, sigma);
  Matrix rho = Matrix::Ones(1, 1);
  for (std::size_t k = 0; k < model.n_sites(); ++k) {
    const auto map = channel::site_map(model.site(k), model.shape(k), sigma.site_vectors[k]);
    rho = channel::apply(map, model.reduction(k), rho);
  }
  return DensityMatrix(std::move(rho));
}

DensityMatrix normalize(const DensityMatrix& rho, const LossConfig& cfg) {
  const Divisor g = divisor(rho.trace(), cfg);
  if (g.vanished)
    throw VanishedStateError("normalize: output trace " + std::to_string(rho.trace()) +
                             " vanished; the sample was post-selected away");
  return DensityMatrix(rho.matrix() / g.value);
}

DensityMatrix depolarize(const DensityMatrix& rho, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("depolarize: lambda must lie in [0, 1]");
  const auto d = static_cast<Eigen::Index>(rho.dim());
  return DensityMatrix((1.0 - lambda) * rho.matrix() +
                       (lambda / static_cast<double>(d)) * Matrix::Identity(d, d));
}

DensityMatrix randomized_completion(const DensityMatrix& rho_d) {
  const auto d = static_cast<Eigen::Index>(rho_d.dim());
  const double missing = 1.0 - rho_d.trace();
  return DensityMatrix(rho_d.matrix() +
                       (missing / static_cast<double>(d)) * Matrix::Identity(d, d));
}

Matrix hermitian_log(const Matrix& h) {
  const auto eig = hermitian_eigen(h);
  if (eig.values.size() > 0 && eig.values(0) <= 0.0)
    throw NumericalDomainError("hermitian_log: non-positive eigenvalue " +
                               std::to_string(eig.values(0)));
  RealVector logs = eig.values.unaryExpr([](double x) { return safe_log(x); });
  return eig.vectors * logs.asDiagonal() * eig.vectors.adjoint();
}

double cross_entropy_term(const DensityMatrix& processed, std::size_t label) {
  const auto eig = hermitian_eigen(processed.matrix());
  if (eig.values(0) <= 0.0)
    throw NumericalDomainError("cross_entropy_term: non-positive eigenvalue " +
                               std::to_string(eig.values(0)));
  const auto l = static_cast<Eigen::Index>(label);
  double value = 0.0;
  for (Eigen::Index j = 0; j < eig.values.size(); ++j)
    value -= std::norm(eig.vectors(l, j)) * safe_log(eig.values(j));
  return value;
}

double mse_term(const DensityMatrix& processed, std::size_t label) {
  Matrix diff = processed.matrix();
  const auto l = static_cast<Eigen::Index>(label);
  diff(l, l) -= 1.0;
  return 0.5 * diff.squaredNorm();
}

double relative_entropy(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw ShapeError("relative_entropy: dimension mismatch");
  constexpr double kSupportTol = 1e-13;
  const auto er = hermitian_eigen(rho.matrix());
  double rho_log_rho = 0.0;
  for (Eigen::Index j = 0; j < er.values.size(); ++j)
    if (er.values(j) > kSupportTol) rho_log_rho += er.values(j) * std::log(er.values(j));

  const auto es = hermitian_eigen(sigma.matrix());
  double rho_log_sigma = 0.0;
  for (Eigen::Index j = 0; j < es.values.size(); ++j) {
    const double weight = (es.vectors.col(j).adjoint() * rho.matrix() * es.vectors.col(j))(0).real();
    if (es.values(j) <= kSupportTol) {
      if (weight > kSupportTol) return std::numeric_limits<double>::infinity();
      continue;
    }
    rho_log_sigma += weight * std::log(es.values(j));
  }
  return rho_log_rho - rho_log_sigma;
}

TermResult loss_term(const Matrix& rho, std::size_t label, const LossConfig& cfg,
                     bool with_gradient) {
  TermResult out;
  out.trace = rho.trace().real();
  const Divisor g = divisor(out.trace, cfg);
  if (g.vanished) {
    out.abstained = true;
    return out;
  }
  const Eigen::Index d = rho.rows();
  const auto l = static_cast<Eigen::Index>(label);
  const double lambda = cfg.lambda;
  const Matrix processed = ((1.0 - lambda) / g.value) * rho +
                           (lambda / static_cast<double>(d)) * Matrix::Identity(d, d);

  Matrix grad_processed;
  if (cfg.kind == LossKind::CrossEntropy) {
    const auto eig = hermitian_eigen(processed);
    if (eig.values(0) <= 0.0)
      throw NumericalDomainError("cross entropy: non-positive eigenvalue " +
                                 std::to_string(eig.values(0)) + " after depolarization");
    for (Eigen::Index j = 0; j < d; ++j)
      out.value -= std::norm(eig.vectors(l, j)) * safe_log(eig.values(j));
    if (with_gradient) {
      // -D log[X](|l><l|) in the eigenbasis of X.
      const Vector u = eig.vectors.row(l).adjoint();
      Matrix inner(d, d);
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
          inner(i, j) = -log_divided(eig.values(i), eig.values(j)) * u(i) * std::conj(u(j));
      grad_processed = eig.vectors * inner * eig.vectors.adjoint();
    }
  } else {
    Matrix diff = processed;
    diff(l, l) -= 1.0;
    out.value = 0.5 * diff.squaredNorm();
    if (with_gradient) grad_processed = diff;
  }

  if (with_gradient) {
    // X = (1 - lambda) rho / g(p) + lambda I / d.
    const Matrix gn = (1.0 - lambda) * grad_processed;
    out.gradient = gn / g.value;
    if (g.slope != 0.0) {
      const double coupling = (gn.cwiseProduct(rho.transpose())).sum().real();
      out.gradient.diagonal().array() -= coupling * g.slope / (g.value * g.value);
    }
  }
  return out;
}

LossValue evaluate_loss(std::span<const Sample> batch, const HtnModel& model,
                        const LossConfig& cfg) {
  cfg.validate();
  LossValue out;
  double sum = 0.0;
  for (const auto& s : batch) {
    const auto rho = forward(model, s.state);
    const auto term = loss_term(rho.matrix(), s.label.class_index, cfg, false);
    if (term.abstained) {
      ++out.abstained;
      continue;
    }
    sum += term.value;
    ++out.counted;
  }
  out.value = out.counted > 0 ? sum / static_cast<double>(out.counted) : 0.0;
  return out;
}

double cross_entropy_loss(std::span<const Sample> batch, const HtnModel& model,
                          const LossConfig& cfg) {
  return evaluate_loss(batch, model, cfg.with_kind(LossKind::CrossEntropy)).value;
}

double mse_loss(std::span<const Sample> batch, const HtnModel& model, const LossConfig& cfg) {
  return evaluate_loss(batch, model, cfg.with_kind(LossKind::MSE)).value;
}

LossGradient loss_and_gradient(std::span<const Sample> batch, const HtnModel& model,
                               const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = model.n_sites();
  LossGradient out;
  for (std::size_t k = 0; k < n; ++k) {
    out.sites.emplace_back(model.shape(k).tensor_dims());
    out.thetas.emplace_back(model.xi(), 0.0);
  }
  std::vector<std::vector<double>> reductions;
  for (std::size_t k = 0; k < n; ++k) reductions.push_back(model.reduction(k));
  std::vector<std::vector<double>> d_reduction(n, std::vector<double>(model.xi(), 0.0));

  double sum = 0.0;
  std::vector<channel::SiteMap> maps;
  std::vector<Matrix> states;
  for (const auto& s : batch) {
    check_sites(model, s.state);
    maps.clear();
    states.assign(1, Matrix::Ones(1, 1));
    for (std::size_t k = 0; k < n; ++k) {
      maps.push_back(channel::site_map(model.site(k), model.shape(k), s.state.site_vectors[k]));
      states.push_back(channel::apply(maps.back(), reductions[k], states.back()));
    }
    const auto term = loss_term(states.back(), s.label.class_index, cfg, true);
    if (term.abstained) {
      ++out.loss.abstained;
      continue;
    }
    ++out.loss.counted;
    sum += term.value;
    Matrix effect = term.gradient;
    for (std::size_t k = n; k-- > 0;) {
      Matrix kraus_grad;
      channel::accumulate_gradient(maps[k], reductions[k], states[k], effect, kraus_grad,
                                   d_reduction[k]);
      channel::accumulate_site_gradient(kraus_grad, model.shape(k), s.state.site_vectors[k],
                                        out.sites[k]);
      if (k > 0) effect = channel::apply_adjoint(maps[k], reductions[k], effect);
    }
  }
  if (out.loss.counted == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.loss.counted);
  out.loss.value = sum * scale;
  for (std::size_t k = 0; k < n; ++k) {
    out.sites[k] *= Complex{scale, 0.0};
    const auto dd = reduction_diagonal_derivative(model.theta(k));
    for (std::size_t r = 0; r < model.xi(); ++r)
      out.thetas[k][r] = scale * d_reduction[k][r] * dd[r];
  }
  return out;
}

std::optional<std::size_t> predict_density(const DensityMatrix& rho, std::size_t num_classes) {
  if (rho.trace() <= kTraceFloor) return std::nullopt;
  const std::size_t limit = std::min(num_classes, rho.dim());
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < limit; ++i) {
    const double v = rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

std::optional<std::size_t> predict(const HtnModel& model, const EncodedState& sigma,
                                   const LossConfig& cfg, std::size_t num_classes) {
  const auto rho = forward(model, sigma);
  if (divisor(rho.trace(), cfg).vanished || rho.trace() <= kTraceFloor) return std::nullopt;
  return predict_density(normalize(rho, cfg), num_classes);
}

}  // namespace htn
