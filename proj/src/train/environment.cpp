#include "htn/train.hpp"

#include <algorithm>
#include <cmath>

namespace htn {

namespace {

std::size_t isqrt_exact(Eigen::Index n) {
  const auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (static_cast<Eigen::Index>(r * r) != n) throw ShapeError("environment: size is not a square");
  return r;
}

}  // namespace

Matrix extend_right(const channel::SiteMap& map, std::span<const double> reduction,
                    const Matrix& next_right) {
  const auto bi = static_cast<Eigen::Index>(map.shape.bond_in);
  const auto bo = static_cast<Eigen::Index>(map.shape.bond_out);
  const auto no = static_cast<Eigen::Index>(map.shape.output);
  const auto nr = static_cast<Eigen::Index>(map.shape.reduction);
  if (next_right.cols() != bo * bo) throw ShapeError("extend_right: bond mismatch");
  const auto rest = static_cast<Eigen::Index>(isqrt_exact(next_right.rows()));
  const Eigen::Index out = no * rest;

  Matrix result(out * out, bi * bi);
  // Per output value o: the factors M_r^{(o)} stacked as rows (r, d) x c.
  std::vector<Matrix> stacked(static_cast<std::size_t>(no), Matrix(nr * bo, bi));
  std::vector<Matrix> conj_rows(static_cast<std::size_t>(no));
  for (Eigen::Index o = 0; o < no; ++o) {
    for (Eigen::Index r = 0; r < nr; ++r)
      stacked[o].middleRows(r * bo, bo) = map.kraus.block(o * bo, r * bi, bo, bi);
    conj_rows[o] = map.kraus.middleRows(o * bo, bo).conjugate();
  }
  Matrix q(bo, bo);
  Matrix g(bo, nr * bi);
  Matrix g_stacked(nr * bo, bi);
  Matrix block(bi, bi);
  // R_k[((o,B),(o',B')),(c,c')] = sum_r D_r (M_r^{(o)T} Q_{BB'} conj(M_r^{(o')}))[c,c'].
  for (Eigen::Index b = 0; b < rest; ++b)
    for (Eigen::Index bp = 0; bp < rest; ++bp) {
      const Eigen::Index row = b * rest + bp;
      for (Eigen::Index d = 0; d < bo; ++d)
        for (Eigen::Index dp = 0; dp < bo; ++dp) q(d, dp) = next_right(row, d * bo + dp);
      for (Eigen::Index op = 0; op < no; ++op) {
        g.noalias() = q * conj_rows[op];
        for (Eigen::Index r = 0; r < nr; ++r)
          g_stacked.middleRows(r * bo, bo) = reduction[r] * g.middleCols(r * bi, bi);
        for (Eigen::Index o = 0; o < no; ++o) {
          block.noalias() = stacked[o].transpose() * g_stacked;
          const Eigen::Index out_row = (o * rest + b) * out + (op * rest + bp);
          for (Eigen::Index c = 0; c < bi; ++c)
            for (Eigen::Index cp = 0; cp < bi; ++cp) result(out_row, c * bi + cp) = block(c, cp);
        }
      }
    }
  return result;
}

Matrix close_right(const Matrix& rho, const Matrix& right, std::size_t bond) {
  const auto b = static_cast<Eigen::Index>(bond);
  if (right.cols() != b * b || rho.rows() % b != 0) throw ShapeError("close_right: bond mismatch");
  const Eigen::Index spec = rho.rows() / b;
  const auto rest = static_cast<Eigen::Index>(isqrt_exact(right.rows()));
  Matrix out(spec * rest, spec * rest);
  Vector x(b * b);
  for (Eigen::Index A = 0; A < spec; ++A)
    for (Eigen::Index Ap = 0; Ap < spec; ++Ap) {
      for (Eigen::Index c = 0; c < b; ++c)
        for (Eigen::Index cp = 0; cp < b; ++cp) x(c * b + cp) = rho(A * b + c, Ap * b + cp);
      const Vector y = right * x;
      for (Eigen::Index B = 0; B < rest; ++B)
        for (Eigen::Index Bp = 0; Bp < rest; ++Bp)
          out(A * rest + B, Ap * rest + Bp) = y(B * rest + Bp);
    }
  return out;
}

Matrix open_right(const Matrix& gradient, const Matrix& right, std::size_t bond) {
  const auto b = static_cast<Eigen::Index>(bond);
  const auto rest = static_cast<Eigen::Index>(isqrt_exact(right.rows()));
  if (gradient.rows() % rest != 0) throw ShapeError("open_right: output mismatch");
  const Eigen::Index spec = gradient.rows() / rest;
  Matrix out(spec * b, spec * b);
  Vector g(rest * rest);
  // E_{A'A}[c', c] = sum_{B,B'} Gamma_{A'A}[B', B] R[(B, B'), (c, c')].
  for (Eigen::Index Ap = 0; Ap < spec; ++Ap)
    for (Eigen::Index A = 0; A < spec; ++A) {
      for (Eigen::Index B = 0; B < rest; ++B)
        for (Eigen::Index Bp = 0; Bp < rest; ++Bp)
          g(B * rest + Bp) = gradient(Ap * rest + Bp, A * rest + B);
      const Vector z = right.transpose() * g;
      for (Eigen::Index c = 0; c < b; ++c)
        for (Eigen::Index cp = 0; cp < b; ++cp) out(Ap * b + cp, A * b + c) = z(c * b + cp);
    }
  return out;
}

EnvironmentCache::EnvironmentCache(const HtnModel& model, std::span<const Sample> batch)
    : batch_(batch) {
  for (const auto& s : batch_)
    if (s.state.n_sites() != model.n_sites())
      throw ShapeError("EnvironmentCache: sample site count does not match the model");
  rebuild(model);
}

void EnvironmentCache::rebuild(const HtnModel& model) {
  const std::size_t n = model.n_sites();
  const std::size_t m = batch_.size();
  left_.assign(n + 1, std::vector<Matrix>(m));
  right_.assign(n + 1, std::vector<Matrix>(m));
  std::vector<std::vector<double>> red;
  for (std::size_t k = 0; k < n; ++k) red.push_back(model.reduction(k));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& v = batch_[i].state.site_vectors;
    left_[0][i] = Matrix::Ones(1, 1);
    for (std::size_t k = 0; k < n; ++k) {
      const auto map = channel::site_map(model.site(k), model.shape(k), v[k]);
      left_[k + 1][i] = channel::apply(map, red[k], left_[k][i]);
    }
    right_[n][i] = Matrix::Ones(1, 1);
    for (std::size_t k = n; k-- > 0;) {
      const auto map = channel::site_map(model.site(k), model.shape(k), v[k]);
      right_[k][i] = extend_right(map, red[k], right_[k + 1][i]);
    }
  }
}

void EnvironmentCache::refresh_window(const HtnModel& model, std::size_t k) {
  const std::size_t n = model.n_sites();
  const std::size_t last = std::min(k + 1, n - 1);
  const auto red_k = model.reduction(k);
  const auto red_last = model.reduction(last);
  for (std::size_t i = 0; i < batch_.size(); ++i) {
    const auto& v = batch_[i].state.site_vectors;
    const auto map_k = channel::site_map(model.site(k), model.shape(k), v[k]);
    const auto map_last = channel::site_map(model.site(last), model.shape(last), v[last]);
    left_[k + 1][i] = channel::apply(map_k, red_k, left_[k][i]);
    if (last != k) left_[last + 1][i] = channel::apply(map_last, red_last, left_[last][i]);
    if (last != k) right_[last][i] = extend_right(map_last, red_last, right_[last + 1][i]);
    right_[k][i] = extend_right(map_k, red_k, right_[k + 1][i]);
  }
}

double EnvironmentCache::window_deviation(const HtnModel& model, std::size_t k) const {
  const std::size_t n = model.n_sites();
  const std::size_t last = std::min(k + 1, n - 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < batch_.size(); ++i) {
    const auto& v = batch_[i].state.site_vectors;
    Matrix x = left_[k][i];
    for (std::size_t j = k; j <= last; ++j) {
      const auto map = channel::site_map(model.site(j), model.shape(j), v[j]);
      x = channel::apply(map, model.reduction(j), x);
    }
    const Matrix rho = close_right(x, right_[last + 1][i], model.shape(last).bond_out);
    const Matrix reference = forward(model, batch_[i].state).matrix();
    worst = std::max(worst, (rho - reference).cwiseAbs().maxCoeff());
  }
  return worst;
}

void EnvironmentCache::verify(const HtnModel& model, std::size_t k, double tol) const {
  const double dev = window_deviation(model, k);
  if (!(dev <= tol))
    throw CacheInconsistencyError("EnvironmentCache: cached contraction deviates by " +
                                  std::to_string(dev) + " at window " + std::to_string(k));
}

WindowEvaluation evaluate_window(const HtnModel& model, const EnvironmentCache& cache,
                                 std::size_t k, const LossConfig& cfg, bool with_gradient) {
  const std::size_t n = model.n_sites();
  if (k >= n) throw std::out_of_range("evaluate_window: window outside the chain");
  const std::size_t last = std::min(k + 1, n - 1);
  const std::size_t width = last - k + 1;

  WindowEvaluation out;
  out.grad_left = ComplexTensor(model.shape(k).tensor_dims());
  out.grad_right = ComplexTensor(model.shape(last).tensor_dims());
  std::vector<std::vector<double>> red, d_red;
  for (std::size_t j = k; j <= last; ++j) {
    red.push_back(model.reduction(j));
    d_red.emplace_back(model.xi(), 0.0);
  }

  std::vector<channel::SiteMap> maps;
  std::vector<Matrix> states;
  double sum = 0.0;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    const auto& sample = cache.batch()[i];
    const auto& v = sample.state.site_vectors;
    maps.clear();
    states.assign(1, cache.left(k, i));
    for (std::size_t j = 0; j < width; ++j) {
      maps.push_back(channel::site_map(model.site(k + j), model.shape(k + j), v[k + j]));
      states.push_back(channel::apply(maps.back(), red[j], states.back()));
    }
    const std::size_t bond = model.shape(last).bond_out;
    const Matrix rho = close_right(states.back(), cache.right(last + 1, i), bond);
    const auto term = loss_term(rho, sample.label.class_index, cfg, with_gradient);
    if (term.abstained) {
      ++out.loss.abstained;
      continue;
    }
    ++out.loss.counted;
    sum += term.value;
    if (!with_gradient) continue;
    Matrix effect = open_right(term.gradient, cache.right(last + 1, i), bond);
    for (std::size_t j = width; j-- > 0;) {
      Matrix kraus_grad;
      channel::accumulate_gradient(maps[j], red[j], states[j], effect, kraus_grad, d_red[j]);
      channel::accumulate_site_gradient(kraus_grad, model.shape(k + j), v[k + j],
                                        j == 0 ? out.grad_left : out.grad_right);
      if (j > 0) effect = channel::apply_adjoint(maps[j], red[j], effect);
    }
  }
  if (out.loss.counted == 0) return out;
  const double scale = 1.0 / static_cast<double>(out.loss.counted);
  out.loss.value = sum * scale;
  if (with_gradient) {
    out.grad_left *= Complex{scale, 0.0};
    out.grad_right *= Complex{scale, 0.0};
    auto to_theta = [&](std::size_t j) {
      const auto dd = reduction_diagonal_derivative(model.theta(k + j));
      std::vector<double> g(model.xi());
      for (std::size_t r = 0; r < g.size(); ++r) g[r] = scale * d_red[j][r] * dd[r];
      return g;
    };
    out.grad_theta_left = to_theta(0);
    out.grad_theta_right = width > 1 ? to_theta(1) : std::vector<double>(model.xi(), 0.0);
  }
  return out;
}

}  // namespace htn
