#include "htn/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace htn {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void SweepConfig::validate() const {
  if (n_sweeps < 1) throw std::invalid_argument("SweepConfig: n_sweeps must be >= 1");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("SweepConfig: learning rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("SweepConfig: Adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw std::invalid_argument("SweepConfig: Adam eps must be > 0");
}

namespace {

// Window parameters flattened as (Re, Im) of both site tensors, then both
// reduction parameter vectors.
struct WindowParams {
  std::size_t k = 0;
  std::size_t last = 0;
  std::vector<double> values;

  static WindowParams gather(const HtnModel& model, std::size_t k, std::size_t last) {
    WindowParams p{k, last, {}};
    for (std::size_t j = k; j <= last; ++j)
      for (const auto& z : model.site(j).data()) {
        p.values.push_back(z.real());
        p.values.push_back(z.imag());
      }
    for (std::size_t j = k; j <= last; ++j)
      p.values.insert(p.values.end(), model.theta(j).begin(), model.theta(j).end());
    return p;
  }

  // Writes the parameters into the model, retracting each site onto the
  // isometries, then re-reads them so the flat vector matches the model.
  void scatter(HtnModel& model) {
    std::size_t pos = 0;
    for (std::size_t j = k; j <= last; ++j) {
      ComplexTensor t(model.shape(j).tensor_dims());
      for (auto& z : t.data()) {
        z = Complex{values[pos], values[pos + 1]};
        pos += 2;
      }
      model.set_site(j, isometrize(t, site_axis::kInAxes));
    }
    for (std::size_t j = k; j <= last; ++j) {
      std::vector<double> theta(values.begin() + static_cast<std::ptrdiff_t>(pos),
                                values.begin() + static_cast<std::ptrdiff_t>(pos + model.xi()));
      pos += model.xi();
      model.set_theta(j, std::move(theta));
    }
    values = gather(model, k, last).values;
  }
};

// Component of g tangent to the isometries at w: G - W (W^dag G + G^dag W) / 2.
ComplexTensor tangent_part(const ComplexTensor& w, const ComplexTensor& g) {
  using namespace site_axis;
  const std::array<std::size_t, 3> out_axes{kBondOut, kReduction, kOutput};
  const Matrix wm = w.matricize(out_axes, kInAxes);
  const Matrix gm = g.matricize(out_axes, kInAxes);
  const Matrix a = wm.adjoint() * gm;
  const Matrix t = gm - 0.5 * wm * (a + a.adjoint());
  return ComplexTensor::from_matricized(t, w.dims(), out_axes, kInAxes);
}

std::vector<double> flatten_gradient(const HtnModel& model, std::size_t k,
                                     const WindowEvaluation& ev, bool two_sites) {
  std::vector<double> g;
  auto push_tensor = [&](const ComplexTensor& raw, std::size_t site) {
    const ComplexTensor t = tangent_part(model.site(site), raw);
    for (const auto& z : t.data()) {
      g.push_back(z.real());
      g.push_back(z.imag());
    }
  };
  push_tensor(ev.grad_left, k);
  if (two_sites) push_tensor(ev.grad_right, k + 1);
  g.insert(g.end(), ev.grad_theta_left.begin(), ev.grad_theta_left.end());
  if (two_sites) g.insert(g.end(), ev.grad_theta_right.begin(), ev.grad_theta_right.end());
  return g;
}

bool better(const LossValue& a, const LossValue& b) {
  if (a.abstained != b.abstained) return a.abstained < b.abstained;
  return a.value < b.value;
}

std::vector<std::size_t> window_order(std::size_t n) {
  std::vector<std::size_t> order;
  if (n < 3) {
    order.push_back(0);
    return order;
  }
  for (std::size_t k = 0; k + 1 < n; ++k) order.push_back(k);
  for (std::size_t k = n - 2; k-- > 0;) order.push_back(k);
  return order;
}

}  // namespace

SweepMetrics sweep(HtnModel& model, const LossConfig& loss_cfg, const SweepConfig& sweep_cfg,
                   EnvironmentCache& cache) {
  loss_cfg.validate();
  sweep_cfg.validate();
  SweepMetrics metrics;
  const std::size_t n = model.n_sites();
  for (const std::size_t k : window_order(n)) {
    const std::size_t last = std::min(k + 1, n - 1);
    const bool two_sites = last != k;
    WindowParams params = WindowParams::gather(model, k, last);

    std::vector<ComplexTensor> best_sites;
    std::vector<std::vector<double>> best_thetas;
    auto snapshot = [&] {
      best_sites.clear();
      best_thetas.clear();
      for (std::size_t j = k; j <= last; ++j) {
        best_sites.push_back(model.site(j));
        best_thetas.push_back(model.theta(j));
      }
    };
    LossValue best_loss;
    AdamState state;
    const std::size_t steps = sweep_cfg.adam_steps_per_site;
    for (std::size_t s = 0; s <= steps; ++s) {
      const bool need_gradient = s < steps;
      const auto ev = evaluate_window(model, cache, k, loss_cfg, need_gradient);
      if (s == 0 || better(ev.loss, best_loss)) {
        best_loss = ev.loss;
        snapshot();
      }
      if (!need_gradient) break;
      const auto grad = flatten_gradient(model, k, ev, two_sites);
      adam_step(params.values, grad, state, sweep_cfg.adam);
      params.scatter(model);
    }
    for (std::size_t j = k; j <= last; ++j) {
      model.set_site(j, std::move(best_sites[j - k]));
      model.set_theta(j, std::move(best_thetas[j - k]));
    }
    cache.refresh_window(model, k);
    if (sweep_cfg.check_cache) cache.verify(model, k, 1e-8);
    metrics.bond_losses.push_back(best_loss.value);
    metrics.bond_positions.push_back(k);
  }
  metrics.final_loss = metrics.bond_losses.empty() ? 0.0 : metrics.bond_losses.back();
  return metrics;
}

SetMetrics evaluate_set(const HtnModel& model, std::span<const Sample> set, const LossConfig& cfg,
                        std::size_t num_classes) {
  SetMetrics out;
  if (set.empty()) return out;
  double loss_sum = 0.0, trace_sum = 0.0;
  std::size_t counted = 0, abstained = 0, predicted = 0, correct = 0;
  for (const auto& s : set) {
    const auto rho = forward(model, s.state);
    trace_sum += rho.trace();
    const auto term = loss_term(rho.matrix(), s.label.class_index, cfg, false);
    if (!term.abstained) {
      loss_sum += term.value;
      ++counted;
    }
    const auto pred = term.abstained ? std::nullopt : predict_density(rho, num_classes);
    if (!pred) {
      ++abstained;
      continue;
    }
    ++predicted;
    if (*pred == s.label.class_index) ++correct;
  }
  const auto total = static_cast<double>(set.size());
  out.loss = counted > 0 ? loss_sum / static_cast<double>(counted) : 0.0;
  out.accuracy = predicted > 0 ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  out.abstention = static_cast<double>(abstained) / total;
  out.retained_trace = trace_sum / total;
  return out;
}

TrainedReport train(HtnModel& model, std::span<const Sample> train_set,
                    std::span<const Sample> test_set, const LossConfig& loss_cfg,
                    const SweepConfig& sweep_cfg, std::size_t num_classes) {
  loss_cfg.validate();
  sweep_cfg.validate();
  TrainedReport report;
  report.initial = {evaluate_set(model, train_set, loss_cfg, num_classes),
                    evaluate_set(model, test_set, loss_cfg, num_classes)};
  EnvironmentCache cache(model, train_set);
  for (std::size_t s = 0; s < sweep_cfg.n_sweeps; ++s) {
    report.sweep_details.push_back(sweep(model, loss_cfg, sweep_cfg, cache));
    report.sweeps.push_back({evaluate_set(model, train_set, loss_cfg, num_classes),
                             evaluate_set(model, test_set, loss_cfg, num_classes)});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Data-derived initialization.

namespace {

std::size_t label_digit(std::size_t label, std::span<const std::size_t> output_dims,
                        std::size_t leg) {
  std::size_t below = 1;
  for (std::size_t j = leg + 1; j < output_dims.size(); ++j) below *= output_dims[j];
  return (label / below) % output_dims[leg];
}

// Site tensor whose rows (c, r, o) are conj(f) for the assigned directions f.
ComplexTensor site_from_directions(const SiteShape& shape, const Matrix& directions,
                                   const std::vector<std::size_t>& slots) {
  ComplexTensor t(shape.tensor_dims());
  const std::size_t bo = shape.bond_out, nr = shape.reduction, no = shape.output;
  auto data = t.data();
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const std::size_t slot = slots[j];  // flat (c, r, o) index
    for (std::size_t a = 0; a < shape.bond_in; ++a)
      for (std::size_t s = 0; s < 2; ++s) {
        const std::size_t in = a * 2 + s;
        data[(a * 2 + s) * bo * nr * no + slot] =
            std::conj(directions(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(j)));
      }
  }
  return t;
}

}  // namespace

HtnModel init_from_data(std::span<const Sample> dataset, std::size_t chi, std::size_t xi,
                        std::vector<std::size_t> output_dims, std::uint64_t seed) {
  if (chi < 1 || xi < 1) throw std::invalid_argument("init_from_data: chi and xi must be >= 1");
  if (dataset.empty()) throw std::invalid_argument("init_from_data: empty dataset");
  const std::size_t n = dataset.front().state.n_sites();
  const auto shapes = chain_shapes(n, chi, xi, output_dims);
  const std::size_t first_output = n - output_dims.size();

  std::size_t num_classes = 0;
  for (const auto& s : dataset) num_classes = std::max(num_classes, s.label.class_index + 1);
  std::vector<double> class_count(num_classes, 0.0);
  for (const auto& s : dataset) class_count[s.label.class_index] += 1.0;

  const std::size_t m = dataset.size();
  std::vector<double> weight(m);
  for (std::size_t i = 0; i < m; ++i) weight[i] = 1.0 / class_count[dataset[i].label.class_index];

  // Pure state of each sample on (accumulated outputs, bond), rows = outputs.
  std::vector<Matrix> beta(m, Matrix::Ones(1, 1));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kJitter = 1e-3;

  std::vector<ComplexTensor> sites;
  for (std::size_t k = 0; k < n; ++k) {
    const SiteShape& shape = shapes[k];
    const auto in = static_cast<Eigen::Index>(shape.in_dim());
    const std::size_t no = shape.output;
    const std::size_t bo = shape.bond_out;
    const std::size_t per_output = bo * shape.reduction;

    // Reduced second moments per output digit of this site.
    std::vector<Matrix> q(no, Matrix::Zero(in, in));
    for (std::size_t i = 0; i < m; ++i) {
      const auto& v = dataset[i].state.site_vectors[k];
      Matrix u(beta[i].rows(), in);
      for (Eigen::Index A = 0; A < beta[i].rows(); ++A)
        for (Eigen::Index a = 0; a < beta[i].cols(); ++a) {
          u(A, a * 2) = beta[i](A, a) * v[0];
          u(A, a * 2 + 1) = beta[i](A, a) * v[1];
        }
      const std::size_t digit =
          no > 1 ? label_digit(dataset[i].label.class_index, output_dims, k - first_output) : 0;
      q[digit].noalias() += weight[i] * (u.transpose() * u.conjugate());
    }
    Matrix total = Matrix::Zero(in, in);
    for (const auto& qo : q) total += qo;

    Matrix directions;
    std::vector<std::size_t> group(static_cast<std::size_t>(in), 0);
    if (no == 1) {
      directions = hermitian_eigen(total).vectors.rowwise().reverse();
    } else if (no == 2) {
      const auto eig = hermitian_eigen(q[0] - q[1]);
      directions = eig.vectors;
      for (Eigen::Index j = 0; j < in; ++j) group[j] = eig.values(j) >= 0.0 ? 0 : 1;
    } else {
      directions = hermitian_eigen(total).vectors;
      for (Eigen::Index j = 0; j < in; ++j) {
        double best = -1.0;
        for (std::size_t o = 0; o < no; ++o) {
          const double w = (directions.col(j).adjoint() * q[o] * directions.col(j))(0).real();
          if (w > best) {
            best = w;
            group[j] = o;
          }
        }
      }
    }

    // Strongest directions first within each output group.
    std::vector<double> strength(static_cast<std::size_t>(in));
    for (Eigen::Index j = 0; j < in; ++j)
      strength[j] = (directions.col(j).adjoint() * total * directions.col(j))(0).real();
    std::vector<std::size_t> order(static_cast<std::size_t>(in));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return strength[a] > strength[b]; });

    std::vector<std::size_t> used(no, 0);
    std::vector<char> taken(per_output * no, 0);
    std::vector<std::size_t> slots(static_cast<std::size_t>(in));
    auto slot_of = [&](std::size_t o, std::size_t g) {
      const std::size_t c = g % bo, r = g / bo;
      return (c * shape.reduction + r) * no + o;
    };
    std::vector<std::size_t> overflow;
    for (const std::size_t j : order) {
      const std::size_t o = group[j];
      if (used[o] < per_output) {
        slots[j] = slot_of(o, used[o]++);
        taken[slots[j]] = 1;
      } else {
        overflow.push_back(j);
      }
    }
    for (const std::size_t j : overflow) {
      for (std::size_t o = 0; o < no; ++o)
        if (used[o] < per_output) {
          slots[j] = slot_of(o, used[o]++);
          break;
        }
    }

    ComplexTensor site = site_from_directions(shape, directions, slots);
    for (auto& z : site.data()) z += kJitter * Complex{normal(rng), normal(rng)};
    site = isometrize(site, site_axis::kInAxes);

    // Propagate each sample through the leading (r = 0) slots.
    const auto map_shape = shape;
    for (std::size_t i = 0; i < m; ++i) {
      const auto map = channel::site_map(site, map_shape, dataset[i].state.site_vectors[k]);
      const auto bi = static_cast<Eigen::Index>(shape.bond_in);
      Matrix next(beta[i].rows() * static_cast<Eigen::Index>(no), static_cast<Eigen::Index>(bo));
      const auto m0 = map.kraus.leftCols(bi);
      for (Eigen::Index A = 0; A < beta[i].rows(); ++A) {
        const Vector out = m0 * beta[i].row(A).transpose();
        for (Eigen::Index o = 0; o < static_cast<Eigen::Index>(no); ++o)
          next.row(A * static_cast<Eigen::Index>(no) + o) =
              out.segment(o * static_cast<Eigen::Index>(bo), static_cast<Eigen::Index>(bo))
                  .transpose();
      }
      const double norm = next.norm();
      if (norm > 1e-150) next /= norm;
      beta[i] = std::move(next);
    }
    sites.push_back(std::move(site));
  }

  // D = sin^2(theta) is stationary at theta = pi / 2; starting a hair below
  // keeps D within 1e-6 of I while giving the reduction parameters a gradient.
  constexpr double kThetaOffset = 1e-3;
  std::vector<double> theta = identity_theta(xi);
  for (auto& x : theta) x -= kThetaOffset;
  std::vector<std::vector<double>> thetas(n, theta);
  return HtnModel(std::move(sites), std::move(thetas), chi, xi, std::move(output_dims));
}

}  // namespace htn
