#include "htn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace htn::verify {

namespace {

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

void report(const VerifyOptions& opts, const std::string& line) {
  if (opts.progress) opts.progress(line);
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

struct IrisData {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

IrisData load_iris_samples(const VerifyOptions& opts) {
  const cli::Dataset data = cli::load_iris(opts.data_dir / "iris.csv");
  const cli::Split split = cli::stratified_split(data.labels, 0.8, 42);
  const auto scaler = cli::MinMaxScaler::fit(data, split.train);
  return {cli::make_samples(data, split.train, &scaler, 4),
          cli::make_samples(data, split.test, &scaler, 4)};
}

// ---- 1: forward pass against the dense oracle -----------------------------

CriterionResult forward_oracle(const VerifyOptions&) {
  constexpr int kModels = 200;
  constexpr double kTol = 1e-10;
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  int failures = 0;
  for (int i = 0; i < kModels; ++i) {
    const HtnModel model = random_model(rng, 4, 4, 4);
    const Sample s = random_sample(model, rng);
    const double dev = max_abs(forward(model, s.state).matrix() - dense_forward(model, s.state));
    worst = std::max(worst, dev);
    if (!(dev <= kTol)) ++failures;
  }
  return {1, "forward pass matches dense oracle", failures == 0, false,
          fmt("%d models, max entrywise deviation %.3g (tol %.0e)", kModels, worst, kTol)};
}

// ---- 2: identity reductions are no worse ----------------------------------

CriterionResult identity_no_worse(const VerifyOptions&) {
  constexpr int kTriples = 500;
  constexpr double kSlack = 1e-12;
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kTriples; ++i) {
    const HtnModel model = random_model(rng, 4, 4, 4);
    const Sample s = random_sample(model, rng);
    const double lambda = 0.1 * (1.0 - unit(rng));  // (0, 0.1]
    const LossConfig cfg = LossConfig::none(lambda);
    const std::size_t l = s.label.class_index;
    const double with_d = loss_term(forward(model, s.state).matrix(), l, cfg, false).value;
    const double with_i =
        loss_term(forward(model.with_identity_reductions(), s.state).matrix(), l, cfg, false).value;
    min_margin = std::min(min_margin, with_d - with_i);
    if (!(with_i <= with_d + kSlack)) ++violations;
  }
  return {2, "identity reductions minimize the unnormalized loss", violations == 0, false,
          fmt("%d triples, %d violations, smallest margin %.3g (slack %.0e)", kTriples, violations,
              min_margin, kSlack)};
}

// ---- 3: monotonicity in t and w -------------------------------------------

CriterionResult monotone_hyperparameters(const VerifyOptions&) {
  constexpr int kConfigs = 200;
  constexpr int kGrid = 5;
  constexpr double kSlack = 1e-12;
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0, checks = 0;
  auto sorted_grid = [&] {
    std::vector<double> g(kGrid);
    for (auto& x : g) x = unit(rng);
    std::sort(g.begin(), g.end());
    return g;
  };
  for (int i = 0; i < kConfigs; ++i) {
    const HtnModel model = random_model(rng, 4, 4, 4);
    const Sample s = random_sample(model, rng);
    const double lambda = 0.1 * (1.0 - unit(rng));
    const Matrix rho = forward(model, s.state).matrix();
    const std::size_t l = s.label.class_index;
    for (int family = 0; family < 2; ++family) {
      const auto grid = sorted_grid();
      double previous = -std::numeric_limits<double>::infinity();
      for (double h : grid) {
        const LossConfig cfg = family == 0 ? LossConfig::threshold(h, lambda) : LossConfig::weight(h, lambda);
        const auto term = loss_term(rho, l, cfg, false);
        if (term.abstained) continue;
        ++checks;
        if (!(term.value >= previous - kSlack)) ++violations;
        previous = term.value;
      }
    }
  }
  return {3, "loss is monotone in t and w", violations == 0, false,
          fmt("%d configs x 2 grids of %d, %d comparisons, %d violations (slack %.0e)", kConfigs,
              kGrid, checks, violations, kSlack)};
}

// ---- 4: information-weight decomposition ----------------------------------

CriterionResult weight_decomposition(const VerifyOptions&) {
  constexpr int kCases = 100;
  constexpr int kBatch = 4;
  constexpr double kTol = 1e-10;
  constexpr double kFullRank = 1e-6;
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int done = 0, attempts = 0;
  while (done < kCases && attempts < 100 * kCases) {
    ++attempts;
    const HtnModel model = random_model(rng, 4, 4, 4, 2);
    std::vector<Sample> batch;
    bool full_rank = true;
    for (int i = 0; i < kBatch && full_rank; ++i) {
      batch.push_back(random_sample(model, rng));
      const Matrix rho = forward(model, batch.back().state).matrix();
      const Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
      full_rank = es.eigenvalues().minCoeff() > kFullRank * rho.trace().real();
    }
    if (!full_rank) continue;
    const double w = unit(rng);
    const double lhs = cross_entropy_loss(batch, model, LossConfig::weight(w, 0.0));
    double ce = 0.0, log_trace = 0.0;
    for (const auto& s : batch) {
      const DensityMatrix rho = forward(model, s.state);
      ce += cross_entropy_term(rho, s.label.class_index);
      log_trace += -std::log(rho.trace());
    }
    const double rhs = ce / kBatch - (1.0 - w) * log_trace / kBatch;
    worst = std::max(worst, std::abs(lhs - rhs));
    ++done;
  }
  return {4, "weight loss splits into entropy and log-trace parts", done == kCases && worst <= kTol,
          false, fmt("%d full-rank cases, max |lhs - rhs| %.3g (tol %.0e)", done, worst, kTol)};
}

// ---- 5: randomized completion under MSE -----------------------------------

CriterionResult mse_completion(const VerifyOptions&) {
  constexpr int kCases = 500;
  constexpr double kSlack = 1e-12;
  std::mt19937_64 rng(1005);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int increases = 0;
  double dev_linear = 0.0, dev_square = 0.0;
  for (int i = 0; i < kCases; ++i) {
    const std::size_t d = std::size_t{1} << (1 + rng() % 3);
    const std::size_t l = rng() % d;
    const double p = unit(rng);
    const DensityMatrix rho_d(p * random_density(d, rng));
    const DensityMatrix rho_r = randomized_completion(rho_d);
    const double before = mse_term(rho_d, l);
    const double after = mse_term(rho_r, l);
    if (!(after <= before + kSlack)) ++increases;
    // tr((rho_R - tau)^2) - tr((rho_D - tau)^2), without the factor 1/2.
    const double gap = 2.0 * (after - before);
    const double c = 1.0 - rho_d.trace();
    dev_linear = std::max(dev_linear, std::abs(gap - (-c / static_cast<double>(d))));
    dev_square = std::max(dev_square, std::abs(gap - (-c * c / static_cast<double>(d))));
  }
  const bool passed = increases == 0 && dev_square <= kSlack;
  return {5, "randomized completion never increases MSE", passed, false,
          fmt("%d cases, %d increases; gap vs -c/d max dev %.3g, vs -c^2/d max dev %.3g -> %s "
              "matches",
              kCases, increases, dev_linear, dev_square, dev_square <= kSlack ? "-c^2/d" : "neither")};
}

// ---- 6: data-processing inequality ----------------------------------------

CriterionResult data_processing(const VerifyOptions&) {
  constexpr int kPairs = 200;
  constexpr double kSlack = 1e-9;
  std::mt19937_64 rng(1006);
  int violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kPairs; ++i) {
    const std::size_t d_in = std::size_t{1} << (1 + rng() % 3);
    const std::size_t d_out = std::size_t{1} << (1 + rng() % 3);
    std::size_t d_env = 1 + rng() % 4;
    while (d_out * d_env < d_in) ++d_env;
    const DenseChannel ch = random_channel(d_in, d_out, d_env, rng);
    const DensityMatrix rho(random_density(d_in, rng));
    const DensityMatrix sigma(random_density(d_in, rng));
    const double before = relative_entropy(rho, sigma);
    const double after =
        relative_entropy(DensityMatrix(ch.apply(rho.matrix())), DensityMatrix(ch.apply(sigma.matrix())));
    worst = std::max(worst, after - before);
    if (!(after <= before + kSlack)) ++violations;
  }
  return {6, "channels never increase relative entropy", violations == 0, false,
          fmt("%d pairs, %d violations, largest increase %.3g (slack %.0e)", kPairs, violations,
              worst, kSlack)};
}

// ---- 7: circuit compiler and separation demo ------------------------------

CriterionResult compiler(const VerifyOptions&) {
  constexpr double kTol = 1e-10;
  constexpr double kDemoTol = 1e-12;
  std::mt19937_64 rng(1007);
  double out_dev = 0.0, ret_dev = 0.0;
  int cases = 0;
  for (const auto& [dim, count] : {std::pair{2, 50}, std::pair{4, 20}}) {
    const std::size_t qubits = dim == 2 ? 1 : 2;
    for (int i = 0; i < count; ++i) {
      const Matrix m = random_complex(dim, dim, rng);
      Vector psi = random_complex(dim, 1, rng).col(0);
      psi.normalize();
      const Vector target = m * psi;
      const double r2 = Eigen::SelfAdjointEigenSolver<Matrix>(m.adjoint() * m).eigenvalues().maxCoeff();
      for (bool deferred : {false, true}) {
        const auto circuit = qc::compile_matrix(m, deferred);
        const auto result = qc::simulate(circuit, qc::StateVector(qubits, psi));
        out_dev = std::max(out_dev, (result.output.amplitudes - target / target.norm()).cwiseAbs().maxCoeff());
        ret_dev = std::max(ret_dev, std::abs(result.retention - target.squaredNorm() / r2));
        ++cases;
      }
    }
  }
  const auto demo = qc::toffoli_separation_demo();
  const bool demo_ok = demo.fidelity_a >= 1.0 - kDemoTol && demo.fidelity_b >= 1.0 - kDemoTol &&
                       std::abs(demo.retention_a - 0.5) <= kDemoTol &&
                       std::abs(demo.retention_b - 0.5) <= kDemoTol &&
                       std::abs(demo.input_overlap - 0.25) <= kDemoTol &&
                       demo.output_overlap <= kDemoTol;
  const bool passed = out_dev <= kTol && ret_dev <= kTol && demo_ok;
  return {7, "compiled circuits reproduce the rescaled matrix", passed, false,
          fmt("%d simulations, output dev %.3g, retention dev %.3g (tol %.0e); demo fidelity "
              "%.15f / %.15f, retention %.15f / %.15f, overlaps %.3g -> %.3g",
              cases, out_dev, ret_dev, kTol, demo.fidelity_a, demo.fidelity_b, demo.retention_a,
              demo.retention_b, demo.input_overlap, demo.output_overlap)};
}

// ---- 8: analytic gradients ------------------------------------------------

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-8);
}

std::vector<double> flatten_sites(const std::vector<ComplexTensor>& sites) {
  std::vector<double> out;
  for (const auto& t : sites)
    for (const Complex& z : t.data()) {
      out.push_back(z.real());
      out.push_back(z.imag());
    }
  return out;
}

std::vector<double> flatten_thetas(const std::vector<std::vector<double>>& thetas) {
  std::vector<double> out;
  for (const auto& v : thetas) out.insert(out.end(), v.begin(), v.end());
  return out;
}

CriterionResult gradients(const VerifyOptions&) {
  constexpr int kModels = 20;
  constexpr int kBatch = 3;
  constexpr double kStep = 1e-5;
  constexpr double kTol = 1e-4;
  constexpr double kLambda = 0.05;
  std::mt19937_64 rng(1008);
  double worst_site = 0.0, worst_theta = 0.0;
  for (int i = 0; i < kModels; ++i) {
    const HtnModel model = random_model(rng, 3, 4, 3, 3);
    std::vector<Sample> batch;
    for (int j = 0; j < kBatch; ++j) batch.push_back(random_sample(model, rng));
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::MSE}) {
      const LossConfig cfg = (i % 2 == 0 ? LossConfig::full(kLambda) : LossConfig::threshold(0.3, kLambda))
                                 .with_kind(kind);
      const LossGradient analytic = loss_and_gradient(batch, model, cfg);
      const LossGradient numeric = finite_difference_gradient(batch, model, cfg, kStep);
      worst_site = std::max(worst_site,
                            relative_error(flatten_sites(analytic.sites), flatten_sites(numeric.sites)));
      worst_theta = std::max(
          worst_theta, relative_error(flatten_thetas(analytic.thetas), flatten_thetas(numeric.thetas)));
    }
  }
  return {8, "analytic gradients match finite differences",
          worst_site <= kTol && worst_theta <= kTol, false,
          fmt("%d three-site models x 2 losses, worst relative error sites %.3g, reductions %.3g "
              "(tol %.0e, h %.0e)",
              kModels, worst_site, worst_theta, kTol, kStep)};
}

// ---- 9: Iris grid ---------------------------------------------------------

CriterionResult iris_grid(const VerifyOptions& opts) {
  constexpr double kMonotoneSlack = 0.05;
  constexpr double kChiSpread = 0.10;
  cli::ExperimentConfig cfg;
  cfg.dataset.path = opts.data_dir / "iris.csv";
  cfg.sweep.n_sweeps = opts.iris_sweeps;
  cfg.sweep.adam_steps_per_site = opts.iris_adam_steps;
  cfg.grid_chi = {2, 8};
  cfg.grid_xi = {2, 32};
  cfg.grid_t = {1.0, 0.5, 0.1, 1e-2, 1e-3, 1e-4};
  cfg.validate();

  struct Final {
    double train = 0.0;
    double test = 0.0;
  };
  // (xi, chi) -> finals in grid_t order.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<Final>> columns;
  for (const auto& cell : cli::expand_grid(cfg)) {
    const auto result = cli::run_cell(cfg, cell);
    if (!result.report) throw std::runtime_error("cell failed: " + result.error);
    const auto& last = result.report->sweeps.back();
    columns[{cell.xi, cell.chi}].push_back({last.train.loss, last.test.loss});
    report(opts, fmt("  xi %zu chi %zu t %g: train %.5f test %.5f (%.1f s)", cell.xi, cell.chi,
                     cell.loss.t, last.train.loss, last.test.loss, result.seconds));
  }

  int monotone_breaks = 0;
  for (const auto& [key, finals] : columns)
    for (std::size_t i = 1; i < finals.size(); ++i)
      if (!(finals[i].train <= (1.0 + kMonotoneSlack) * finals[i - 1].train)) ++monotone_breaks;

  double spread = 0.0;
  const auto& small = columns.at({32, 2});
  const auto& large = columns.at({32, 8});
  for (std::size_t i = 0; i < small.size(); ++i) {
    const double lo = std::min(small[i].train, large[i].train);
    const double hi = std::max(small[i].train, large[i].train);
    spread = std::max(spread, (hi - lo) / lo);
  }

  int overfit_columns = 0;
  for (const auto& [key, finals] : columns) {
    const double at_smallest = finals.back().test;
    if (std::any_of(finals.begin(), finals.end() - 1,
                    [&](const Final& f) { return at_smallest > f.test; }))
      ++overfit_columns;
  }
  const bool a = monotone_breaks == 0;
  const bool b = spread < kChiSpread;
  const bool c = overfit_columns > 0;
  return {9, "Iris grid shows the threshold trends", a && b && c, false,
          fmt("(a) %d monotonicity breaks beyond %.0f%% [%s]; (b) xi=32 chi spread %.1f%% < %.0f%% "
              "[%s]; (c) %d/%zu columns overfit at smallest t [%s]",
              monotone_breaks, 100 * kMonotoneSlack, a ? "ok" : "FAIL", 100 * spread,
              100 * kChiSpread, b ? "ok" : "FAIL", overfit_columns, columns.size(),
              c ? "ok" : "FAIL")};
}

// ---- 10: data-derived initialization --------------------------------------

CriterionResult init_quality(const VerifyOptions& opts) {
  constexpr int kRandom = 50;
  constexpr double kTol = 0.10;
  const IrisData iris = load_iris_samples(opts);
  const LossConfig cfg = LossConfig::full();
  const HtnModel data_model = init_from_data(iris.train, 8, 2, {2, 2}, 42);
  const double data_loss = evaluate_loss(iris.train, data_model, cfg).value;
  double best = std::numeric_limits<double>::infinity(), mean = 0.0;
  for (int i = 0; i < kRandom; ++i) {
    const HtnModel m = HtnModel::random(4, 8, 2, {2, 2}, 5000 + static_cast<std::uint64_t>(i));
    const double loss = evaluate_loss(iris.train, m, cfg).value;
    best = std::min(best, loss);
    mean += loss / kRandom;
  }
  const double rel = (data_loss - best) / best;
  return {10, "data-derived initialization is competitive", rel <= kTol, false,
          fmt("data init %.5f, best of %d random %.5f (mean %.5f), excess %.1f%% (tol %.0f%%)",
              data_loss, kRandom, best, mean, 100 * rel, 100 * kTol)};
}

// ---- 11: MNIST ------------------------------------------------------------

CriterionResult mnist(const VerifyOptions& opts) {
  constexpr double kMinAccuracy = 0.97;
  const auto dir = opts.mnist_dir;
  const std::vector<std::filesystem::path> files{
      dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
      dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
  CriterionResult r{11, "MNIST 0 vs 1 test accuracy", false, true, ""};
  if (!opts.long_running) {
    r.detail = "long-running; run with --long";
    return r;
  }
  for (const auto& f : files)
    if (!std::filesystem::exists(f)) {
      r.detail = "missing " + f.string();
      return r;
    }
  r.skipped = false;
  const auto train_data = cli::load_mnist(files[0], files[1], {0, 1});
  const auto test_data = cli::load_mnist(files[2], files[3], {0, 1});
  std::vector<std::size_t> train_rows(train_data.size()), test_rows(test_data.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) train_rows[i] = i;
  for (std::size_t i = 0; i < test_rows.size(); ++i) test_rows[i] = i;
  const auto train_set = cli::make_samples(train_data, train_rows, nullptr, 2);
  const auto test_set = cli::make_samples(test_data, test_rows, nullptr, 2);
  HtnModel model = init_from_data(train_set, 10, 40, {2}, 42);
  SweepConfig sweep;
  sweep.n_sweeps = opts.iris_sweeps;
  sweep.adam_steps_per_site = opts.iris_adam_steps;
  const auto rep = train(model, train_set, test_set, LossConfig::full(), sweep, 2);
  const double acc = rep.sweeps.empty() ? rep.initial.test.accuracy : rep.sweeps.back().test.accuracy;
  r.passed = acc >= kMinAccuracy;
  r.detail = fmt("%zu train / %zu test samples, final test accuracy %.4f (min %.2f)", train_set.size(),
                 test_set.size(), acc, kMinAccuracy);
  return r;
}

// ---- 12: determinism ------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CriterionResult determinism(const VerifyOptions& opts) {
  cli::ExperimentConfig cfg;
  cfg.dataset.path = opts.data_dir / "iris.csv";
  cfg.chi = 4;
  cfg.sweep.n_sweeps = 2;
  cfg.sweep.adam_steps_per_site = 5;
  cfg.grid_t = {1.0, 0.1};
  const auto root = std::filesystem::temp_directory_path() /
                    ("htn_determinism_" + std::to_string(std::random_device{}()));
  const auto dir_a = root / "a", dir_b = root / "b";
  cli::run_experiment(cfg, dir_a, 2);
  cli::run_experiment(cfg, dir_b, 1);
  int compared = 0, differing = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir_a)) {
    const auto name = entry.path().filename();
    if (name == "timing.json") continue;
    ++compared;
    if (!std::filesystem::exists(dir_b / name) || slurp(entry.path()) != slurp(dir_b / name)) ++differing;
  }
  std::filesystem::remove_all(root);
  return {12, "repeated runs write identical metrics", compared > 0 && differing == 0, false,
          fmt("%d metrics files compared, %d differ", compared, differing)};
}

}  // namespace

CriterionResult run_criterion(int id, const VerifyOptions& opts) {
  using Runner = CriterionResult (*)(const VerifyOptions&);
  static constexpr Runner runners[kCriterionCount] = {
      forward_oracle, identity_no_worse, monotone_hyperparameters, weight_decomposition,
      mse_completion, data_processing,   compiler,                 gradients,
      iris_grid,      init_quality,      mnist,                    determinism};
  if (id < 1 || id > kCriterionCount) throw std::out_of_range("run_criterion: unknown criterion");
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = runners[id - 1](opts);
  } catch (const std::exception& e) {
    r = {id, "criterion " + std::to_string(id), false, false, std::string("exception: ") + e.what()};
  }
  r.id = id;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string format_result(const CriterionResult& r) {
  const char* status = r.skipped ? "SKIP" : r.passed ? "PASS" : "FAIL";
  return fmt("%s [%2d] %s: %s (%.1f s)", status, r.id, r.name.c_str(), r.detail.c_str(), r.seconds);
}

}  // namespace htn::verify
