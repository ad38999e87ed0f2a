#include "htn/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace htn;

namespace {

DensityMatrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return DensityMatrix(m);
}

// One site with U = I from the physical qubit into the reduction leg.
HtnModel single_site_identity(std::vector<double> theta) {
  ComplexTensor w({1, 2, 1, 2, 1});
  w.at({0, 0, 0, 0, 0}) = 1.0;
  w.at({0, 1, 0, 1, 0}) = 1.0;
  return HtnModel({w}, {std::move(theta)}, 1, 2, {1});
}

}  // namespace

// ---- encoding -------------------------------------------------------------

TEST(Encoding, EndpointsAndMidpoint) {
  const std::vector<double> x{0.0, 1.0, 0.5};
  const auto s = encode_rotational(x);
  ASSERT_EQ(s.n_sites(), 3u);
  EXPECT_EQ(s.site_vectors[0][0], Complex(1.0));
  EXPECT_EQ(s.site_vectors[0][1], Complex(0.0));
  EXPECT_NEAR(std::abs(s.site_vectors[1][0]), 0.0, 1e-15);
  EXPECT_NEAR(s.site_vectors[1][1].real(), 1.0, 1e-15);
  EXPECT_NEAR(s.site_vectors[2][0].real(), 0.70711, 1e-5);
  EXPECT_NEAR(s.site_vectors[2][1].real(), 0.70711, 1e-5);
}

TEST(Encoding, OutOfRangeThrows) {
  const std::vector<double> x{0.2, 1.5};
  EXPECT_THROW(encode_rotational(x), EncodingRangeError);
  const std::vector<double> y{-0.01};
  EXPECT_THROW(encode_rotational(y), EncodingRangeError);
}

TEST(Encoding, AncillasAreRecorded) {
  const std::vector<double> x{0.3};
  EXPECT_EQ(encode_rotational(x, 2).ancilla_count, 2u);
}

// ---- shapes and model invariants -----------------------------------------

TEST(ChainShapes, BondScheduleAndOutputs) {
  const std::vector<std::size_t> outs{2, 2};
  const auto s = chain_shapes(4, 8, 2, outs);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].bond_in, 1u);
  EXPECT_EQ(s[3].bond_out, 1u);
  EXPECT_EQ(s[0].output, 1u);
  EXPECT_EQ(s[2].output, 2u);
  EXPECT_EQ(s[3].output, 2u);
  for (std::size_t k = 0; k + 1 < s.size(); ++k) EXPECT_EQ(s[k].bond_out, s[k + 1].bond_in);
  for (const auto& sh : s) EXPECT_GE(sh.out_dim(), sh.in_dim());
  for (const auto& sh : s) EXPECT_LE(sh.bond_out, 8u);
}

TEST(HtnModel, RandomSatisfiesInvariants) {
  const auto m = HtnModel::random(5, 4, 3, {2, 2}, 11);
  EXPECT_NO_THROW(m.check_invariants());
  EXPECT_EQ(m.output_dim(), 4u);
  for (std::size_t k = 0; k < m.n_sites(); ++k)
    for (double d : m.reduction(k)) EXPECT_NEAR(d, 1.0, 1e-15);
}

TEST(HtnModel, RejectsNonIsometricSite) {
  auto m = HtnModel::random(2, 2, 2, {2}, 1);
  ComplexTensor bad = m.site(0);
  bad *= Complex(2.0);
  EXPECT_THROW(HtnModel({bad, m.site(1)}, {m.theta(0), m.theta(1)}, 2, 2, {2}), std::domain_error);
}

TEST(Reduction, DiagonalStaysInUnitIntervalAndNonZero) {
  const std::vector<double> theta{0.0, 0.0, 0.0};
  const auto d = reduction_diagonal(theta);
  EXPECT_NEAR(*std::max_element(d.begin(), d.end()), kReductionFloor, 1e-18);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> t(4);
    for (auto& x : t) x = normal(rng);
    for (double v : reduction_diagonal(t)) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

// ---- forward --------------------------------------------------------------

TEST(Forward, IdentityReductionsPreserveTrace) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    const HtnModel m = verify::random_model(rng, 5, 4, 3).with_identity_reductions();
    const auto s = verify::random_sample(m, rng);
    EXPECT_NEAR(forward(m, s.state).trace(), 1.0, 1e-10);
  }
}

TEST(Forward, SingleSitePostSelection) {
  const auto m = single_site_identity({std::numbers::pi / 2, 0.0});  // D = diag(1, 0)
  const std::vector<double> x{0.3};
  const auto s = encode_rotational(x);
  const auto rho = forward(m, s);
  ASSERT_EQ(rho.dim(), 1u);
  EXPECT_NEAR(rho.trace(), std::norm(s.site_vectors[0][0]), 1e-14);
}

TEST(Forward, MatchesDenseOracle) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 30; ++i) {
    const HtnModel m = verify::random_model(rng, 4, 4, 4);
    const auto s = verify::random_sample(m, rng);
    const Matrix dense = verify::dense_forward(m, s.state);
    EXPECT_LT((forward(m, s.state).matrix() - dense).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Forward, OutputIsValidDensity) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 20; ++i) {
    const HtnModel m = verify::random_model(rng, 5, 4, 4);
    const auto s = verify::random_sample(m, rng);
    EXPECT_NO_THROW(forward(m, s.state).validate(1e-10));
  }
}

TEST(Forward, SiteCountMismatchThrows) {
  const auto m = HtnModel::random(3, 2, 2, {2}, 1);
  const std::vector<double> x{0.1, 0.2};
  EXPECT_THROW(forward(m, encode_rotational(x)), ShapeError);
}

// ---- normalization, depolarization, completion ----------------------------

TEST(Normalize, TraceOneIsUnchanged) {
  const auto rho = diag2(0.7, 0.3);
  for (const auto& cfg : {LossConfig::full(), LossConfig::threshold(0.4), LossConfig::weight(0.3),
                          LossConfig::none()})
    EXPECT_LT((normalize(rho, cfg).matrix() - rho.matrix()).norm(), 1e-15);
}

TEST(Normalize, ThresholdAndWeightRules) {
  const auto rho = diag2(0.25, 0.0);
  EXPECT_NEAR(normalize(rho, LossConfig::threshold(0.5)).trace(), 0.5, 1e-15);
  EXPECT_NEAR(normalize(rho, LossConfig::weight(0.5)).trace(), 0.5, 1e-15);
  EXPECT_NEAR(normalize(rho, LossConfig::full()).trace(), 1.0, 1e-15);
  EXPECT_NEAR(normalize(rho, LossConfig::none()).trace(), 0.25, 1e-15);
}

TEST(Normalize, VanishedStateThrowsForFullAndWeight) {
  const auto rho = diag2(1e-17, 0.0);
  EXPECT_THROW(normalize(rho, LossConfig::full()), VanishedStateError);
  EXPECT_THROW(normalize(rho, LossConfig::weight(0.5)), VanishedStateError);
  EXPECT_NO_THROW(normalize(rho, LossConfig::threshold(0.1)));
}

TEST(Normalize, EdgeVariantsCoincide) {
  const auto rho = diag2(0.2, 0.1);
  EXPECT_LT((normalize(rho, LossConfig::threshold(0.0)).matrix() - normalize(rho, LossConfig::full()).matrix()).norm(), 1e-15);
  EXPECT_LT((normalize(rho, LossConfig::weight(1.0)).matrix() - rho.matrix()).norm(), 1e-15);
}

TEST(Depolarize, Examples) {
  const auto rho = DensityMatrix::basis(2, 0);
  EXPECT_LT((depolarize(rho, 0.0).matrix() - rho.matrix()).norm(), 1e-15);
  EXPECT_LT((depolarize(rho, 0.1).matrix() - diag2(0.95, 0.05).matrix()).norm(), 1e-15);
}

TEST(Depolarize, PreservesOrder) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 50; ++i) {
    const Matrix b = verify::random_density(3, rng);
    const Matrix a = b + 0.5 * verify::random_density(3, rng);  // A >= B
    const Matrix diff = depolarize(DensityMatrix(0.5 * a), 0.3).matrix() - depolarize(DensityMatrix(0.5 * b), 0.3).matrix();
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(diff).eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(RandomizedCompletion, Examples) {
  EXPECT_LT((randomized_completion(diag2(0.5, 0.0)).matrix() - diag2(0.75, 0.25).matrix()).norm(), 1e-15);
  const auto full = diag2(0.6, 0.4);
  EXPECT_LT((randomized_completion(full).matrix() - full.matrix()).norm(), 1e-15);
  std::mt19937_64 rng(16);
  for (int i = 0; i < 20; ++i) {
    const DensityMatrix r(0.3 * verify::random_density(4, rng));
    EXPECT_NEAR(randomized_completion(r).trace(), 1.0, 1e-12);
  }
}

// ---- loss terms ------------------------------------------------------------

TEST(CrossEntropy, ClosedForms) {
  EXPECT_NEAR(cross_entropy_term(DensityMatrix::maximally_mixed(4), 2), std::log(4.0), 1e-14);
  EXPECT_NEAR(cross_entropy_term(depolarize(DensityMatrix::basis(2, 1), 1e-12), 1), 0.0, 1e-11);
}

TEST(CrossEntropy, NonPositiveEigenvalueThrows) {
  EXPECT_THROW(cross_entropy_term(diag2(1.0, 0.0), 0), NumericalDomainError);
}

TEST(CrossEntropy, SingleSiteMatchesDensePipeline) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10; ++i) {
    const HtnModel m = verify::random_model(rng, 1, 2, 2);
    std::vector<Sample> batch{verify::random_sample(m, rng), verify::random_sample(m, rng)};
    const auto cfg = LossConfig::threshold(0.3, 0.05);
    double ref = 0.0;
    for (const auto& s : batch) {
      const Matrix rho = verify::dense_forward(m, s.state);
      const double tr = rho.trace().real();
      const auto d = rho.rows();
      const Matrix x = 0.95 * rho / std::max(tr, 0.3) + 0.05 / static_cast<double>(d) * Matrix::Identity(d, d);
      const Eigen::SelfAdjointEigenSolver<Matrix> es(x);
      const Matrix log_x = es.eigenvectors() * es.eigenvalues().array().log().matrix().cast<Complex>().asDiagonal() *
                           es.eigenvectors().adjoint();
      const auto l = static_cast<Eigen::Index>(s.label.class_index);
      ref -= log_x(l, l).real() / 2.0;
    }
    EXPECT_NEAR(cross_entropy_loss(batch, m, cfg), ref, 1e-10);
  }
}

TEST(Mse, Examples) {
  EXPECT_NEAR(mse_term(DensityMatrix::basis(2, 0), 0), 0.0, 1e-15);
  EXPECT_NEAR(mse_term(DensityMatrix::maximally_mixed(2), 0), 0.25, 1e-15);
}

TEST(Mse, DuplicatedBatchMatchesSingleton) {
  const auto m = HtnModel::random(3, 2, 2, {2}, 5);
  const std::vector<double> x{0.1, 0.5, 0.9};
  const Sample s{encode_rotational(x), LabelState(1, 2)};
  const std::vector<Sample> one{s}, two{s, s};
  const auto cfg = LossConfig::full().with_kind(LossKind::MSE);
  EXPECT_NEAR(mse_loss(one, m, cfg), mse_loss(two, m, cfg), 1e-15);
}

TEST(Mse, CompletionNeverHurts) {
  std::mt19937_64 rng(18);
  for (int i = 0; i < 100; ++i) {
    const DensityMatrix r(0.6 * verify::random_density(4, rng));
    const std::size_t l = rng() % 4;
    EXPECT_LE(mse_term(randomized_completion(r), l), mse_term(r, l) + 1e-12);
  }
}

TEST(RelativeEntropy, ClosedForms) {
  std::mt19937_64 rng(19);
  const DensityMatrix rho(verify::random_density(3, rng));
  EXPECT_NEAR(relative_entropy(rho, rho), 0.0, 1e-12);
  EXPECT_NEAR(relative_entropy(DensityMatrix::basis(2, 0), DensityMatrix::maximally_mixed(2)), std::log(2.0), 1e-14);
  EXPECT_TRUE(std::isinf(relative_entropy(DensityMatrix::maximally_mixed(2), DensityMatrix::basis(2, 0))));
}

TEST(RelativeEntropy, DataProcessing) {
  std::mt19937_64 rng(20);
  for (int i = 0; i < 30; ++i) {
    const auto ch = verify::random_channel(4, 2, 4, rng);
    const DensityMatrix a(verify::random_density(4, rng)), b(verify::random_density(4, rng));
    EXPECT_LE(relative_entropy(DensityMatrix(ch.apply(a.matrix())), DensityMatrix(ch.apply(b.matrix()))),
              relative_entropy(a, b) + 1e-10);
  }
}

// ---- properties over random models ----------------------------------------

TEST(Properties, IdentityReductionIsNoWorseUnnormalized) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    const HtnModel m = verify::random_model(rng, 4, 3, 3);
    const auto s = verify::random_sample(m, rng);
    const auto cfg = LossConfig::none(0.05);
    const double d = loss_term(forward(m, s.state).matrix(), s.label.class_index, cfg, false).value;
    const double id =
        loss_term(forward(m.with_identity_reductions(), s.state).matrix(), s.label.class_index, cfg, false).value;
    EXPECT_LE(id, d + 1e-12);
  }
}

TEST(Properties, LossMonotoneInThreshold) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 30; ++i) {
    const HtnModel m = verify::random_model(rng, 4, 3, 3);
    const auto s = verify::random_sample(m, rng);
    const Matrix rho = forward(m, s.state).matrix();
    double prev = -1.0;
    for (double t : {0.0, 0.01, 0.1, 0.5, 1.0}) {
      const double v = loss_term(rho, s.label.class_index, LossConfig::threshold(t, 0.01), false).value;
      EXPECT_GE(v, prev - 1e-12);
      prev = v;
    }
  }
}

// ---- gradients and prediction ----------------------------------------------

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const HtnModel m = verify::random_model(rng, 2, 2, 2, 2);
  std::vector<Sample> batch{verify::random_sample(m, rng), verify::random_sample(m, rng)};
  for (auto kind : {LossKind::CrossEntropy, LossKind::MSE}) {
    const auto cfg = LossConfig::weight(0.4, 0.05).with_kind(kind);
    const auto a = loss_and_gradient(batch, m, cfg);
    const auto n = verify::finite_difference_gradient(batch, m, cfg, 1e-5);
    EXPECT_NEAR(a.loss.value, n.loss.value, 1e-14);
    for (std::size_t k = 0; k < m.n_sites(); ++k) {
      EXPECT_LT((a.sites[k] - n.sites[k]).norm(), 1e-6 * std::max(1.0, n.sites[k].norm()));
      for (std::size_t r = 0; r < m.xi(); ++r) EXPECT_NEAR(a.thetas[k][r], n.thetas[k][r], 1e-6);
    }
  }
}

TEST(Predict, ArgmaxWithLowIndexTieBreak) {
  EXPECT_EQ(predict_density(DensityMatrix::basis(4, 1), 4), 1u);
  EXPECT_EQ(predict_density(DensityMatrix::maximally_mixed(4), 4), 0u);
  EXPECT_EQ(predict_density(DensityMatrix(Matrix::Zero(2, 2)), 2), std::nullopt);
}

TEST(LossConfig, RejectsOutOfRangeHyperparameters) {
  EXPECT_THROW(LossConfig::threshold(1.5).validate(), std::invalid_argument);
  EXPECT_THROW(LossConfig::weight(-0.1).validate(), std::invalid_argument);
  EXPECT_THROW(LossConfig::full(1.0).validate(), std::invalid_argument);
}
