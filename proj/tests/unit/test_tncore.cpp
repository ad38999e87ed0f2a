#include "htn/verify.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace htn;
using verify::random_complex;

namespace {

Matrix to_matrix(const ComplexTensor& t) {
  const std::array<std::size_t, 1> r{0}, c{1};
  return t.matricize(r, c);
}

}  // namespace

TEST(ComplexTensor, RejectsMismatchedData) {
  EXPECT_THROW(ComplexTensor({2, 3}, std::vector<Complex>(5)), std::invalid_argument);
  EXPECT_THROW(ComplexTensor(std::vector<std::size_t>{2, 0}), std::invalid_argument);
}

TEST(ComplexTensor, RowMajorLayout) {
  ComplexTensor t({2, 3});
  t.at({1, 2}) = 7.0;
  EXPECT_EQ(t[5], Complex(7.0));
  const std::array<std::size_t, 2> order{1, 0};
  EXPECT_EQ(t.permute(order).at({2, 1}), Complex(7.0));
}

TEST(Contract, IdentityOnVector) {
  const ComplexTensor id = ComplexTensor::from_matrix(Matrix::Identity(2, 2));
  Vector v(2);
  v << Complex(0.3, -1.0), Complex(2.0, 0.5);
  const auto out = contract(id, ComplexTensor::from_vector(v), {{1, 0}});
  ASSERT_EQ(out.dims(), std::vector<std::size_t>{2});
  EXPECT_EQ(out[0], v(0));
  EXPECT_EQ(out[1], v(1));
}

TEST(Contract, MatchesTripleLoopProduct) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const Matrix a = random_complex(2, 3, rng), b = random_complex(3, 2, rng);
    const auto out = contract(ComplexTensor::from_matrix(a), ComplexTensor::from_matrix(b), {{1, 0}});
    EXPECT_LT((to_matrix(out) - verify::matmul_triple_loop(a, b)).norm(), 1e-12);
  }
}

TEST(Contract, UnitVectorWithConjugateGivesOne) {
  std::mt19937_64 rng(2);
  Vector u = random_complex(5, 1, rng).col(0);
  u.normalize();
  const auto t = ComplexTensor::from_vector(u);
  const auto s = contract(t, t.conj(), {{0, 0}});
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_NEAR(std::abs(s[0] - 1.0), 0.0, 1e-14);
}

TEST(Contract, MismatchedAxesThrow) {
  const ComplexTensor a({2, 3}), b({2, 3});
  EXPECT_THROW(contract(a, b, {{1, 0}}), ContractionError);
}

TEST(Contract, IsBilinear) {
  std::mt19937_64 rng(3);
  const auto a = ComplexTensor::from_matrix(random_complex(3, 4, rng));
  const auto b = ComplexTensor::from_matrix(random_complex(4, 2, rng));
  const Complex alpha(0.7, -1.3);
  const auto lhs = contract(alpha * a, b, {{1, 0}});
  const auto rhs = alpha * contract(a, b, {{1, 0}});
  EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(Contract, HigherRankAxisOrder) {
  std::mt19937_64 rng(4);
  ComplexTensor a({2, 3, 4}), b({4, 5, 3});
  for (auto& z : a.data()) z = Complex(std::normal_distribution<double>()(rng), 0.0);
  for (auto& z : b.data()) z = Complex(0.0, std::normal_distribution<double>()(rng));
  const auto out = contract(a, b, {{1, 2}, {2, 0}});
  ASSERT_EQ(out.dims(), (std::vector<std::size_t>{2, 5}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t l = 0; l < 5; ++l) {
      Complex ref = 0.0;
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 4; ++k) ref += a.at({i, j, k}) * b.at({k, l, j});
      EXPECT_NEAR(std::abs(out.at({i, l}) - ref), 0.0, 1e-12);
    }
}

TEST(SvdSplit, IdentityHasUnitValues) {
  const auto t = ComplexTensor::from_matrix(Matrix::Identity(2, 2));
  const std::array<std::size_t, 1> l{0}, r{1};
  const auto s = svd_split(t, l, r, 2);
  ASSERT_EQ(s.singular_values.size(), 2u);
  EXPECT_NEAR(s.singular_values[0], 1.0, 1e-14);
  EXPECT_NEAR(s.singular_values[1], 1.0, 1e-14);
}

TEST(SvdSplit, TruncationErrorIsDiscardedWeight) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 1.0;
  const std::array<std::size_t, 1> l{0}, r{1};
  const auto s = svd_split(ComplexTensor::from_matrix(m), l, r, 1);
  ASSERT_EQ(s.singular_values.size(), 1u);
  EXPECT_NEAR(s.singular_values[0], 3.0, 1e-14);
  EXPECT_NEAR(s.truncation_error, 1.0, 1e-14);
}

TEST(SvdSplit, FullRankRoundTrip) {
  std::mt19937_64 rng(5);
  ComplexTensor t({2, 2, 2, 2});
  for (auto& z : t.data()) z = random_complex(1, 1, rng)(0, 0);
  const std::array<std::size_t, 2> l{0, 2}, r{1, 3};
  const auto s = svd_split(t, l, r, 4);
  ComplexTensor scaled = s.left;
  const std::size_t k = s.singular_values.size();
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= s.singular_values[i % k];
  const auto back = contract(scaled, s.right, {{2, 0}});  // axes (0, 2, 1, 3)
  const std::array<std::size_t, 4> order{0, 2, 1, 3};
  EXPECT_LT((back - t.permute(order)).norm(), 1e-10);
  const Matrix u = s.left.reshape({4, k}).matricize(std::array<std::size_t, 1>{0}, std::array<std::size_t, 1>{1});
  EXPECT_LT(isometry_defect(u), 1e-12);
}

TEST(SvdSplit, ZeroRankThrows) {
  const auto t = ComplexTensor::from_matrix(Matrix::Identity(2, 2));
  const std::array<std::size_t, 1> l{0}, r{1};
  EXPECT_THROW(svd_split(t, l, r, 0), std::invalid_argument);
}

TEST(Isometrize, UnitaryIsUnchanged) {
  std::mt19937_64 rng(6);
  const Matrix u = polar_isometry(random_complex(4, 4, rng));
  const std::array<std::size_t, 1> in{1};
  const auto w = isometrize(ComplexTensor::from_matrix(u), in);
  EXPECT_LT((to_matrix(w) - u).norm(), 1e-12);
}

TEST(Isometrize, ScaledIdentity) {
  const std::array<std::size_t, 1> in{1};
  const auto w = isometrize(ComplexTensor::from_matrix(2.0 * Matrix::Identity(2, 2)), in);
  EXPECT_LT((to_matrix(w) - Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(Isometrize, MatchesSvdPolarOracle) {
  std::mt19937_64 rng(7);
  const Matrix a = random_complex(4, 2, rng);
  const std::array<std::size_t, 1> in{1};
  const Matrix w = to_matrix(isometrize(ComplexTensor::from_matrix(a), in));
  EXPECT_LT(isometry_defect(w), 1e-12);
  const Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  EXPECT_LT((w - svd.matrixU() * svd.matrixV().adjoint()).norm(), 1e-12);
}

TEST(Isometrize, IsIdempotent) {
  std::mt19937_64 rng(8);
  ComplexTensor t({2, 2, 5});
  for (auto& z : t.data()) z = random_complex(1, 1, rng)(0, 0);
  const std::array<std::size_t, 2> in{0, 1};
  const auto once = isometrize(t, in);
  EXPECT_LT((isometrize(once, in) - once).norm(), 1e-12);
}

TEST(Isometrize, WrongDirectionThrows) {
  const std::array<std::size_t, 1> in{0};
  EXPECT_THROW(isometrize(ComplexTensor({4, 2}), in), DirectionError);
}

TEST(Isometrize, ZeroInputThrows) {
  const std::array<std::size_t, 1> in{1};
  EXPECT_THROW(isometrize(ComplexTensor({4, 2}), in), DegenerateInputError);
}

TEST(PolarIsometry, RankDeficientIsCompletedDeterministically) {
  Matrix a = Matrix::Zero(3, 2);
  a(0, 0) = 1.0;
  const Matrix w1 = polar_isometry(a), w2 = polar_isometry(a);
  EXPECT_LT(isometry_defect(w1), 1e-12);
  EXPECT_EQ(w1, w2);
}

TEST(PartialTrace, ProductState) {
  std::mt19937_64 rng(9);
  const Matrix rho_a = verify::random_density(2, rng);
  const DensityMatrix joint(kron(rho_a, DensityMatrix::basis(2, 0).matrix()));
  const std::array<std::size_t, 2> dims{2, 2};
  const std::array<std::size_t, 1> traced{1};
  EXPECT_LT((partial_trace(joint, dims, traced).matrix() - rho_a).norm(), 1e-14);
}

TEST(PartialTrace, BellStateGivesMaximallyMixed) {
  Vector bell = Vector::Zero(4);
  bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
  const auto rho = DensityMatrix::pure(bell);
  const std::array<std::size_t, 2> dims{2, 2};
  for (std::size_t q = 0; q < 2; ++q) {
    const std::array<std::size_t, 1> traced{q};
    EXPECT_LT((partial_trace(rho, dims, traced).matrix() - 0.5 * Matrix::Identity(2, 2)).norm(), 1e-14);
  }
}

TEST(PartialTrace, MatchesIndexSumOracleAndPreservesTrace) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 20; ++i) {
    const DensityMatrix rho(verify::random_density(8, rng));
    const std::array<std::size_t, 3> dims{2, 2, 2};
    const std::vector<std::size_t> traced{static_cast<std::size_t>(i % 3)};
    const auto out = partial_trace(rho, dims, traced);
    EXPECT_LT((out.matrix() - verify::explicit_partial_trace(rho.matrix(), {2, 2, 2}, traced)).norm(), 1e-13);
    EXPECT_NEAR(out.trace(), rho.trace(), 1e-12);
    EXPECT_LT((out.matrix() - out.matrix().adjoint()).norm(), 1e-14);
  }
}

TEST(PartialTrace, DimsMismatchThrows) {
  const auto rho = DensityMatrix::maximally_mixed(4);
  const std::array<std::size_t, 2> dims{2, 3};
  const std::array<std::size_t, 1> traced{0};
  EXPECT_THROW(partial_trace(rho, dims, traced), std::invalid_argument);
}

TEST(DensityMatrix, ValidatesInvariants) {
  EXPECT_NO_THROW(DensityMatrix::maximally_mixed(3).validate());
  Matrix bad = Matrix::Identity(2, 2);
  EXPECT_THROW(DensityMatrix(bad).validate(), std::domain_error);  // trace 2
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.0;
  neg(1, 1) = -0.1;
  EXPECT_THROW(DensityMatrix(neg).validate(), std::domain_error);
}
