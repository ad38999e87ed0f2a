#include "htn/verify.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

using namespace htn;
using namespace htn::qc;

namespace {

Vector random_state(Eigen::Index d, std::mt19937_64& rng) {
  Vector v = verify::random_complex(d, 1, rng).col(0);
  return v / v.norm();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Brute-force statevector of a circuit's full register.
Vector run_register(const CompiledCircuit& c, const Vector& input) {
  Vector psi = Vector::Zero(Eigen::Index{1} << c.n_qubits);
  const std::size_t anc = c.ancilla_count();
  for (Eigen::Index i = 0; i < input.size(); ++i) psi(i << anc) = input(i);
  return psi;
}

}  // namespace

TEST(Simulate, RotationAndPostSelection) {
  // Ancilla rotated by 2*acos(0.6): amplitude 0.6 stays on |0>.
  CompiledCircuit c;
  c.n_qubits = 2;
  c.system_qubits = 1;
  c.gates.emplace_back(RotationGate{2.0 * std::acos(0.6), {}, 1});
  c.gates.emplace_back(PostSelect{1});
  const auto r = simulate(c, StateVector::basis(1, 1));
  EXPECT_NEAR(r.retention, 0.36, 1e-14);
  EXPECT_NEAR(std::abs(r.output.amplitudes(1)), 1.0, 1e-14);
}

TEST(Simulate, ControlledRotationActsOnMatchingPatternOnly) {
  CompiledCircuit c;
  c.n_qubits = 2;
  c.system_qubits = 1;
  c.gates.emplace_back(RotationGate{std::numbers::pi, {{0, 1}}, 1});
  c.gates.emplace_back(PostSelect{1});
  EXPECT_NEAR(simulate(c, StateVector::basis(1, 0)).retention, 1.0, 1e-14);
  EXPECT_THROW(simulate(c, StateVector::basis(1, 1)), PostSelectedAwayError);
}

TEST(Simulate, RejectsWrongInputSize) {
  const auto c = compile_matrix(Matrix::Identity(2, 2));
  EXPECT_THROW(simulate(c, StateVector::basis(2, 0)), std::invalid_argument);
}

TEST(CompileMatrix, EqualsRescaledMatrix) {
  std::mt19937_64 rng(40);
  for (Eigen::Index d : {2, 4, 8}) {
    for (int i = 0; i < 5; ++i) {
      const Matrix m = verify::random_complex(d, d, rng);
      const Vector psi = random_state(d, rng);
      const Vector target = m * psi;
      const double r = Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
      for (bool deferred : {false, true}) {
        const auto c = compile_matrix(m, deferred);
        EXPECT_EQ(c.ancilla_count(), deferred ? static_cast<std::size_t>(d) : 1u);
        EXPECT_NEAR(c.rescale, r, 1e-12 * r);
        const auto res = simulate(c, StateVector(c.system_qubits, psi));
        EXPECT_LT((res.output.amplitudes - target / target.norm()).norm(), 1e-10);
        EXPECT_NEAR(res.retention, target.squaredNorm() / (r * r), 1e-10);
        EXPECT_LE(res.retention, 1.0 + 1e-12);
      }
    }
  }
}

TEST(CompileMatrix, UnitaryKeepsEveryShot) {
  std::mt19937_64 rng(41);
  const Matrix u = polar_isometry(verify::random_complex(4, 4, rng));
  const auto c = compile_matrix(u);
  for (int i = 0; i < 5; ++i)
    EXPECT_NEAR(simulate(c, StateVector(2, random_state(4, rng))).retention, 1.0, 1e-12);
}

TEST(CompileMatrix, RankDeficientInputCanVanish) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  const auto c = compile_matrix(m);
  EXPECT_THROW(simulate(c, StateVector::basis(1, 1)), PostSelectedAwayError);
  EXPECT_NEAR(simulate(c, StateVector::basis(1, 0)).retention, 1.0, 1e-14);
}

TEST(CompileMatrix, InvalidInputs) {
  EXPECT_THROW(compile_matrix(Matrix::Zero(2, 2)), DegenerateMatrixError);
  EXPECT_THROW(compile_matrix(Matrix::Identity(3, 3)), std::invalid_argument);
  EXPECT_THROW(compile_matrix(Matrix::Identity(2, 4)), std::invalid_argument);
  EXPECT_THROW(compile_matrix(Matrix::Identity(16, 16), true), std::invalid_argument);  // 20 qubits
}

TEST(CompiledCircuit, ValidateCatchesStructuralErrors) {
  auto c = compile_matrix(Matrix::Identity(2, 2));
  EXPECT_NO_THROW(c.validate());
  auto no_post = c;
  std::erase_if(no_post.gates, [](const Gate& g) { return std::holds_alternative<PostSelect>(g); });
  EXPECT_THROW(no_post.validate(), std::invalid_argument);
  auto bad_unitary = c;
  bad_unitary.gates.emplace_back(UnitaryGate{{0}, 2.0 * Matrix::Identity(2, 2)});
  EXPECT_THROW(bad_unitary.validate(), std::invalid_argument);
  auto post_system = c;
  post_system.gates.emplace_back(PostSelect{0});
  EXPECT_THROW(post_system.validate(), std::invalid_argument);
}

TEST(CircuitText, RoundTrip) {
  std::mt19937_64 rng(42);
  for (bool deferred : {false, true}) {
    const auto c = compile_matrix(verify::random_complex(4, 4, rng), deferred);
    const auto text = circuit_to_string(c);
    const auto back = circuit_from_string(text);
    EXPECT_EQ(circuit_to_string(back), text);
    const Vector psi = random_state(4, rng);
    EXPECT_LT((simulate(back, StateVector(2, psi)).output.amplitudes -
               simulate(c, StateVector(2, psi)).output.amplitudes).norm(), 1e-15);
  }
}

TEST(CircuitText, ParseErrorsCarryLineNumbers) {
  try {
    circuit_from_string("QUBITS 2\nSYSTEM 1\nFROB 3\n");
    FAIL() << "expected a format error";
  } catch (const CircuitFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(circuit_from_string("QUBITS 2\nSYSTEM 1\nCRY 0.5 0=x 1\n"), CircuitFormatError);
  EXPECT_THROW(circuit_from_string("SYSTEM 1\nPOST 1\n"), CircuitFormatError);
}

TEST(CircuitText, CommentsAndBlankLinesAreIgnored) {
  const auto c = circuit_from_string("# demo\nQUBITS 2\n\nSYSTEM 1\nCRY 0 - 1\nPOST 1\n");
  EXPECT_EQ(c.gates.size(), 2u);
}

TEST(Golden, ToffoliDemoCircuit) {
  EXPECT_EQ(circuit_to_string(toffoli_separation_demo().circuit),
            read_text(HTN_GOLDEN_DIR "/toffoli_demo.circuit"));
}

TEST(Golden, DiagonalMatrixCircuit) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 0.5;
  EXPECT_EQ(circuit_to_string(compile_matrix(m)), read_text(HTN_GOLDEN_DIR "/diag_1_half.circuit"));
}

TEST(Golden, FilesParseAndSimulate) {
  const auto c = circuit_from_string(read_text(HTN_GOLDEN_DIR "/diag_1_half.circuit"));
  const double h = 1.0 / std::sqrt(2.0);
  Vector psi(2);
  psi << h, h;
  const auto r = simulate(c, StateVector(1, psi));
  EXPECT_NEAR(r.retention, 0.5 * (1.0 + 0.25), 1e-15);
  EXPECT_NEAR(std::abs(r.output.amplitudes(0)), 1.0 / std::sqrt(1.25), 1e-15);
}

TEST(ToffoliDemo, SeparatesTheTwoInputs) {
  const auto r = toffoli_separation_demo();
  EXPECT_GE(r.fidelity_a, 1.0 - 1e-12);
  EXPECT_GE(r.fidelity_b, 1.0 - 1e-12);
  EXPECT_NEAR(r.retention_a, 0.5, 1e-12);
  EXPECT_NEAR(r.retention_b, 0.5, 1e-12);
  EXPECT_NEAR(r.input_overlap, 0.25, 1e-12);
  EXPECT_NEAR(r.output_overlap, 0.0, 1e-12);
  EXPECT_EQ(predict_density(DensityMatrix::pure(r.output_a.amplitudes), 4), 0u);
  EXPECT_EQ(predict_density(DensityMatrix::pure(r.output_b.amplitudes), 4), 3u);
}

TEST(ToffoliDemo, BruteForceRegisterCheck) {
  // Independent statevector: Toffoli onto the ancilla, keep ancilla 0, flip q1.
  const auto r = toffoli_separation_demo();
  const double h = 1.0 / std::sqrt(2.0);
  Vector a = Vector::Zero(4);
  a(1) = a(3) = h;  // |+1>
  Vector full = run_register(r.circuit, a);
  std::swap(full(6), full(7));
  Vector kept(4);
  for (Eigen::Index i = 0; i < 4; ++i) kept(i) = full(2 * i);
  EXPECT_NEAR(kept.squaredNorm(), r.retention_a, 1e-15);
  kept /= kept.norm();
  Vector flipped(4);
  for (Eigen::Index i = 0; i < 4; ++i) flipped(i ^ 1) = kept(i);
  EXPECT_LT((flipped - r.output_a.amplitudes).norm(), 1e-15);
}
