#include "htn/qcompile.hpp"

#include <algorithm>
#include <cmath>

namespace htn::qc {

namespace {

std::size_t log2_exact(Eigen::Index d) {
  std::size_t q = 0;
  while ((Eigen::Index{1} << q) < d) ++q;
  if ((Eigen::Index{1} << q) != d) throw std::invalid_argument("compile_matrix: dimension must be a power of two");
  return q;
}

std::vector<std::pair<std::size_t, int>> pattern(std::size_t qubits, std::size_t index) {
  std::vector<std::pair<std::size_t, int>> controls;
  for (std::size_t q = 0; q < qubits; ++q)
    controls.emplace_back(q, static_cast<int>((index >> (qubits - 1 - q)) & 1U));
  return controls;
}

std::vector<std::size_t> range(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

}  // namespace

CompiledCircuit compile_matrix(const Matrix& m, bool deferred) {
  if (m.rows() != m.cols() || m.rows() < 2) throw std::invalid_argument("compile_matrix: need a square matrix of size >= 2");
  const std::size_t sys = log2_exact(m.rows());
  const auto d = static_cast<std::size_t>(m.rows());
  if (m.cwiseAbs().maxCoeff() == 0.0) throw DegenerateMatrixError("compile_matrix: zero matrix");

  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RealVector& s = svd.singularValues();
  const double r = s(0);
  if (!(r > 0.0)) throw DegenerateMatrixError("compile_matrix: zero matrix");

  CompiledCircuit c;
  c.system_qubits = sys;
  c.n_qubits = sys + (deferred ? d : 1);
  if (c.n_qubits > kMaxQubits) throw std::invalid_argument("compile_matrix: circuit exceeds the qubit cap");
  c.rescale = r;
  const auto system = range(sys);
  c.gates.emplace_back(UnitaryGate{system, svd.matrixV().adjoint()});
  for (std::size_t k = 0; k < d; ++k) {
    const double ratio = std::clamp(s(static_cast<Eigen::Index>(k)) / r, 0.0, 1.0);
    const std::size_t target = deferred ? sys + k : sys;
    c.gates.emplace_back(RotationGate{2.0 * std::acos(ratio), pattern(sys, k), target});
  }
  for (std::size_t q = sys; q < c.n_qubits; ++q) c.gates.emplace_back(PostSelect{q});
  c.gates.emplace_back(UnitaryGate{system, svd.matrixU()});
  c.validate();
  return c;
}

ToffoliReport toffoli_separation_demo() {
  ToffoliReport rep;
  CompiledCircuit& c = rep.circuit;
  c.n_qubits = 3;
  c.system_qubits = 2;
  c.rescale = 1.0;
  Matrix toffoli = Matrix::Identity(8, 8);
  toffoli(6, 6) = toffoli(7, 7) = 0.0;
  toffoli(6, 7) = toffoli(7, 6) = 1.0;
  c.gates.emplace_back(UnitaryGate{{0, 1, 2}, toffoli});
  c.gates.emplace_back(PostSelect{2});
  Matrix x(2, 2);
  x << 0.0, 1.0, 1.0, 0.0;
  c.gates.emplace_back(UnitaryGate{{1}, x});
  c.validate();

  const double h = 1.0 / std::sqrt(2.0);
  Vector plus(2), one(2);
  plus << h, h;
  one << 0.0, 1.0;
  const StateVector a(2, htn::kron(Matrix(plus), Matrix(one)).col(0));
  const StateVector b(2, htn::kron(Matrix(one), Matrix(plus)).col(0));
  rep.input_overlap = std::norm(a.amplitudes.dot(b.amplitudes));

  const auto ra = simulate(c, a);
  const auto rb = simulate(c, b);
  rep.output_a = ra.output;
  rep.output_b = rb.output;
  rep.retention_a = ra.retention;
  rep.retention_b = rb.retention;
  rep.fidelity_a = std::norm(ra.output.amplitudes(0));
  rep.fidelity_b = std::norm(rb.output.amplitudes(3));
  rep.output_overlap = std::norm(ra.output.amplitudes.dot(rb.output.amplitudes));
  return rep;
}

}  // namespace htn::qc
