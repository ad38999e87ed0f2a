// qcompile.hpp: post-selected circuits for non-unitary matrices and an exact
// statevector simulator.
//
// Qubit 0 is the most significant bit of a basis index. Ancillas start in |0>
// and every ancilla is post-selected on outcome 0.
//
// Text format, one item per line (numbers printed with 17 significant digits):
//   QUBITS <n>
//   SYSTEM <m>                   system qubits are 0..m-1, ancillas m..n-1
//   RESCALE <r>
//   U <k> <q_0> ... <q_{k-1}> <re im> x 4^k     row-major 2^k x 2^k unitary
//   CRY <angle> <q=v,q=v,...|-> <target>        Y rotation under a control pattern
//   POST <q>                                    project qubit q onto |0>
// Blank lines and lines starting with '#' are ignored.

#pragma once

#include "htn/tncore.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace htn::qc {

inline constexpr std::size_t kMaxQubits = 12;
inline constexpr double kRetentionFloor = 1e-15;

class DegenerateMatrixError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every amplitude was removed by post-selection.
class PostSelectedAwayError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class CircuitFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UnitaryGate {
  std::vector<std::size_t> qubits;
  Matrix matrix;
};

struct RotationGate {
  double angle = 0.0;
  /// (qubit, required value) pairs; the rotation acts only when all match.
  std::vector<std::pair<std::size_t, int>> controls;
  std::size_t target = 0;
};

struct PostSelect {
  std::size_t qubit = 0;
};

using Gate = std::variant<UnitaryGate, RotationGate, PostSelect>;

struct CompiledCircuit {
  std::size_t n_qubits = 0;
  std::size_t system_qubits = 0;
  double rescale = 1.0;
  std::vector<Gate> gates;

  std::size_t ancilla_count() const { return n_qubits - system_qubits; }
  /// Throws std::invalid_argument when a structural invariant fails.
  void validate() const;
};

struct StateVector {
  std::size_t n_qubits = 0;
  Vector amplitudes;

  StateVector() = default;
  StateVector(std::size_t n_qubits, Vector amplitudes);
  static StateVector basis(std::size_t n_qubits, std::size_t index);
  /// Tensor product; `this` holds the more significant qubits.
  StateVector kron(const StateVector& other) const;
  double norm() const { return amplitudes.norm(); }
};

struct SimulationResult {
  StateVector output;  // system register, renormalized
  double retention = 0.0;
};

/// Runs the circuit on `input` (system register) with ancillas at |0>.
SimulationResult simulate(const CompiledCircuit& circuit, const StateVector& input);

/// Circuit whose post-selected action is M / r with r the largest singular
/// value. `deferred` uses one ancilla per singular value instead of one total.
CompiledCircuit compile_matrix(const Matrix& m, bool deferred = false);

void write_circuit(std::ostream& os, const CompiledCircuit& circuit);
std::string circuit_to_string(const CompiledCircuit& circuit);
CompiledCircuit read_circuit(std::istream& is);
CompiledCircuit circuit_from_string(const std::string& text);

struct ToffoliReport {
  CompiledCircuit circuit;
  StateVector output_a;  // from |+1>
  StateVector output_b;  // from |1+>
  double fidelity_a = 0.0;  // with |00>
  double fidelity_b = 0.0;  // with |11>
  double retention_a = 0.0;
  double retention_b = 0.0;
  double input_overlap = 0.0;   // |<+1|1+>|^2
  double output_overlap = 0.0;  // |<out_a|out_b>|^2
};

/// Toffoli onto a fresh ancilla, post-selection of the ancilla on 0, then X
/// on qubit 1: |+1> becomes |00> and |1+> becomes |11>.
ToffoliReport toffoli_separation_demo();

}  // namespace htn::qc
