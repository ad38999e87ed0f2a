#include "htn/qcompile.hpp"

#include <cmath>
#include <numbers>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace htn::qc {

namespace {

std::size_t bit_of(std::size_t n_qubits, std::size_t qubit) { return n_qubits - 1 - qubit; }

void apply_unitary(Vector& psi, std::size_t n, const UnitaryGate& g) {
  const std::size_t k = g.qubits.size();
  const std::size_t sub = std::size_t{1} << k;
  std::size_t mask = 0;
  for (auto q : g.qubits) mask |= std::size_t{1} << bit_of(n, q);
  const std::size_t dim = std::size_t{1} << n;
  std::vector<std::size_t> offset(sub, 0);
  for (std::size_t s = 0; s < sub; ++s)
    for (std::size_t j = 0; j < k; ++j)
      if (s & (std::size_t{1} << (k - 1 - j))) offset[s] |= std::size_t{1} << bit_of(n, g.qubits[j]);
  Vector local(static_cast<Eigen::Index>(sub));
  for (std::size_t base = 0; base < dim; ++base) {
    if (base & mask) continue;
    for (std::size_t s = 0; s < sub; ++s) local(static_cast<Eigen::Index>(s)) = psi(static_cast<Eigen::Index>(base | offset[s]));
    const Vector out = g.matrix * local;
    for (std::size_t s = 0; s < sub; ++s) psi(static_cast<Eigen::Index>(base | offset[s])) = out(static_cast<Eigen::Index>(s));
  }
}

void apply_rotation(Vector& psi, std::size_t n, const RotationGate& g) {
  const double c = std::cos(0.5 * g.angle), s = std::sin(0.5 * g.angle);
  const std::size_t tbit = std::size_t{1} << bit_of(n, g.target);
  std::size_t cmask = 0, cvalue = 0;
  for (const auto& [q, v] : g.controls) {
    cmask |= std::size_t{1} << bit_of(n, q);
    if (v) cvalue |= std::size_t{1} << bit_of(n, q);
  }
  const std::size_t dim = std::size_t{1} << n;
  for (std::size_t i = 0; i < dim; ++i) {
    if ((i & tbit) || (i & cmask) != cvalue) continue;
    const auto i0 = static_cast<Eigen::Index>(i), i1 = static_cast<Eigen::Index>(i | tbit);
    const Complex a0 = psi(i0), a1 = psi(i1);
    psi(i0) = c * a0 - s * a1;
    psi(i1) = s * a0 + c * a1;
  }
}

void apply_post(Vector& psi, std::size_t n, const PostSelect& g) {
  const std::size_t bit = std::size_t{1} << bit_of(n, g.qubit);
  for (Eigen::Index i = 0; i < psi.size(); ++i)
    if (static_cast<std::size_t>(i) & bit) psi(i) = 0.0;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x == 0.0 ? 0.0 : x);
  return buf;
}

}  // namespace

void CompiledCircuit::validate() const {
  if (n_qubits < 1 || n_qubits > kMaxQubits)
    throw std::invalid_argument("circuit: qubit count must lie in [1, " +
                                std::to_string(kMaxQubits) + "]");
  if (system_qubits > n_qubits) throw std::invalid_argument("circuit: more system qubits than qubits");
  if (!(rescale > 0.0)) throw std::invalid_argument("circuit: rescale must be positive");
  std::vector<char> posted(n_qubits, 0);
  auto check_qubit = [&](std::size_t q) {
    if (q >= n_qubits) throw std::invalid_argument("circuit: qubit index out of range");
  };
  for (const auto& gate : gates) {
    if (const auto* u = std::get_if<UnitaryGate>(&gate)) {
      const auto sub = static_cast<Eigen::Index>(std::size_t{1} << u->qubits.size());
      if (u->qubits.empty() || u->matrix.rows() != sub || u->matrix.cols() != sub)
        throw std::invalid_argument("circuit: unitary size does not match its qubits");
      for (std::size_t i = 0; i < u->qubits.size(); ++i) {
        check_qubit(u->qubits[i]);
        for (std::size_t j = 0; j < i; ++j)
          if (u->qubits[i] == u->qubits[j]) throw std::invalid_argument("circuit: repeated qubit");
      }
      const double defect = (u->matrix.adjoint() * u->matrix - Matrix::Identity(sub, sub)).norm();
      if (defect > 1e-9) throw std::invalid_argument("circuit: gate matrix is not unitary");
    } else if (const auto* r = std::get_if<RotationGate>(&gate)) {
      check_qubit(r->target);
      if (!(r->angle >= 0.0 && r->angle <= std::numbers::pi + 1e-12))
        throw std::invalid_argument("circuit: rotation angle outside [0, pi]");
      for (const auto& [q, v] : r->controls) {
        check_qubit(q);
        if (q == r->target) throw std::invalid_argument("circuit: control equals target");
        if (v != 0 && v != 1) throw std::invalid_argument("circuit: control value must be 0 or 1");
      }
    } else {
      const auto& p = std::get<PostSelect>(gate);
      check_qubit(p.qubit);
      if (p.qubit < system_qubits)
        throw std::invalid_argument("circuit: post-selection is only allowed on ancillas");
      posted[p.qubit] = 1;
    }
  }
  for (std::size_t q = system_qubits; q < n_qubits; ++q)
    if (!posted[q]) throw std::invalid_argument("circuit: ancilla " + std::to_string(q) + " is never post-selected");
}

StateVector::StateVector(std::size_t n, Vector amps) : n_qubits(n), amplitudes(std::move(amps)) {
  if (n > kMaxQubits) throw std::invalid_argument("StateVector: too many qubits");
  if (amplitudes.size() != static_cast<Eigen::Index>(std::size_t{1} << n))
    throw std::invalid_argument("StateVector: amplitude count must be 2^n");
}

StateVector StateVector::basis(std::size_t n, std::size_t index) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(std::size_t{1} << n));
  v(static_cast<Eigen::Index>(index)) = 1.0;
  return StateVector(n, std::move(v));
}

StateVector StateVector::kron(const StateVector& other) const {
  return StateVector(n_qubits + other.n_qubits, htn::kron(Matrix(amplitudes), Matrix(other.amplitudes)).col(0));
}

SimulationResult simulate(const CompiledCircuit& circuit, const StateVector& input) {
  circuit.validate();
  if (input.n_qubits != circuit.system_qubits)
    throw std::invalid_argument("simulate: input has " + std::to_string(input.n_qubits) +
                                " qubits, circuit system register has " +
                                std::to_string(circuit.system_qubits));
  const std::size_t n = circuit.n_qubits;
  const std::size_t anc = circuit.ancilla_count();
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(std::size_t{1} << n));
  for (Eigen::Index i = 0; i < input.amplitudes.size(); ++i) psi(i << anc) = input.amplitudes(i);
  for (const auto& gate : circuit.gates) {
    if (const auto* u = std::get_if<UnitaryGate>(&gate)) apply_unitary(psi, n, *u);
    else if (const auto* r = std::get_if<RotationGate>(&gate)) apply_rotation(psi, n, *r);
    else apply_post(psi, n, std::get<PostSelect>(gate));
  }
  Vector out(input.amplitudes.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = psi(i << anc);
  SimulationResult result;
  result.retention = out.squaredNorm();
  if (result.retention < kRetentionFloor)
    throw PostSelectedAwayError("simulate: retention " + fmt(result.retention) +
                                " below floor; the input was post-selected away");
  result.output = StateVector(input.n_qubits, out / std::sqrt(result.retention));
  return result;
}

void write_circuit(std::ostream& os, const CompiledCircuit& c) {
  os << "QUBITS " << c.n_qubits << '\n' << "SYSTEM " << c.system_qubits << '\n'
     << "RESCALE " << fmt(c.rescale) << '\n';
  for (const auto& gate : c.gates) {
    if (const auto* u = std::get_if<UnitaryGate>(&gate)) {
      os << "U " << u->qubits.size();
      for (auto q : u->qubits) os << ' ' << q;
      for (Eigen::Index i = 0; i < u->matrix.rows(); ++i)
        for (Eigen::Index j = 0; j < u->matrix.cols(); ++j)
          os << ' ' << fmt(u->matrix(i, j).real()) << ' ' << fmt(u->matrix(i, j).imag());
      os << '\n';
    } else if (const auto* r = std::get_if<RotationGate>(&gate)) {
      os << "CRY " << fmt(r->angle) << ' ';
      if (r->controls.empty()) os << '-';
      for (std::size_t i = 0; i < r->controls.size(); ++i)
        os << (i ? "," : "") << r->controls[i].first << '=' << r->controls[i].second;
      os << ' ' << r->target << '\n';
    } else {
      os << "POST " << std::get<PostSelect>(gate).qubit << '\n';
    }
  }
}

std::string circuit_to_string(const CompiledCircuit& c) {
  std::ostringstream os;
  write_circuit(os, c);
  return os.str();
}

CompiledCircuit read_circuit(std::istream& is) {
  CompiledCircuit c;
  bool have_qubits = false, have_system = false;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> CircuitFormatError {
    return CircuitFormatError("circuit line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string op;
    if (!(ls >> op) || op[0] == '#') continue;
    if (op == "QUBITS") {
      if (!(ls >> c.n_qubits)) throw fail("bad QUBITS");
      have_qubits = true;
    } else if (op == "SYSTEM") {
      if (!(ls >> c.system_qubits)) throw fail("bad SYSTEM");
      have_system = true;
    } else if (op == "RESCALE") {
      if (!(ls >> c.rescale)) throw fail("bad RESCALE");
    } else if (op == "U") {
      UnitaryGate g;
      std::size_t k = 0;
      if (!(ls >> k) || k < 1 || k > kMaxQubits) throw fail("bad unitary arity");
      g.qubits.resize(k);
      for (auto& q : g.qubits)
        if (!(ls >> q)) throw fail("missing unitary qubit");
      const auto sub = static_cast<Eigen::Index>(std::size_t{1} << k);
      g.matrix.resize(sub, sub);
      for (Eigen::Index i = 0; i < sub; ++i)
        for (Eigen::Index j = 0; j < sub; ++j) {
          double re = 0.0, im = 0.0;
          if (!(ls >> re >> im)) throw fail("missing unitary entry");
          g.matrix(i, j) = Complex{re, im};
        }
      c.gates.emplace_back(std::move(g));
    } else if (op == "CRY") {
      RotationGate g;
      std::string controls;
      if (!(ls >> g.angle >> controls >> g.target)) throw fail("bad CRY");
      if (controls != "-") {
        std::istringstream cs(controls);
        std::string item;
        while (std::getline(cs, item, ',')) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) throw fail("control must read q=v");
          try {
            g.controls.emplace_back(std::stoul(item.substr(0, eq)), std::stoi(item.substr(eq + 1)));
          } catch (const std::exception&) {
            throw fail("control must read q=v");
          }
        }
      }
      c.gates.emplace_back(std::move(g));
    } else if (op == "POST") {
      PostSelect g;
      if (!(ls >> g.qubit)) throw fail("bad POST");
      c.gates.emplace_back(g);
    } else {
      throw fail("unknown instruction '" + op + "'");
    }
    std::string extra;
    if (ls >> extra) throw fail("trailing tokens");
  }
  if (!have_qubits || !have_system) throw CircuitFormatError("circuit: missing QUBITS or SYSTEM header");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CircuitFormatError(e.what());
  }
  return c;
}

CompiledCircuit circuit_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_circuit(is);
}

}  // namespace htn::qc
