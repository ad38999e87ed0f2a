#include "htn/channel.hpp"

namespace htn::channel {

namespace {

Eigen::Index spectator_of(const SiteShape& shape, const Matrix& rho) {
  const auto b = static_cast<Eigen::Index>(shape.bond_in);
  if (rho.rows() != rho.cols() || rho.rows() % b != 0)
    throw ShapeError("channel: bond density does not match site bond dimension");
  return rho.rows() / b;
}

}  // namespace

SiteMap site_map(const ComplexTensor& site, const SiteShape& shape, const SiteVector& v) {
  const std::size_t bi = shape.bond_in, bo = shape.bond_out, nr = shape.reduction,
                    no = shape.output;
  const auto rows = static_cast<Eigen::Index>(no * bo);
  SiteMap map{Matrix(rows, static_cast<Eigen::Index>(nr * bi)), shape,
              Matrix(static_cast<Eigen::Index>(nr) * rows, static_cast<Eigen::Index>(bi))};
  const auto data = site.data();
  // Site layout (a, s, c, r, o), row-major.
  const std::size_t stride_s = bo * nr * no;
  const std::size_t stride_a = 2 * stride_s;
  for (std::size_t a = 0; a < bi; ++a) {
    const Complex* w0 = data.data() + a * stride_a;
    const Complex* w1 = w0 + stride_s;
    for (std::size_t c = 0; c < bo; ++c)
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t o = 0; o < no; ++o) {
          const std::size_t idx = (c * nr + r) * no + o;
          const Complex value = w0[idx] * v[0] + w1[idx] * v[1];
          const auto row = static_cast<Eigen::Index>(o * bo + c);
          map.kraus(row, static_cast<Eigen::Index>(r * bi + a)) = value;
          map.stacked(static_cast<Eigen::Index>(r) * rows + row, static_cast<Eigen::Index>(a)) = value;
        }
  }
  return map;
}

Matrix apply(const SiteMap& map, std::span<const double> reduction, const Matrix& rho) {
  const Eigen::Index spec = spectator_of(map.shape, rho);
  const auto bi = static_cast<Eigen::Index>(map.shape.bond_in);
  const auto nr = static_cast<Eigen::Index>(map.shape.reduction);
  const Eigen::Index rows = map.kraus.rows();
  Matrix out(spec * rows, spec * rows);
  Matrix stacked_rho;
  Matrix weighted(rows, nr * bi);
  // Phi(L)_{AB} = sum_r D_r M_r L_{AB} M_r^dagger; the output is Hermitian so
  // only blocks with B >= A are contracted.
  for (Eigen::Index A = 0; A < spec; ++A) {
    stacked_rho.noalias() = map.stacked * rho.middleRows(A * bi, bi);
    for (Eigen::Index B = A; B < spec; ++B) {
      for (Eigen::Index r = 0; r < nr; ++r)
        weighted.middleCols(r * bi, bi) = reduction[r] * stacked_rho.block(r * rows, B * bi, rows, bi);
      out.block(A * rows, B * rows, rows, rows).noalias() = weighted * map.kraus.adjoint();
      if (B != A) out.block(B * rows, A * rows, rows, rows) = out.block(A * rows, B * rows, rows, rows).adjoint();
    }
  }
  return out;
}

Matrix apply_adjoint(const SiteMap& map, std::span<const double> reduction, const Matrix& effect) {
  const Eigen::Index rows = map.kraus.rows();
  if (effect.rows() != effect.cols() || effect.rows() % rows != 0)
    throw ShapeError("channel: effect does not match site output dimension");
  const Eigen::Index spec = effect.rows() / rows;
  const auto bi = static_cast<Eigen::Index>(map.shape.bond_in);
  const auto nr = static_cast<Eigen::Index>(map.shape.reduction);
  Matrix out(spec * bi, spec * bi);
  Matrix em(rows, nr * bi);
  Matrix em_stacked(nr * rows, bi);
  for (Eigen::Index A = 0; A < spec; ++A)
    for (Eigen::Index B = 0; B < spec; ++B) {
      em.noalias() = effect.block(A * rows, B * rows, rows, rows) * map.kraus;
      for (Eigen::Index r = 0; r < nr; ++r)
        em_stacked.middleRows(r * rows, rows) = reduction[r] * em.middleCols(r * bi, bi);
      out.block(A * bi, B * bi, bi, bi).noalias() = map.stacked.adjoint() * em_stacked;
    }
  return out;
}

void accumulate_gradient(const SiteMap& map, std::span<const double> reduction, const Matrix& rho,
                         const Matrix& effect, Matrix& kraus_grad,
                         std::span<double> reduction_grad) {
  const Eigen::Index spec = spectator_of(map.shape, rho);
  const auto bi = static_cast<Eigen::Index>(map.shape.bond_in);
  const auto nr = static_cast<Eigen::Index>(map.shape.reduction);
  const Eigen::Index rows = map.kraus.rows();
  if (effect.rows() != spec * rows) throw ShapeError("channel: effect/density mismatch");
  if (kraus_grad.rows() != rows || kraus_grad.cols() != map.kraus.cols())
    kraus_grad = Matrix::Zero(rows, map.kraus.cols());
  Matrix em(rows, nr * bi);
  Matrix em_stacked(nr * rows, bi);
  Matrix p(nr * rows, bi);
  // tr(E Phi(L)) = sum_{A,B} tr(E_{BA} Phi_{AB}); its d/d conj(M_r) is
  // D_r sum_{A,B} E_{BA} M_r L_{AB}, doubled for the (dRe + i dIm) form.
  for (Eigen::Index A = 0; A < spec; ++A)
    for (Eigen::Index B = 0; B < spec; ++B) {
      em.noalias() = effect.block(B * rows, A * rows, rows, rows) * map.kraus;
      for (Eigen::Index r = 0; r < nr; ++r) em_stacked.middleRows(r * rows, rows) = em.middleCols(r * bi, bi);
      p.noalias() = em_stacked * rho.block(A * bi, B * bi, bi, bi);
      for (Eigen::Index r = 0; r < nr; ++r) {
        const auto pr = p.middleRows(r * rows, rows);
        kraus_grad.middleCols(r * bi, bi) += (2.0 * reduction[r]) * pr;
        reduction_grad[r] += (map.stacked.middleRows(r * rows, rows).conjugate().cwiseProduct(pr)).sum().real();
      }
    }
}

void accumulate_site_gradient(const Matrix& kraus_grad, const SiteShape& shape,
                              const SiteVector& v, ComplexTensor& site_grad) {
  const std::size_t bi = shape.bond_in, bo = shape.bond_out, nr = shape.reduction,
                    no = shape.output;
  auto data = site_grad.data();
  const std::size_t stride_s = bo * nr * no;
  const std::size_t stride_a = 2 * stride_s;
  const Complex c0 = std::conj(v[0]), c1 = std::conj(v[1]);
  for (std::size_t a = 0; a < bi; ++a) {
    Complex* g0 = data.data() + a * stride_a;
    Complex* g1 = g0 + stride_s;
    for (std::size_t c = 0; c < bo; ++c)
      for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t o = 0; o < no; ++o) {
          const std::size_t idx = (c * nr + r) * no + o;
          const Complex g = kraus_grad(static_cast<Eigen::Index>(o * bo + c),
                                       static_cast<Eigen::Index>(r * bi + a));
          g0[idx] += g * c0;
          g1[idx] += g * c1;
        }
  }
}

}  // namespace htn::channel
