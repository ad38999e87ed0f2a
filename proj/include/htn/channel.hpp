// channel.hpp: per-sample site maps of the chain and their adjoints.
//
// A bond density L is a square matrix over (spectator, bond) where the
// spectator collects output legs emitted by earlier sites. Applying site k
// gives Phi(L) = sum_r D_r (I (x) M_r) L (I (x) M_r)^dagger over
// (spectator, output, bond_out).

#pragma once

#include "htn/model.hpp"

namespace htn::channel {

/// Site tensor contracted with one encoded qubit. Rows are (output, bond_out),
/// columns are (reduction, bond_in): column block r is the Kraus factor M_r.
/// `stacked` holds the same factors as row blocks, (reduction, output,
/// bond_out) x bond_in.
struct SiteMap {
  Matrix kraus;
  SiteShape shape;
  Matrix stacked;
};

SiteMap site_map(const ComplexTensor& site, const SiteShape& shape, const SiteVector& v);

Matrix apply(const SiteMap& map, std::span<const double> reduction, const Matrix& rho);
Matrix apply_adjoint(const SiteMap& map, std::span<const double> reduction, const Matrix& effect);

/// For the scalar tr(E Phi(L)): adds its gradient with respect to the Kraus
/// matrix (dRe + i dIm convention) and with respect to each reduction entry.
void accumulate_gradient(const SiteMap& map, std::span<const double> reduction, const Matrix& rho,
                         const Matrix& effect, Matrix& kraus_grad,
                         std::span<double> reduction_grad);

/// Pulls a Kraus-matrix gradient back to the site tensor entries.
void accumulate_site_gradient(const Matrix& kraus_grad, const SiteShape& shape,
                              const SiteVector& v, ComplexTensor& site_grad);

}  // namespace htn::channel
