#pragma once

// Surface integrals over an implicit interface from the spliced delta
// function  Lap4(vH) - (Lap4 v)H,  where v carries [u] = 0, [du/dn] = alpha.

#include <cmath>
#include <stdexcept>

#include "geometry.hpp"
#include "grid.hpp"
#include "splice.hpp"
#include "stencil.hpp"

namespace jsplice {

// Band half-width the integrand and distance field must cover.
inline double quadrature_width(double h) { return extrapolation_width(3, 2.0, h); }

// alpha * delta(phi) on the lattice; alpha is needed where avail is set,
// which must include |phi| < quadrature_width.
inline ScalarField delta_field(const ScalarField& alpha, const Mask& avail, const BandPtr& band, int p = 4) {
  require_same_lattice(alpha.lattice(), band->lattice, "delta_field");
  const Lattice& L = band->lattice;
  JumpSet g;
  g.components = 1;
  g.g1.comp.push_back(alpha);
  g.g1.avail = avail;
  ExtrapolationOptions eo;
  eo.q = 3;
  eo.consumer_reach = p == 4 ? 2.0 : 1.0;
  auto ext = build_extrapolation(band, g, eo);
  ScalarField d(L);
  if (p == 4) {
    auto c = splice_correction(laplacian9_4(L, false), ext, *band);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -c[0][i];
  } else if (p == 2) {
    auto c = splice_correction(laplacian5(L, false), ext, *band);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -c[0][i];
  } else {
    throw std::invalid_argument("delta_field: order must be 2 or 4");
  }
  return d;
}

inline double integrate_surface(const ScalarField& alpha, const Mask& avail, const BandPtr& band, int p = 4) {
  auto d = delta_field(alpha, avail, band, p);
  return std::pow(band->lattice.h(), band->lattice.dim()) * pairwise_sum(d.values());
}

// Volume inside the interface, -int (x.e_a)(n.e_a) ds with n the inward normal.
inline double enclosed_volume(const BandPtr& band, int axis = 0) {
  const Lattice& L = band->lattice;
  Mask nv;
  auto n = band_normals(*band, &nv);
  ScalarField alpha(L);
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!nv[i]) continue;
    double g2 = 0.0;
    for (int a = 0; a < L.dim(); ++a) g2 += n[a][i] * n[a][i];
    alpha[i] = -L.coord(i)[axis] * n[axis][i] / std::sqrt(g2);
  }
  return integrate_surface(alpha, nv, band);
}

}  // namespace jsplice
