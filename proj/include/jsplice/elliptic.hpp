#pragma once

// Poisson problems with interface jumps: Lap_h u = f - c, where c is the
// splice correction of the 5-point (7-point) Laplacian built from the jump
// extrapolation. The left-hand side is the plain operator.

#include <functional>
#include <memory>
#include <stdexcept>

#include "geometry.hpp"
#include "grid.hpp"
#include "multigrid.hpp"
#include "splice.hpp"
#include "stencil.hpp"

namespace jsplice {

using ScalarFunction = std::function<double(const Point&)>;

struct PoissonProblem {
  Lattice lattice;           // unknowns; cell or node centred
  ScalarField f;             // right-hand side away from the interface
  ScalarFunction boundary;   // Dirichlet data on the box
  BandPtr band;              // distance field on `lattice`
  JumpSet jumps;
  int q = 3;
};

struct PoissonSolution {
  ScalarField u;
  SolverStats stats;
  std::size_t spliced_points = 0;
};

// f - c for the second-order Laplacian. The interface must stay clear of the
// first layer of points, where the boundary closure replaces the stencil.
inline ScalarField spliced_rhs(const ScalarField& f, const JumpExtrapolation& ext, std::size_t* touched = nullptr) {
  auto op = laplacian5(ext.lattice(), false);
  auto c = splice_correction(op, ext, *ext.band, touched);
  ScalarField r = f;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= c[0][i];
  return r;
}

inline LevelKind dirichlet_kind(Centering c) {
  return c == Centering::cell ? LevelKind::cell_dirichlet : LevelKind::node_dirichlet;
}

// Solve Lap_h u = rhs with Dirichlet data g. Cells place g at face centres
// through the ghost 2g - u; nodes pin g on the boundary nodes.
inline ScalarField solve_poisson_dirichlet(const ScalarField& rhs, const ScalarFunction& g, const SolverOptions& opt,
                                           SolverStats* stats = nullptr) {
  const Lattice& L = rhs.lattice();
  const double h = L.h();
  const int d = L.dim();
  const int e = L.extent();
  Multigrid mg(dirichlet_kind(L.centering), d, L.grid.n, h, 0.0, 1.0, opt);
  std::vector<double> b(L.size()), u(L.size(), 0.0);
  ScalarField bvals(L);
  for (std::size_t i = 0; i < L.size(); ++i) b[i] = -rhs[i];
  const double ih2 = 1.0 / (h * h);
  for (std::size_t i = 0; i < L.size(); ++i) {
    auto c = L.unravel(i);
    Point x = L.coord(i);
    if (L.centering == Centering::cell) {
      for (int a = 0; a < d; ++a) {
        if (c[a] == 0) {
          Point y = x;
          y[a] = L.grid.origin[a];
          b[i] += 2.0 * g(y) * ih2;
        }
        if (c[a] == e - 1) {
          Point y = x;
          y[a] = L.grid.origin[a] + L.grid.n * h;
          b[i] += 2.0 * g(y) * ih2;
        }
      }
    } else {
      bool bnd = false;
      for (int a = 0; a < d; ++a) bnd = bnd || c[a] == 0 || c[a] == e - 1;
      if (bnd) {
        bvals[i] = g(x);
        continue;
      }
      b[i] = -rhs[i];
    }
  }
  if (L.centering == Centering::node) {
    auto str = L.strides();
    for (std::size_t i = 0; i < L.size(); ++i) {
      auto c = L.unravel(i);
      bool bnd = false;
      for (int a = 0; a < d; ++a) bnd = bnd || c[a] == 0 || c[a] == e - 1;
      if (bnd) continue;
      for (int a = 0; a < d; ++a) {
        if (c[a] == 1) b[i] += bvals[i - str[a]] * ih2;
        if (c[a] == e - 2) b[i] += bvals[i + str[a]] * ih2;
      }
    }
  }
  auto st = mg.solve(b, u);
  if (stats) *stats = st;
  ScalarField out(L);
  for (std::size_t i = 0; i < L.size(); ++i) out[i] = u[i] + bvals[i];
  return out;
}

inline PoissonSolution solve_dirichlet(const PoissonProblem& p, const SolverOptions& opt = {}) {
  if (!p.band) throw std::invalid_argument("solve_dirichlet: missing distance band");
  require_same_lattice(p.lattice, p.band->lattice, "solve_dirichlet band");
  require_same_lattice(p.lattice, p.f.lattice(), "solve_dirichlet rhs");
  ExtrapolationOptions eo;
  eo.q = p.q;
  eo.consumer_reach = 1.0;
  auto ext = build_extrapolation(p.band, p.jumps, eo);
  PoissonSolution s;
  ScalarField rhs = spliced_rhs(p.f, ext, &s.spliced_points);
  s.u = solve_poisson_dirichlet(rhs, p.boundary, opt, &s.stats);
  return s;
}

// Lap_h psi = rhs on nodes with homogeneous Neumann data (ghost reflection).
// The compatible part of rhs is used; psi has zero trapezoidal mean.
inline ScalarField solve_neumann_nodal(const ScalarField& rhs, const SolverOptions& opt = {},
                                       SolverStats* stats = nullptr) {
  const Lattice& L = rhs.lattice();
  if (L.centering != Centering::node) throw std::invalid_argument("solve_neumann_nodal: rhs must be nodal");
  Multigrid mg(LevelKind::node_neumann, L.dim(), L.grid.n, L.h(), 0.0, 1.0, opt);
  std::vector<double> b(L.size()), u(L.size(), 0.0);
  for (std::size_t i = 0; i < L.size(); ++i) b[i] = -rhs[i];
  auto st = mg.solve(b, u);
  if (stats) *stats = st;
  ScalarField out(L);
  out.values() = std::move(u);
  return out;
}

// (c0 - c1 Lap_h) u = rhs on cells with u = 0 on the box faces.
inline ScalarField solve_helmholtz_cell(const ScalarField& rhs, double c0, double c1, const SolverOptions& opt = {},
                                        SolverStats* stats = nullptr, const ScalarField* guess = nullptr) {
  const Lattice& L = rhs.lattice();
  if (L.centering != Centering::cell) throw std::invalid_argument("solve_helmholtz_cell: rhs must be cell-centred");
  Multigrid mg(LevelKind::cell_dirichlet, L.dim(), L.grid.n, L.h(), c0, c1, opt);
  std::vector<double> u(L.size(), 0.0);
  if (guess) u = guess->values();
  auto st = mg.solve(rhs.values(), u);
  if (stats) *stats = st;
  ScalarField out(L);
  out.values() = std::move(u);
  return out;
}

// Trapezoidal weights of nodes on the box (1 inside, 1/2 per bounding face).
inline double node_weight(const Lattice& L, std::size_t i) {
  auto c = L.unravel(i);
  double w = 1.0;
  for (int a = 0; a < L.dim(); ++a)
    if (c[a] == 0 || c[a] == L.extent() - 1) w *= 0.5;
  return w;
}

// Nodal Neumann Laplacian with ghost reflection, as used by solve_neumann_nodal.
inline ScalarField neumann_laplacian_nodal(const ScalarField& u) {
  const Lattice& L = u.lattice();
  ScalarField r(L);
  auto str = L.strides();
  double ih2 = 1.0 / (L.h() * L.h());
  int e = L.extent();
  for (std::size_t i = 0; i < L.size(); ++i) {
    auto c = L.unravel(i);
    double s = 0.0;
    for (int a = 0; a < L.dim(); ++a) {
      double lo = c[a] > 0 ? u[i - str[a]] : u[i + str[a]];
      double hi = c[a] < e - 1 ? u[i + str[a]] : u[i - str[a]];
      s += (lo - 2.0 * u[i] + hi) * ih2;
    }
    r[i] = s;
  }
  return r;
}

}  // namespace jsplice
