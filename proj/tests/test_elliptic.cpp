#include <cmath>

#include <gtest/gtest.h>

#include <jsplice/elliptic.hpp>
#include <jsplice/harness.hpp>

using namespace jsplice;

namespace {

double smooth(const Point& x) { return std::sin(x[0] + 0.3) * std::cosh(0.5 * x[1]) + x[2] * x[2]; }
double smooth_lap(const Point& x) { return -0.75 * std::sin(x[0] + 0.3) * std::cosh(0.5 * x[1]) + 2.0; }

double dirichlet_error(int dim, int n, Centering c, SolverMethod m = SolverMethod::multigrid) {
  Lattice L{make_grid(dim, n, -1.0, 1.0), c};
  auto rhs = ScalarField::sample(L, [dim](const Point& x) { return dim == 3 ? smooth_lap(x) : smooth_lap(x) - 2.0; });
  SolverOptions o;
  o.method = m;
  SolverStats st;
  auto u = solve_poisson_dirichlet(rhs, smooth, o, &st);
  EXPECT_LE(st.residual, o.tol);
  return linf_norm(difference(u, ScalarField::sample(L, smooth)));
}

}  // namespace

TEST(Elliptic, DirichletSecondOrderCells) {
  std::vector<double> e;
  for (int n : {16, 32, 64}) e.push_back(dirichlet_error(2, n, Centering::cell));
  EXPECT_GT(observed_rates(e).back(), 1.9);
}

TEST(Elliptic, DirichletSecondOrderNodes) {
  std::vector<double> e;
  for (int n : {16, 32, 64}) e.push_back(dirichlet_error(2, n, Centering::node));
  EXPECT_GT(observed_rates(e).back(), 1.9);
}

TEST(Elliptic, DirichletThreeDimensions) {
  std::vector<double> e;
  for (int n : {8, 16, 32}) e.push_back(dirichlet_error(3, n, Centering::cell));
  EXPECT_GT(observed_rates(e).back(), 1.8);
}

TEST(Elliptic, ConjugateGradientAgrees) {
  EXPECT_NEAR(dirichlet_error(2, 32, Centering::cell, SolverMethod::pcg),
              dirichlet_error(2, 32, Centering::cell), 1e-8);
}

TEST(Elliptic, NeumannNodalResidual) {
  Lattice L{make_grid(2, 32, 0.0, 1.0), Centering::node};
  // compatible: cos(pi x) cos(pi y) has zero mean and zero normal derivative
  auto rhs = ScalarField::sample(L, [](const Point& x) { return std::cos(M_PI * x[0]) * std::cos(M_PI * x[1]); });
  auto psi = solve_neumann_nodal(rhs);
  auto r = neumann_laplacian_nodal(psi);
  EXPECT_LT(linf_norm(difference(r, rhs)), 1e-8);
  double mean = 0, wsum = 0;
  for (std::size_t i = 0; i < L.size(); ++i) {
    mean += node_weight(L, i) * psi[i];
    wsum += node_weight(L, i);
  }
  EXPECT_LT(std::abs(mean / wsum), 1e-10);
  Lattice C{L.grid, Centering::cell};
  EXPECT_THROW(solve_neumann_nodal(ScalarField(C)), std::invalid_argument);
}

TEST(Elliptic, HelmholtzCellResidual) {
  Lattice L{make_grid(2, 32, 0.0, 1.0), Centering::cell};
  auto f = ScalarField::sample(L, [](const Point& x) { return x[0] * (1 - x[0]) * std::sin(3 * x[1]); });
  double c0 = 1.0, c1 = 0.05;
  auto u = solve_helmholtz_cell(f, c0, c1);
  // residual with the ghost closure u = -u across the faces
  double ih2 = 1.0 / (L.h() * L.h()), m = 0;
  int e = L.extent();
  for (int j = 0; j < e; ++j)
    for (int i = 0; i < e; ++i) {
      auto at = [&](int a, int b) {
        if (a < 0 || b < 0 || a >= e || b >= e) return -u.at(std::clamp(a, 0, e - 1), std::clamp(b, 0, e - 1));
        return u.at(a, b);
      };
      double lap = (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4 * u.at(i, j)) * ih2;
      m = std::max(m, std::abs(c0 * u.at(i, j) - c1 * lap - f.at(i, j)));
    }
  EXPECT_LT(m, 1e-9);
}

// Compare the solution with an interface against the analytic one on small grids.
TEST(Elliptic, SplicedPoissonCircle) {
  auto ec = bench::log_exterior(Circle{{0, 0, 0}, 0.5});
  bench::RunContext ctx;
  std::vector<double> e;
  for (int n : {40, 80, 160}) e.push_back(bench::run_elliptic(ec, 2, n, ctx)[0]);
  EXPECT_GT(observed_rates(e).back(), 1.9) << e[0] << ' ' << e[1] << ' ' << e[2];
  EXPECT_LT(e.back(), 1e-4);
}

TEST(Elliptic, MissingBandThrows) {
  Lattice L{make_grid(2, 16, -1.0, 1.0), Centering::cell};
  PoissonProblem p{L, ScalarField(L), [](const Point&) { return 0.0; }, nullptr, {}, 3};
  EXPECT_THROW(solve_dirichlet(p), std::invalid_argument);
}
