#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <jsplice/elliptic.hpp>
#include <jsplice/stencil.hpp>

using namespace jsplice;

namespace {

ScalarField random_field(const Lattice& L, unsigned seed, int zero_layers = 0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  ScalarField f(L);
  Mask in = interior_mask(L, zero_layers);
  for (std::size_t i = 0; i < L.size(); ++i) f[i] = in[i] ? u(rng) : 0.0;
  return f;
}

double dot(const ScalarField& a, const ScalarField& b, const ScalarField* w = nullptr) {
  std::vector<double> p(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) p[i] = a[i] * b[i] * (w ? (*w)[i] : 1.0);
  return pairwise_sum(p);
}

}  // namespace

TEST(Stencil, FornbergClassicWeights) {
  auto w = fd_weights(0.0, {-2, -1, 0, 1, 2}, 2);
  std::vector<double> ref{-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(w[i], ref[i], 1e-14);
  auto g = fd_weights(0.0, {0, 1, 2}, 1);
  EXPECT_NEAR(g[0], -1.5, 1e-14);
  EXPECT_NEAR(g[1], 2.0, 1e-14);
  EXPECT_NEAR(g[2], -0.5, 1e-14);
  EXPECT_THROW(fd_weights(0.0, {0, 1}, 2), std::invalid_argument);
}

TEST(Stencil, DefinedRegion) {
  Lattice L{make_grid(2, 16, -1.0, 1.0), Centering::cell};
  EXPECT_EQ(defined_mask(laplacian9_4(L, false)).count(), 12u * 12u);
  EXPECT_EQ(defined_mask(laplacian9_4(L, true)).count(), L.size());
  EXPECT_EQ(defined_mask(laplacian5(L, false)).count(), 14u * 14u);
}

TEST(Stencil, SecondOrderConvergence) {
  auto f = [](const Point& x) { return std::sin(2 * x[0]) * std::cos(3 * x[1]); };
  auto lap = [](const Point& x) { return -13.0 * std::sin(2 * x[0]) * std::cos(3 * x[1]); };
  std::vector<double> e2, e4;
  for (int n : {32, 64, 128}) {
    Lattice L{make_grid(2, n, -1.0, 1.0), Centering::cell};
    auto u = ScalarField::sample(L, f);
    auto ex = ScalarField::sample(L, lap);
    auto a = jsplice::apply(laplacian5(L, true), u);
    auto b = jsplice::apply(laplacian9_4(L, true), u);
    e2.push_back(linf_norm(difference(a, ex)));
    e4.push_back(linf_norm(difference(b, ex)));
  }
  EXPECT_GT(observed_rates(e2).back(), 1.9);
  EXPECT_GT(observed_rates(e4).back(), 3.8);
}

TEST(Stencil, NodeCellGradientSecondOrder) {
  auto f = [](const Point& x) { return std::exp(x[0]) * std::sin(x[1]); };
  std::vector<double> e;
  for (int n : {16, 32, 64}) {
    Lattice N{make_grid(2, n, 0.0, 1.0), Centering::node};
    auto u = ScalarField::sample(N, f);
    auto G = jsplice::apply(grad_node_to_cell(N), std::vector<const ScalarField*>{&u});
    double m = 0;
    for (std::size_t i = 0; i < G.lattice().size(); ++i) {
      auto x = G.lattice().coord(i);
      m = std::max(m, std::abs(G[0][i] - std::exp(x[0]) * std::sin(x[1])));
      m = std::max(m, std::abs(G[1][i] - std::exp(x[0]) * std::cos(x[1])));
    }
    e.push_back(m);
  }
  EXPECT_GT(observed_rates(e).back(), 1.9);
}

TEST(Stencil, HeavisideConvention) {
  EXPECT_EQ(heaviside(0.0), 1.0);
  EXPECT_EQ(heaviside(-1e-300), 0.0);
  EXPECT_EQ(heaviside(2.0), 1.0);
}

// Polynomials of degree <= p + 1 are differentiated exactly (to round-off),
// including the shifted windows at the box edges.
TEST(PropertyStencil, PolynomialExactness) {
  for (int dim : {2, 3}) {
    int n = dim == 2 ? 24 : 12;
    Lattice L{make_grid(dim, n, -1.0, 1.0), Centering::cell};
    auto p3 = [](const Point& x) { return x[0] * x[0] * x[0] - 2 * x[1] * x[1] * x[0] + x[2] * x[2] + 0.5; };
    auto lap3 = [](const Point& x) { return 6 * x[0] - 4 * x[0] + 2.0; };
    auto p5 = [](const Point& x) { return std::pow(x[0], 5) + x[1] * x[1] * x[1] * x[1] - x[2] * x[0] * x[1]; };
    auto lap5 = [](const Point& x) { return 20 * std::pow(x[0], 3) + 12 * x[1] * x[1]; };
    auto lap3d = [&](const Point& x) { return dim == 3 ? lap3(x) : lap3(x) - 2.0; };
    auto u3 = ScalarField::sample(L, p3);
    auto u5 = ScalarField::sample(L, p5);
    auto a = jsplice::apply(laplacian5(L, true), u3);
    auto b = jsplice::apply(laplacian9_4(L, true), u5);
    double ea = 0, eb = 0;
    for (std::size_t i = 0; i < L.size(); ++i) {
      ea = std::max(ea, std::abs(a[i] - lap3d(L.coord(i))));
      eb = std::max(eb, std::abs(b[i] - lap5(L.coord(i))));
    }
    EXPECT_LT(ea, 1e-9) << dim;
    EXPECT_LT(eb, 1e-8) << dim;
    auto u4 = ScalarField::sample(L, [](const Point& x) { return std::pow(x[0], 4) + x[0] * x[1] * x[1] * x[1] - x[2]; });
    auto g = jsplice::apply(gradient4(L, true), std::vector<const ScalarField*>{&u4});
    double eg = 0;
    for (std::size_t i = 0; i < L.size(); ++i) {
      auto x = L.coord(i);
      eg = std::max(eg, std::abs(g[0][i] - (4 * std::pow(x[0], 3) + x[1] * x[1] * x[1])));
      eg = std::max(eg, std::abs(g[1][i] - 3 * x[0] * x[1] * x[1]));
    }
    EXPECT_LT(eg, 1e-9) << dim;
  }
}

TEST(PropertyStencil, LaplacianSymmetry) {
  for (int dim : {2, 3}) {
    Lattice L{make_grid(dim, dim == 2 ? 20 : 10, -1.0, 1.0), Centering::cell};
    auto op = laplacian5(L, false);
    auto u = random_field(L, 1, 1), v = random_field(L, 2, 1);
    auto Lu = jsplice::apply(op, u), Lv = jsplice::apply(op, v);
    double a = dot(Lu, v), b = dot(u, Lv);
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a))) << dim;
  }
}

TEST(PropertyStencil, NeumannNodalSymmetry) {
  for (int dim : {2, 3}) {
    Lattice L{make_grid(dim, dim == 2 ? 20 : 10, -1.0, 1.0), Centering::node};
    ScalarField w(L);
    for (std::size_t i = 0; i < L.size(); ++i) w[i] = node_weight(L, i);
    auto u = random_field(L, 3), v = random_field(L, 4);
    double a = dot(neumann_laplacian_nodal(u), v, &w), b = dot(u, neumann_laplacian_nodal(v), &w);
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a))) << dim;
    // constants are in the kernel
    EXPECT_LT(linf_norm(neumann_laplacian_nodal(ScalarField(L, 3.0))), 1e-12);
  }
}

// <grad q, v>_cells = -<q, div v>_nodes with trapezoidal node weights.
TEST(PropertyStencil, GradDivAdjoint) {
  for (int dim : {2, 3}) {
    Lattice N{make_grid(dim, dim == 2 ? 16 : 8, 0.0, 1.0), Centering::node};
    Lattice C{N.grid, Centering::cell};
    auto q = random_field(N, 5);
    VectorField v(C, dim);
    for (int a = 0; a < dim; ++a) v[a] = random_field(C, 10 + a);
    auto G = jsplice::apply(grad_node_to_cell(N), std::vector<const ScalarField*>{&q});
    auto D = jsplice::apply(div_cell_to_node(C), v);
    double lhs = 0;
    for (int a = 0; a < dim; ++a) lhs += dot(G[a], v[a]);
    ScalarField w(N);
    for (std::size_t i = 0; i < N.size(); ++i) w[i] = node_weight(N, i);
    double rhs = -dot(q, D, &w);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs))) << dim;
  }
}
