#include <cmath>

#include <gtest/gtest.h>

#include <jsplice/harness.hpp>

using namespace jsplice;
using jsplice::bench::sample_jumps;

namespace {

// w = exp(a.x): every normal-derivative jump is a power of a.n times w.
constexpr double ax = 0.8, ay = -0.5;
double w_of(const Point& x) { return std::exp(ax * x[0] + ay * x[1]); }

JumpSet exp_jumps(const NarrowBand& band, double scale = 1.0) {
  return sample_jumps(band, [scale](const Point& x, const double* n, double* g) {
    double an = ax * n[0] + ay * n[1], w = scale * w_of(x), a2 = ax * ax + ay * ay;
    g[0] = w;
    g[1] = an * w;
    g[2] = a2 * w;
    g[3] = a2 * an * w;
  });
}

JumpSet poly_jumps(const NarrowBand& band) {
  return sample_jumps(band, [](const Point& x, const double* n, double* g) {
    g[0] = x[0] * x[1] + 1.0;
    g[1] = x[1] * n[0] + x[0] * n[1];
    g[2] = 0.0;
    g[3] = 0.0;
  });
}

std::shared_ptr<NarrowBand> circle_band(int n, double bw = 13.0) {
  Lattice L{make_grid(2, n, -1.0, 1.0), Centering::cell};
  return std::make_shared<NarrowBand>(sample_sdf(Circle{{0.03, -0.02, 0}, 0.5}, L, bw * L.h()));
}

ExtrapolationOptions opts(int q = 3) {
  ExtrapolationOptions o;
  o.q = q;
  o.consumer_reach = 2.0;
  return o;
}

}  // namespace

TEST(Splice, ExtrapolationWidth) {
  EXPECT_DOUBLE_EQ(extrapolation_width(0, 1.0, 0.1), 0.1);
  EXPECT_DOUBLE_EQ(extrapolation_width(2, 1.0, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(extrapolation_width(3, 2.0, 0.1), 1.0);
  EXPECT_THROW(extrapolation_width(4, 1.0, 0.1), std::invalid_argument);
}

TEST(Splice, NarrowBandIsRejected) {
  auto b = circle_band(32, 4.0);
  EXPECT_THROW(build_extrapolation(b, exp_jumps(*b), opts()), band_error);
}

TEST(Splice, WrongOrderIsRejected) {
  auto b = circle_band(32);
  auto ext = build_extrapolation(b, exp_jumps(*b), opts(1));
  EXPECT_THROW(splice_correction(laplacian9_4(b->lattice, true), ext, *b), band_error);
}

// A discontinuous field whose two sides are smooth: the spliced Laplacian
// converges to the one-sided Laplacian at second order right up to the interface.
TEST(Splice, SplicedLaplacianSecondOrder) {
  auto uin = [](const Point& x) { return w_of(x) + std::sin(x[1]); };
  auto uout = [](const Point& x) { return std::sin(x[1]); };
  std::vector<double> err;
  for (int n : {32, 64, 128}) {
    auto b = circle_band(n);
    const Lattice& L = b->lattice;
    ScalarField u(L), ex(L);
    for (std::size_t i = 0; i < L.size(); ++i) {
      auto x = L.coord(i);
      bool in = b->phi[i] >= 0;
      u[i] = in ? uin(x) : uout(x);
      ex[i] = in ? (ax * ax + ay * ay) * w_of(x) - std::sin(x[1]) : -std::sin(x[1]);
    }
    auto ext = build_extrapolation(b, exp_jumps(*b), opts());
    auto op = laplacian5(L, false);
    auto r = spliced_apply(op, u, ext);
    double m = 0;
    for (std::size_t i = 0; i < L.size(); ++i)
      if (op.defined(i)) m = std::max(m, std::abs(r[i] - ex[i]));
    err.push_back(m);
  }
  EXPECT_GT(observed_rates(err).back(), 1.8) << err[0] << ' ' << err[1] << ' ' << err[2];
}

TEST(Splice, TimeDerivativeRemovesCrossing) {
  Lattice L{make_grid(2, 8, 0.0, 1.0), Centering::cell};
  NarrowBand a{L, ScalarField(L, -1.0), Mask(L, true), 1.0}, b = a;
  b.phi[3] = 1.0;
  ScalarField un(L, 2.0), unp1(L, 2.0), v(L, 0.0);
  unp1[3] = 7.0;
  v[3] = 5.0;
  auto r = spliced_time_derivative(un, unp1, v, a, b, 0.5);
  EXPECT_EQ(linf_norm(r), 0.0);
}

// With zero jumps, or away from the interface, the splice changes nothing,
// bit for bit.
TEST(PropertySplice, ReducesToPlainOperator) {
  auto b = circle_band(64);
  const Lattice& L = b->lattice;
  auto u = ScalarField::sample(L, [](const Point& x) { return std::cos(3 * x[0]) * x[1]; });
  JumpSet zero;
  auto ext0 = build_extrapolation(b, zero, opts());
  auto ext = build_extrapolation(b, exp_jumps(*b), opts());
  auto op = laplacian9_4(L, false);
  auto plain = jsplice::apply(op, u);
  auto s0 = spliced_apply(op, u, ext0);
  EXPECT_EQ(s0.values(), plain.values());
  auto s = spliced_apply(op, u, ext);
  double reach = 2.0 * L.h();
  std::size_t far = 0;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!op.defined(i)) continue;
    bool straddle = false;
    op.taps(i, 0, [&](int, std::size_t k, double) { straddle = straddle || (b->phi[k] >= 0) != (b->phi[i] >= 0); });
    if (!straddle) {
      EXPECT_EQ(s[i], plain[i]);
      far += std::abs(b->phi[i]) > reach;
    }
  }
  EXPECT_GT(far, L.size() / 2);
}

TEST(PropertySplice, Linearity) {
  auto b = circle_band(64);
  auto g1 = exp_jumps(*b), g2 = poly_jumps(*b);
  double a = 1.7, c = -0.35;
  auto e1 = build_extrapolation(b, g1, opts());
  auto e2 = build_extrapolation(b, g2, opts());
  auto e12 = build_extrapolation(b, linear_combination(a, g1, c, g2), opts());
  double m = 0, s = 0;
  for (std::size_t i = 0; i < b->lattice.size(); ++i) {
    if (!e12.has_order(i, 3)) continue;
    ASSERT_TRUE(e1.has_order(i, 3) && e2.has_order(i, 3));
    double lin = a * e1.v[0][i] + c * e2.v[0][i];
    m = std::max(m, std::abs(e12.v[0][i] - lin));
    s = std::max(s, std::abs(lin));
  }
  EXPECT_LT(m, 1e-13 * std::max(1.0, s));
}

// Bootstrapped and canonical extensions differ by O((|phi| + h)^(q+1)):
// the scaled difference stays put as the grid is refined.
TEST(PropertySplice, CanonicalAgreement) {
  const int q = 3;
  Circle c{{0.03, -0.02, 0}, 0.5};
  std::vector<double> ratio;
  for (int n : {32, 64, 128}) {
    auto b = circle_band(n);
    const Lattice& L = b->lattice;
    auto ext = build_extrapolation(b, exp_jumps(*b), opts(q));
    auto cp = [&](const Point& x) { return closest_point(c, x); };
    auto jump = [&](int k, const Point& y, int) {
      double dx = c.center[0] - y[0], dy = c.center[1] - y[1], r = std::hypot(dx, dy);
      double an = (ax * dx + ay * dy) / r;
      return std::pow(an, k) * w_of(y);
    };
    auto can = canonical_extrapolation(b, cp, jump, q);
    double m = 0;
    for (std::size_t i = 0; i < L.size(); ++i)
      if (ext.has_order(i, q))
        m = std::max(m, std::abs(ext.v[0][i] - can.v[0][i]) / std::pow(std::abs(b->phi[i]) + L.h(), q + 1));
    ratio.push_back(m);
  }
  for (std::size_t k = 1; k < ratio.size(); ++k) {
    double r = ratio[k] / ratio[k - 1];
    EXPECT_GE(r, 0.25) << k << ' ' << ratio[k - 1] << ' ' << ratio[k];
    EXPECT_LE(r, 4.0) << k << ' ' << ratio[k - 1] << ' ' << ratio[k];
  }
}

// Reading the jumps back off an extension with the same discrete stencils and
// extending again reproduces it, to round-off.
TEST(PropertySplice, Idempotence) {
  for (int n : {32, 64}) {
    auto b = circle_band(n, 24.0);
    auto o = opts();
    o.width = 22.0 * b->lattice.h();
    auto e1 = build_extrapolation(b, exp_jumps(*b), o);
    auto g = extension_jumps(e1);
    o.width = 0.0;
    o.consumer_reach = 1.0;
    auto e2 = build_extrapolation(b, g, o);
    double m = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < b->lattice.size(); ++i)
      if (e2.has_order(i, 3)) {
        m = std::max(m, std::abs(e2.v[0][i] - e1.v[0][i]));
        ++seen;
      }
    EXPECT_GT(seen, 50u);
    EXPECT_LT(m, 1e-11) << n;
  }
}
