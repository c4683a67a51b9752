#include <cmath>

#include <gtest/gtest.h>

#include <jsplice/harness.hpp>
#include <jsplice/quadrature.hpp>

using namespace jsplice;

namespace {

BandPtr band_for(const ImplicitShape& s, int dim, int n) {
  Lattice L{make_grid(dim, n, -1.0, 1.0), Centering::cell};
  return std::make_shared<NarrowBand>(sample_sdf(s, L, 13.0 * L.h()));
}

double perimeter(const BandPtr& b) {
  ScalarField one(b->lattice, 1.0);
  return integrate_surface(one, Mask(b->lattice, true), b);
}

}  // namespace

TEST(Quadrature, CirclePerimeterFourthOrder) {
  Circle c{{0.013, -0.021, 0}, 0.6};
  std::vector<double> e;
  for (int n : {32, 64, 128}) e.push_back(std::abs(perimeter(band_for(c, 2, n)) - 2 * M_PI * 0.6));
  EXPECT_GT(observed_rates(e).back(), 3.5) << e[0] << ' ' << e[1] << ' ' << e[2];
}

TEST(Quadrature, SecondOrderVariant) {
  Circle c{{0.013, -0.021, 0}, 0.6};
  std::vector<double> e;
  for (int n : {32, 64, 128}) {
    auto b = band_for(c, 2, n);
    ScalarField one(b->lattice, 1.0);
    e.push_back(std::abs(integrate_surface(one, Mask(b->lattice, true), b, 2) - 2 * M_PI * 0.6));
  }
  EXPECT_GT(observed_rates(e).back(), 1.8) << e[0] << ' ' << e[1] << ' ' << e[2];
  auto b = band_for(c, 2, 32);
  EXPECT_THROW(delta_field(ScalarField(b->lattice), Mask(b->lattice, true), b, 3), std::invalid_argument);
}

TEST(Quadrature, EnclosedArea) {
  Ellipse e{{0.02, 0.01, 0}, {0.6, 0.35}};
  std::vector<double> err;
  for (int n : {32, 64, 128}) err.push_back(std::abs(enclosed_volume(band_for(e, 2, n)) - M_PI * 0.6 * 0.35));
  EXPECT_GT(observed_rates(err).back(), 3.5) << err[0] << ' ' << err[1] << ' ' << err[2];
  EXPECT_LT(err.back(), 1e-6);
}

TEST(Quadrature, ExponentialOverEllipse) {
  // integrand e^x sampled at lattice points; reference from the perimeter parametrisation
  Ellipse e{{0, 0, 0}, {0.7, 0.3}};
  double ref = bench::ellipse_exp_integral(0.7, 0.3);
  std::vector<double> err;
  for (int n : {64, 128}) {
    auto b = band_for(e, 2, n);
    auto a = ScalarField::sample(b->lattice, [](const Point& x) { return std::exp(x[0]); });
    err.push_back(std::abs(integrate_surface(a, Mask(b->lattice, true), b) - ref));
  }
  EXPECT_GT(observed_rates(err).back(), 3.5) << err[0] << ' ' << err[1];
}

TEST(Quadrature, PeriodicTrapezoidOracle) {
  // circle: the perimeter integral of e^x is 2 pi r I0(r)
  double r = 0.5;
  EXPECT_NEAR(bench::ellipse_exp_integral(r, r), 2 * M_PI * r * std::cyl_bessel_i(0.0, r), 1e-13);
}

TEST(Quadrature, SphereArea) {
  Ellipsoid s{{0.01, 0.0, -0.02}, {0.5, 0.5, 0.5}};
  std::vector<double> e;
  for (int n : {24, 48}) e.push_back(std::abs(perimeter(band_for(s, 3, n)) - 4 * M_PI * 0.25));
  EXPECT_GT(observed_rates(e).back(), 3.0) << e[0] << ' ' << e[1];
}
