#pragma once

// Interface shapes, exact signed distances, narrow bands, and signed-distance
// reconstruction from a sampled level set. Convention: phi > 0 inside.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "grid.hpp"
#include "stencil.hpp"

namespace jsplice {

struct Circle {
  Point center{0.0, 0.0, 0.0};
  double radius = 0.5;
};

struct Ellipse {
  Point center{0.0, 0.0, 0.0};
  std::array<double, 2> radii{0.7, 0.3};
};

struct Ellipsoid {
  Point center{0.0, 0.0, 0.0};
  std::array<double, 3> radii{0.7, 0.3, 0.5};
};

// Points within `radius` of the vertical segment center +- half_length*e_y.
struct Stadium {
  Point center{0.0, 0.0, 0.0};
  double half_length = 0.5;
  double radius = 0.2;
};

// Union of two equal discs.
struct TwoCircleUnion {
  Point c1{0.25 * std::sqrt(2.0), 0.0, 0.0};
  Point c2{-0.25 * std::sqrt(2.0), 0.0, 0.0};
  double radius = 0.5;
};

// A sampled level set with no closed form; only its sign is meaningful here.
struct LevelSetField {
  std::shared_ptr<const ScalarField> field;
};

using ImplicitShape = std::variant<Circle, Ellipse, Ellipsoid, Stadium, TwoCircleUnion, LevelSetField>;

inline int shape_dimension(const ImplicitShape& s) {
  if (std::holds_alternative<Ellipsoid>(s)) return 3;
  if (auto* f = std::get_if<LevelSetField>(&s)) return f->field->lattice().dim();
  return 2;
}

namespace detail {

inline double robust_length(double a, double b) {
  double m = std::max(std::abs(a), std::abs(b));
  if (m == 0.0) return 0.0;
  return m * std::sqrt((a / m) * (a / m) + (b / m) * (b / m));
}

inline double robust_length(double a, double b, double c) {
  double m = std::max({std::abs(a), std::abs(b), std::abs(c)});
  if (m == 0.0) return 0.0;
  return m * std::sqrt((a / m) * (a / m) + (b / m) * (b / m) + (c / m) * (c / m));
}

// Bisection on the Lagrange parameter of the distance problem (first
// quadrant, e0 >= e1). Runs until the bracket stops shrinking.
inline double ellipse_root(double r0, double z0, double z1, double g) {
  double n0 = r0 * z0;
  double s0 = z1 - 1.0;
  double s1 = g < 0 ? 0.0 : robust_length(n0, z1) - 1.0;
  double s = 0.0;
  for (int it = 0; it < 2200; ++it) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    double a = n0 / (s + r0), b = z1 / (s + 1.0);
    double gs = a * a + b * b - 1.0;
    if (gs > 0) s0 = s;
    else if (gs < 0) s1 = s;
    else break;
  }
  return s;
}

inline double ellipse_distance_q1(double e0, double e1, double y0, double y1, double& x0, double& x1) {
  if (y1 > 0) {
    if (y0 > 0) {
      double z0 = y0 / e0, z1 = y1 / e1;
      double g = z0 * z0 + z1 * z1 - 1.0;
      if (g != 0.0) {
        double r0 = (e0 / e1) * (e0 / e1);
        double sb = ellipse_root(r0, z0, z1, g);
        x0 = r0 * y0 / (sb + r0);
        x1 = y1 / (sb + 1.0);
        return std::hypot(x0 - y0, x1 - y1);
      }
      x0 = y0;
      x1 = y1;
      return 0.0;
    }
    x0 = 0.0;
    x1 = e1;
    return std::abs(y1 - e1);
  }
  double numer0 = e0 * y0, denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    double xd = numer0 / denom0;
    x0 = e0 * xd;
    x1 = e1 * std::sqrt(std::max(0.0, 1.0 - xd * xd));
    return std::hypot(x0 - y0, x1);
  }
  x0 = e0;
  x1 = 0.0;
  return std::abs(y0 - e0);
}

inline double ellipsoid_root(double r0, double r1, double z0, double z1, double z2, double g) {
  double n0 = r0 * z0, n1 = r1 * z1;
  double s0 = z2 - 1.0;
  double s1 = g < 0 ? 0.0 : robust_length(n0, n1, z2) - 1.0;
  double s = 0.0;
  for (int it = 0; it < 2200; ++it) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    double a = n0 / (s + r0), b = n1 / (s + r1), c = z2 / (s + 1.0);
    double gs = a * a + b * b + c * c - 1.0;
    if (gs > 0) s0 = s;
    else if (gs < 0) s1 = s;
    else break;
  }
  return s;
}

// First octant, e0 >= e1 >= e2.
inline double ellipsoid_distance_q1(const double e[3], const double y[3], double x[3]) {
  if (y[2] > 0) {
    if (y[1] > 0) {
      if (y[0] > 0) {
        double z0 = y[0] / e[0], z1 = y[1] / e[1], z2 = y[2] / e[2];
        double g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
        if (g != 0.0) {
          double r0 = (e[0] / e[2]) * (e[0] / e[2]), r1 = (e[1] / e[2]) * (e[1] / e[2]);
          double sb = ellipsoid_root(r0, r1, z0, z1, z2, g);
          x[0] = r0 * y[0] / (sb + r0);
          x[1] = r1 * y[1] / (sb + r1);
          x[2] = y[2] / (sb + 1.0);
          return robust_length(x[0] - y[0], x[1] - y[1], x[2] - y[2]);
        }
        for (int a = 0; a < 3; ++a) x[a] = y[a];
        return 0.0;
      }
      x[0] = 0.0;
      return ellipse_distance_q1(e[1], e[2], y[1], y[2], x[1], x[2]);
    }
    if (y[0] > 0) {
      x[1] = 0.0;
      return ellipse_distance_q1(e[0], e[2], y[0], y[2], x[0], x[2]);
    }
    x[0] = x[1] = 0.0;
    x[2] = e[2];
    return std::abs(y[2] - e[2]);
  }
  double d0 = e[0] * e[0] - e[2] * e[2], d1 = e[1] * e[1] - e[2] * e[2];
  double n0 = e[0] * y[0], n1 = e[1] * y[1];
  if (n0 < d0 && n1 < d1) {
    double xd0 = n0 / d0, xd1 = n1 / d1;
    double disc = 1.0 - xd0 * xd0 - xd1 * xd1;
    if (disc > 0) {
      x[0] = e[0] * xd0;
      x[1] = e[1] * xd1;
      x[2] = e[2] * std::sqrt(disc);
      return robust_length(x[0] - y[0], x[1] - y[1], x[2]);
    }
  }
  x[2] = 0.0;
  return ellipse_distance_q1(e[0], e[1], y[0], y[1], x[0], x[1]);
}

struct DistanceResult {
  double phi;  // signed, positive inside
  Point cp;    // closest point on the interface
};

inline DistanceResult exact(const Circle& c, const Point& x) {
  double dx = x[0] - c.center[0], dy = x[1] - c.center[1];
  double r = std::hypot(dx, dy);
  Point cp = r > 0 ? Point{c.center[0] + c.radius * dx / r, c.center[1] + c.radius * dy / r, 0.0}
                   : Point{c.center[0] + c.radius, c.center[1], 0.0};
  return {c.radius - r, cp};
}

inline DistanceResult exact(const Ellipse& e, const Point& x) {
  double y[2] = {x[0] - e.center[0], x[1] - e.center[1]};
  int big = e.radii[0] >= e.radii[1] ? 0 : 1, small = 1 - big;
  double x0, x1;
  double d = ellipse_distance_q1(e.radii[big], e.radii[small], std::abs(y[big]), std::abs(y[small]), x0, x1);
  double c[2];
  c[big] = std::copysign(x0, y[big]);
  c[small] = std::copysign(x1, y[small]);
  double q = (y[0] / e.radii[0]) * (y[0] / e.radii[0]) + (y[1] / e.radii[1]) * (y[1] / e.radii[1]);
  return {q < 1.0 ? d : -d, {c[0] + e.center[0], c[1] + e.center[1], 0.0}};
}

inline DistanceResult exact(const Ellipsoid& e, const Point& x) {
  int ord[3] = {0, 1, 2};
  std::sort(ord, ord + 3, [&](int a, int b) { return e.radii[a] > e.radii[b]; });
  double ee[3], yy[3], xx[3];
  double y[3];
  for (int a = 0; a < 3; ++a) y[a] = x[a] - e.center[a];
  for (int t = 0; t < 3; ++t) {
    ee[t] = e.radii[ord[t]];
    yy[t] = std::abs(y[ord[t]]);
  }
  double d = ellipsoid_distance_q1(ee, yy, xx);
  Point cp{};
  double q = 0.0;
  for (int t = 0; t < 3; ++t) {
    int a = ord[t];
    cp[a] = std::copysign(xx[t], y[a]) + e.center[a];
    q += (y[a] / e.radii[a]) * (y[a] / e.radii[a]);
  }
  return {q < 1.0 ? d : -d, cp};
}

inline DistanceResult exact(const Stadium& s, const Point& x) {
  double dx = x[0] - s.center[0];
  double dy = x[1] - s.center[1];
  double qy = std::clamp(dy, -s.half_length, s.half_length);
  double ry = dy - qy;
  double r = std::hypot(dx, ry);
  Point cp = r > 0 ? Point{s.center[0] + s.radius * dx / r, s.center[1] + qy + s.radius * ry / r, 0.0}
                   : Point{s.center[0] + s.radius, s.center[1] + qy, 0.0};
  return {s.radius - r, cp};
}

inline DistanceResult exact(const TwoCircleUnion& u, const Point& x) {
  const Point* c[2] = {&u.c1, &u.c2};
  double d[2];
  for (int i = 0; i < 2; ++i) d[i] = std::hypot(x[0] - (*c[i])[0], x[1] - (*c[i])[1]);
  auto radial = [&](int i) {
    double dx = x[0] - (*c[i])[0], dy = x[1] - (*c[i])[1];
    double r = d[i];
    if (r == 0) return Point{(*c[i])[0] + u.radius, (*c[i])[1], 0.0};
    return Point{(*c[i])[0] + u.radius * dx / r, (*c[i])[1] + u.radius * dy / r, 0.0};
  };
  bool inside = d[0] < u.radius || d[1] < u.radius;
  if (!inside) {
    int i = d[0] - u.radius <= d[1] - u.radius ? 0 : 1;
    return {u.radius - d[i], radial(i)};
  }
  // Inside: nearest point on the two exposed arcs, or on their shared corners.
  double best = std::numeric_limits<double>::infinity();
  Point bp{};
  for (int i = 0; i < 2; ++i) {
    Point p = radial(i);
    int o = 1 - i;
    double od = std::hypot(p[0] - (*c[o])[0], p[1] - (*c[o])[1]);
    if (od >= u.radius) {
      double dist = std::hypot(p[0] - x[0], p[1] - x[1]);
      if (dist < best) {
        best = dist;
        bp = p;
      }
    }
  }
  // corners: intersections of the two circles
  double cx = 0.5 * (u.c1[0] + u.c2[0]), cy = 0.5 * (u.c1[1] + u.c2[1]);
  double ax = u.c1[0] - u.c2[0], ay = u.c1[1] - u.c2[1];
  double half = 0.5 * std::hypot(ax, ay);
  if (half < u.radius) {
    double hh = std::sqrt(u.radius * u.radius - half * half);
    double px = -ay / (2 * half), py = ax / (2 * half);
    for (double sgn : {1.0, -1.0}) {
      Point p{cx + sgn * hh * px, cy + sgn * hh * py, 0.0};
      double dist = std::hypot(p[0] - x[0], p[1] - x[1]);
      if (dist < best) {
        best = dist;
        bp = p;
      }
    }
  }
  return {best, bp};
}

inline DistanceResult exact(const LevelSetField&, const Point&) {
  throw std::invalid_argument("exact_sdf: sampled level sets have no closed form");
}

}  // namespace detail

inline double exact_sdf(const ImplicitShape& s, const Point& x) {
  return std::visit([&](const auto& sh) { return detail::exact(sh, x).phi; }, s);
}

inline Point closest_point(const ImplicitShape& s, const Point& x) {
  return std::visit([&](const auto& sh) { return detail::exact(sh, x).cp; }, s);
}

// Distance field on a lattice. Inside the band |phi| < width the values are
// accurate; beyond it they are clamped to +-width with the correct sign.
struct NarrowBand {
  Lattice lattice;
  ScalarField phi;
  Mask valid;
  double width = 0.0;

  double heaviside_at(std::size_t i) const { return jsplice::heaviside(phi[i]); }
};

using BandPtr = std::shared_ptr<const NarrowBand>;

// Exact distances inside the band. A coarse pass uses the 1-Lipschitz bound to
// skip points that are certainly beyond it.
inline NarrowBand sample_sdf(const ImplicitShape& shape, const Lattice& lat, double width) {
  if (shape_dimension(shape) != lat.dim()) throw std::invalid_argument("sample_sdf: shape and lattice dimensions differ");
  if (!(width > 0)) throw std::invalid_argument("sample_sdf: band width must be positive");
  NarrowBand b{lat, ScalarField(lat), Mask(lat), width};
  const int stride = 4;
  int e = lat.extent();
  int d = lat.dim();
  auto snap = [&](int i) {
    int c = static_cast<int>(std::lround(static_cast<double>(i) / stride)) * stride;
    return std::min(c, e - 1);
  };
  std::vector<double> coarse(lat.size(), std::numeric_limits<double>::quiet_NaN());
  auto coarse_at = [&](std::size_t idx) {
    if (std::isnan(coarse[idx])) coarse[idx] = exact_sdf(shape, lat.coord(idx));
    return coarse[idx];
  };
  double h = lat.h();
  for (std::size_t i = 0; i < lat.size(); ++i) {
    auto c = lat.unravel(i);
    std::array<int, 3> s{snap(c[0]), snap(c[1]), d == 3 ? snap(c[2]) : 0};
    double dist2 = 0.0;
    for (int a = 0; a < d; ++a) dist2 += (s[a] - c[a]) * (s[a] - c[a]);
    double gap = std::sqrt(dist2) * h;
    double pc = coarse_at(lat.index(s[0], s[1], s[2]));
    if (std::abs(pc) - gap >= width) {
      b.phi[i] = std::copysign(width, pc);
      continue;
    }
    double p = exact_sdf(shape, lat.coord(i));
    if (std::abs(p) < width) {
      b.phi[i] = p;
      b.valid.set(i);
    } else {
      b.phi[i] = std::copysign(width, p);
    }
  }
  return b;
}

// Tensor Lagrange interpolant of degree 4 on a 5^d patch.
class QuarticPatch {
 public:
  explicit QuarticPatch(const ScalarField& f) : f_(f), lat_(f.lattice()) {
    if (lat_.extent() < 5) throw std::invalid_argument("QuarticPatch: lattice too small");
  }

  struct Eval {
    double value = 0.0;
    std::array<double, 3> grad{};
    std::array<std::array<double, 3>, 3> hess{};
  };

  // Patch start indices for a point: centred on the nearest node, shifted inward at the bounds.
  std::array<int, 3> base_for(const Point& x) const {
    std::array<int, 3> b{};
    for (int a = 0; a < lat_.dim(); ++a) {
      double t = (x[a] - lat_.grid.origin[a]) / lat_.h() - lat_.offset();
      b[a] = std::clamp(static_cast<int>(std::lround(t)) - 2, 0, lat_.extent() - 5);
    }
    return b;
  }

  bool patch_valid(const std::array<int, 3>& b, const Mask* valid) const {
    if (!valid) return true;
    int kk = lat_.dim() == 3 ? 5 : 1;
    for (int k = 0; k < kk; ++k)
      for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i)
          if (!(*valid)[lat_.index(b[0] + i, b[1] + j, b[2] + k)]) return false;
    return true;
  }

  Eval eval(const Point& x, const std::array<int, 3>& b, int derivs) const {
    int d = lat_.dim();
    double L[3][3][5];
    for (int a = 0; a < d; ++a) {
      double t = (x[a] - lat_.grid.origin[a]) / lat_.h() - lat_.offset() - b[a];
      basis(t, L[a][0], L[a][1], L[a][2]);
      for (int j = 0; j < 5; ++j) {
        L[a][1][j] /= lat_.h();
        L[a][2][j] /= lat_.h() * lat_.h();
      }
    }
    Eval r;
    if (d == 2) {
      for (int j = 0; j < 5; ++j) {
        const double* row = f_.data() + lat_.index(b[0], b[1] + j);
        double s0 = 0, s1 = 0, s2 = 0;
        for (int i = 0; i < 5; ++i) {
          s0 += row[i] * L[0][0][i];
          if (derivs > 0) s1 += row[i] * L[0][1][i];
          if (derivs > 1) s2 += row[i] * L[0][2][i];
        }
        r.value += s0 * L[1][0][j];
        if (derivs > 0) {
          r.grad[0] += s1 * L[1][0][j];
          r.grad[1] += s0 * L[1][1][j];
        }
        if (derivs > 1) {
          r.hess[0][0] += s2 * L[1][0][j];
          r.hess[0][1] += s1 * L[1][1][j];
          r.hess[1][1] += s0 * L[1][2][j];
        }
      }
      r.hess[1][0] = r.hess[0][1];
      return r;
    }
    for (int k = 0; k < 5; ++k)
      for (int j = 0; j < 5; ++j) {
        const double* row = f_.data() + lat_.index(b[0], b[1] + j, b[2] + k);
        double s0 = 0, s1 = 0, s2 = 0;
        for (int i = 0; i < 5; ++i) {
          s0 += row[i] * L[0][0][i];
          if (derivs > 0) s1 += row[i] * L[0][1][i];
          if (derivs > 1) s2 += row[i] * L[0][2][i];
        }
        double yz0 = L[1][0][j] * L[2][0][k];
        r.value += s0 * yz0;
        if (derivs > 0) {
          r.grad[0] += s1 * yz0;
          r.grad[1] += s0 * L[1][1][j] * L[2][0][k];
          r.grad[2] += s0 * L[1][0][j] * L[2][1][k];
        }
        if (derivs > 1) {
          r.hess[0][0] += s2 * yz0;
          r.hess[1][1] += s0 * L[1][2][j] * L[2][0][k];
          r.hess[2][2] += s0 * L[1][0][j] * L[2][2][k];
          r.hess[0][1] += s1 * L[1][1][j] * L[2][0][k];
          r.hess[0][2] += s1 * L[1][0][j] * L[2][1][k];
          r.hess[1][2] += s0 * L[1][1][j] * L[2][1][k];
        }
      }
    r.hess[1][0] = r.hess[0][1];
    r.hess[2][0] = r.hess[0][2];
    r.hess[2][1] = r.hess[1][2];
    return r;
  }

  double value(const Point& x) const { return eval(x, base_for(x), 0).value; }

 private:
  // Lagrange basis on nodes 0..4 with first and second derivatives.
  static void basis(double t, double* l0, double* l1, double* l2) {
    static const double denom[5] = {24.0, -6.0, 4.0, -6.0, 24.0};
    for (int j = 0; j < 5; ++j) {
      double f[4];
      int m = 0;
      for (int i = 0; i < 5; ++i)
        if (i != j) f[m++] = t - i;
      double p = f[0] * f[1] * f[2] * f[3];
      double d1 = f[1] * f[2] * f[3] + f[0] * f[2] * f[3] + f[0] * f[1] * f[3] + f[0] * f[1] * f[2];
      double d2 = 2.0 * (f[0] * f[1] + f[0] * f[2] + f[0] * f[3] + f[1] * f[2] + f[1] * f[3] + f[2] * f[3]);
      l0[j] = p / denom[j];
      l1[j] = d1 / denom[j];
      l2[j] = d2 / denom[j];
    }
  }

  const ScalarField& f_;
  Lattice lat_;
};

struct ReconstructStats {
  std::size_t points = 0;     // band points processed by Newton
  std::size_t restarts = 0;   // points that needed more than the nearest seed
  std::size_t fallbacks = 0;  // no Newton solution; distance to the nearest seed kept
  int max_iterations = 0;
};

struct ReconstructOptions {
  int max_newton = 30;
  int max_restarts = 8;  // seeds tried per point, the nearest included
  double max_fallback_fraction = 0.01;
};

// Signed distance on `target` from the zero set of the quartic interpolant of
// `level`. Seeds come from sign changes along lattice edges of `level`.
inline NarrowBand reconstruct_sdf(const ScalarField& level, const Lattice& target, double width,
                                  ReconstructStats* stats = nullptr, const ReconstructOptions& opt = {}) {
  const Lattice& in = level.lattice();
  if (in.dim() != target.dim()) throw std::invalid_argument("reconstruct_sdf: dimension mismatch");
  int d = in.dim();
  double h = in.h();
  QuarticPatch P(level);

  // Seeds projected once onto the interpolant's zero set along the gradient.
  std::vector<Point> seeds;
  auto str = in.strides();
  int e = in.extent();
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto c = in.unravel(i);
    for (int a = 0; a < d; ++a) {
      if (c[a] + 1 >= e) continue;
      std::size_t j = i + str[a];
      double p0 = level[i], p1 = level[j];
      if ((p0 >= 0) == (p1 >= 0)) continue;
      double t = p0 / (p0 - p1);
      Point x = in.coord(i);
      x[a] += t * h;
      for (int it = 0; it < 3; ++it) {
        auto ev = P.eval(x, P.base_for(x), 1);
        double g2 = 0;
        for (int b = 0; b < d; ++b) g2 += ev.grad[b] * ev.grad[b];
        if (g2 == 0) break;
        for (int b = 0; b < d; ++b) x[b] -= ev.value * ev.grad[b] / g2;
      }
      seeds.push_back(x);
    }
  }
  if (seeds.empty()) throw std::runtime_error("reconstruct_sdf: level set has no zero crossing");

  // Nearest seed for every target point within reach of one, by sweeping a box
  // around each seed. Points out of reach only need a sign, which the nearest
  // input sample gets right that far from the zero set.
  const double reach = width + 2 * h;
  std::vector<int> nearest(target.size(), -1);
  std::vector<double> nearest_d(target.size(), std::numeric_limits<double>::infinity());
  {
    const double th = target.h();
    const int te = target.extent();
    for (int sidx = 0; sidx < static_cast<int>(seeds.size()); ++sidx) {
      const Point& y = seeds[sidx];
      int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
      for (int a = 0; a < d; ++a) {
        double t = (y[a] - target.grid.origin[a]) / th - target.offset();
        lo[a] = std::max(0, static_cast<int>(std::floor(t - reach / th)));
        hi[a] = std::min(te - 1, static_cast<int>(std::ceil(t + reach / th)));
      }
      for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int i = lo[0]; i <= hi[0]; ++i) {
            std::size_t t = target.index(i, j, k);
            Point x = target.coord(t);
            double dd = 0;
            for (int a = 0; a < d; ++a) dd += (y[a] - x[a]) * (y[a] - x[a]);
            if (dd < nearest_d[t]) {
              nearest_d[t] = dd;
              nearest[t] = sidx;
            }
          }
    }
  }
  auto nearest_input = [&](const Point& x) {
    std::array<int, 3> c{};
    for (int a = 0; a < d; ++a) {
      double t = (x[a] - in.grid.origin[a]) / h - in.offset();
      c[a] = std::clamp(static_cast<int>(std::lround(t)), 0, e - 1);
    }
    return level[in.index(c[0], c[1], c[2])];
  };

  // seeds bucketed by input cell, for the restarts below
  std::unordered_map<std::int64_t, std::vector<int>> buckets;
  auto bucket_key = [&](const Point& y) {
    std::int64_t key = 0;
    for (int a = 0; a < d; ++a) {
      auto c = static_cast<std::int64_t>(std::floor((y[a] - in.grid.origin[a]) / h));
      key = key * (std::int64_t{1} << 20) + (c + (std::int64_t{1} << 19));
    }
    return key;
  };
  for (int k = 0; k < static_cast<int>(seeds.size()); ++k) buckets[bucket_key(seeds[k])].push_back(k);
  auto seeds_near = [&](const Point& x, double r) {
    std::vector<std::pair<double, int>> found;
    int reach_c = static_cast<int>(std::ceil(r / h));
    int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) {
      lo[a] = -reach_c;
      hi[a] = reach_c;
    }
    for (int k2 = lo[2]; k2 <= hi[2]; ++k2)
      for (int k1 = lo[1]; k1 <= hi[1]; ++k1)
        for (int k0 = lo[0]; k0 <= hi[0]; ++k0) {
          Point y = x;
          int off[3] = {k0, k1, k2};
          for (int a = 0; a < d; ++a) y[a] += off[a] * h;
          auto it = buckets.find(bucket_key(y));
          if (it == buckets.end()) continue;
          for (int k : it->second) {
            double t2 = 0;
            for (int a = 0; a < d; ++a) t2 += (seeds[k][a] - x[a]) * (seeds[k][a] - x[a]);
            if (t2 <= r * r) found.emplace_back(std::sqrt(t2), k);
          }
        }
    std::sort(found.begin(), found.end());
    return found;
  };

  // Newton on the first-order conditions for min |y - x| subject to P(y) = 0,
  // started at a seed. One polynomial patch at a time; the piecewise
  // interpolant is only continuous, so stepping across patch seams can cycle.
  // On convergence the patch is re-chosen at y, a few times at most.
  auto project = [&](const Point& x, Point y, double& dist, int& it) {
    auto ev = P.eval(y, P.base_for(y), 2);
    double g2 = 0, lam = 0;
    for (int a = 0; a < d; ++a) {
      g2 += ev.grad[a] * ev.grad[a];
      lam += (x[a] - y[a]) * ev.grad[a];
    }
    lam = g2 > 0 ? lam / g2 : 0.0;
    bool ok = false;
    int switches = 0;
    auto base = P.base_for(y);
    for (it = 0; it < opt.max_newton; ++it) {
      ev = P.eval(y, base, 2);
      // residual and Jacobian of [y - x + lam grad P ; P]
      double r[4], J[4][4];
      int m = d + 1;
      for (int a = 0; a < d; ++a) {
        r[a] = y[a] - x[a] + lam * ev.grad[a];
        for (int b = 0; b < d; ++b) J[a][b] = (a == b ? 1.0 : 0.0) + lam * ev.hess[a][b];
        J[a][d] = ev.grad[a];
        J[d][a] = ev.grad[a];
      }
      r[d] = ev.value;
      J[d][d] = 0.0;
      // Gaussian elimination with partial pivoting
      double A[4][5];
      for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) A[a][b] = J[a][b];
        A[a][m] = -r[a];
      }
      bool singular = false;
      for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int row = col + 1; row < m; ++row)
          if (std::abs(A[row][col]) > std::abs(A[piv][col])) piv = row;
        if (A[piv][col] == 0.0) {
          singular = true;
          break;
        }
        if (piv != col)
          for (int b = 0; b <= m; ++b) std::swap(A[piv][b], A[col][b]);
        for (int row = col + 1; row < m; ++row) {
          double f = A[row][col] / A[col][col];
          for (int b = col; b <= m; ++b) A[row][b] -= f * A[col][b];
        }
      }
      if (singular) break;
      double dx[4];
      for (int row = m - 1; row >= 0; --row) {
        double sacc = A[row][m];
        for (int b = row + 1; b < m; ++b) sacc -= A[row][b] * dx[b];
        dx[row] = sacc / A[row][row];
      }
      double step = 0;
      for (int a = 0; a < d; ++a) {
        y[a] += dx[a];
        step = std::max(step, std::abs(dx[a]));
      }
      lam += dx[d];
      if (step < 1e-13 * std::max(1.0, h * in.grid.n)) {
        auto nb = P.base_for(y);
        if (nb == base || switches >= 3) {
          ok = true;
          ++it;
          break;
        }
        base = nb;
        ++switches;
      }
    }
    if (!ok) return false;
    dist = 0;
    for (int a = 0; a < d; ++a) dist += (y[a] - x[a]) * (y[a] - x[a]);
    dist = std::sqrt(dist);
    return true;
  };

  NarrowBand out{target, ScalarField(target), Mask(target), width};
  ReconstructStats st;
  for (std::size_t i = 0; i < target.size(); ++i) {
    Point x = target.coord(i);
    int s = nearest[i];
    double sd = s < 0 ? reach + 1.0 : std::sqrt(nearest_d[i]);
    if (sd > reach) {
      out.phi[i] = nearest_input(x) >= 0 ? width : -width;
      continue;
    }
    double sign_val = P.value(x);
    double sgn = sign_val >= 0 ? 1.0 : -1.0;
    if (s < 0 || sd > reach) {
      out.phi[i] = sgn * width;
      continue;
    }
    ++st.points;
    // nearest seed first; it is almost always enough
    double dist = 0;
    int it = 0;
    bool ok = project(x, seeds[s], dist, it);
    st.max_iterations = std::max(st.max_iterations, it);
    // The seed is on the zero set, so the true distance is at most sd, give or
    // take the small disagreement between neighbouring patches. Failing or
    // landing clearly farther means x sits near the medial axis: restart from
    // other seeds and keep the smallest distance, ties to the nearer seed.
    const double slack = 0.1 * h;
    if (!ok || dist > sd + slack) {
      ++st.restarts;
      auto cand = seeds_near(x, sd + 2 * h);
      std::vector<Point> tried{seeds[s]};
      double best = ok ? dist : std::numeric_limits<double>::infinity();
      for (const auto& [dd, k] : cand) {
        if (static_cast<int>(tried.size()) >= opt.max_restarts) break;
        bool close = false;
        for (const auto& q : tried) {
          double t2 = 0;
          for (int a = 0; a < d; ++a) t2 += (q[a] - seeds[k][a]) * (q[a] - seeds[k][a]);
          close = close || t2 < 0.25 * h * h;
        }
        if (close) continue;
        tried.push_back(seeds[k]);
        double dk = 0;
        int itk = 0;
        if (project(x, seeds[k], dk, itk) && dk < best) best = dk;
        st.max_iterations = std::max(st.max_iterations, itk);
      }
      ok = best <= sd + slack;
      dist = best;
    }
    if (!ok) {
      // no Newton solution beat the nearest seed; its distance is within
      // O(h^2 / sd) of the truth
      ++st.fallbacks;
      dist = sd;
    }
    if (dist < width) {
      out.phi[i] = sgn * dist;
      out.valid.set(i);
    } else {
      out.phi[i] = sgn * width;
    }
  }
  if (st.points > 0 && static_cast<double>(st.fallbacks) > opt.max_fallback_fraction * st.points)
    throw std::runtime_error("reconstruct_sdf: Newton projection failed at " + std::to_string(st.fallbacks) + " of " +
                             std::to_string(st.points) + " band points");
  if (stats) *stats = st;
  return out;
}

struct CurvatureField {
  ScalarField kappa;
  Mask valid;
  std::size_t clamped = 0;
};

// kappa = Laplacian of the distance, fourth order, on band points whose whole
// stencil lies in the band; clamped to |kappa| <= 1/(2h).
inline CurvatureField curvature(const NarrowBand& band) {
  auto op = laplacian9_4(band.lattice, true);
  CurvatureField c{ScalarField(band.lattice), Mask(band.lattice), 0};
  double cap = 0.5 / band.lattice.h();
  for (std::size_t i = 0; i < band.phi.size(); ++i) {
    if (!band.valid[i]) continue;
    bool ok = true;
    double s = 0.0;
    op.taps(i, 0, [&](int, std::size_t k, double w) {
      ok = ok && band.valid[k];
      s += w * band.phi[k];
    });
    if (!ok) continue;
    if (std::abs(s) > cap) {
      s = std::copysign(cap, s);
      ++c.clamped;
    }
    c.kappa[i] = s;
    c.valid.set(i);
  }
  return c;
}

// Fourth-order gradient of the distance on band points whose stencil is in the band.
inline VectorField band_normals(const NarrowBand& band, Mask* valid_out = nullptr) {
  auto op = gradient4(band.lattice, true);
  int d = band.lattice.dim();
  VectorField n(band.lattice, d);
  Mask valid(band.lattice);
  for (std::size_t i = 0; i < band.phi.size(); ++i) {
    if (!band.valid[i]) continue;
    bool ok = true;
    for (int a = 0; a < d && ok; ++a) {
      double s = 0.0;
      op.taps(i, a, [&](int, std::size_t k, double w) {
        ok = ok && band.valid[k];
        s += w * band.phi[k];
      });
      n[a][i] = s;
    }
    if (ok) valid.set(i);
  }
  if (valid_out) *valid_out = std::move(valid);
  return n;
}

}  // namespace jsplice
