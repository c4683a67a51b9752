#pragma once

// Jump data, the bootstrapped jump extrapolation, and spliced operators.
//
// A splice evaluates D u ~ D u - D(vH) + (D v)H, which is D u plus
// sum_k w_k v_k (H_out - H_k). Only outputs whose taps cross the interface
// get a correction, so away from it the result is the plain operator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"
#include "stencil.hpp"

namespace jsplice {

class band_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One kind of jump ([u], [du/dn], [Lap u] or [d/dn Lap u]) for every component.
// An empty component list means the jump is identically zero.
struct JumpData {
  std::vector<ScalarField> comp;
  Mask avail;

  static JumpData zero() { return {}; }
  bool is_zero() const { return comp.empty(); }
  double at(int c, std::size_t i) const { return comp.empty() ? 0.0 : comp[c][i]; }
  bool available(std::size_t i) const { return comp.empty() || avail[i]; }
};

struct JumpSet {
  int components = 1;
  JumpData g0, g1, g_lap, g_dn_lap;

  JumpData& operator[](int k) { return k == 0 ? g0 : k == 1 ? g1 : k == 2 ? g_lap : g_dn_lap; }
  const JumpData& operator[](int k) const { return k == 0 ? g0 : k == 1 ? g1 : k == 2 ? g_lap : g_dn_lap; }
};

inline JumpData linear_combination(double a, const JumpData& x, double b, const JumpData& y) {
  if (x.is_zero() && y.is_zero()) return {};
  const JumpData& ref = x.is_zero() ? y : x;
  JumpData r;
  r.avail = Mask(ref.avail.lattice(), true);
  for (std::size_t c = 0; c < ref.comp.size(); ++c) {
    ScalarField f(ref.comp[c].lattice());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = a * x.at(static_cast<int>(c), i) + b * y.at(static_cast<int>(c), i);
    r.comp.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < r.avail.size(); ++i) r.avail.set(i, x.available(i) && y.available(i));
  return r;
}

inline JumpSet linear_combination(double a, const JumpSet& x, double b, const JumpSet& y) {
  if (x.components != y.components) throw std::invalid_argument("linear_combination: component counts differ");
  JumpSet r;
  r.components = x.components;
  for (int k = 0; k < 4; ++k) r[k] = linear_combination(a, x[k], b, y[k]);
  return r;
}

struct ExtrapolationOptions {
  int q = 3;
  // Band b (absolute). If zero it is derived from the consumer reach.
  double width = 0.0;
  // Reach of the operators that will use the extrapolation, in units of h.
  double consumer_reach = 1.0;
};

// Width the jump data must cover so that the last stage reaches `reach`*h.
inline double extrapolation_width(int q, double reach, double h) {
  if (q < 0 || q > 3) throw std::invalid_argument("extrapolation order must be in 0..3");
  return q <= 2 ? reach * h + 2.0 * q * h : reach * h + 8.0 * h;
}

struct JumpExtrapolation {
  BandPtr band;
  int q = 3;
  int components = 1;
  double width = 0.0;
  std::vector<ScalarField> v;
  std::vector<ScalarField> a1;
  // 0: unset, k+1: v holds the order-k extension at this point
  std::vector<std::uint8_t> level;

  const Lattice& lattice() const { return band->lattice; }
  bool has_order(std::size_t i, int k) const { return level[i] >= k + 1; }
};

namespace detail {

using Set = std::vector<std::uint8_t>;

template <class Op>
void add_footprint(const Op& op, const Set& src, Set& dst, int comps) {
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i]) continue;
    dst[i] = 1;
    for (int c = 0; c < comps; ++c) op.taps(i, c, [&](int, std::size_t k, double) { dst[k] = 1; });
  }
}

inline std::size_t count_missing(const Set& need, const JumpData& g) {
  if (g.is_zero()) return 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < need.size(); ++i) m += need[i] && !g.avail[i];
  return m;
}

inline void fail_coverage(const char* what, std::size_t missing, double needed_width, double h) {
  std::ostringstream os;
  os << "jump extrapolation: " << what << " is missing at " << missing << " points required within |phi| < "
     << needed_width / h << "h; widen the band or the jump data";
  throw band_error(os.str());
}

}  // namespace detail

// Bootstrapped extrapolation of order q from jump data sampled on the band.
// Each stage reads only values produced by the previous stage; the sets it
// runs on are grown backwards from the final band so nothing is read stale.
inline JumpExtrapolation build_extrapolation(const BandPtr& band, const JumpSet& g, const ExtrapolationOptions& opt = {}) {
  const Lattice& L = band->lattice;
  const double h = L.h();
  const int q = opt.q;
  const double b = opt.width > 0 ? opt.width : extrapolation_width(q, opt.consumer_reach, h);
  if (b > band->width + 1e-12 * h)
    throw band_error("jump extrapolation: requested width " + std::to_string(b / h) + "h exceeds the band (" +
                     std::to_string(band->width / h) + "h)");
  if (q < 0 || q > 3) throw std::invalid_argument("extrapolation order must be in 0..3");
  const int m = g.components;
  const std::size_t N = L.size();
  auto grad = gradient4(L, true);
  auto lap = laplacian9_4(L, true);
  const int d = L.dim();
  const double shrink[4] = {0.0, 2.0 * h, 4.0 * h, 8.0 * h};

  using detail::Set;
  std::vector<Set> T(q + 1, Set(N, 0));
  for (std::size_t i = 0; i < N; ++i) {
    if (!band->valid[i]) continue;
    double a = std::abs(band->phi[i]);
    // a small slack keeps points exactly at the nominal edge inside
    for (int k = 0; k <= q; ++k) T[k][i] = a < b - shrink[k] + 1e-6 * h;
  }
  std::vector<Set> R(q + 1);
  Set Q3;
  R[q] = T[q];
  if (q == 3) {
    Q3 = Set(N, 0);
    detail::add_footprint(grad, R[3], Q3, d);
    R[2] = T[2];
    detail::add_footprint(lap, Q3, R[2], 1);
    for (std::size_t i = 0; i < N; ++i) R[2][i] |= R[3][i];
  }
  if (q >= 2) {
    R[1] = T[1];
    detail::add_footprint(lap, R[2], R[1], 1);
  }
  if (q >= 1) {
    R[0] = T[0];
    detail::add_footprint(grad, R[1], R[0], d);
  }

  // coverage checks
  Set need_phi(N, 0), need_n(N, 0);
  for (int k = 1; k <= q; ++k)
    for (std::size_t i = 0; i < N; ++i) need_phi[i] |= R[k][i];
  for (std::size_t i = 0; i < N; ++i) need_n[i] = (q >= 1 && R[1][i]) || (q == 3 && R[3][i]);
  detail::add_footprint(grad, need_n, need_phi, d);
  {
    std::size_t miss = 0;
    for (std::size_t i = 0; i < N; ++i) miss += need_phi[i] && !band->valid[i];
    if (miss) detail::fail_coverage("the distance field", miss, b, h);
  }
  const char* names[4] = {"[u]", "[du/dn]", "[Lap u]", "[d/dn Lap u]"};
  for (int k = 0; k <= q; ++k) {
    auto miss = detail::count_missing(R[k], g[k]);
    if (miss) detail::fail_coverage(names[k], miss, b - shrink[k], h);
  }

  JumpExtrapolation ext;
  ext.band = band;
  ext.q = q;
  ext.components = m;
  ext.width = b;
  ext.level.assign(N, 0);
  for (int c = 0; c < m; ++c) {
    ext.v.emplace_back(L);
    ext.a1.emplace_back(L);
  }
  const ScalarField& phi = band->phi;

  VectorField nrm(L, d);
  for (std::size_t i = 0; i < N; ++i)
    if (need_n[i])
      for (int a = 0; a < d; ++a) nrm[a][i] = apply_at(grad, phi, i, a);

  for (std::size_t i = 0; i < N; ++i)
    if (R[0][i]) {
      ext.level[i] = 1;
      for (int c = 0; c < m; ++c) ext.v[c][i] = g.g0.at(c, i);
    }
  if (q >= 1) {
    for (int c = 0; c < m; ++c) {
      ScalarField& v = ext.v[c];
      for (std::size_t i = 0; i < N; ++i) {
        if (!R[1][i]) continue;
        double dn = 0.0;
        for (int a = 0; a < d; ++a) dn += apply_at(grad, v, i, a) * nrm[a][i];
        ext.a1[c][i] = g.g1.at(c, i) - dn;
      }
      for (std::size_t i = 0; i < N; ++i)
        if (R[1][i]) v[i] += ext.a1[c][i] * phi[i];
    }
    for (std::size_t i = 0; i < N; ++i)
      if (R[1][i]) ext.level[i] = 2;
  }
  if (q >= 2) {
    std::vector<double> a2(N);
    for (int c = 0; c < m; ++c) {
      ScalarField& v = ext.v[c];
      for (std::size_t i = 0; i < N; ++i) {
        if (!R[2][i]) continue;
        a2[i] = g.g_lap.at(c, i) - apply_at(lap, v, i) + apply_at(lap, ext.a1[c], i) * phi[i];
      }
      for (std::size_t i = 0; i < N; ++i)
        if (R[2][i]) v[i] += 0.5 * a2[i] * phi[i] * phi[i];
    }
    for (std::size_t i = 0; i < N; ++i)
      if (R[2][i]) ext.level[i] = 3;
  }
  if (q == 3) {
    ScalarField lv(L);
    std::vector<double> a3(N);
    for (int c = 0; c < m; ++c) {
      ScalarField& v = ext.v[c];
      for (std::size_t i = 0; i < N; ++i)
        if (Q3[i]) lv[i] = apply_at(lap, v, i);
      for (std::size_t i = 0; i < N; ++i) {
        if (!R[3][i]) continue;
        double dn = 0.0;
        for (int a = 0; a < d; ++a) dn += apply_at(grad, lv, i, a) * nrm[a][i];
        a3[i] = g.g_dn_lap.at(c, i) - dn;
      }
      for (std::size_t i = 0; i < N; ++i)
        if (R[3][i]) v[i] += a3[i] * phi[i] * phi[i] * phi[i] / 6.0;
    }
    for (std::size_t i = 0; i < N; ++i)
      if (R[3][i]) ext.level[i] = 4;
  }
  return ext;
}

// The jump operator: jump data in, extension of order q out.
inline JumpExtrapolation jump_operator_apply(const BandPtr& band, const JumpSet& g, int q, double width = 0.0) {
  ExtrapolationOptions o;
  o.q = q;
  o.width = width;
  return build_extrapolation(band, g, o);
}

// Truncated normal Taylor series sum_i gbar_i phi^i / i!, where gbar_i is the
// i-th normal-derivative jump taken at the closest point of each band point.
// jump(i, cp, component) supplies [d^i u / dn^i] at an interface point.
inline JumpExtrapolation canonical_extrapolation(const BandPtr& band, const std::function<Point(const Point&)>& cp,
                                                 const std::function<double(int, const Point&, int)>& jump, int q,
                                                 int components = 1) {
  const Lattice& L = band->lattice;
  JumpExtrapolation ext;
  ext.band = band;
  ext.q = q;
  ext.components = components;
  ext.width = band->width;
  ext.level.assign(L.size(), 0);
  for (int c = 0; c < components; ++c) {
    ext.v.emplace_back(L);
    ext.a1.emplace_back(L);
  }
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!band->valid[i]) continue;
    Point y = cp(L.coord(i));
    double p = band->phi[i];
    for (int c = 0; c < components; ++c) {
      double s = 0.0, term = 1.0;
      for (int k = 0; k <= q; ++k) {
        s += jump(k, y, c) * term;
        term *= p / (k + 1);
      }
      ext.v[c][i] = s;
    }
    ext.level[i] = static_cast<std::uint8_t>(q + 1);
  }
  return ext;
}

// Jumps of vH read back from an extension v with fourth-order stencils,
// available wherever every needed value was order-q.
inline JumpSet extension_jumps(const JumpExtrapolation& ext) {
  const Lattice& L = ext.lattice();
  const std::size_t N = L.size();
  auto grad = gradient4(L, true);
  auto lap = laplacian9_4(L, true);
  int d = L.dim();
  const NarrowBand& band = *ext.band;
  JumpSet g;
  g.components = ext.components;
  for (int k = 0; k < 4; ++k) g[k].avail = Mask(L);
  Mask full(L);
  for (std::size_t i = 0; i < N; ++i) full.set(i, ext.has_order(i, ext.q));
  auto taps_in = [&](const auto& op, std::size_t i, int comps, const Mask& m) {
    bool ok = true;
    for (int c = 0; c < comps; ++c) op.taps(i, c, [&](int, std::size_t k, double) { ok = ok && m[k]; });
    return ok && m[i];
  };
  Mask lap_ok(L), grad_ok(L), band_grad_ok(L);
  for (std::size_t i = 0; i < N; ++i) {
    lap_ok.set(i, taps_in(lap, i, 1, full));
    grad_ok.set(i, taps_in(grad, i, d, full));
    band_grad_ok.set(i, taps_in(grad, i, d, band.valid));
  }
  Mask dnlap_ok(L);
  for (std::size_t i = 0; i < N; ++i) dnlap_ok.set(i, taps_in(grad, i, d, lap_ok) && band_grad_ok[i]);
  for (int c = 0; c < ext.components; ++c) {
    const ScalarField& v = ext.v[c];
    ScalarField g0(L), g1(L), gl(L), gdl(L);
    ScalarField lv(L);
    for (std::size_t i = 0; i < N; ++i)
      if (lap_ok[i]) lv[i] = apply_at(lap, v, i);
    for (std::size_t i = 0; i < N; ++i) {
      if (!full[i]) continue;
      g0[i] = v[i];
      if (grad_ok[i] && band_grad_ok[i]) {
        double s = 0;
        for (int a = 0; a < d; ++a) s += apply_at(grad, v, i, a) * apply_at(grad, band.phi, i, a);
        g1[i] = s;
      }
      gl[i] = lv[i];
      if (dnlap_ok[i]) {
        double s = 0;
        for (int a = 0; a < d; ++a) s += apply_at(grad, lv, i, a) * apply_at(grad, band.phi, i, a);
        gdl[i] = s;
      }
    }
    g.g0.comp.push_back(std::move(g0));
    g.g1.comp.push_back(std::move(g1));
    g.g_lap.comp.push_back(std::move(gl));
    g.g_dn_lap.comp.push_back(std::move(gdl));
  }
  for (std::size_t i = 0; i < N; ++i) {
    g.g0.avail.set(i, full[i]);
    g.g1.avail.set(i, grad_ok[i] && band_grad_ok[i]);
    g.g_lap.avail.set(i, lap_ok[i]);
    g.g_dn_lap.avail.set(i, dnlap_ok[i]);
  }
  return g;
}

// Largest tap distance of an operator, in units of h.
template <class Op>
double op_reach(const Op& op) {
  if constexpr (std::is_same_v<Op, AxisSumOp>) {
    return std::max(op.axis_stencil().accuracy() + op.axis_stencil().deriv() - 1.0, 1.0);
  } else if constexpr (std::is_same_v<Op, GradientOp>) {
    return std::max(op.part(0).axis_stencil().accuracy() + 0.0, 1.0);
  } else {
    return std::sqrt(static_cast<double>(op.input().dim()));
  }
}

// Correction sum_k w_k v_k (H_out - H_k) at every output whose taps straddle
// the interface; zero elsewhere. The taps that cross must carry an extension
// of at least the operator's order.
template <class Op>
VectorField splice_correction(const Op& op, const JumpExtrapolation& ext, const NarrowBand& band_out,
                              std::size_t* touched = nullptr) {
  const NarrowBand& band_in = *ext.band;
  require_same_lattice(op.input(), band_in.lattice, "splice_correction input");
  require_same_lattice(op.output(), band_out.lattice, "splice_correction output");
  if (ext.components != op.in_components())
    throw std::invalid_argument("splice_correction: extension has the wrong number of components");
  int need = std::min(op.info().q, 3);
  if (ext.q < need)
    throw band_error("splice: operator '" + op.info().name + "' needs an order-" + std::to_string(need) +
                     " extension, got order " + std::to_string(ext.q));
  const double reach = (op_reach(op) + 1e-9) * op.input().h() * std::sqrt(static_cast<double>(op.input().dim()));
  VectorField c(op.output(), op.out_components());
  std::size_t n = op.output().size(), count = 0, bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double po = band_out.phi[i];
    if (std::abs(po) > reach) continue;
    if (!op.defined(i)) continue;
    double h0 = heaviside(po);
    bool any = false;
    for (int oc = 0; oc < op.out_components(); ++oc) {
      double s = 0.0;
      op.taps(i, oc, [&](int ic, std::size_t k, double w) {
        double dh = h0 - heaviside(band_in.phi[k]);
        if (dh == 0.0) return;
        any = true;
        if (!ext.has_order(k, need)) ++bad;
        s += w * ext.v[ic][k] * dh;
      });
      c[oc][i] = s;
    }
    count += any;
  }
  if (bad)
    throw band_error("splice: " + std::to_string(bad) + " taps of '" + op.info().name +
                     "' cross the interface outside the extension band");
  if (touched) *touched = count;
  return c;
}

template <class Op>
VectorField spliced_apply(const Op& op, const std::vector<const ScalarField*>& u, const JumpExtrapolation& ext,
                          const NarrowBand& band_out) {
  VectorField r = jsplice::apply(op, u);
  VectorField c = splice_correction(op, ext, band_out);
  for (int k = 0; k < r.components(); ++k)
    for (std::size_t i = 0; i < r[k].size(); ++i) r[k][i] += c[k][i];
  return r;
}

template <class Op>
ScalarField spliced_apply(const Op& op, const ScalarField& u, const JumpExtrapolation& ext) {
  return std::move(spliced_apply(op, {&u}, ext, *ext.band).comp[0]);
}

// (u^{n+1} - u^n - v^{n+1}(H^{n+1} - H^n)) / dt
inline ScalarField spliced_time_derivative(const ScalarField& un, const ScalarField& unp1, const ScalarField& vnp1,
                                           const NarrowBand& band_n, const NarrowBand& band_np1, double dt) {
  ScalarField r(un.lattice());
  for (std::size_t i = 0; i < r.size(); ++i) {
    double dh = heaviside(band_np1.phi[i]) - heaviside(band_n.phi[i]);
    r[i] = (unp1[i] - un[i] - vnp1[i] * dh) / dt;
  }
  return r;
}

}  // namespace jsplice
