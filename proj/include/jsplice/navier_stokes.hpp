#pragma once

// Incompressible two-phase flow with surface tension on [0,1]^2.
//
// Staggered layout: u and phi on cells, p and psi on nodes. One step is the
// approximate projection method with every operator spliced against the
// current interface, plus temporal splices where H(phi) flips between steps.
// Jumps of the intermediate u* and psi come from the jump operator algebra:
//   v_* = v_u^{n+1} + dt/rho (G v_p^{n+1} - G v_p^n),   v_psi = v_p^{n+1} - v_p^n.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "elliptic.hpp"
#include "geometry.hpp"
#include "grid.hpp"
#include "multigrid.hpp"
#include "quadrature.hpp"
#include "splice.hpp"
#include "stencil.hpp"

namespace jsplice {

struct FlowParams {
  double rho = 1.0;
  double mu = 0.1;
  double sigma = 1.0;
};

enum class ForceModel { spliced, smoothed_delta };

struct StepPlan {
  double dt = 0.0;         // 0 selects dt = h^2
  // overwrite phi by its distance field this often (steps). Not every step:
  // repeated closest-point reconstruction amplifies grid-scale modes.
  int reinit_period = 16;
  double band = 16.0;      // distance band half-width, in h
  double cfl = 0.5;        // max|u| dt <= cfl h
  double capillary = 1.0 / std::sqrt(2.0 * std::numbers::pi);  // dt <= c h^1.5 sqrt(rho/sigma)
  ForceModel force = ForceModel::spliced;
  double delta_eps = 2.0;  // smoothed delta half-width, in h
  SolverOptions solver;
};

struct FlowState {
  Lattice cells, nodes;
  VectorField u;     // cells
  ScalarField p;     // nodes
  ScalarField phi;   // cells; level set, banded, not kept a distance field
  BandPtr sdf;       // distance field of phi on cells
  BandPtr sdf_node;  // and on nodes
  double t = 0.0;
  long step = 0;
};

struct StepInfo {
  int helmholtz_cycles = 0;
  int poisson_cycles = 0;
  std::size_t kappa_clamped = 0;
  std::size_t reconstruct_fallbacks = 0;
  double max_divergence = 0.0;  // spliced, after projection
};

class flow_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double capillary_dt_bound(double h, const FlowParams& fp, double c) {
  if (fp.sigma <= 0) return std::numeric_limits<double>::infinity();
  return c * std::pow(h, 1.5) * std::sqrt(fp.rho / fp.sigma);
}

namespace detail {

// Value of op at i if all its taps are in m.
template <class Op>
bool masked_apply(const Op& op, const ScalarField& f, const Mask& m, std::size_t i, int comp, double& out) {
  if (!op.defined(i)) return false;
  bool ok = true;
  double s = 0.0;
  op.taps(i, comp, [&](int, std::size_t k, double w) {
    ok = ok && m[k];
    s += w * f[k];
  });
  out = s;
  return ok;
}

// Cells around node (I,J); false on the box boundary.
inline bool node_cells(const Lattice& nodes, const Lattice& cells, std::size_t ni, std::size_t out[4]) {
  auto c = nodes.unravel(ni);
  int n = cells.extent();
  if (c[0] == 0 || c[1] == 0 || c[0] == n || c[1] == n) return false;
  int t = 0;
  for (int dj = 0; dj < 2; ++dj)
    for (int di = 0; di < 2; ++di) out[t++] = cells.index(c[0] - 1 + di, c[1] - 1 + dj);
  return true;
}

inline double eno_pick(double a, double b) { return std::abs(a) <= std::abs(b) ? a : b; }

// Second-order ENO derivative from w[0..4] = values at offsets -2..2.
inline double eno_derivative(const double* w, double vel, double h) {
  double ih = 1.0 / h;
  if (vel > 0) {
    double c = eno_pick(w[3] - 2 * w[2] + w[1], w[2] - 2 * w[1] + w[0]);
    return (w[2] - w[1]) * ih + 0.5 * c * ih;
  }
  double c = eno_pick(w[3] - 2 * w[2] + w[1], w[4] - 2 * w[3] + w[2]);
  return (w[3] - w[2]) * ih - 0.5 * c * ih;
}

inline JumpExtrapolation single_component(const JumpExtrapolation& e, int c) {
  JumpExtrapolation r;
  r.band = e.band;
  r.q = e.q;
  r.components = 1;
  r.width = e.width;
  r.v = {e.v[c]};
  r.a1 = {ScalarField(e.lattice())};
  r.level = e.level;
  return r;
}

}  // namespace detail

struct SurfaceTensionJumps {
  JumpSet u;  // cells, two components
  JumpSet p;  // nodes
  CurvatureField kappa;
};

// Jumps of u and p at one time level. kappa = Lap4 of the nodal distance;
// [Lap u] = (1/mu)(G f - (G f . n) n), [d/dn Lap u] = -(div g) n - g . grad n,
// [p] = f = -sigma kappa, [d/dn Lap p] = -2 rho (n . grad u . g).
inline SurfaceTensionJumps surface_tension_jumps(const NarrowBand& cell, const NarrowBand& node, const VectorField& u,
                                                 const FlowParams& fp) {
  const Lattice& C = cell.lattice;
  const Lattice& N = node.lattice;
  if (C.dim() != 2) throw std::invalid_argument("surface_tension_jumps: two-dimensional only");
  const double h = C.h();
  SurfaceTensionJumps J;
  J.kappa = curvature(node);
  ScalarField f(N);
  for (std::size_t i = 0; i < N.size(); ++i) f[i] = -fp.sigma * J.kappa.kappa[i];

  auto g2c = gradient2(C, true);
  auto gn2c = grad_node_to_cell(N);
  VectorField n(C, 2), gl(C, 2), gdl(C, 2);
  Mask nv(C), glv(C), gdlv(C);
  for (std::size_t i = 0; i < C.size(); ++i) {
    if (!cell.valid[i]) continue;
    double a0, a1, f0, f1;
    if (!detail::masked_apply(g2c, cell.phi, cell.valid, i, 0, a0) ||
        !detail::masked_apply(g2c, cell.phi, cell.valid, i, 1, a1))
      continue;
    n[0][i] = a0;
    n[1][i] = a1;
    nv.set(i);
    if (!detail::masked_apply(gn2c, f, J.kappa.valid, i, 0, f0) ||
        !detail::masked_apply(gn2c, f, J.kappa.valid, i, 1, f1))
      continue;
    double fn = f0 * a0 + f1 * a1;
    gl[0][i] = (f0 - fn * a0) / fp.mu;
    gl[1][i] = (f1 - fn * a1) / fp.mu;
    glv.set(i);
  }
  for (std::size_t i = 0; i < C.size(); ++i) {
    if (!glv[i]) continue;
    double dg[2][2], dn[2][2];
    bool ok = true;
    for (int a = 0; a < 2 && ok; ++a)
      for (int b = 0; b < 2 && ok; ++b) {
        ok = detail::masked_apply(g2c, gl[b], glv, i, a, dg[a][b]) && detail::masked_apply(g2c, n[b], nv, i, a, dn[a][b]);
      }
    if (!ok) continue;
    double div = dg[0][0] + dg[1][1];
    for (int b = 0; b < 2; ++b) gdl[b][i] = -div * n[b][i] - (gl[0][i] * dn[0][b] + gl[1][i] * dn[1][b]);
    gdlv.set(i);
  }
  J.u.components = 2;
  J.u.g_lap.comp = {gl[0], gl[1]};
  J.u.g_lap.avail = glv;
  J.u.g_dn_lap.comp = {gdl[0], gdl[1]};
  J.u.g_dn_lap.avail = gdlv;

  // pressure
  auto g2n = gradient2(N, true);
  ScalarField pdl(N);
  Mask pdlv(N);
  const double i2h = 0.5 / h;
  for (std::size_t i = 0; i < N.size(); ++i) {
    if (!node.valid[i]) continue;
    std::size_t cc[4];
    if (!detail::node_cells(N, C, i, cc)) continue;
    bool ok = true;
    for (auto k : cc) ok = ok && glv[k];
    double nn[2];
    ok = ok && detail::masked_apply(g2n, node.phi, node.valid, i, 0, nn[0]) &&
         detail::masked_apply(g2n, node.phi, node.valid, i, 1, nn[1]);
    if (!ok) continue;
    // cells ordered (-,-), (+,-), (-,+), (+,+)
    double s = 0.0;
    for (int b = 0; b < 2; ++b) {
      const ScalarField& ub = u[b];
      double dx = (ub[cc[1]] + ub[cc[3]] - ub[cc[0]] - ub[cc[2]]) * i2h;
      double dy = (ub[cc[2]] + ub[cc[3]] - ub[cc[0]] - ub[cc[1]]) * i2h;
      double g = 0.25 * (gl[b][cc[0]] + gl[b][cc[1]] + gl[b][cc[2]] + gl[b][cc[3]]);
      s += (nn[0] * dx + nn[1] * dy) * g;
    }
    pdl[i] = -2.0 * fp.rho * s;
    pdlv.set(i);
  }
  J.p.components = 1;
  J.p.g0.comp = {f};
  J.p.g0.avail = J.kappa.valid;
  J.p.g_dn_lap.comp = {pdl};
  J.p.g_dn_lap.avail = pdlv;
  return J;
}

// (a . grad) w_c, second-order ENO per axis. Within 2h of the interface the
// stencil reads the splice w + v (H_i - H_k) seen from the output point.
// Off the box the field is reflected oddly (w = 0 on the walls).
inline VectorField jeno_advect(const VectorField& w, const VectorField& a, const JumpExtrapolation* v = nullptr,
                               const NarrowBand* band = nullptr) {
  const Lattice& L = w.comp[0].lattice();
  const int n = L.extent();
  const double h = L.h();
  auto str = L.strides();
  VectorField out(L, w.components());
  std::size_t bad = 0;
  for (std::size_t i = 0; i < L.size(); ++i) {
    auto c = L.unravel(i);
    bool near = v && band && std::abs(band->phi[i]) < 2.0 * h;
    double Hi = near ? heaviside(band->phi[i]) : 0.0;
    for (int comp = 0; comp < w.components(); ++comp) {
      const ScalarField& f = w[comp];
      double s = 0.0;
      for (int ax = 0; ax < 2; ++ax) {
        double vel = a[ax][i];
        if (vel == 0.0) continue;
        double vals[5];
        for (int o = -2; o <= 2; ++o) {
          int j = c[ax] + o;
          double sign = 1.0;
          if (j < 0) {
            j = -1 - j;
            sign = -1.0;
          } else if (j >= n) {
            j = 2 * n - 1 - j;
            sign = -1.0;
          }
          std::size_t k = i + static_cast<std::ptrdiff_t>(j - c[ax]) * str[ax];
          double x = f[k];
          if (near) {
            double dh = Hi - heaviside(band->phi[k]);
            if (dh != 0.0) {
              if (!v->has_order(k, 3)) ++bad;
              x += v->v[comp][k] * dh;
            }
          }
          vals[o + 2] = sign * x;
        }
        s += vel * detail::eno_derivative(vals, vel, h);
      }
      out[comp][i] = s;
    }
  }
  if (bad) throw band_error("jeno_advect: " + std::to_string(bad) + " stencil taps lack the extension");
  return out;
}

// phi - dt (u . grad) phi with plain ENO, inside |phi| < limit. Values are
// extended by a constant beyond the box.
inline ScalarField advect_level_set(const ScalarField& phi, const VectorField& u, double dt, double limit) {
  const Lattice& L = phi.lattice();
  const int n = L.extent();
  auto str = L.strides();
  ScalarField out = phi;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (std::abs(phi[i]) >= limit) continue;
    auto c = L.unravel(i);
    double s = 0.0;
    for (int ax = 0; ax < 2; ++ax) {
      double vel = u[ax][i];
      if (vel == 0.0) continue;
      double vals[5];
      for (int o = -2; o <= 2; ++o) {
        int j = std::clamp(c[ax] + o, 0, n - 1);
        vals[o + 2] = phi[i + static_cast<std::ptrdiff_t>(j - c[ax]) * str[ax]];
      }
      s += vel * detail::eno_derivative(vals, vel, L.h());
    }
    out[i] = phi[i] - dt * s;
  }
  return out;
}

inline double smoothed_delta(double x, double eps) {
  if (std::abs(x) >= eps) return 0.0;
  return 0.5 / eps * (1.0 + std::cos(std::numbers::pi * x / eps));
}

class FlowSolver {
 public:
  FlowSolver(const ImplicitShape& shape, int n, const FlowParams& fp, const StepPlan& plan)
      : fp_(fp), plan_(plan) {
    if (shape_dimension(shape) != 2) throw std::invalid_argument("FlowSolver: two-dimensional shapes only");
    if (!(fp.rho > 0 && fp.mu > 0 && fp.sigma >= 0)) throw std::invalid_argument("FlowSolver: need rho, mu > 0, sigma >= 0");
    Grid g = make_grid(2, n, 0.0, 1.0);
    s_.cells = Lattice{g, Centering::cell};
    s_.nodes = Lattice{g, Centering::node};
    h_ = g.h;
    dt_ = plan.dt > 0 ? plan.dt : h_ * h_;
    width_ = plan.band * h_;
    double cap = capillary_dt_bound(h_, fp, plan.capillary);
    if (dt_ > cap)
      throw flow_error("time step " + std::to_string(dt_) + " exceeds the capillary bound " + std::to_string(cap));
    s_.u = VectorField(s_.cells, 2);
    s_.p = ScalarField(s_.nodes);
    auto bc = std::make_shared<NarrowBand>(sample_sdf(shape, s_.cells, width_));
    auto bn = std::make_shared<NarrowBand>(sample_sdf(shape, s_.nodes, width_));
    s_.phi = bc->phi;
    s_.sdf = bc;
    s_.sdf_node = bn;
    helm_ = std::make_unique<Multigrid>(LevelKind::cell_dirichlet, 2, n, h_, 1.0, fp.mu * dt_ / fp.rho, plan.solver);
    pois_ = std::make_unique<Multigrid>(LevelKind::node_neumann, 2, n, h_, 0.0, 1.0, plan.solver);
    if (plan.force == ForceModel::spliced) initial_pressure();
  }

  const FlowState& state() const { return s_; }
  FlowState& state() { return s_; }
  double dt() const { return dt_; }
  double h() const { return h_; }
  const FlowParams& params() const { return fp_; }
  const StepPlan& plan() const { return plan_; }

  StepInfo step() {
    double umax = 0.0;
    for (int a = 0; a < 2; ++a)
      for (double x : s_.u[a].values()) umax = std::max(umax, std::abs(x));
    if (!std::isfinite(umax)) throw flow_error("velocity is not finite at step " + std::to_string(s_.step));
    if (umax * dt_ > plan_.cfl * h_)
      throw flow_error("CFL violated at step " + std::to_string(s_.step) + ": max|u| dt / h = " +
                       std::to_string(umax * dt_ / h_));
    try {
      return plan_.force == ForceModel::spliced ? spliced_step() : delta_step();
    } catch (const solver_error& e) {
      throw solver_error(std::string(e.what()) + " (step " + std::to_string(s_.step) + ")");
    }
  }

  // Spliced divergence of u on the current interface.
  double spliced_divergence() const {
    auto J = surface_tension_jumps(*s_.sdf, *s_.sdf_node, s_.u, fp_);
    auto vu = build_u(s_.sdf, J.u);
    return spliced_divergence(s_.u, vu, *s_.sdf_node);
  }

 private:
  FlowParams fp_;
  StepPlan plan_;
  FlowState s_;
  double h_ = 0, dt_ = 0, width_ = 0;
  std::unique_ptr<Multigrid> helm_, pois_;
  std::vector<double> psi_last_;

  JumpExtrapolation build_u(const BandPtr& b, const JumpSet& g) const {
    ExtrapolationOptions o;
    o.q = 3;
    o.consumer_reach = 4.0;  // ENO reach beyond the 2h splice zone
    return build_extrapolation(b, g, o);
  }
  JumpExtrapolation build_p(const BandPtr& b, const JumpSet& g) const {
    ExtrapolationOptions o;
    o.q = 3;
    o.consumer_reach = 3.0;
    return build_extrapolation(b, g, o);
  }

  double spliced_divergence(const VectorField& u, const JumpExtrapolation& vu, const NarrowBand& nodes) const {
    auto D = div_cell_to_node(s_.cells);
    auto d = jsplice::apply(D, u);
    auto c = splice_correction(D, vu, nodes);
    double m = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) m = std::max(m, std::abs(d[i] + c[0][i]));
    return m;
  }

  std::vector<double> neg(const ScalarField& r) const {
    std::vector<double> b(r.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = -r[i];
    return b;
  }

  // p with [p] = -sigma kappa and spliced Lap p = 0 at rest.
  void initial_pressure() {
    auto J = surface_tension_jumps(*s_.sdf, *s_.sdf_node, s_.u, fp_);
    auto vp = build_p(s_.sdf_node, J.p);
    auto c = splice_correction(laplacian5(s_.nodes, false), vp, *s_.sdf_node);
    ScalarField r(s_.nodes);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = -c[0][i];
    std::vector<double> pv(r.size(), 0.0);
    pois_->solve(neg(r), pv);
    s_.p.values() = std::move(pv);
  }

  // advance phi and rebuild the distance fields at t + dt
  void advance_interface(StepInfo& info, BandPtr& bc1, BandPtr& bn1, ScalarField& phi1) {
    phi1 = advect_level_set(s_.phi, s_.u, dt_, width_ - 3.0 * h_);
    ReconstructStats rs1, rs2;
    bc1 = std::make_shared<NarrowBand>(reconstruct_sdf(phi1, s_.cells, width_, &rs1));
    bn1 = std::make_shared<NarrowBand>(reconstruct_sdf(phi1, s_.nodes, width_, &rs2));
    info.reconstruct_fallbacks = rs1.fallbacks + rs2.fallbacks;
    if (plan_.reinit_period > 0 && (s_.step + 1) % plan_.reinit_period == 0) phi1 = bc1->phi;
  }

  StepInfo spliced_step() {
    StepInfo info;
    const Lattice& C = s_.cells;
    const Lattice& N = s_.nodes;
    const double dt = dt_, rho = fp_.rho, mu = fp_.mu;
    BandPtr bc0 = s_.sdf, bn0 = s_.sdf_node, bc1, bn1;
    ScalarField phi1;
    advance_interface(info, bc1, bn1, phi1);

    // jump data at both levels. Both use u^n for the pressure jump, u^{n+1} being unknown.
    auto J0 = surface_tension_jumps(*bc0, *bn0, s_.u, fp_);
    auto J1 = surface_tension_jumps(*bc1, *bn1, s_.u, fp_);
    info.kappa_clamped = J0.kappa.clamped + J1.kappa.clamped;
    auto vu0 = build_u(bc0, J0.u);
    auto vu1 = build_u(bc1, J1.u);
    auto vp0 = build_p(bn0, J0.p);
    auto vp1 = build_p(bn1, J1.p);

    // jump of u*
    auto G = grad_node_to_cell(N);
    JumpExtrapolation vs;
    vs.band = bc0;
    vs.q = 3;
    vs.components = 2;
    vs.width = vu1.width;
    vs.v = {ScalarField(C), ScalarField(C)};
    vs.a1 = {ScalarField(C), ScalarField(C)};
    vs.level.assign(C.size(), 0);
    for (std::size_t i = 0; i < C.size(); ++i) {
      std::uint8_t lv = vu1.level[i];
      if (!lv) continue;
      for (int a = 0; a < 2; ++a) {
        double s = 0.0;
        G.taps(i, a, [&](int, std::size_t k, double w) {
          lv = std::min({lv, vp0.level[k], vp1.level[k]});
          s += w * (vp1.v[0][k] - vp0.v[0][k]);
        });
        vs.v[a][i] = vu1.v[a][i] + dt / rho * s;
      }
      vs.level[i] = lv;
    }
    JumpExtrapolation vpsi;
    vpsi.band = bn0;
    vpsi.q = 3;
    vpsi.components = 1;
    vpsi.width = vp1.width;
    vpsi.v = {ScalarField(N)};
    vpsi.a1 = {ScalarField(N)};
    vpsi.level.assign(N.size(), 0);
    for (std::size_t i = 0; i < N.size(); ++i) {
      vpsi.level[i] = std::min(vp0.level[i], vp1.level[i]);
      vpsi.v[0][i] = vp1.v[0][i] - vp0.v[0][i];
    }

    // u*
    auto adv = jeno_advect(s_.u, s_.u, &vu0, bc0.get());
    auto gp = jsplice::apply(G, std::vector<const ScalarField*>{&s_.p});
    auto cgp = splice_correction(G, vp0, *bc0);
    auto lap = laplacian5(C, false);
    const double nu_dt = mu * dt / rho;
    VectorField ustar(C, 2);
    for (int a = 0; a < 2; ++a) {
      auto cl = splice_correction(lap, detail::single_component(vs, a), *bc0);
      ScalarField r(C);
      for (std::size_t i = 0; i < C.size(); ++i)
        r[i] = s_.u[a][i] - dt * adv[a][i] - dt / rho * (gp[a][i] + cgp[a][i]) + nu_dt * cl[0][i];
      std::vector<double> x = s_.u[a].values();
      auto st = helm_->solve(r.values(), x);
      info.helmholtz_cycles = std::max(info.helmholtz_cycles, st.iterations);
      ustar[a].values() = std::move(x);
    }

    // psi
    auto D = div_cell_to_node(C);
    auto du = jsplice::apply(D, ustar);
    auto cdu = splice_correction(D, vs, *bn0);
    auto clpsi = splice_correction(laplacian5(N, false), vpsi, *bn0);
    ScalarField r(N);
    for (std::size_t i = 0; i < N.size(); ++i) {
      double x = rho / dt * (du[i] + cdu[0][i]) - clpsi[0][i];
      double dh = heaviside(bn1->phi[i]) - heaviside(bn0->phi[i]);
      if (dh != 0.0) x += rho * apply_at(D, std::vector<const ScalarField*>{&vu1.v[0], &vu1.v[1]}, i) * dh / dt;
      r[i] = x;
    }
    // psi changes slowly from step to step; start from the last one
    std::vector<double> psi = psi_last_.size() == N.size() ? psi_last_ : std::vector<double>(N.size(), 0.0);
    auto st = pois_->solve(neg(r), psi);
    info.poisson_cycles = st.iterations;
    psi_last_ = psi;
    ScalarField psif(N);
    psif.values() = std::move(psi);

    // u^{n+1}, p^{n+1}
    auto gpsi = jsplice::apply(G, std::vector<const ScalarField*>{&psif});
    auto cgpsi = splice_correction(G, vpsi, *bc0);
    for (std::size_t i = 0; i < C.size(); ++i) {
      double dh = heaviside(bc1->phi[i]) - heaviside(bc0->phi[i]);
      for (int a = 0; a < 2; ++a)
        s_.u[a][i] = ustar[a][i] - dt / rho * (gpsi[a][i] + cgpsi[a][i]) + vu1.v[a][i] * dh;
    }
    for (std::size_t i = 0; i < N.size(); ++i) {
      double dh = heaviside(bn1->phi[i]) - heaviside(bn0->phi[i]);
      s_.p[i] += psif[i] + vp1.v[0][i] * dh;
    }
    s_.phi = std::move(phi1);
    s_.sdf = bc1;
    s_.sdf_node = bn1;
    s_.t += dt;
    ++s_.step;
    info.max_divergence = spliced_divergence(s_.u, vu1, *bn1);
    return info;
  }

  // The unspliced projection method with body force -sigma kappa n delta_eps(phi).
  StepInfo delta_step() {
    StepInfo info;
    const Lattice& C = s_.cells;
    const Lattice& N = s_.nodes;
    const double dt = dt_, rho = fp_.rho, mu = fp_.mu;
    const NarrowBand& bc0 = *s_.sdf;
    BandPtr bc1, bn1;
    ScalarField phi1;
    advance_interface(info, bc1, bn1, phi1);

    auto kap = curvature(bc0);
    info.kappa_clamped = kap.clamped;
    auto g2 = gradient2(C, true);
    const double eps = plan_.delta_eps * h_;
    VectorField force(C, 2);
    for (std::size_t i = 0; i < C.size(); ++i) {
      double dl = smoothed_delta(bc0.phi[i], eps);
      if (dl == 0.0) continue;
      if (!kap.valid[i]) throw band_error("delta_step: curvature unavailable inside the smoothing zone");
      for (int a = 0; a < 2; ++a) {
        double na;
        if (!detail::masked_apply(g2, bc0.phi, bc0.valid, i, a, na))
          throw band_error("delta_step: normal unavailable inside the smoothing zone");
        force[a][i] = -fp_.sigma * kap.kappa[i] * na * dl;
      }
    }
    auto adv = jeno_advect(s_.u, s_.u);
    auto G = grad_node_to_cell(N);
    auto gp = jsplice::apply(G, std::vector<const ScalarField*>{&s_.p});
    VectorField ustar(C, 2);
    for (int a = 0; a < 2; ++a) {
      ScalarField r(C);
      for (std::size_t i = 0; i < C.size(); ++i)
        r[i] = s_.u[a][i] - dt * adv[a][i] - dt / rho * gp[a][i] + dt / rho * force[a][i];
      std::vector<double> x = s_.u[a].values();
      auto st = helm_->solve(r.values(), x);
      info.helmholtz_cycles = std::max(info.helmholtz_cycles, st.iterations);
      ustar[a].values() = std::move(x);
    }
    (void)mu;
    auto D = div_cell_to_node(C);
    auto du = jsplice::apply(D, ustar);
    ScalarField r(N);
    for (std::size_t i = 0; i < N.size(); ++i) r[i] = rho / dt * du[i];
    std::vector<double> psi(N.size(), 0.0);
    auto st = pois_->solve(neg(r), psi);
    info.poisson_cycles = st.iterations;
    ScalarField psif(N);
    psif.values() = std::move(psi);
    auto gpsi = jsplice::apply(G, std::vector<const ScalarField*>{&psif});
    for (std::size_t i = 0; i < C.size(); ++i)
      for (int a = 0; a < 2; ++a) s_.u[a][i] = ustar[a][i] - dt / rho * gpsi[a][i];
    for (std::size_t i = 0; i < N.size(); ++i) s_.p[i] += psif[i];
    s_.phi = std::move(phi1);
    s_.sdf = bc1;
    s_.sdf_node = bn1;
    s_.t += dt;
    ++s_.step;
    auto d = jsplice::apply(D, s_.u);
    for (std::size_t i = 0; i < d.size(); ++i) info.max_divergence = std::max(info.max_divergence, std::abs(d[i]));
    return info;
  }
};

// ---- runs and between-grid metrics ----

struct FlowConfig {
  ImplicitShape shape = Ellipse{{0.5, 0.5, 0.0}, {0.35, 0.15}};
  FlowParams params;
  int n = 64;
  double T = 0.125;
  int samples = 32;  // records at T m / samples, m = 0..samples
  StepPlan plan;
};

struct FlowSnapshot {
  double t = 0.0;
  long step = 0;
  VectorField u;
  ScalarField p;
  BandPtr sdf_node;
  double volume = 0.0;
};

struct FlowRun {
  FlowConfig config;
  double dt = 0.0;
  long steps = 0;
  double volume0 = 0.0;       // computed at t = 0
  double volume_exact = 0.0;  // of the initial shape, NaN without a formula
  double e_vol = 0.0;         // max over samples of |Vol - volume0|
  double e_vol_exact = 0.0;   // same against volume_exact
  std::vector<FlowSnapshot> snapshots;
  StepInfo worst;  // componentwise maxima over steps
  std::size_t kappa_clamped = 0;
  double seconds = 0.0;
};

// Area enclosed by the initial shape, exact where a formula exists.
inline double initial_volume(const ImplicitShape& s) {
  if (auto* c = std::get_if<Circle>(&s)) return std::numbers::pi * c->radius * c->radius;
  if (auto* e = std::get_if<Ellipse>(&s)) return std::numbers::pi * e->radii[0] * e->radii[1];
  return std::numeric_limits<double>::quiet_NaN();
}

inline FlowRun run_flow(const FlowConfig& cfg, const std::function<void(const FlowSolver&, const StepInfo&)>& on_step = {}) {
  auto t0 = std::chrono::steady_clock::now();
  FlowRun run;
  run.config = cfg;
  StepPlan plan = cfg.plan;
  double h = 1.0 / cfg.n;
  double dt_rule = plan.dt > 0 ? plan.dt : h * h;
  run.steps = static_cast<long>(std::ceil(cfg.T / dt_rule - 1e-9));
  if (run.steps < 1) run.steps = 1;
  plan.dt = cfg.T / run.steps;
  run.dt = plan.dt;
  FlowSolver solver(cfg.shape, cfg.n, cfg.params, plan);
  run.volume_exact = initial_volume(cfg.shape);
  auto record = [&]() {
    const auto& s = solver.state();
    FlowSnapshot snap{s.t, s.step, s.u, s.p, s.sdf_node, enclosed_volume(s.sdf)};
    if (run.snapshots.empty()) run.volume0 = snap.volume;
    run.e_vol = std::max(run.e_vol, std::abs(snap.volume - run.volume0));
    if (!std::isnan(run.volume_exact))
      run.e_vol_exact = std::max(run.e_vol_exact, std::abs(snap.volume - run.volume_exact));
    run.snapshots.push_back(std::move(snap));
  };
  record();
  int m = 1;
  for (long k = 1; k <= run.steps; ++k) {
    StepInfo info = solver.step();
    run.worst.helmholtz_cycles = std::max(run.worst.helmholtz_cycles, info.helmholtz_cycles);
    run.worst.poisson_cycles = std::max(run.worst.poisson_cycles, info.poisson_cycles);
    run.worst.kappa_clamped = std::max(run.worst.kappa_clamped, info.kappa_clamped);
    run.worst.reconstruct_fallbacks = std::max(run.worst.reconstruct_fallbacks, info.reconstruct_fallbacks);
    run.worst.max_divergence = std::max(run.worst.max_divergence, info.max_divergence);
    run.kappa_clamped += info.kappa_clamped;
    if (on_step) on_step(solver, info);
    while (m <= cfg.samples && k == std::lround(static_cast<double>(m) * run.steps / cfg.samples)) {
      record();
      ++m;
    }
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

struct BetweenGrid {
  double e_u = 0.0;
  double e_p = 0.0;
  double e_phi = 0.0;
  std::size_t p_excluded = 0;  // node comparisons dropped for a sign mismatch
};

// Weighted mean of a nodal field (trapezoidal weights).
inline double node_mean(const ScalarField& p) {
  const Lattice& L = p.lattice();
  std::vector<double> a(L.size()), w(L.size());
  for (std::size_t i = 0; i < L.size(); ++i) {
    w[i] = node_weight(L, i);
    a[i] = w[i] * p[i];
  }
  return pairwise_sum(a) / pairwise_sum(w);
}

// Max over recorded times of the fine-vs-coarse differences. u compares cell
// means of the fine grid, p (mean removed) and the distance compare at shared
// nodes; p skips nodes where the two interfaces disagree on the side.
inline BetweenGrid compare_flows(const FlowRun& fine, const FlowRun& coarse) {
  if (fine.config.n != 2 * coarse.config.n) throw std::invalid_argument("compare_flows: need n_fine = 2 n_coarse");
  if (fine.snapshots.size() != coarse.snapshots.size())
    throw std::invalid_argument("compare_flows: runs recorded different numbers of samples");
  BetweenGrid r;
  for (std::size_t s = 0; s < fine.snapshots.size(); ++s) {
    const auto& f = fine.snapshots[s];
    const auto& c = coarse.snapshots[s];
    if (std::abs(f.t - c.t) > 1e-9 * std::max(1.0, f.t))
      throw std::invalid_argument("compare_flows: sample times differ");
    for (int a = 0; a < 2; ++a) r.e_u = std::max(r.e_u, restrict_compare(f.u[a], c.u[a]).linf);
    const Lattice& CL = c.p.lattice();
    const Lattice& FL = f.p.lattice();
    Mask excl(CL);
    for (std::size_t i = 0; i < CL.size(); ++i) {
      auto ci = CL.unravel(i);
      double pf = f.sdf_node->phi[FL.index(2 * ci[0], 2 * ci[1])];
      double pc = c.sdf_node->phi[i];
      if ((pf > 0 && pc < 0) || (pf < 0 && pc > 0)) excl.set(i);
    }
    r.p_excluded = std::max(r.p_excluded, excl.count());
    ScalarField pf = f.p, pc = c.p;
    double mf = node_mean(pf), mc = node_mean(pc);
    for (auto& x : pf.values()) x -= mf;
    for (auto& x : pc.values()) x -= mc;
    CompareOptions po;
    po.exclude = &excl;
    r.e_p = std::max(r.e_p, restrict_compare(pf, pc, po).linf);
    CompareOptions qo;
    qo.fine_valid = &f.sdf_node->valid;
    qo.coarse_valid = &c.sdf_node->valid;
    r.e_phi = std::max(r.e_phi, restrict_compare(f.sdf_node->phi, c.sdf_node->phi, qo).linf);
  }
  return r;
}

}  // namespace jsplice
