#pragma once

// Experiment registry for splice-bench: grid sweeps, observed rates, golden
// checks against the published tables, CSV emission.

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "elliptic.hpp"
#include "geometry.hpp"
#include "grid.hpp"
#include "navier_stokes.hpp"
#include "quadrature.hpp"
#include "splice.hpp"
#include "stencil.hpp"

namespace jsplice::bench {

using json = nlohmann::json;
inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();

struct Column {
  std::string name;
  bool rated = true;  // emit an observed-rate column next to it
};

struct Row {
  int n = 0;
  bool ran = false;
  std::vector<double> values;  // one per column; NaN where undefined
  double seconds = 0.0;        // wall time, kept out of the CSV
};

struct Table {
  std::string id;
  std::vector<Column> columns;
  std::vector<Row> rows;

  int column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c].name == name) return static_cast<int>(c);
    throw std::invalid_argument(id + ": no column '" + name + "'");
  }
  const Row* row(int n) const {
    for (const auto& r : rows)
      if (r.n == n && r.ran) return &r;
    return nullptr;
  }
  double value(const std::string& col, int n) const {
    auto* r = row(n);
    return r ? r->values[column(col)] : nan;
  }
  // Rate attached to row k: log(E_{k-1} / E_k) / log(n_k / n_{k-1}), over run rows.
  double rate(const std::string& col, std::size_t k) const {
    if (k == 0 || k >= rows.size() || !rows[k].ran || !rows[k - 1].ran) return nan;
    int c = column(col);
    double a = rows[k - 1].values[c], b = rows[k].values[c];
    if (!(a > 0) || !(b > 0)) return nan;
    return std::log(a / b) / std::log(static_cast<double>(rows[k].n) / rows[k - 1].n);
  }
};

struct Published {
  std::string column;
  int n;
  double value;
  std::string table;  // where the number was printed
};

struct Check {
  enum class Kind {
    times_published,   // value <= limit * published
    within_factor,     // published / limit <= value <= published * limit
    at_most,           // value <= limit
    rate_each,         // every rate on rows n_lo..n_hi >= limit
    rate_average,      // mean rate on rows n_lo..n_hi >= limit
    rate_overall,      // log(E(n_lo)/E(n_hi)) / log(n_hi/n_lo) >= limit
    seconds_at_most,   // summed wall time of rows n <= n_hi <= limit
  };
  Kind kind;
  std::string column;
  int n_lo = 0, n_hi = INT_MAX;
  double limit = 0.0;
  std::string label;
};

struct CheckResult {
  std::string label;
  bool evaluated = false;
  bool pass = false;
  std::string detail;
};

struct RunContext {
  json params = json::object();
  std::string out_dir;  // empty: no side files
  std::function<void(const std::string&)> log;
};

struct Experiment {
  std::string id;
  std::string title;
  std::vector<Column> columns;
  std::vector<int> n_default;
  int n_cap = INT_MAX;
  std::vector<std::string> params;  // accepted override keys
  std::vector<Published> published;
  std::vector<Check> checks;
  // One call per sweep; rows come back in the order of ns.
  std::function<std::vector<Row>(const std::vector<int>&, const RunContext&)> run;
};

// ---------------------------------------------------------------- helpers

inline std::string fmt(double v, const char* f = "%.10e") {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <class T>
T param(const RunContext& ctx, const char* key, T fallback) {
  auto it = ctx.params.find(key);
  return it == ctx.params.end() ? fallback : it->get<T>();
}

inline Point point_from_json(const json& j) {
  Point p{0.0, 0.0, 0.0};
  for (std::size_t a = 0; a < j.size() && a < 3; ++a) p[a] = j.at(a).get<double>();
  return p;
}

// {"kind": "circle" | "ellipse" | "ellipsoid" | "stadium" | "two_circles", ...}
inline ImplicitShape shape_from_json(const json& j) {
  std::string k = j.at("kind").get<std::string>();
  if (k == "circle") {
    Circle c;
    if (j.contains("center")) c.center = point_from_json(j["center"]);
    c.radius = j.value("radius", c.radius);
    return c;
  }
  if (k == "ellipse") {
    Ellipse e;
    if (j.contains("center")) e.center = point_from_json(j["center"]);
    if (j.contains("radii")) e.radii = {j["radii"].at(0).get<double>(), j["radii"].at(1).get<double>()};
    return e;
  }
  if (k == "ellipsoid") {
    Ellipsoid e;
    if (j.contains("center")) e.center = point_from_json(j["center"]);
    if (j.contains("radii"))
      e.radii = {j["radii"].at(0).get<double>(), j["radii"].at(1).get<double>(), j["radii"].at(2).get<double>()};
    return e;
  }
  if (k == "stadium") {
    Stadium s;
    if (j.contains("center")) s.center = point_from_json(j["center"]);
    s.half_length = j.value("half_length", s.half_length);
    s.radius = j.value("radius", s.radius);
    return s;
  }
  if (k == "two_circles") {
    TwoCircleUnion u;
    if (j.contains("c1")) u.c1 = point_from_json(j["c1"]);
    if (j.contains("c2")) u.c2 = point_from_json(j["c2"]);
    u.radius = j.value("radius", u.radius);
    return u;
  }
  throw std::invalid_argument("unknown shape kind '" + k + "' (circle, ellipse, ellipsoid, stadium, two_circles)");
}

// Jump data sampled on a band: f(x, n, g) fills g[0..3] = [u], [du/dn], [Lap u], [d/dn Lap u].
using JumpSampler = std::function<void(const Point&, const double*, double*)>;

inline JumpSet sample_jumps(const NarrowBand& band, const JumpSampler& f) {
  const Lattice& L = band.lattice;
  Mask nv;
  auto nrm = band_normals(band, &nv);
  JumpSet g;
  g.components = 1;
  for (int k = 0; k < 4; ++k) {
    g[k].comp.emplace_back(L);
    g[k].avail = Mask(L);
  }
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!nv[i]) continue;
    double n[3] = {nrm[0][i], nrm[1][i], L.dim() == 3 ? nrm[2][i] : 0.0};
    double v[4] = {0, 0, 0, 0};
    f(L.coord(i), n, v);
    for (int k = 0; k < 4; ++k) {
      g[k].comp[0][i] = v[k];
      g[k].avail.set(i);
    }
  }
  return g;
}

// Time a sweep row by row.
template <class F>
std::vector<Row> sweep(const std::vector<int>& ns, const RunContext& ctx, F&& one) {
  std::vector<Row> rows;
  for (int n : ns) {
    auto t0 = std::chrono::steady_clock::now();
    Row r;
    r.n = n;
    r.values = one(n);
    r.ran = true;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ctx.log) ctx.log("n=" + std::to_string(n) + " done in " + fmt(r.seconds, "%.2f") + " s");
    rows.push_back(std::move(r));
  }
  return rows;
}

// Perimeter integral of e^x over the ellipse (a cos t, b sin t); the periodic
// trapezoid rule is spectrally accurate here.
inline double ellipse_exp_integral(double a, double b, int m = 4096) {
  std::vector<double> t(m);
  for (int k = 0; k < m; ++k) {
    double s = 2.0 * std::numbers::pi * k / m;
    t[k] = std::exp(a * std::cos(s)) * std::hypot(a * std::sin(s), b * std::cos(s));
  }
  return 2.0 * std::numbers::pi / m * pairwise_sum(t);
}

// ---------------------------------------------------------------- elliptic

struct EllipticCase {
  ImplicitShape shape;
  JumpSampler jumps;
  std::function<double(const Point&, double)> exact;  // (x, phi)
};

inline std::vector<double> run_elliptic(const EllipticCase& ec, int dim, int n, const RunContext& ctx) {
  Lattice L{make_grid(dim, n, -1.0, 1.0), Centering::cell};
  double h = L.h();
  double width = param<double>(ctx, "band", dim == 3 ? 12.0 : 13.0) * h;
  auto band = std::make_shared<NarrowBand>(sample_sdf(ec.shape, L, width));
  PoissonProblem p{L,
                   ScalarField(L),
                   [&](const Point& x) { return ec.exact(x, exact_sdf(ec.shape, x)); },
                   band,
                   sample_jumps(*band, ec.jumps),
                   param<int>(ctx, "q", 3)};
  SolverOptions so;
  so.tol = param<double>(ctx, "tol", so.tol);
  auto s = solve_dirichlet(p, so);
  ScalarField err(L);
  for (std::size_t i = 0; i < L.size(); ++i) err[i] = s.u[i] - ec.exact(L.coord(i), band->phi[i]);
  Mask all(L, true);
  return {linf_norm(err, all), l2_norm(err, all), static_cast<double>(s.stats.iterations)};
}

inline double log_radius(const Point& x) { return std::log(2.0 * std::hypot(x[0], x[1])); }

// u = 0 inside, 1 - log(2r) outside.
inline EllipticCase log_exterior(ImplicitShape shape) {
  return {shape,
          [](const Point& x, const double* n, double* g) {
            double r2 = x[0] * x[0] + x[1] * x[1];
            g[0] = -(1.0 - log_radius(x));
            g[1] = (x[0] * n[0] + x[1] * n[1]) / r2;
          },
          [](const Point& x, double phi) { return phi >= 0 ? 0.0 : 1.0 - log_radius(x); }};
}

inline std::vector<Column> elliptic_columns() { return {{"linf"}, {"l2"}, {"cycles", false}}; }

// ---------------------------------------------------------------- flow

inline FlowConfig flow_config(const RunContext& ctx, double mu, ForceModel force) {
  FlowConfig c;
  c.params.mu = param<double>(ctx, "mu", mu);
  c.params.rho = param<double>(ctx, "rho", c.params.rho);
  c.params.sigma = param<double>(ctx, "sigma", c.params.sigma);
  c.T = param<double>(ctx, "T", c.T);
  c.samples = param<int>(ctx, "samples", c.samples);
  c.plan.reinit_period = param<int>(ctx, "reinit_period", c.plan.reinit_period);
  c.plan.band = param<double>(ctx, "band", c.plan.band);
  c.plan.dt = param<double>(ctx, "dt", 0.0);
  c.plan.force = force;
  if (ctx.params.contains("force")) {
    auto f = ctx.params["force"].get<std::string>();
    if (f == "spliced") c.plan.force = ForceModel::spliced;
    else if (f == "smoothed_delta") c.plan.force = ForceModel::smoothed_delta;
    else throw std::invalid_argument("force must be 'spliced' or 'smoothed_delta'");
  }
  if (ctx.params.contains("shape")) c.shape = shape_from_json(ctx.params["shape"]);
  return c;
}

inline void write_flow_files(const std::string& dir, const std::string& id, const FlowRun& run) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string stem = (fs::path(dir) / (id + "_n" + std::to_string(run.config.n))).string();
  {
    std::ofstream os(stem + "_volume.csv");
    os << "t,step,volume,deviation\n";
    for (const auto& s : run.snapshots)
      os << fmt(s.t) << ',' << s.step << ',' << fmt(s.volume, "%.15e") << ',' << fmt(s.volume - run.volume0) << '\n';
  }
  const auto& last = run.snapshots.back();
  write_csv_line(stem + "_pslice.csv", last.p, 1, Point{0.5, 0.5, 0.0});
  write_field(stem + "_u0.field", last.u[0]);
  write_field(stem + "_u1.field", last.u[1]);
  write_field(stem + "_p.field", last.p);
  write_field(stem + "_phi.field", last.sdf_node->phi);
}

// Rows: between-grid errors against the previous n (which must be n/2), and
// the volume error of each run.
inline std::vector<Row> run_flow_sweep(const std::string& id, const std::vector<int>& ns, const RunContext& ctx,
                                       double mu, ForceModel force) {
  std::vector<Row> rows;
  std::unique_ptr<FlowRun> prev;
  for (int n : ns) {
    FlowConfig cfg = flow_config(ctx, mu, force);
    cfg.n = n;
    auto run = std::make_unique<FlowRun>(run_flow(cfg));
    Row r;
    r.n = n;
    r.ran = true;
    r.seconds = run->seconds;
    double eu = nan, ep = nan, ephi = nan;
    if (prev && prev->config.n * 2 == n) {
      auto b = compare_flows(*run, *prev);
      eu = b.e_u;
      ep = b.e_p;
      ephi = b.e_phi;
    }
    r.values = {eu, ep, ephi, run->e_vol, run->e_vol_exact, static_cast<double>(run->steps),
                static_cast<double>(run->kappa_clamped)};
    if (ctx.log)
      ctx.log("n=" + std::to_string(n) + " steps=" + std::to_string(run->steps) + " dt=" + fmt(run->dt, "%.3e") +
              " E_Vol=" + fmt(run->e_vol, "%.3e") + " in " + fmt(run->seconds, "%.1f") + " s");
    if (!ctx.out_dir.empty()) write_flow_files(ctx.out_dir, id, *run);
    rows.push_back(std::move(r));
    // snapshots of the older run are no longer needed
    prev = std::move(run);
  }
  return rows;
}

inline std::vector<Column> flow_columns() {
  return {{"E_u"}, {"E_p"}, {"E_phi"}, {"E_Vol"}, {"E_Vol_exact"}, {"steps", false}, {"kappa_clamped", false}};
}

inline const std::vector<std::string>& flow_params() {
  static const std::vector<std::string> p{"mu", "rho", "sigma", "T", "samples", "reinit_period",
                                          "band", "dt", "force", "shape"};
  return p;
}

// ---------------------------------------------------------------- registry

using K = Check::Kind;

inline std::vector<Experiment> build_registry() {
  std::vector<Experiment> R;
  const std::vector<std::string> ell_params{"band", "q", "tol"};

  {
    Experiment e;
    e.id = "ex3.1";
    e.title = "spliced 5-point Laplacian of e^x y^2 H(phi), ellipse radii (0.7, 0.3)";
    e.columns = {{"linf"}, {"l2"}};
    e.n_default = {64, 128, 256, 512, 1024, 2048};
    e.n_cap = 1024;
    e.params = {"band", "q"};
    const char* t = "Table 1";
    e.published = {{"linf", 64, 7.760e-6, t},   {"linf", 128, 2.036e-6, t},  {"linf", 256, 5.129e-7, t},
                   {"linf", 512, 1.282e-7, t},  {"linf", 1024, 3.214e-8, t}, {"linf", 2048, 8.179e-9, t},
                   {"l2", 64, 2.222e-6, t},     {"l2", 128, 5.560e-7, t},    {"l2", 256, 1.391e-7, t},
                   {"l2", 512, 3.494e-8, t},    {"l2", 1024, 8.730e-9, t},   {"l2", 2048, 2.182e-9, t}};
    for (int n : {64, 128, 256, 512})
      e.checks.push_back({K::within_factor, "linf", n, n, 2.0, "linf within 2x of published at n=" + std::to_string(n)});
    e.checks.push_back({K::rate_each, "linf", 128, INT_MAX, 1.9, "linf rate >= 1.9 for n >= 128"});
    e.checks.push_back({K::seconds_at_most, "", 0, 512, 30.0, "runtime through n=512 <= 30 s"});
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      return sweep(ns, ctx, [&](int n) {
        Ellipse el;
        el.radii = {0.7, 0.3};
        Lattice L{make_grid(2, n, -1.0, 1.0), Centering::cell};
        double h = L.h();
        auto band = std::make_shared<NarrowBand>(sample_sdf(el, L, param<double>(ctx, "band", 13.0) * h));
        auto g = sample_jumps(*band, [](const Point& x, const double* nn, double* g) {
          double ex = std::exp(x[0]), y = x[1];
          g[0] = ex * y * y;
          g[1] = ex * y * y * nn[0] + 2 * ex * y * nn[1];
          g[2] = ex * (y * y + 2);
          g[3] = ex * (y * y + 2) * nn[0] + 2 * ex * y * nn[1];
        });
        ExtrapolationOptions o;
        o.q = param<int>(ctx, "q", 3);
        o.consumer_reach = 1.0;
        auto ext = build_extrapolation(band, g, o);
        ScalarField u(L), ex(L);
        for (std::size_t i = 0; i < L.size(); ++i) {
          auto x = L.coord(i);
          double H = heaviside(band->phi[i]);
          u[i] = std::exp(x[0]) * x[1] * x[1] * H;
          ex[i] = std::exp(x[0]) * (x[1] * x[1] + 2) * H;
        }
        auto r = spliced_apply(laplacian5(L), u, ext);
        Mask in = interior_mask(L, 1);
        auto err = difference(r, ex);
        return std::vector<double>{linf_norm(err, in), l2_norm(err, in)};
      });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex4.1";
    e.title = "Poisson, circle r=0.5: u = 1 inside, 1 + log(2r) outside";
    e.columns = elliptic_columns();
    e.n_default = {20, 40, 80, 160, 320, 640, 1280, 2560};
    e.n_cap = 1024;
    e.params = ell_params;
    const char* t = "Table 2";
    e.published = {{"linf", 20, 2.132e-3, t},  {"linf", 40, 5.129e-4, t},   {"linf", 80, 1.233e-4, t},
                   {"linf", 160, 3.206e-5, t}, {"linf", 320, 7.949e-6, t},  {"linf", 640, 1.981e-6, t},
                   {"linf", 1280, 4.961e-7, t}, {"linf", 2560, 1.239e-7, t}, {"l2", 20, 2.259e-3, t},
                   {"l2", 40, 5.269e-4, t},    {"l2", 80, 1.253e-4, t},     {"l2", 160, 3.258e-5, t},
                   {"l2", 320, 8.064e-6, t},   {"l2", 640, 2.009e-6, t},    {"l2", 1280, 5.030e-7, t},
                   {"l2", 2560, 1.256e-7, t}};
    e.checks = {{K::within_factor, "linf", 320, 320, 2.0, "linf within 2x of published at n=320"},
                {K::rate_each, "linf", 80, INT_MAX, 1.9, "linf rate >= 1.9 for n >= 80"},
                {K::seconds_at_most, "", 0, 640, 60.0, "runtime through n=640 <= 60 s"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      EllipticCase ec{Circle{},
                      [](const Point&, const double*, double* g) { g[1] = 2.0; },
                      [](const Point& x, double phi) { return phi >= 0 ? 1.0 : 1.0 + log_radius(x); }};
      return sweep(ns, ctx, [&](int n) { return run_elliptic(ec, 2, n, ctx); });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex4.2";
    e.title = "Poisson, circle r=0.5: u = e^x cos y inside, 0 outside";
    e.columns = elliptic_columns();
    e.n_default = {20, 40, 80, 160, 320, 640, 1280, 2560};
    e.n_cap = 1024;
    e.params = ell_params;
    const char* t = "Table 3";
    e.published = {{"linf", 20, 2.066e-2, t},  {"linf", 40, 6.728e-5, t},   {"linf", 80, 1.689e-5, t},
                   {"linf", 160, 4.209e-6, t}, {"linf", 320, 1.053e-6, t},  {"linf", 640, 2.633e-7, t},
                   {"linf", 1280, 6.577e-8, t}, {"linf", 2560, 1.633e-8, t}, {"l2", 20, 7.980e-3, t},
                   {"l2", 40, 5.741e-5, t},    {"l2", 80, 1.438e-5, t},     {"l2", 160, 3.578e-6, t},
                   {"l2", 320, 8.950e-7, t},   {"l2", 640, 2.238e-7, t},    {"l2", 1280, 5.589e-8, t},
                   {"l2", 2560, 1.386e-8, t}};
    e.checks = {{K::within_factor, "linf", 160, 160, 2.0, "linf within 2x of published at n=160"},
                {K::rate_each, "linf", 160, INT_MAX, 1.9, "linf rate >= 1.9 for n >= 160"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      EllipticCase ec{Circle{},
                      [](const Point& x, const double* nn, double* g) {
                        double ex = std::exp(x[0]);
                        g[0] = ex * std::cos(x[1]);
                        g[1] = ex * std::cos(x[1]) * nn[0] - ex * std::sin(x[1]) * nn[1];
                      },
                      [](const Point& x, double phi) { return phi >= 0 ? std::exp(x[0]) * std::cos(x[1]) : 0.0; }};
      return sweep(ns, ctx, [&](int n) { return run_elliptic(ec, 2, n, ctx); });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex4.3";
    e.title = "Poisson, C1 stadium (half length 0.5, radius 0.2): u = 0 inside, 1 - log(2r) outside";
    e.columns = elliptic_columns();
    e.n_default = {20, 40, 80, 160, 320, 640, 1280, 2560};
    e.n_cap = 1024;
    e.params = ell_params;
    const char* t = "Table 4";
    e.published = {{"linf", 20, 2.226e-1, t},  {"linf", 40, 1.489e-1, t},   {"linf", 80, 8.849e-4, t},
                   {"linf", 160, 2.120e-4, t}, {"linf", 320, 5.293e-5, t},  {"linf", 640, 1.323e-5, t},
                   {"linf", 1280, 3.307e-6, t}, {"linf", 2560, 8.268e-7, t}, {"l2", 20, 1.485e-1, t},
                   {"l2", 40, 7.179e-2, t},    {"l2", 80, 3.032e-4, t},     {"l2", 160, 7.251e-5, t},
                   {"l2", 320, 1.813e-5, t},   {"l2", 640, 4.533e-6, t},    {"l2", 1280, 1.134e-6, t},
                   {"l2", 2560, 2.834e-7, t}};
    e.checks = {{K::within_factor, "linf", 320, 320, 3.0, "linf within 3x of published at n=320"},
                {K::rate_each, "linf", 160, INT_MAX, 1.9, "linf rate >= 1.9 for n >= 160"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      auto ec = log_exterior(Stadium{});
      return sweep(ns, ctx, [&](int n) { return run_elliptic(ec, 2, n, ctx); });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex4.4";
    e.title = "Poisson, C0 union of two discs: u = 0 inside, 1 - log(2r) outside";
    e.columns = elliptic_columns();
    e.n_default = {20, 40, 80, 160, 320, 640, 1280, 2560};
    e.n_cap = 1280;
    e.params = ell_params;
    const char* t = "Table 5";
    e.published = {{"linf", 20, 1.822e-1, t},  {"linf", 40, 7.645e-3, t},   {"linf", 80, 6.363e-3, t},
                   {"linf", 160, 2.970e-3, t}, {"linf", 320, 1.755e-3, t},  {"linf", 640, 9.087e-4, t},
                   {"linf", 1280, 5.457e-4, t}, {"linf", 2560, 3.110e-4, t}, {"l2", 20, 6.730e-2, t},
                   {"l2", 40, 3.895e-3, t},    {"l2", 80, 3.669e-3, t},     {"l2", 160, 1.373e-3, t},
                   {"l2", 320, 7.215e-4, t},   {"l2", 640, 3.174e-4, t},    {"l2", 1280, 1.784e-4, t},
                   {"l2", 2560, 9.234e-5, t}};
    e.checks = {{K::rate_overall, "l2", 160, 1280, 0.7, "l2 rate over n=160..1280 >= 0.7"},
                {K::rate_each, "l2", 320, 1280, 0.0, "l2 error does not grow for n=160..1280"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      auto ec = log_exterior(TwoCircleUnion{});
      return sweep(ns, ctx, [&](int n) { return run_elliptic(ec, 2, n, ctx); });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex4.5";
    e.title = "3D Poisson, ellipsoid radii (0.7, 0.3, 0.5): u = 0 inside, 1/r outside";
    e.columns = elliptic_columns();
    e.n_default = {64, 128, 256, 512};
    e.n_cap = 256;
    e.params = ell_params;
    const char* t = "Table 6";
    e.published = {{"linf", 64, 2.969e-3, t}, {"linf", 128, 7.802e-4, t}, {"linf", 256, 1.952e-4, t},
                   {"linf", 512, 4.790e-5, t}, {"l2", 64, 6.513e-4, t},   {"l2", 128, 1.616e-4, t},
                   {"l2", 256, 4.068e-5, t},  {"l2", 512, 1.007e-5, t}};
    e.checks = {{K::within_factor, "linf", 128, 128, 2.0, "linf within 2x of published at n=128"},
                {K::rate_each, "linf", 128, INT_MAX, 1.9, "linf rate >= 1.9"},
                {K::seconds_at_most, "", 256, 256, 600.0, "runtime at n=256 <= 10 min"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      EllipticCase ec{Ellipsoid{},
                      [](const Point& x, const double* nn, double* g) {
                        double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
                        g[0] = -1.0 / r;
                        g[1] = (x[0] * nn[0] + x[1] * nn[1] + x[2] * nn[2]) / (r * r * r);
                      },
                      [](const Point& x, double phi) {
                        return phi >= 0 ? 0.0 : 1.0 / std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
                      }};
      return sweep(ns, ctx, [&](int n) { return run_elliptic(ec, 3, n, ctx); });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex5.1";
    e.title = "perimeter of the circle r=0.5 by spliced delta quadrature";
    e.columns = {{"error"}};
    e.n_default = {64, 128, 256, 512, 1024, 2048};
    e.n_cap = 1024;
    e.params = {"band"};
    const char* t = "Table 8";
    e.published = {{"error", 64, 5.422e-5, t},  {"error", 128, 3.142e-6, t},  {"error", 256, 1.610e-7, t},
                   {"error", 512, 1.311e-8, t}, {"error", 1024, 7.062e-10, t}, {"error", 2048, 1.283e-11, t}};
    e.checks = {{K::times_published, "error", 64, 64, 2.0, "error <= 2x published at n=64"},
                {K::rate_average, "error", 128, INT_MAX, 3.5, "average observed order >= 3.5"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      return sweep(ns, ctx, [&](int n) {
        Lattice L{make_grid(2, n, -1.0, 1.0), Centering::cell};
        auto band = std::make_shared<NarrowBand>(sample_sdf(Circle{}, L, param<double>(ctx, "band", 14.0) * L.h()));
        double I = integrate_surface(ScalarField(L, 1.0), Mask(L, true), band);
        return std::vector<double>{std::abs(I - std::numbers::pi)};
      });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex5.2";
    e.title = "integral of e^x over the ellipse radii (0.35, 0.7)";
    e.columns = {{"error"}};
    e.n_default = {64, 128, 256, 512, 1024, 2048};
    e.n_cap = 1024;
    e.params = {"band"};
    const char* t = "Table 9";
    e.published = {{"error", 64, 2.289e-4, t}, {"error", 128, 1.414e-5, t}, {"error", 256, 7.309e-7, t},
                   {"error", 512, 7.100e-8, t}, {"error", 1024, 7.116e-9, t}, {"error", 2048, 1.250e-10, t}};
    e.checks = {{K::times_published, "error", 128, 128, 2.0, "error <= 2x published at n=128"},
                {K::rate_average, "error", 128, INT_MAX, 3.5, "average observed order >= 3.5"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      double exact = ellipse_exp_integral(0.35, 0.7);
      return sweep(ns, ctx, [&](int n) {
        Lattice L{make_grid(2, n, -1.0, 1.0), Centering::cell};
        Ellipse el;
        el.radii = {0.35, 0.7};
        auto band = std::make_shared<NarrowBand>(sample_sdf(el, L, param<double>(ctx, "band", 14.0) * L.h()));
        auto a = ScalarField::sample(L, [](const Point& x) { return std::exp(x[0]); });
        double I = integrate_surface(a, Mask(L, true), band);
        return std::vector<double>{std::abs(I - exact)};
      });
    };
    R.push_back(std::move(e));
  }

  {
    Experiment e;
    e.id = "ex5.3";
    e.title = "volume of the ellipsoid radii (0.35, 0.7, 0.5), exact 4/3 pi abc";
    e.columns = {{"error"}};
    e.n_default = {64, 128, 256, 512};
    e.n_cap = 256;
    e.params = {"band"};
    const char* t = "Table 10";
    e.published = {{"error", 64, 3.801e-5, t}, {"error", 128, 7.703e-7, t}, {"error", 256, 9.100e-8, t},
                   {"error", 512, 4.445e-9, t}};
    e.checks = {{K::times_published, "error", 128, 128, 3.0, "error <= 3x published at n=128"},
                {K::rate_average, "error", 128, INT_MAX, 3.5, "average observed order >= 3.5"}};
    e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
      return sweep(ns, ctx, [&](int n) {
        Lattice L{make_grid(3, n, -1.0, 1.0), Centering::cell};
        Ellipsoid el;
        el.radii = {0.35, 0.7, 0.5};
        auto band = std::make_shared<NarrowBand>(sample_sdf(el, L, param<double>(ctx, "band", 14.0) * L.h()));
        double V = enclosed_volume(band);
        return std::vector<double>{std::abs(V - 4.0 / 3.0 * std::numbers::pi * 0.35 * 0.7 * 0.5)};
      });
    };
    R.push_back(std::move(e));
  }

  // Flow: published values are at T = 0.5 and serve as scale references; the
  // runs stop at T = 0.125.
  auto flow = [&](std::string id, std::string title, double mu, ForceModel force, std::vector<Published> pub,
                  std::vector<Check> checks) {
    Experiment e;
    e.id = id;
    e.title = title;
    e.columns = flow_columns();
    e.n_default = {64, 128, 256, 512, 1024};
    e.n_cap = 256;
    e.params = flow_params();
    e.published = std::move(pub);
    e.checks = std::move(checks);
    e.run = [id, mu, force](const std::vector<int>& ns, const RunContext& ctx) {
      return run_flow_sweep(id, ns, ctx, mu, force);
    };
    R.push_back(std::move(e));
  };
  const char* t11 = "Table 11";
  const char* t12 = "Table 12";
  const char* t13 = "Table 13";
  const char* t14 = "Table 14";
  const char* t15 = "Table 15";
  const char* t16 = "Table 16";
  flow("ex6.1", "ellipse (0.35, 0.15) relaxing under surface tension, Re = 10, T = 0.125", 0.1, ForceModel::spliced,
       {{"E_u", 128, 7.77e-2, t11},  {"E_u", 256, 4.53e-3, t11},  {"E_u", 512, 1.27e-3, t11},
        {"E_u", 1024, 3.45e-4, t11}, {"E_p", 128, 6.15, t11},     {"E_p", 256, 2.10e-1, t11},
        {"E_p", 512, 1.12e-1, t11},  {"E_p", 1024, 3.48e-2, t11}, {"E_phi", 128, 4.09e-4, t12},
        {"E_phi", 256, 5.88e-5, t12}, {"E_phi", 512, 1.49e-5, t12}, {"E_phi", 1024, 3.70e-6, t12},
        {"E_Vol", 64, 2.42e-4, t13}, {"E_Vol", 128, 6.25e-5, t13}, {"E_Vol", 256, 1.61e-5, t13},
        {"E_Vol", 512, 3.99e-6, t13}, {"E_Vol", 1024, 1.03e-6, t13}},
       {{K::within_factor, "E_u", 256, 256, 4.0, "E_u(128,256) within 4x of published"},
        {K::rate_each, "E_u", 256, 256, 1.7, "E_u rate >= 1.7 over n=64..256"},
        {K::rate_each, "E_Vol", 128, 256, 1.7, "E_Vol rate >= 1.7 over n=64..256"},
        {K::at_most, "E_Vol", 256, 256, 5e-5, "E_Vol at n=256 <= 5e-5"},
        {K::seconds_at_most, "", 256, 256, 4 * 3600.0, "runtime at n=256 <= 4 h"}});
  flow("ex6.2", "ellipse (0.35, 0.15) relaxing under surface tension, Re = 100, T = 0.125", 0.01,
       ForceModel::spliced,
       {{"E_u", 128, 9.96e-2, t14},  {"E_u", 256, 1.67e-2, t14},  {"E_u", 512, 4.22e-3, t14},
        {"E_u", 1024, 1.15e-3, t14}, {"E_p", 128, 8.78, t14},     {"E_p", 256, 2.65, t14},
        {"E_p", 512, 6.05e-1, t14},  {"E_p", 1024, 2.78e-1, t14}, {"E_phi", 128, 1.96e-3, t15},
        {"E_phi", 256, 5.01e-4, t15}, {"E_phi", 512, 1.27e-4, t15}, {"E_phi", 1024, 3.21e-5, t15},
        {"E_Vol", 64, 1.82e-3, t16}, {"E_Vol", 128, 4.73e-4, t16}, {"E_Vol", 256, 1.20e-4, t16},
        {"E_Vol", 512, 3.03e-5, t16}, {"E_Vol", 1024, 7.64e-6, t16}},
       {{K::rate_each, "E_phi", 256, 256, 1.8, "E_phi rate >= 1.8 over n=64..256"}});
  flow("ex6.1-delta", "smoothed delta baseline of ex6.1 (eps = 2h)", 0.1, ForceModel::smoothed_delta,
       {{"E_u", 128, 1.86e-2, t11},  {"E_u", 256, 1.00e-2, t11},  {"E_u", 512, 3.81e-3, t11},
        {"E_u", 1024, 2.05e-3, t11}, {"E_p", 128, 2.79, t11},     {"E_p", 256, 2.79, t11},
        {"E_p", 512, 2.93, t11},     {"E_p", 1024, 2.69, t11},    {"E_phi", 128, 4.63e-4, t12},
        {"E_phi", 256, 9.31e-5, t12}, {"E_phi", 512, 2.39e-5, t12}, {"E_phi", 1024, 9.58e-6, t12},
        {"E_Vol", 64, 2.55e-4, t13}, {"E_Vol", 128, 7.85e-5, t13}, {"E_Vol", 256, 3.22e-5, t13},
        {"E_Vol", 512, 1.42e-5, t13}, {"E_Vol", 1024, 6.61e-6, t13}},
       {});
  flow("ex6.2-delta", "smoothed delta baseline of ex6.2 (eps = 2h)", 0.01, ForceModel::smoothed_delta,
       {{"E_u", 128, 9.31e-2, t14},  {"E_u", 256, 6.18e-2, t14},  {"E_u", 512, 3.24e-2, t14},
        {"E_u", 1024, 1.69e-2, t14}, {"E_p", 128, 2.97, t14},     {"E_p", 256, 2.83, t14},
        {"E_p", 512, 3.01, t14},     {"E_p", 1024, 2.65, t14},    {"E_phi", 128, 2.65e-3, t15},
        {"E_phi", 256, 7.98e-4, t15}, {"E_phi", 512, 2.50e-4, t15}, {"E_phi", 1024, 8.16e-5, t15},
        {"E_Vol", 64, 1.52e-3, t16}, {"E_Vol", 128, 6.71e-4, t16}, {"E_Vol", 256, 3.00e-4, t16},
        {"E_Vol", 512, 1.39e-4, t16}, {"E_Vol", 1024, 6.65e-5, t16}},
       {});
  return R;
}

inline const std::vector<Experiment>& registry() {
  static const std::vector<Experiment> R = build_registry();
  return R;
}

inline std::string known_ids() {
  std::string s;
  for (const auto& e : registry()) s += (s.empty() ? "" : ", ") + e.id;
  return s;
}

inline const Experiment& find_experiment(const std::string& id) {
  for (const auto& e : registry())
    if (e.id == id) return e;
  throw std::invalid_argument("unknown experiment '" + id + "'; known: " + known_ids());
}

// Runs the n at or below the cap; the rest come back as "not run" rows.
inline Table run_experiment(const Experiment& e, const std::vector<int>& ns_in, const RunContext& ctx = {}) {
  for (auto it = ctx.params.begin(); it != ctx.params.end(); ++it)
    if (std::find(e.params.begin(), e.params.end(), it.key()) == e.params.end()) {
      std::string ok;
      for (const auto& p : e.params) ok += (ok.empty() ? "" : ", ") + p;
      throw std::invalid_argument(e.id + ": unknown parameter '" + it.key() + "' (accepted: " + ok + ")");
    }
  std::vector<int> ns = ns_in.empty() ? e.n_default : ns_in;
  if (!std::is_sorted(ns.begin(), ns.end()) || std::adjacent_find(ns.begin(), ns.end()) != ns.end())
    throw std::invalid_argument(e.id + ": n list must be strictly increasing");
  std::vector<int> run_ns;
  for (int n : ns)
    if (n <= e.n_cap) run_ns.push_back(n);
  std::vector<Row> ran = run_ns.empty() ? std::vector<Row>{} : e.run(run_ns, ctx);
  Table t;
  t.id = e.id;
  t.columns = e.columns;
  std::size_t k = 0;
  for (int n : ns) {
    if (n <= e.n_cap) {
      t.rows.push_back(ran.at(k++));
    } else {
      Row r;
      r.n = n;
      r.values.assign(e.columns.size(), nan);
      t.rows.push_back(r);
    }
  }
  return t;
}

inline double published_value(const Experiment& e, const std::string& col, int n) {
  for (const auto& p : e.published)
    if (p.column == col && p.n == n) return p.value;
  return nan;
}

// n, status, then each column (with its rate and the published value).
inline std::string to_csv(const Experiment& e, const Table& t) {
  std::ostringstream os;
  os << "n,status";
  for (const auto& c : t.columns) {
    os << ',' << c.name;
    if (c.rated) os << ',' << c.name << "_rate," << c.name << "_published";
  }
  os << '\n';
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const Row& r = t.rows[k];
    os << r.n << ',' << (r.ran ? "ok" : "not run");
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      const auto& col = t.columns[c];
      os << ',' << (r.ran ? fmt(r.values[c], col.rated ? "%.10e" : "%.0f") : "");
      if (col.rated) os << ',' << fmt(t.rate(col.name, k), "%.3f") << ',' << fmt(published_value(e, col.name, r.n), "%.4e");
    }
    os << '\n';
  }
  return os.str();
}

inline std::string timing_csv(const Table& t) {
  std::ostringstream os;
  os << "n,seconds\n";
  for (const auto& r : t.rows)
    if (r.ran) os << r.n << ',' << fmt(r.seconds, "%.3f") << '\n';
  return os.str();
}

inline std::vector<CheckResult> golden(const Experiment& e, const Table& t) {
  std::vector<CheckResult> out;
  for (const auto& c : e.checks) {
    CheckResult r;
    r.label = c.label;
    auto rates_in_range = [&](std::vector<double>& rs, std::vector<int>& at) {
      for (std::size_t k = 1; k < t.rows.size(); ++k) {
        int n = t.rows[k].n;
        if (n < c.n_lo || n > c.n_hi) continue;
        if (!t.rows[k].ran) continue;
        rs.push_back(t.rate(c.column, k));
        at.push_back(n);
      }
    };
    switch (c.kind) {
      case K::times_published:
      case K::within_factor:
      case K::at_most: {
        double v = t.value(c.column, c.n_lo);
        if (std::isnan(v)) {
          r.detail = "n=" + std::to_string(c.n_lo) + " not run";
          break;
        }
        r.evaluated = true;
        if (c.kind == K::at_most) {
          r.pass = v <= c.limit;
          r.detail = c.column + "=" + fmt(v, "%.4e") + " limit " + fmt(c.limit, "%.4e");
          break;
        }
        double p = published_value(e, c.column, c.n_lo);
        r.pass = c.kind == K::times_published ? v <= c.limit * p : (v >= p / c.limit && v <= p * c.limit);
        r.detail = c.column + "=" + fmt(v, "%.4e") + " published " + fmt(p, "%.4e") + " ratio " + fmt(v / p, "%.3f");
        break;
      }
      case K::rate_each:
      case K::rate_average: {
        std::vector<double> rs;
        std::vector<int> at;
        rates_in_range(rs, at);
        if (rs.empty()) {
          r.detail = "no rates in range";
          break;
        }
        r.evaluated = true;
        r.pass = true;
        double sum = 0.0;
        std::string d;
        for (std::size_t k = 0; k < rs.size(); ++k) {
          d += (d.empty() ? "" : " ") + std::to_string(at[k]) + ":" + fmt(rs[k], "%.2f");
          if (std::isnan(rs[k])) r.pass = false;
          sum += rs[k];
          if (c.kind == K::rate_each && !(rs[k] >= c.limit)) r.pass = false;
        }
        if (c.kind == K::rate_average) {
          double avg = sum / rs.size();
          r.pass = r.pass && avg >= c.limit;
          d += " average " + fmt(avg, "%.2f");
        }
        r.detail = "rates " + d + " floor " + fmt(c.limit, "%.2f");
        break;
      }
      case K::rate_overall: {
        double a = t.value(c.column, c.n_lo), b = t.value(c.column, c.n_hi);
        if (std::isnan(a) || std::isnan(b)) {
          r.detail = "endpoints not run";
          break;
        }
        r.evaluated = true;
        double rate = std::log(a / b) / std::log(static_cast<double>(c.n_hi) / c.n_lo);
        r.pass = rate >= c.limit;
        r.detail = "rate " + fmt(rate, "%.2f") + " floor " + fmt(c.limit, "%.2f");
        break;
      }
      case K::seconds_at_most: {
        double s = 0.0;
        bool any = false;
        for (const auto& row : t.rows)
          if (row.ran && row.n >= c.n_lo && row.n <= c.n_hi) {
            s += row.seconds;
            any = true;
          }
        // the bound is on the last row needed, so it must have run
        if (!any || !t.row(c.n_hi)) {
          r.detail = "n=" + std::to_string(c.n_hi) + " not run";
          break;
        }
        r.evaluated = true;
        r.pass = s <= c.limit;
        r.detail = fmt(s, "%.1f") + " s, limit " + fmt(c.limit, "%.0f") + " s";
        break;
      }
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace jsplice::bench
