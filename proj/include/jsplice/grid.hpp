#pragma once

// Uniform Cartesian lattices, fields on them, masks, norms and field IO.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace jsplice {

enum class Centering { cell, node };

inline const char* to_string(Centering c) { return c == Centering::cell ? "cell" : "node"; }

inline Centering centering_from_string(const std::string& s) {
  if (s == "cell") return Centering::cell;
  if (s == "node") return Centering::node;
  throw std::invalid_argument("unknown centering '" + s + "'");
}

using Point = std::array<double, 3>;

struct Grid {
  int dim = 2;
  int n = 0;
  double h = 0.0;
  Point origin{0.0, 0.0, 0.0};

  bool operator==(const Grid&) const = default;
};

// Cubic box [lo, hi]^dim split into n intervals per axis.
inline Grid make_grid(int dim, int n, double lo, double hi) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("grid dimension must be 2 or 3");
  if (n <= 0) throw std::invalid_argument("grid resolution must be positive");
  if (!(hi > lo)) throw std::invalid_argument("grid box is empty");
  Grid g;
  g.dim = dim;
  g.n = n;
  g.h = (hi - lo) / n;
  g.origin = {lo, lo, dim == 3 ? lo : 0.0};
  return g;
}

// Box with per-axis bounds. Spacing must agree across axes.
inline Grid make_grid(int dim, int n, std::span<const double> lower, std::span<const double> upper) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("grid dimension must be 2 or 3");
  if (n <= 0) throw std::invalid_argument("grid resolution must be positive");
  if (lower.size() < static_cast<std::size_t>(dim) || upper.size() < static_cast<std::size_t>(dim))
    throw std::invalid_argument("box bounds shorter than dimension");
  Grid g;
  g.dim = dim;
  g.n = n;
  g.h = (upper[0] - lower[0]) / n;
  if (!(g.h > 0)) throw std::invalid_argument("grid box is empty");
  for (int a = 0; a < dim; ++a) {
    double ha = (upper[a] - lower[a]) / n;
    if (std::abs(ha - g.h) > 1e-12 * g.h) throw std::invalid_argument("grid spacing must be uniform across axes");
    g.origin[a] = lower[a];
  }
  return g;
}

struct Lattice {
  Grid grid;
  Centering centering = Centering::node;

  int dim() const { return grid.dim; }
  double h() const { return grid.h; }
  int extent() const { return centering == Centering::cell ? grid.n : grid.n + 1; }
  double offset() const { return centering == Centering::cell ? 0.5 : 0.0; }

  std::size_t size() const {
    std::size_t e = static_cast<std::size_t>(extent());
    return grid.dim == 3 ? e * e * e : e * e;
  }

  std::array<std::ptrdiff_t, 3> strides() const {
    std::ptrdiff_t e = extent();
    return {1, e, e * e};
  }

  std::size_t index(int i, int j, int k = 0) const {
    std::size_t e = static_cast<std::size_t>(extent());
    return static_cast<std::size_t>(i) + e * (static_cast<std::size_t>(j) + e * static_cast<std::size_t>(k));
  }

  std::array<int, 3> unravel(std::size_t idx) const {
    std::size_t e = static_cast<std::size_t>(extent());
    std::array<int, 3> c{};
    c[0] = static_cast<int>(idx % e);
    idx /= e;
    c[1] = static_cast<int>(idx % e);
    c[2] = grid.dim == 3 ? static_cast<int>(idx / e) : 0;
    return c;
  }

  Point coord(int i, int j, int k = 0) const {
    double o = offset();
    return {grid.origin[0] + (i + o) * grid.h, grid.origin[1] + (j + o) * grid.h,
            grid.dim == 3 ? grid.origin[2] + (k + o) * grid.h : 0.0};
  }

  Point coord(std::size_t idx) const {
    auto c = unravel(idx);
    return coord(c[0], c[1], c[2]);
  }

  bool operator==(const Lattice&) const = default;
};

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Lattice& lat, double fill = 0.0) : lat_(lat), data_(lat.size(), fill) {}

  const Lattice& lattice() const { return lat_; }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int i, int j, int k = 0) { return data_[lat_.index(i, j, k)]; }
  double at(int i, int j, int k = 0) const { return data_[lat_.index(i, j, k)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  template <class F>
  static ScalarField sample(const Lattice& lat, F&& f) {
    ScalarField out(lat);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(lat.coord(i));
    return out;
  }

 private:
  Lattice lat_;
  std::vector<double> data_;
};

// One component per axis.
struct VectorField {
  std::vector<ScalarField> comp;

  VectorField() = default;
  VectorField(const Lattice& lat, int ncomp, double fill = 0.0) : comp(ncomp, ScalarField(lat, fill)) {}
  const Lattice& lattice() const { return comp.at(0).lattice(); }
  int components() const { return static_cast<int>(comp.size()); }
  ScalarField& operator[](int a) { return comp[a]; }
  const ScalarField& operator[](int a) const { return comp[a]; }
};

class Mask {
 public:
  Mask() = default;
  explicit Mask(const Lattice& lat, bool fill = false) : lat_(lat), bits_(lat.size(), fill ? 1 : 0) {}

  const Lattice& lattice() const { return lat_; }
  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }
  std::uint8_t* data() { return bits_.data(); }
  const std::uint8_t* data() const { return bits_.data(); }
  bool empty() const { return bits_.empty(); }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : bits_) c += b != 0;
    return c;
  }

  Mask& operator&=(const Mask& o) {
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] = bits_[i] && o.bits_[i];
    return *this;
  }
  Mask& operator|=(const Mask& o) {
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] = bits_[i] || o.bits_[i];
    return *this;
  }

 private:
  Lattice lat_;
  std::vector<std::uint8_t> bits_;
};

// Points at least `reach` away from every array bound.
inline Mask interior_mask(const Lattice& lat, int reach) {
  Mask m(lat);
  int e = lat.extent();
  for (std::size_t i = 0; i < lat.size(); ++i) {
    auto c = lat.unravel(i);
    bool in = true;
    for (int a = 0; a < lat.dim(); ++a) in = in && c[a] >= reach && c[a] < e - reach;
    m.set(i, in);
  }
  return m;
}

// Recursive pairwise summation; the order is fixed by the data layout.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 64) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  std::size_t m = n / 2;
  return pairwise_sum(x, m) + pairwise_sum(x + m, n - m);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

inline void require_same_lattice(const Lattice& a, const Lattice& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": lattice mismatch");
}

inline double linf_norm(const ScalarField& f, const Mask& region) {
  require_same_lattice(f.lattice(), region.lattice(), "linf_norm");
  double m = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (region[i]) {
      m = std::max(m, std::abs(f[i]));
      ++cnt;
    }
  if (cnt == 0) throw std::invalid_argument("linf_norm: empty region");
  return m;
}

inline double l2_norm(const ScalarField& f, const Mask& region) {
  require_same_lattice(f.lattice(), region.lattice(), "l2_norm");
  std::vector<double> sq;
  sq.reserve(f.size());
  for (std::size_t i = 0; i < f.size(); ++i)
    if (region[i]) sq.push_back(f[i] * f[i]);
  if (sq.empty()) throw std::invalid_argument("l2_norm: empty region");
  return std::sqrt(std::pow(f.lattice().h(), f.lattice().dim()) * pairwise_sum(sq));
}

inline double linf_norm(const ScalarField& f) { return linf_norm(f, Mask(f.lattice(), true)); }
inline double l2_norm(const ScalarField& f) { return l2_norm(f, Mask(f.lattice(), true)); }

inline ScalarField difference(const ScalarField& a, const ScalarField& b) {
  require_same_lattice(a.lattice(), b.lattice(), "difference");
  ScalarField d(a.lattice());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

struct CompareOptions {
  const Mask* exclude = nullptr;       // coarse lattice; true drops the point
  const Mask* fine_valid = nullptr;    // fine lattice; every contributing fine point must be valid
  const Mask* coarse_valid = nullptr;  // coarse lattice
};

struct CompareResult {
  ScalarField error;  // on the coarse lattice, zero where not compared
  Mask compared;
  double linf = 0.0;
  double l2 = 0.0;
};

// Coarse-vs-fine comparison. Nodes coincide at even fine indices; a coarse cell
// is compared against the mean of its 2^d fine children.
inline CompareResult restrict_compare(const ScalarField& fine, const ScalarField& coarse,
                                      const CompareOptions& opt = {}) {
  const Lattice& fl = fine.lattice();
  const Lattice& cl = coarse.lattice();
  if (fl.centering != cl.centering || fl.dim() != cl.dim() || fl.grid.n != 2 * cl.grid.n)
    throw std::invalid_argument("restrict_compare: lattices are not a refinement pair");
  if (std::abs(fl.grid.h * 2 - cl.grid.h) > 1e-12 * cl.grid.h)
    throw std::invalid_argument("restrict_compare: spacing is not a factor of two");
  CompareResult r{ScalarField(cl), Mask(cl), 0.0, 0.0};
  int d = cl.dim();
  int kd = d == 3 ? 2 : 1;
  for (std::size_t ci = 0; ci < cl.size(); ++ci) {
    if (opt.exclude && (*opt.exclude)[ci]) continue;
    if (opt.coarse_valid && !(*opt.coarse_valid)[ci]) continue;
    auto c = cl.unravel(ci);
    double fv = 0.0;
    bool ok = true;
    if (cl.centering == Centering::node) {
      std::size_t fi = fl.index(2 * c[0], 2 * c[1], 2 * c[2]);
      ok = !opt.fine_valid || (*opt.fine_valid)[fi];
      fv = fine[fi];
    } else {
      for (int dk = 0; dk < kd; ++dk)
        for (int dj = 0; dj < 2; ++dj)
          for (int di = 0; di < 2; ++di) {
            std::size_t fi = fl.index(2 * c[0] + di, 2 * c[1] + dj, d == 3 ? 2 * c[2] + dk : 0);
            ok = ok && (!opt.fine_valid || (*opt.fine_valid)[fi]);
            fv += fine[fi];
          }
      fv /= (d == 3 ? 8.0 : 4.0);
    }
    if (!ok) continue;
    r.error[ci] = coarse[ci] - fv;
    r.compared.set(ci);
  }
  if (r.compared.count() == 0) throw std::invalid_argument("restrict_compare: nothing to compare");
  r.linf = linf_norm(r.error, r.compared);
  r.l2 = l2_norm(r.error, r.compared);
  return r;
}

// Observed order between successive refinements: log2(e_k / e_{k+1}).
inline std::vector<double> observed_rates(const std::vector<double>& errors) {
  std::vector<double> r;
  for (std::size_t i = 1; i < errors.size(); ++i) r.push_back(std::log2(errors[i - 1] / errors[i]));
  return r;
}

// Field files: one JSON header line, a newline, then raw doubles in index order.
inline void write_field(const std::string& path, const ScalarField& f) {
  const Lattice& l = f.lattice();
  nlohmann::json hdr = {{"dim", l.dim()},
                        {"n", l.grid.n},
                        {"centering", to_string(l.centering)},
                        {"origin", {l.grid.origin[0], l.grid.origin[1], l.grid.origin[2]}},
                        {"h", l.grid.h},
                        {"count", f.size()}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  std::string line = hdr.dump() + "\n";
  os.write(line.data(), static_cast<std::streamsize>(line.size()));
  os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!os) throw std::runtime_error("short write to " + path);
}

inline ScalarField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(is, line);
  auto hdr = nlohmann::json::parse(line);
  Lattice l;
  l.grid.dim = hdr.at("dim").get<int>();
  l.grid.n = hdr.at("n").get<int>();
  l.grid.h = hdr.at("h").get<double>();
  auto o = hdr.at("origin");
  for (int a = 0; a < 3; ++a) l.grid.origin[a] = o.at(a).get<double>();
  l.centering = centering_from_string(hdr.at("centering").get<std::string>());
  ScalarField f(l);
  if (hdr.at("count").get<std::size_t>() != f.size()) throw std::runtime_error(path + ": count does not match lattice");
  is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(f.size() * sizeof(double)))
    throw std::runtime_error(path + ": truncated payload");
  return f;
}

// Line of values along `axis` through the nearest lattice line to `at`.
inline void write_csv_line(const std::string& path, const ScalarField& f, int axis, const Point& at) {
  const Lattice& l = f.lattice();
  std::array<int, 3> base{};
  for (int a = 0; a < l.dim(); ++a) {
    double t = (at[a] - l.grid.origin[a]) / l.h() - l.offset();
    base[a] = std::clamp(static_cast<int>(std::lround(t)), 0, l.extent() - 1);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  const char* names[3] = {"x", "y", "z"};
  os << names[0] << ',' << names[1];
  if (l.dim() == 3) os << ',' << names[2];
  os << ",value\n";
  os.precision(16);
  for (int i = 0; i < l.extent(); ++i) {
    auto c = base;
    c[axis] = i;
    auto x = l.coord(c[0], c[1], c[2]);
    os << x[0] << ',' << x[1];
    if (l.dim() == 3) os << ',' << x[2];
    os << ',' << f.at(c[0], c[1], c[2]) << '\n';
  }
}

}  // namespace jsplice
