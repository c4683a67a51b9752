#pragma once

// Finite-difference operators described by their taps. Every operator can be
// applied to a field or asked for the (input, weight) pairs behind one output
// value; the splice correction is built from the latter.

#include <array>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace jsplice {

// Fornberg's recursion: weights of the m-th derivative at z from nodes x.
inline std::vector<double> fd_weights(double z, const std::vector<double>& x, int m) {
  int n = static_cast<int>(x.size());
  if (n <= m) throw std::invalid_argument("fd_weights: too few nodes for derivative order");
  std::vector<std::vector<double>> c(n, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    int mn = std::min(i, m);
    double c2 = 1.0, c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = c[i][m];
  return w;
}

// 1D derivative stencil of order `deriv` and accuracy `accuracy` on an axis of
// `extent` points with unit spacing. Near the ends the centred window is
// replaced by a shifted one of the same accuracy when `shifted` is set.
class AxisStencil {
 public:
  AxisStencil() = default;
  AxisStencil(int deriv, int accuracy, int extent, bool shifted)
      : deriv_(deriv), accuracy_(accuracy), extent_(extent), start_(extent), count_(extent), offset_(extent) {
    if (deriv < 1 || deriv > 2) throw std::invalid_argument("AxisStencil: derivative order must be 1 or 2");
    if (accuracy != 2 && accuracy != 4) throw std::invalid_argument("AxisStencil: accuracy must be 2 or 4");
    int half = accuracy / 2;
    int centred = 2 * half + 1;
    int oneside = accuracy + deriv;
    for (int i = 0; i < extent; ++i) {
      if (i - half >= 0 && i + half < extent) {
        start_[i] = i - half;
        count_[i] = centred;
      } else if (shifted && oneside <= extent) {
        start_[i] = std::clamp(i - half, 0, extent - oneside);
        count_[i] = oneside;
      } else {
        start_[i] = -1;
        count_[i] = 0;
        continue;
      }
      int key = (i - start_[i]) * 16 + count_[i];
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        std::vector<double> x(count_[i]);
        for (int t = 0; t < count_[i]; ++t) x[t] = t;
        auto w = fd_weights(i - start_[i], x, deriv);
        if (count_[i] == centred) {
          // clean up round-off in the symmetric stencils
          for (auto& wi : w) wi = std::round(wi * 12.0) / 12.0;
        }
        it = cache_.emplace(key, pool_.size()).first;
        pool_.insert(pool_.end(), w.begin(), w.end());
      }
      offset_[i] = it->second;
    }
  }

  int deriv() const { return deriv_; }
  int accuracy() const { return accuracy_; }
  bool defined(int i) const { return count_[i] > 0; }
  int start(int i) const { return start_[i]; }
  int count(int i) const { return count_[i]; }
  const double* weights(int i) const { return pool_.data() + offset_[i]; }
  // farthest reach of a centred window
  int half_width() const { return accuracy_ / 2; }

 private:
  int deriv_ = 1, accuracy_ = 2, extent_ = 0;
  std::vector<int> start_, count_;
  std::vector<std::size_t> offset_;
  std::vector<double> pool_;
  std::map<int, std::size_t> cache_;
};

struct OpInfo {
  std::string name;
  int p = 2;       // truncation order
  int q = 3;       // extrapolation order it needs from a splice
  double s = 1.0;  // reach in units of h
};

// Sum over axes of a 1D derivative along that axis. Covers Laplacians and
// single-axis derivatives; gradients are one of these per axis.
class AxisSumOp {
 public:
  AxisSumOp(const Lattice& lat, int deriv, int accuracy, bool shifted, std::vector<int> axes, OpInfo info)
      : lat_(lat), axes_(std::move(axes)), info_(std::move(info)),
        st_(deriv, accuracy, lat.extent(), shifted) {
    scale_ = 1.0 / std::pow(lat.h(), deriv);
  }

  const Lattice& input() const { return lat_; }
  const Lattice& output() const { return lat_; }
  int in_components() const { return 1; }
  int out_components() const { return 1; }
  const OpInfo& info() const { return info_; }
  const AxisStencil& axis_stencil() const { return st_; }

  bool defined(std::size_t out) const {
    auto c = lat_.unravel(out);
    for (int a : axes_)
      if (!st_.defined(c[a])) return false;
    return true;
  }

  template <class F>
  void taps(std::size_t out, int /*comp*/, F&& f) const {
    auto c = lat_.unravel(out);
    auto str = lat_.strides();
    for (int a : axes_) {
      int i = c[a];
      const double* w = st_.weights(i);
      std::ptrdiff_t base = static_cast<std::ptrdiff_t>(out) + (st_.start(i) - i) * str[a];
      for (int t = 0; t < st_.count(i); ++t)
        if (w[t] != 0.0) f(0, static_cast<std::size_t>(base + t * str[a]), w[t] * scale_);
    }
  }

 private:
  Lattice lat_;
  std::vector<int> axes_;
  OpInfo info_;
  AxisStencil st_;
  double scale_ = 1.0;
};

// Gradient: one first-derivative AxisSumOp per output component.
class GradientOp {
 public:
  GradientOp(const Lattice& lat, int accuracy, bool shifted, OpInfo info) : lat_(lat), info_(std::move(info)) {
    for (int a = 0; a < lat.dim(); ++a) parts_.emplace_back(lat, 1, accuracy, shifted, std::vector<int>{a}, info_);
  }
  const Lattice& input() const { return lat_; }
  const Lattice& output() const { return lat_; }
  int in_components() const { return 1; }
  int out_components() const { return lat_.dim(); }
  const OpInfo& info() const { return info_; }
  bool defined(std::size_t out) const {
    for (auto& p : parts_)
      if (!p.defined(out)) return false;
    return true;
  }
  template <class F>
  void taps(std::size_t out, int comp, F&& f) const {
    parts_[comp].taps(out, 0, f);
  }
  const AxisSumOp& part(int a) const { return parts_[a]; }

 private:
  Lattice lat_;
  OpInfo info_;
  std::vector<AxisSumOp> parts_;
};

// Node values to cell-centred gradient: difference across the cell, averaged
// over the cell's faces.
class GradNodeToCellOp {
 public:
  explicit GradNodeToCellOp(const Lattice& nodes) : in_(nodes), out_(nodes) {
    if (nodes.centering != Centering::node) throw std::invalid_argument("grad_node_to_cell: input must be nodal");
    out_.centering = Centering::cell;
    info_ = {"grad_node_to_cell", 2, 3, 1.0};
  }
  const Lattice& input() const { return in_; }
  const Lattice& output() const { return out_; }
  int in_components() const { return 1; }
  int out_components() const { return in_.dim(); }
  const OpInfo& info() const { return info_; }
  bool defined(std::size_t) const { return true; }

  template <class F>
  void taps(std::size_t out, int comp, F&& f) const {
    auto c = out_.unravel(out);
    int d = in_.dim();
    double w = 1.0 / (in_.h() * (d == 3 ? 4.0 : 2.0));
    int kmax = d == 3 ? 2 : 1;
    for (int dk = 0; dk < kmax; ++dk)
      for (int dj = 0; dj < 2; ++dj)
        for (int di = 0; di < 2; ++di) {
          std::array<int, 3> o{di, dj, dk};
          double sgn = o[comp] ? 1.0 : -1.0;
          f(0, in_.index(c[0] + di, c[1] + dj, c[2] + dk), sgn * w);
        }
  }

 private:
  Lattice in_, out_;
  OpInfo info_;
};

// Cell vector field to nodal divergence, the negative weighted adjoint of
// GradNodeToCellOp. Boundary nodes use only the cells that exist, scaled by
// the inverse node weight (1/2 on edges, 1/4 at corners in 2D).
class DivCellToNodeOp {
 public:
  explicit DivCellToNodeOp(const Lattice& cells) : in_(cells), out_(cells) {
    if (cells.centering != Centering::cell) throw std::invalid_argument("div_cell_to_node: input must be cell-centred");
    out_.centering = Centering::node;
    info_ = {"div_cell_to_node", 2, 3, 1.0};
  }
  const Lattice& input() const { return in_; }
  const Lattice& output() const { return out_; }
  int in_components() const { return in_.dim(); }
  int out_components() const { return 1; }
  const OpInfo& info() const { return info_; }
  bool defined(std::size_t) const { return true; }

  // node weight of the trapezoidal rule
  double weight(std::size_t node) const {
    auto c = out_.unravel(node);
    double w = 1.0;
    for (int a = 0; a < out_.dim(); ++a)
      if (c[a] == 0 || c[a] == out_.extent() - 1) w *= 0.5;
    return w;
  }

  template <class F>
  void taps(std::size_t out, int /*comp*/, F&& f) const {
    auto c = out_.unravel(out);
    int d = in_.dim();
    int n = in_.extent();
    double w = 1.0 / (in_.h() * (d == 3 ? 4.0 : 2.0) * weight(out));
    int kmax = d == 3 ? 2 : 1;
    for (int dk = 0; dk < kmax; ++dk)
      for (int dj = 0; dj < 2; ++dj)
        for (int di = 0; di < 2; ++di) {
          std::array<int, 3> cc{c[0] - 1 + di, c[1] - 1 + dj, d == 3 ? c[2] - 1 + dk : 0};
          bool inside = true;
          for (int a = 0; a < d; ++a) inside = inside && cc[a] >= 0 && cc[a] < n;
          if (!inside) continue;
          std::size_t ci = in_.index(cc[0], cc[1], cc[2]);
          std::array<int, 3> o{di, dj, dk};
          for (int a = 0; a < d; ++a) f(a, ci, (o[a] ? 1.0 : -1.0) * w);
        }
  }

 private:
  Lattice in_, out_;
  OpInfo info_;
};

inline std::vector<int> all_axes(int dim) {
  std::vector<int> a(dim);
  for (int i = 0; i < dim; ++i) a[i] = i;
  return a;
}

// Standard second-order Laplacian (5 points in 2D, 7 in 3D).
inline AxisSumOp laplacian5(const Lattice& lat, bool shifted = false) {
  return AxisSumOp(lat, 2, 2, shifted, all_axes(lat.dim()), {"laplacian5", 2, 3, 1.0});
}

// Fourth-order cross Laplacian, weights (-1, 16, -30, 16, -1)/12h^2 per axis.
inline AxisSumOp laplacian9_4(const Lattice& lat, bool shifted = false) {
  return AxisSumOp(lat, 2, 4, shifted, all_axes(lat.dim()), {"laplacian9_4", 4, 3, 2.0});
}

inline GradientOp gradient2(const Lattice& lat, bool shifted = false) {
  return GradientOp(lat, 2, shifted, {"gradient2", 2, 2, 1.0});
}

inline GradientOp gradient4(const Lattice& lat, bool shifted = false) {
  return GradientOp(lat, 4, shifted, {"gradient4", 4, 3, 2.0});
}

inline AxisSumOp derivative(const Lattice& lat, int axis, int deriv, int accuracy, bool shifted = false) {
  return AxisSumOp(lat, deriv, accuracy, shifted, {axis}, {"derivative", accuracy, 3, accuracy / 2.0});
}

inline GradNodeToCellOp grad_node_to_cell(const Lattice& nodes) { return GradNodeToCellOp(nodes); }
inline DivCellToNodeOp div_cell_to_node(const Lattice& cells) { return DivCellToNodeOp(cells); }

// Value of one output component at one point.
template <class Op>
double apply_at(const Op& op, const std::vector<const ScalarField*>& in, std::size_t out, int comp = 0) {
  double s = 0.0;
  op.taps(out, comp, [&](int c, std::size_t k, double w) { s += w * (*in[c])[k]; });
  return s;
}

template <class Op>
double apply_at(const Op& op, const ScalarField& in, std::size_t out, int comp = 0) {
  double s = 0.0;
  const double* d = in.data();
  op.taps(out, comp, [&](int, std::size_t k, double w) { s += w * d[k]; });
  return s;
}

// Apply to every output point where the operator is defined; other points are 0.
template <class Op>
VectorField apply(const Op& op, const std::vector<const ScalarField*>& in) {
  if (static_cast<int>(in.size()) != op.in_components()) throw std::invalid_argument("apply: component count mismatch");
  for (auto* f : in) require_same_lattice(f->lattice(), op.input(), "apply");
  VectorField out(op.output(), op.out_components());
  std::size_t n = op.output().size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!op.defined(i)) continue;
    for (int c = 0; c < op.out_components(); ++c) out[c][i] = apply_at(op, in, i, c);
  }
  return out;
}

template <class Op>
ScalarField apply(const Op& op, const ScalarField& in) {
  return std::move(jsplice::apply(op, std::vector<const ScalarField*>{&in}).comp[0]);
}

template <class Op>
ScalarField apply(const Op& op, const VectorField& in) {
  std::vector<const ScalarField*> p;
  for (auto& c : in.comp) p.push_back(&c);
  return std::move(jsplice::apply(op, p).comp[0]);
}

template <class Op>
Mask defined_mask(const Op& op) {
  Mask m(op.output());
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, op.defined(i));
  return m;
}

inline double heaviside(double phi) { return phi >= 0.0 ? 1.0 : 0.0; }

inline ScalarField heaviside(const ScalarField& phi) {
  ScalarField h(phi.lattice());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = heaviside(phi[i]);
  return h;
}

}  // namespace jsplice
