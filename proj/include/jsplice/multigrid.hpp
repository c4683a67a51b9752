#pragma once

// Geometric multigrid for  c0 u - c1 Lap_h u = b  on the unit-aspect box.
// Three discretizations share the code: nodes with Dirichlet data (boundary
// nodes fixed), cells with Dirichlet data at faces (ghost = -interior), and
// nodes with homogeneous Neumann data (ghost reflection). Red-black
// Gauss-Seidel, full weighting, bilinear/trilinear prolongation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace jsplice {

enum class SolverMethod { multigrid, pcg };

struct SolverOptions {
  double tol = 1e-10;  // on max|residual| relative to max|rhs|
  int max_cycles = 200;
  SolverMethod method = SolverMethod::multigrid;
  int pre_smooth = 2;
  int post_smooth = 2;
};

struct SolverStats {
  int iterations = 0;
  double residual = 0.0;  // final max|residual| / max|rhs|
  int levels = 0;
};

class solver_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LevelKind { node_dirichlet, cell_dirichlet, node_neumann };

class Multigrid {
 public:
  Multigrid(LevelKind kind, int dim, int n, double h, double c0, double c1, const SolverOptions& opt = {})
      : kind_(kind), opt_(opt) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("Multigrid: dimension must be 2 or 3");
    int m = n;
    double hh = h;
    while (true) {
      levels_.push_back(std::make_unique<Level>(kind, dim, m, hh, c0, c1));
      if (m % 2 != 0 || m <= 2) break;
      m /= 2;
      hh *= 2;
    }
  }

  int levels() const { return static_cast<int>(levels_.size()); }
  std::size_t size() const { return levels_[0]->size; }
  int extent() const { return levels_[0]->ext; }

  // Apply the operator (homogeneous boundary form).
  void apply(const std::vector<double>& u, std::vector<double>& out) const { levels_[0]->apply(u.data(), out.data()); }

  // Solve A u = b for the homogeneous-boundary operator; u is the initial guess.
  SolverStats solve(const std::vector<double>& b_in, std::vector<double>& u) {
    Level& L = *levels_[0];
    if (b_in.size() != L.size || u.size() != L.size) throw std::invalid_argument("Multigrid::solve: size mismatch");
    std::vector<double> b = b_in;
    if (kind_ == LevelKind::node_neumann && L.c0 == 0.0) L.project(b.data());
    if (kind_ == LevelKind::node_dirichlet) L.zero_boundary(b.data());
    double bnorm = 0.0;
    for (double x : b) bnorm = std::max(bnorm, std::abs(x));
    SolverStats st;
    st.levels = levels();
    if (bnorm == 0.0) {
      std::fill(u.begin(), u.end(), 0.0);
      return st;
    }
    if (opt_.method == SolverMethod::multigrid) {
      std::copy(b.begin(), b.end(), L.b.begin());
      std::copy(u.begin(), u.end(), L.u.begin());
      for (int it = 0; it <= opt_.max_cycles; ++it) {
        L.residual(L.u.data(), L.b.data(), L.r.data());
        double rn = 0.0;
        for (double x : L.r) rn = std::max(rn, std::abs(x));
        st.residual = rn / bnorm;
        st.iterations = it;
        if (st.residual <= opt_.tol) break;
        if (it == opt_.max_cycles) break;
        vcycle(0);
        if (kind_ == LevelKind::node_neumann && L.c0 == 0.0) L.project(L.u.data());
      }
      std::copy(L.u.begin(), L.u.end(), u.begin());
    } else {
      st = pcg(b, u, bnorm);
    }
    if (!(st.residual <= opt_.tol))
      throw solver_error("multigrid: residual " + std::to_string(st.residual) + " after " +
                         std::to_string(st.iterations) + " iterations");
    return st;
  }

 private:
  struct Level {
    LevelKind kind;
    int dim, n, ext;
    double h, c0, c1;
    std::size_t size;
    std::ptrdiff_t sj, sk;
    std::vector<double> u, b, r, w;

    Level(LevelKind k, int d, int nn, double hh, double a0, double a1)
        : kind(k), dim(d), n(nn), h(hh), c0(a0), c1(a1) {
      ext = k == LevelKind::cell_dirichlet ? n : n + 1;
      sj = ext;
      sk = static_cast<std::ptrdiff_t>(ext) * ext;
      size = d == 3 ? static_cast<std::size_t>(ext) * ext * ext : static_cast<std::size_t>(ext) * ext;
      u.assign(size, 0.0);
      b.assign(size, 0.0);
      r.assign(size, 0.0);
      w.assign(size, 1.0);
      if (k == LevelKind::node_neumann)
        for_all([&](int i, int j, int kk, std::size_t idx) {
          int c[3] = {i, j, kk};
          double ww = 1.0;
          for (int a = 0; a < dim; ++a)
            if (c[a] == 0 || c[a] == n) ww *= 0.5;
          w[idx] = ww;
        });
    }

    template <class F>
    void for_all(F&& f) const {
      int kmax = dim == 3 ? ext : 1;
      for (int k = 0; k < kmax; ++k)
        for (int j = 0; j < ext; ++j)
          for (int i = 0; i < ext; ++i) f(i, j, k, static_cast<std::size_t>(i + sj * j + sk * k));
    }

    bool is_unknown(int i, int j, int k) const {
      if (kind != LevelKind::node_dirichlet) return true;
      if (i == 0 || i == n || j == 0 || j == n) return false;
      if (dim == 3 && (k == 0 || k == n)) return false;
      return true;
    }

    // Diagonal and off-diagonal sum of row (i,j,k) applied to x.
    void row(const double* x, int i, int j, int k, std::size_t idx, double& diag, double& off) const {
      double s = c1 / (h * h);
      diag = c0;
      off = 0.0;
      int c[3] = {i, j, k};
      std::ptrdiff_t st[3] = {1, sj, sk};
      for (int a = 0; a < dim; ++a) {
        bool lo = c[a] == 0, hi = c[a] == ext - 1;
        diag += 2.0 * s;
        switch (kind) {
          case LevelKind::node_dirichlet:
            off -= s * (x[idx - st[a]] + x[idx + st[a]]);
            break;
          case LevelKind::cell_dirichlet:
            if (lo) diag += s;
            else off -= s * x[idx - st[a]];
            if (hi) diag += s;
            else off -= s * x[idx + st[a]];
            break;
          case LevelKind::node_neumann:
            if (lo && hi) break;
            if (lo) off -= 2.0 * s * x[idx + st[a]];
            else if (hi) off -= 2.0 * s * x[idx - st[a]];
            else off -= s * (x[idx - st[a]] + x[idx + st[a]]);
            break;
        }
      }
    }

    void apply(const double* x, double* y) const {
      for_all([&](int i, int j, int k, std::size_t idx) {
        if (!is_unknown(i, j, k)) {
          y[idx] = 0.0;
          return;
        }
        double d, o;
        row(x, i, j, k, idx, d, o);
        y[idx] = d * x[idx] + o;
      });
    }

    void residual(const double* x, const double* rhs, double* res) const {
      apply(x, res);
      for (std::size_t i = 0; i < size; ++i) res[i] = rhs[i] - res[i];
    }

    void smooth(double* x, const double* rhs, int sweeps, bool reverse) const {
      for (int s = 0; s < sweeps; ++s)
        for (int cc = 0; cc < 2; ++cc) {
          int color = reverse ? 1 - cc : cc;
          int kmax = dim == 3 ? ext : 1;
          for (int k = 0; k < kmax; ++k)
            for (int j = 0; j < ext; ++j) {
              int i0 = ((j + k + color) & 1);
              for (int i = i0; i < ext; i += 2) {
                if (!is_unknown(i, j, k)) continue;
                std::size_t idx = static_cast<std::size_t>(i + sj * j + sk * k);
                double d, o;
                row(x, i, j, k, idx, d, o);
                x[idx] = (rhs[idx] - o) / d;
              }
            }
        }
    }

    double dot(const double* a, const double* c) const {
      std::vector<double> t(size);
      for (std::size_t i = 0; i < size; ++i) t[i] = w[i] * a[i] * c[i];
      return pairwise_sum(t.data(), t.size());
    }

    void project(double* x) const {
      std::vector<double> t(size);
      for (std::size_t i = 0; i < size; ++i) t[i] = w[i] * x[i];
      double num = pairwise_sum(t.data(), size);
      double den = pairwise_sum(w.data(), size);
      double m = num / den;
      for (std::size_t i = 0; i < size; ++i) x[i] -= m;
    }

    void zero_boundary(double* x) const {
      for_all([&](int i, int j, int k, std::size_t idx) {
        if (!is_unknown(i, j, k)) x[idx] = 0.0;
      });
    }
  };

  void restrict_to(const Level& f, Level& c) {
    std::fill(c.b.begin(), c.b.end(), 0.0);
    const double* rf = f.r.data();
    int d = f.dim;
    if (f.kind == LevelKind::cell_dirichlet) {
      double scale = d == 3 ? 0.125 : 0.25;
      c.for_all([&](int I, int J, int K, std::size_t ci) {
        double s = 0.0;
        int kk = d == 3 ? 2 : 1;
        for (int dk = 0; dk < kk; ++dk)
          for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di)
              s += rf[(2 * I + di) + f.sj * (2 * J + dj) + f.sk * (d == 3 ? 2 * K + dk : 0)];
        c.b[ci] = scale * s;
      });
      return;
    }
    double scale = d == 3 ? 0.125 : 0.25;
    c.for_all([&](int I, int J, int K, std::size_t ci) {
      if (!c.is_unknown(I, J, K)) return;
      double s = 0.0;
      int klo = d == 3 ? -1 : 0, khi = d == 3 ? 1 : 0;
      for (int dk = klo; dk <= khi; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) {
            int i = 2 * I + di, j = 2 * J + dj, k = d == 3 ? 2 * K + dk : 0;
            if (i < 0 || j < 0 || k < 0 || i > f.n || j > f.n || k > (d == 3 ? f.n : 0)) continue;
            double p = (di ? 0.5 : 1.0) * (dj ? 0.5 : 1.0) * (dk ? 0.5 : 1.0);
            std::size_t fi = static_cast<std::size_t>(i + f.sj * j + f.sk * k);
            s += p * f.w[fi] * rf[fi];
          }
      c.b[ci] = scale * s / c.w[ci];
    });
  }

  void prolong_add(const Level& c, Level& f) {
    const double* ec = c.u.data();
    int d = f.dim;
    if (f.kind == LevelKind::cell_dirichlet) {
      f.for_all([&](int i, int j, int k, std::size_t fi) {
        int fc[3] = {i, j, k};
        int I[3][2];
        double W[3][2];
        for (int a = 0; a < 3; ++a) {
          if (a >= d) {
            I[a][0] = 0;
            I[a][1] = -1;
            W[a][0] = 1.0;
            W[a][1] = 0.0;
            continue;
          }
          int base = fc[a] / 2;
          int nb = fc[a] % 2 ? base + 1 : base - 1;
          I[a][0] = base;
          W[a][0] = 0.75;
          if (nb < 0 || nb >= c.n) {
            I[a][1] = -1;
            W[a][0] = 0.5;  // Dirichlet ghost is minus the interior value
            W[a][1] = 0.0;
          } else {
            I[a][1] = nb;
            W[a][1] = 0.25;
          }
        }
        double s = 0.0;
        for (int tk = 0; tk < 2; ++tk)
          for (int tj = 0; tj < 2; ++tj)
            for (int ti = 0; ti < 2; ++ti) {
              if (I[0][ti] < 0 || I[1][tj] < 0 || I[2][tk] < 0) continue;
              double wgt = W[0][ti] * W[1][tj] * W[2][tk];
              if (wgt == 0.0) continue;
              s += wgt * ec[I[0][ti] + c.sj * I[1][tj] + c.sk * I[2][tk]];
            }
        f.u[fi] += s;
      });
      return;
    }
    f.for_all([&](int i, int j, int k, std::size_t fi) {
      if (!f.is_unknown(i, j, k)) return;
      int fc[3] = {i, j, k};
      int I[3][2];
      double W[3][2];
      for (int a = 0; a < 3; ++a) {
        if (a >= d || fc[a] % 2 == 0) {
          I[a][0] = a >= d ? 0 : fc[a] / 2;
          I[a][1] = -1;
          W[a][0] = 1.0;
          W[a][1] = 0.0;
        } else {
          I[a][0] = fc[a] / 2;
          I[a][1] = fc[a] / 2 + 1;
          W[a][0] = W[a][1] = 0.5;
        }
      }
      double s = 0.0;
      for (int tk = 0; tk < 2; ++tk)
        for (int tj = 0; tj < 2; ++tj)
          for (int ti = 0; ti < 2; ++ti) {
            if (I[0][ti] < 0 || I[1][tj] < 0 || I[2][tk] < 0) continue;
            s += W[0][ti] * W[1][tj] * W[2][tk] * ec[I[0][ti] + c.sj * I[1][tj] + c.sk * I[2][tk]];
          }
      f.u[fi] += s;
    });
  }

  void coarse_solve(Level& L) {
    // Unpreconditioned CG to near round-off; the coarsest grid is small.
    std::vector<double> x(L.size, 0.0), r = L.b, p, Ap(L.size);
    bool singular = L.kind == LevelKind::node_neumann && L.c0 == 0.0;
    if (singular) L.project(r.data());
    L.zero_boundary(r.data());
    p = r;
    double rr = L.dot(r.data(), r.data());
    double r0 = rr;
    for (std::size_t it = 0; it < 20 * L.size + 50 && rr > 1e-30 * r0 && rr > 0; ++it) {
      L.apply(p.data(), Ap.data());
      double pAp = L.dot(p.data(), Ap.data());
      if (pAp <= 0) break;
      double a = rr / pAp;
      for (std::size_t i = 0; i < L.size; ++i) {
        x[i] += a * p[i];
        r[i] -= a * Ap[i];
      }
      double rr2 = L.dot(r.data(), r.data());
      double beta = rr2 / rr;
      rr = rr2;
      for (std::size_t i = 0; i < L.size; ++i) p[i] = r[i] + beta * p[i];
    }
    if (singular) L.project(x.data());
    L.u = x;
  }

  void vcycle(std::size_t l) {
    Level& L = *levels_[l];
    if (l + 1 == levels_.size()) {
      coarse_solve(L);
      return;
    }
    L.smooth(L.u.data(), L.b.data(), opt_.pre_smooth, false);
    L.residual(L.u.data(), L.b.data(), L.r.data());
    Level& C = *levels_[l + 1];
    restrict_to(L, C);
    std::fill(C.u.begin(), C.u.end(), 0.0);
    vcycle(l + 1);
    prolong_add(C, L);
    L.smooth(L.u.data(), L.b.data(), opt_.post_smooth, true);
  }

  // Preconditioner: one V-cycle from zero; with a single level, Jacobi.
  void precondition(const std::vector<double>& r, std::vector<double>& z) {
    Level& L = *levels_[0];
    if (levels_.size() == 1) {
      for (std::size_t i = 0; i < L.size; ++i) {
        auto c = unravel(L, i);
        if (!L.is_unknown(c[0], c[1], c[2])) {
          z[i] = 0.0;
          continue;
        }
        double d, o;
        L.row(r.data(), c[0], c[1], c[2], i, d, o);
        z[i] = r[i] / d;
      }
      return;
    }
    std::copy(r.begin(), r.end(), L.b.begin());
    std::fill(L.u.begin(), L.u.end(), 0.0);
    vcycle(0);
    std::copy(L.u.begin(), L.u.end(), z.begin());
  }

  static std::array<int, 3> unravel(const Level& L, std::size_t i) {
    std::array<int, 3> c{};
    c[0] = static_cast<int>(i % L.ext);
    i /= L.ext;
    c[1] = static_cast<int>(i % L.ext);
    c[2] = static_cast<int>(i / L.ext);
    return c;
  }

  SolverStats pcg(const std::vector<double>& b, std::vector<double>& x, double bnorm) {
    Level& L = *levels_[0];
    bool singular = kind_ == LevelKind::node_neumann && L.c0 == 0.0;
    std::vector<double> r(L.size), z(L.size), p(L.size), Ap(L.size);
    L.residual(x.data(), b.data(), r.data());
    SolverStats st;
    st.levels = levels();
    auto rnorm = [&] {
      double m = 0.0;
      for (double v : r) m = std::max(m, std::abs(v));
      return m / bnorm;
    };
    precondition(r, z);
    if (singular) L.project(z.data());
    p = z;
    double rz = L.dot(r.data(), z.data());
    for (int it = 0; it <= opt_.max_cycles; ++it) {
      st.iterations = it;
      st.residual = rnorm();
      if (st.residual <= opt_.tol || it == opt_.max_cycles) break;
      L.apply(p.data(), Ap.data());
      double a = rz / L.dot(p.data(), Ap.data());
      for (std::size_t i = 0; i < L.size; ++i) {
        x[i] += a * p[i];
        r[i] -= a * Ap[i];
      }
      precondition(r, z);
      if (singular) L.project(z.data());
      double rz2 = L.dot(r.data(), z.data());
      double beta = rz2 / rz;
      rz = rz2;
      for (std::size_t i = 0; i < L.size; ++i) p[i] = z[i] + beta * p[i];
    }
    if (singular) L.project(x.data());
    return st;
  }

  LevelKind kind_;
  SolverOptions opt_;
  std::vector<std::unique_ptr<Level>> levels_;
};

}  // namespace jsplice
