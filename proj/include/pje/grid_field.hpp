#pragma once

// Uniform-grid samples of Lipschitz fields on a box, with the per-cell
// Jacobian stencil, grid-realized Lipschitz constants and volume/boundary
// determinant quadratures.
//
// Node layout is row-major with axis 1 slowest; the components of a vector
// field are interleaved per node.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pje/errors.hpp"

namespace pje {

// Index range of nodes [begin, begin + cells] per axis, i.e. a grid-aligned sub-box.
struct GridBox {
  std::vector<int> begin;
  std::vector<int> cells;

  int dim() const { return static_cast<int>(begin.size()); }
};

class GridField {
 public:
  GridField() = default;
  GridField(std::vector<double> lo, double h, std::vector<int> cells, int ncomp)
      : lo_(std::move(lo)), h_(h), cells_(std::move(cells)), ncomp_(ncomp) {
    if (lo_.size() != cells_.size() || lo_.empty()) throw GridError("grid: lo and cells must have equal, nonzero size");
    if (!(h_ > 0) || !std::isfinite(h_)) throw GridError("grid: step must be positive");
    if (ncomp_ < 1) throw GridError("grid: need at least one component");
    for (int c : cells_)
      if (c < 1) throw GridError("grid: need at least 2 nodes per axis");
    strides_.assign(cells_.size(), 1);
    for (int a = dim() - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * (cells_[a + 1] + 1);
    values_.assign(node_count() * static_cast<std::size_t>(ncomp_), 0.0);
  }

  // Samples fn(x, out) at every node; out has ncomp entries.
  template <class Fn>
  static GridField sample(std::vector<double> lo, double h, std::vector<int> cells, int ncomp, Fn&& fn) {
    GridField g(std::move(lo), h, std::move(cells), ncomp);
    std::vector<double> x(g.dim());
    std::vector<int> idx(g.dim());
    for (std::size_t n = 0; n < g.node_count(); ++n) {
      g.unflatten(n, idx);
      for (int a = 0; a < g.dim(); ++a) x[a] = g.coord(a, idx[a]);
      fn(x.data(), g.values_.data() + n * g.ncomp_);
    }
    g.require_finite();
    return g;
  }

  // Same layout as `like`, different component count.
  static GridField like(const GridField& like, int ncomp) { return GridField(like.lo_, like.h_, like.cells_, ncomp); }

  int dim() const { return static_cast<int>(cells_.size()); }
  int ncomp() const { return ncomp_; }
  double h() const { return h_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<int>& cells() const { return cells_; }
  double coord(int axis, int i) const { return lo_[axis] + h_ * i; }
  double hi(int axis) const { return coord(axis, cells_[axis]); }

  std::size_t node_count() const {
    std::size_t n = 1;
    for (int c : cells_) n *= static_cast<std::size_t>(c + 1);
    return n;
  }
  std::size_t cell_count() const {
    std::size_t n = 1;
    for (int c : cells_) n *= static_cast<std::size_t>(c);
    return n;
  }
  std::size_t stride(int axis) const { return strides_[axis]; }

  std::size_t flatten(const std::vector<int>& idx) const {
    std::size_t n = 0;
    for (int a = 0; a < dim(); ++a) n += strides_[a] * static_cast<std::size_t>(idx[a]);
    return n;
  }
  void unflatten(std::size_t n, std::vector<int>& idx) const {
    idx.resize(dim());
    for (int a = 0; a < dim(); ++a) {
      idx[a] = static_cast<int>(n / strides_[a]);
      n %= strides_[a];
    }
  }

  double& at(std::size_t node, int comp = 0) { return values_[node * ncomp_ + comp]; }
  double at(std::size_t node, int comp = 0) const { return values_[node * ncomp_ + comp]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_layout(const GridField& o) const {
    return cells_ == o.cells_ && h_ == o.h_ && lo_ == o.lo_;
  }

  void require_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) throw NumericalError("grid field contains non-finite values");
  }

  GridBox full_box() const { return GridBox{std::vector<int>(dim(), 0), cells_}; }

  void check(const GridBox& b) const {
    if (b.dim() != dim() || static_cast<int>(b.cells.size()) != dim()) throw GridError("box dimension mismatch");
    for (int a = 0; a < dim(); ++a)
      if (b.begin[a] < 0 || b.cells[a] < 1 || b.begin[a] + b.cells[a] > cells_[a])
        throw GridError("box leaves the grid along axis " + std::to_string(a));
  }

  // Grid-aligned sub-box [lo, hi]; throws when the corners are not nodes.
  GridBox locate(const std::vector<double>& box_lo, const std::vector<double>& box_hi) const {
    GridBox b{std::vector<int>(dim()), std::vector<int>(dim())};
    for (int a = 0; a < dim(); ++a) {
      int i0 = snap(a, box_lo[a]);
      int i1 = snap(a, box_hi[a]);
      if (i1 <= i0) throw GridError("box is empty or inverted along axis " + std::to_string(a));
      b.begin[a] = i0;
      b.cells[a] = i1 - i0;
    }
    return b;
  }

  int snap(int axis, double x) const {
    double t = (x - lo_[axis]) / h_;
    double r = std::round(t);
    if (std::abs(t - r) > 1e-7 || r < 0 || r > cells_[axis])
      throw GridError("coordinate " + std::to_string(x) + " is not a grid node along axis " + std::to_string(axis));
    return static_cast<int>(r);
  }

  // Multilinear interpolation; exact at nodes.
  void interpolate(const double* x, double* out) const {
    std::vector<int> base(dim());
    std::vector<double> frac(dim());
    for (int a = 0; a < dim(); ++a) {
      double t = (x[a] - lo_[a]) / h_;
      double r = std::round(t);
      if (std::abs(t - r) < 1e-9) t = r;
      if (t < -1e-9 || t > cells_[a] + 1e-9) throw GridError("interpolation point outside the grid box");
      int i = std::clamp(static_cast<int>(std::floor(t)), 0, cells_[a] - 1);
      base[a] = i;
      frac[a] = std::clamp(t - i, 0.0, 1.0);
    }
    std::fill(out, out + ncomp_, 0.0);
    for (int corner = 0; corner < (1 << dim()); ++corner) {
      double w = 1.0;
      std::size_t n = 0;
      for (int a = 0; a < dim(); ++a) {
        int bit = (corner >> a) & 1;
        if (bit == 1 && frac[a] == 0.0) { w = 0.0; break; }
        w *= bit ? frac[a] : 1.0 - frac[a];
        n += strides_[a] * static_cast<std::size_t>(base[a] + bit);
      }
      if (w == 0.0) continue;
      for (int c = 0; c < ncomp_; ++c) out[c] += w * values_[n * ncomp_ + c];
    }
  }

  std::vector<double> interpolate(const std::vector<double>& x) const {
    std::vector<double> out(ncomp_);
    interpolate(x.data(), out.data());
    return out;
  }

 private:
  std::vector<double> lo_;
  double h_ = 1.0;
  std::vector<int> cells_;
  int ncomp_ = 1;
  std::vector<std::size_t> strides_;
  std::vector<double> values_;
};

// Cell-centred scalar values on the cells of a grid.
struct CellField {
  std::vector<double> lo;
  double h = 1.0;
  std::vector<int> cells;
  std::vector<double> values;

  int dim() const { return static_cast<int>(cells.size()); }
  std::size_t size() const { return values.size(); }
  bool same_layout(const GridField& g) const { return g.lo() == lo && g.h() == h && g.cells() == cells; }
};

inline CellField empty_cells_like(const GridField& g) {
  return CellField{g.lo(), g.h(), g.cells(), std::vector<double>(g.cell_count(), 0.0)};
}

// ---- iteration helpers ----

namespace detail {

// Calls fn(cell_multi_index, corner_node) for every cell of box, row-major.
template <class Fn>
void for_each_cell_unchecked(const GridField& g, const GridBox& box, Fn&& fn) {
  const int d = g.dim();
  std::vector<int> idx(box.begin);
  std::size_t total = 1;
  for (int c : box.cells) total *= static_cast<std::size_t>(c);
  for (std::size_t n = 0; n < total; ++n) {
    fn(idx, g.flatten(idx));
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < box.begin[a] + box.cells[a]) break;
      idx[a] = box.begin[a];
    }
  }
}

template <class Fn>
void for_each_cell(const GridField& g, const GridBox& box, Fn&& fn) {
  g.check(box);
  for_each_cell_unchecked(g, box, std::forward<Fn>(fn));
}

}  // namespace detail

// ---- determinants ----

inline double determinant(const double* m, int d) {
  switch (d) {
    case 1: return m[0];
    case 2: return m[0] * m[3] - m[1] * m[2];
    case 3:
      return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
             m[2] * (m[3] * m[7] - m[4] * m[6]);
    default: {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(m, d, d);
      return mat.determinant();
    }
  }
}

// Cofactor matrix C with C[j][a] = d det / d m[j][a] (the transposed adjugate).
inline void cofactors(const double* m, int d, double* out) {
  if (d == 1) { out[0] = 1.0; return; }
  if (d == 2) {
    out[0] = m[3]; out[1] = -m[2];
    out[2] = -m[1]; out[3] = m[0];
    return;
  }
  std::vector<double> minor((d - 1) * (d - 1));
  for (int j = 0; j < d; ++j)
    for (int a = 0; a < d; ++a) {
      int k = 0;
      for (int jj = 0; jj < d; ++jj) {
        if (jj == j) continue;
        for (int aa = 0; aa < d; ++aa) {
          if (aa == a) continue;
          minor[k++] = m[jj * d + aa];
        }
      }
      double sgn = ((j + a) % 2 == 0) ? 1.0 : -1.0;
      out[j * d + a] = sgn * determinant(minor.data(), d - 1);
    }
}

// Forward-difference Jacobian from the cell's principal corner, row j = component j.
inline void cell_jacobian(const GridField& pi, std::size_t corner, double* jac) {
  const int d = pi.dim();
  for (int a = 0; a < d; ++a) {
    std::size_t nb = corner + pi.stride(a);
    for (int j = 0; j < d; ++j) jac[j * d + a] = (pi.at(nb, j) - pi.at(corner, j)) / pi.h();
  }
}

inline void require_vector_field(const GridField& pi) {
  if (pi.ncomp() != pi.dim())
    throw GridError("expected a vector field with " + std::to_string(pi.dim()) + " components, got " +
                    std::to_string(pi.ncomp()));
}

// Per-cell det D pi over the whole grid.
inline CellField det_field(const GridField& pi) {
  require_vector_field(pi);
  CellField out = empty_cells_like(pi);
  const int d = pi.dim();
  std::vector<double> jac(d * d);
  std::size_t k = 0;
  detail::for_each_cell(pi, pi.full_box(), [&](const std::vector<int>&, std::size_t corner) {
    cell_jacobian(pi, corner, jac.data());
    out.values[k++] = determinant(jac.data(), d);
  });
  return out;
}

// Midpoint quadrature of det D pi over a grid-aligned box.
inline double jacobian_det_volume(const GridField& pi, const GridBox& box) {
  require_vector_field(pi);
  const int d = pi.dim();
  std::vector<double> jac(d * d);
  double sum = 0.0;
  detail::for_each_cell(pi, box, [&](const std::vector<int>&, std::size_t corner) {
    cell_jacobian(pi, corner, jac.data());
    sum += determinant(jac.data(), d);
  });
  return sum * std::pow(pi.h(), d);
}

inline double jacobian_det_volume(const GridField& pi) { return jacobian_det_volume(pi, pi.full_box()); }

// Integral over the boundary of pi_1 <d pi_2 ^ ... ^ d pi_d, Tan>, with the
// orientation induced by the standard orientation of the box. On the face with
// outward normal s e_a the tangent form contributes s (-1)^a det of the
// (d-1)x(d-1) Jacobian of (pi_2..pi_d) in the remaining coordinates.
inline double jacobian_det_boundary(const GridField& pi, const GridBox& box) {
  require_vector_field(pi);
  const int d = pi.dim();
  if (d < 2) throw GridError("boundary determinant needs d >= 2");
  pi.check(box);
  const double h = pi.h();
  const int fd = d - 1;
  std::vector<double> jac(fd * fd);
  double total = 0.0;
  for (int a = 0; a < d; ++a) {
    std::vector<int> tangent;
    for (int b = 0; b < d; ++b)
      if (b != a) tangent.push_back(b);
    for (int side = 0; side < 2; ++side) {
      GridBox face{box.begin, box.cells};
      face.begin[a] = box.begin[a] + (side ? box.cells[a] : 0);
      face.cells[a] = 1;  // iterate a single layer; the normal axis is pinned below
      double sign = (side ? 1.0 : -1.0) * ((a % 2 == 0) ? 1.0 : -1.0);
      double face_sum = 0.0;
      detail::for_each_cell_unchecked(pi, face, [&](const std::vector<int>&, std::size_t corner) {
        double p1 = 0.0;
        for (int c = 0; c < (1 << fd); ++c) {
          std::size_t n = corner;
          for (int t = 0; t < fd; ++t)
            if ((c >> t) & 1) n += pi.stride(tangent[t]);
          p1 += pi.at(n, 0);
        }
        p1 /= static_cast<double>(1 << fd);
        for (int t = 0; t < fd; ++t) {
          std::size_t nb = corner + pi.stride(tangent[t]);
          for (int j = 1; j < d; ++j) jac[(j - 1) * fd + t] = (pi.at(nb, j) - pi.at(corner, j)) / h;
        }
        face_sum += p1 * determinant(jac.data(), fd);
      });
      total += sign * face_sum * std::pow(h, fd);
    }
  }
  return total;
}

inline double jacobian_det_boundary(const GridField& pi) { return jacobian_det_boundary(pi, pi.full_box()); }

// ---- norms ----

// Grid-realized Lipschitz constant per component. In each cell we take, per
// axis, the largest edge difference along that axis and combine them as a
// gradient norm. This bounds the gradient of the multilinear interpolant (and
// equals its sup in d = 2), is exact for affine data, and dominates
// |F(a)-F(b)|/|a-b| for every pair of nodes.
inline double cell_lipschitz(const GridField& F, std::size_t corner, int c) {
  const int d = F.dim();
  double s = 0.0;
  for (int a = 0; a < d; ++a) {
    double best = 0.0;
    // edges along axis a: one per corner of the facet {x_a = 0}
    for (int m = 0; m < (1 << d); ++m) {
      if ((m >> a) & 1) continue;
      std::size_t n = corner;
      for (int b = 0; b < d; ++b)
        if ((m >> b) & 1) n += F.stride(b);
      double diff = F.at(n + F.stride(a), c) - F.at(n, c);
      best = std::max(best, diff * diff);
    }
    s += best;
  }
  return std::sqrt(s) / F.h();
}

inline std::vector<double> lipschitz_constants(const GridField& F, const GridBox& box) {
  std::vector<double> best(F.ncomp(), 0.0);
  detail::for_each_cell(F, box, [&](const std::vector<int>&, std::size_t corner) {
    for (int c = 0; c < F.ncomp(); ++c) best[c] = std::max(best[c], cell_lipschitz(F, corner, c));
  });
  return best;
}

inline std::vector<double> lipschitz_constants(const GridField& F) { return lipschitz_constants(F, F.full_box()); }

inline double lipschitz_constant(const GridField& F) {
  auto v = lipschitz_constants(F);
  return *std::max_element(v.begin(), v.end());
}

inline double sup_norm(const GridField& F, int comp) {
  double m = 0.0;
  for (std::size_t n = 0; n < F.node_count(); ++n) m = std::max(m, std::abs(F.at(n, comp)));
  return m;
}

// Calls fn(node) for every node on the boundary of box.
template <class Fn>
void for_each_boundary_node(const GridField& g, const GridBox& box, Fn&& fn) {
  g.check(box);
  const int d = g.dim();
  std::vector<int> idx(box.begin);
  std::size_t total = 1;
  for (int c : box.cells) total *= static_cast<std::size_t>(c + 1);
  for (std::size_t n = 0; n < total; ++n) {
    bool on_boundary = false;
    for (int a = 0; a < d; ++a)
      if (idx[a] == box.begin[a] || idx[a] == box.begin[a] + box.cells[a]) on_boundary = true;
    if (on_boundary) fn(g.flatten(idx));
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] <= box.begin[a] + box.cells[a]) break;
      idx[a] = box.begin[a];
    }
  }
}

// max over boundary nodes of |F(x) - G(x)| (Euclidean over components).
inline double boundary_sup_difference(const GridField& F, const GridBox& fbox, const GridField& G,
                                      const GridBox& gbox) {
  if (F.ncomp() != G.ncomp() || fbox.cells != gbox.cells) throw GridError("boundary comparison: shape mismatch");
  std::vector<std::size_t> fn, gn;
  for_each_boundary_node(F, fbox, [&](std::size_t n) { fn.push_back(n); });
  for_each_boundary_node(G, gbox, [&](std::size_t n) { gn.push_back(n); });
  double best = 0.0;
  for (std::size_t k = 0; k < fn.size(); ++k) {
    double s = 0.0;
    for (int c = 0; c < F.ncomp(); ++c) {
      double diff = F.at(fn[k], c) - G.at(gn[k], c);
      s += diff * diff;
    }
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

inline GridField restrict_to(const GridField& F, const GridBox& box) {
  F.check(box);
  std::vector<double> lo(F.dim());
  for (int a = 0; a < F.dim(); ++a) lo[a] = F.coord(a, box.begin[a]);
  GridField out(lo, F.h(), box.cells, F.ncomp());
  std::vector<int> idx;
  std::vector<int> src(F.dim());
  for (std::size_t n = 0; n < out.node_count(); ++n) {
    out.unflatten(n, idx);
    for (int a = 0; a < F.dim(); ++a) src[a] = idx[a] + box.begin[a];
    std::size_t m = F.flatten(src);
    for (int c = 0; c < F.ncomp(); ++c) out.at(n, c) = F.at(m, c);
  }
  return out;
}

// ---- I/O ----

inline void write_csv(const GridField& F, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (int a = 0; a < F.dim(); ++a) os << "x" << (a + 1) << ",";
  for (int c = 0; c < F.ncomp(); ++c) os << (c ? "," : "") << "v" << (c + 1);
  os << "\n";
  os.precision(17);
  std::vector<int> idx;
  for (std::size_t n = 0; n < F.node_count(); ++n) {
    F.unflatten(n, idx);
    for (int a = 0; a < F.dim(); ++a) os << F.coord(a, idx[a]) << ",";
    for (int c = 0; c < F.ncomp(); ++c) os << (c ? "," : "") << F.at(n, c);
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

// Reads a CSV written by write_csv; d is the number of coordinate columns.
inline GridField read_csv(const std::string& path, int d) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  int cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  int ncomp = cols - d;
  if (ncomp < 1) throw IoError(path + ": header has too few columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != cols) throw IoError(path + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw IoError(path + ": not enough rows");
  std::vector<double> lo(d), hi(d);
  for (int a = 0; a < d; ++a) {
    lo[a] = hi[a] = rows[0][a];
    for (const auto& r : rows) {
      lo[a] = std::min(lo[a], r[a]);
      hi[a] = std::max(hi[a], r[a]);
    }
  }
  // step from the last axis, which varies fastest
  double h = rows[1][d - 1] - rows[0][d - 1];
  std::vector<int> cells(d);
  for (int a = 0; a < d; ++a) cells[a] = static_cast<int>(std::lround((hi[a] - lo[a]) / h));
  GridField F(lo, h, cells, ncomp);
  if (F.node_count() != rows.size()) throw IoError(path + ": row count does not match a uniform grid");
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (int c = 0; c < ncomp; ++c) F.at(n, c) = rows[n][d + c];
  return F;
}

// Binary layout (little-endian): "PJEGRID1", int32 d, int32 ncomp, float64 lo[d],
// float64 h, int32 cells[d], then node values (row-major nodes, components
// interleaved) as float64.
inline void write_binary(const GridField& F, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "binary grid format assumes a little-endian host");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  os.write("PJEGRID1", 8);
  put(static_cast<std::int32_t>(F.dim()));
  put(static_cast<std::int32_t>(F.ncomp()));
  for (double x : F.lo()) put(x);
  put(F.h());
  for (int c : F.cells()) put(static_cast<std::int32_t>(c));
  os.write(reinterpret_cast<const char*>(F.values().data()),
           static_cast<std::streamsize>(F.values().size() * sizeof(double)));
  if (!os) throw IoError("write failed: " + path);
}

inline GridField read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "PJEGRID1", 8) != 0) throw IoError(path + ": bad magic");
  auto get = [&](auto& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw IoError(path + ": truncated header");
  };
  std::int32_t d = 0, ncomp = 0;
  get(d);
  get(ncomp);
  if (d < 1 || d > 16 || ncomp < 1) throw IoError(path + ": bad dimensions");
  std::vector<double> lo(d);
  for (auto& x : lo) get(x);
  double h = 0;
  get(h);
  std::vector<int> cells(d);
  for (auto& c : cells) {
    std::int32_t v = 0;
    get(v);
    c = v;
  }
  GridField F(lo, h, cells, ncomp);
  is.read(reinterpret_cast<char*>(F.values().data()),
          static_cast<std::streamsize>(F.values().size() * sizeof(double)));
  if (!is) throw IoError(path + ": truncated values");
  return F;
}

}  // namespace pje
