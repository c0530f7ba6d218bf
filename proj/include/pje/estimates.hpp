#pragma once

// Quantitative determinant estimates on single cubes, evaluated on grid data.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pje/errors.hpp"
#include "pje/grid_field.hpp"
#include "pje/hierarchy.hpp"

namespace pje {

inline double c_d(int d) { return 2.0 * d * d; }

struct TolerancePolicy {
  double slack_factor = 10.0;   // slack >= -slack_factor * h * max(1, lip)
  double affine = 1e-8;
  double regularize = 1e-8;
  double idempotence = 1e-12;
  double embedding = 1e-9;
  double projection = 1e-6;     // relative overshoot allowed after Lipschitz projection

  double slack_tolerance(double h, double lip = 1.0) const { return slack_factor * h * std::max(1.0, lip); }
};

struct EstimateReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string context;

  double slack() const { return rhs - lhs; }
  bool passes(double tolerance) const { return slack() >= -tolerance; }
};

inline double box_side(const GridField& F, const GridBox& box) {
  for (int a = 1; a < box.dim(); ++a)
    if (box.cells[a] != box.cells[0]) throw GridError("estimate needs a cube, got a box with unequal sides");
  return box.cells[0] * F.h();
}

inline std::string box_label(const GridField& F, const GridBox& box) {
  std::string s = "[";
  for (int a = 0; a < box.dim(); ++a) {
    if (a) s += " x ";
    s += std::to_string(F.coord(a, box.begin[a])) + "," + std::to_string(F.coord(a, box.begin[a] + box.cells[a]));
  }
  return s + "]";
}

// Value of a scalar field at the centre of the cell with principal corner `corner`.
inline double cell_center_value(const GridField& f, std::size_t corner, int comp = 0) {
  const int d = f.dim();
  double s = 0.0;
  for (int m = 0; m < (1 << d); ++m) {
    std::size_t n = corner;
    for (int a = 0; a < d; ++a)
      if ((m >> a) & 1) n += f.stride(a);
    s += f.at(n, comp);
  }
  return s / static_cast<double>(1 << d);
}

// Midpoint quadrature of f det D pi over box.
inline double weighted_det_integral(const GridField& f, const GridField& pi, const GridBox& box) {
  require_vector_field(pi);
  if (f.ncomp() != 1 || f.cells() != pi.cells() || f.lo() != pi.lo() || f.h() != pi.h())
    throw GridError("weighted determinant: f and pi must share a grid");
  const int d = pi.dim();
  std::vector<double> jac(d * d);
  double sum = 0.0;
  detail::for_each_cell(pi, box, [&](const std::vector<int>&, std::size_t corner) {
    cell_jacobian(pi, corner, jac.data());
    sum += cell_center_value(f, corner) * determinant(jac.data(), d);
  });
  return sum * std::pow(pi.h(), d);
}

inline void require_shared_grid(const GridField& a, const GridField& b) {
  if (a.cells() != b.cells() || a.lo() != b.lo() || a.h() != b.h())
    throw GridError("fields must share a grid");
}

inline double max_lip(const GridField& F, const GridBox& box) {
  auto v = lipschitz_constants(F, box);
  return *std::max_element(v.begin(), v.end());
}

// |int det D pi - int det D kappa| <= c_d L^{d-1} r^{d-1} |pi - kappa|_{l^inf(dQ)}
inline EstimateReport check_average_det(const GridField& pi, const GridField& kappa, const GridBox& box) {
  require_vector_field(pi);
  require_vector_field(kappa);
  require_shared_grid(pi, kappa);
  const int d = pi.dim();
  const double r = box_side(pi, box);
  const double L = std::max(max_lip(pi, box), max_lip(kappa, box));
  EstimateReport rep;
  rep.name = "average-det";
  rep.lhs = std::abs(jacobian_det_volume(pi, box) - jacobian_det_volume(kappa, box));
  rep.rhs = c_d(d) * std::pow(L, d - 1) * std::pow(r, d - 1) * boundary_sup_difference(pi, box, kappa, box);
  rep.context = box_label(pi, box) + " L=" + std::to_string(L);
  return rep;
}

inline EstimateReport check_average_det(const GridField& pi, const GridField& kappa) {
  return check_average_det(pi, kappa, pi.full_box());
}

inline double value_at_box_center(const GridField& f, const GridBox& box) {
  std::vector<int> idx(box.dim());
  for (int a = 0; a < box.dim(); ++a) {
    if (box.cells[a] % 2 != 0) throw GridError("cube centre is not a grid node (odd cell count)");
    idx[a] = box.begin[a] + box.cells[a] / 2;
  }
  return f.at(f.flatten(idx));
}

// The three-term bound with coefficients f, g.
inline EstimateReport check_coef_estimate(const GridField& f, const GridField& g, const GridField& pi,
                                          const GridField& kappa, const GridBox& box) {
  require_vector_field(pi);
  require_vector_field(kappa);
  require_shared_grid(pi, kappa);
  require_shared_grid(f, pi);
  require_shared_grid(g, pi);
  const int d = pi.dim();
  const double r = box_side(pi, box);
  const double L = std::max(max_lip(pi, box), max_lip(kappa, box));
  const double fQ = value_at_box_center(f, box);
  const double gQ = value_at_box_center(g, box);
  const double lip_f = lipschitz_constants(f, box)[0];
  const double lip_g = lipschitz_constants(g, box)[0];
  EstimateReport rep;
  rep.name = "coef";
  rep.lhs = std::abs(weighted_det_integral(f, pi, box) - weighted_det_integral(g, kappa, box));
  rep.rhs = std::pow(r, d + 1) * (lip_f + lip_g) * 0.5 * std::sqrt(static_cast<double>(d)) * std::pow(L, d) +
            std::pow(r, d) * std::abs(fQ - gQ) * std::pow(L, d) +
            std::pow(r, d - 1) * std::abs(fQ) * c_d(d) * std::pow(L, d - 1) *
                boundary_sup_difference(pi, box, kappa, box);
  rep.context = box_label(pi, box) + " L=" + std::to_string(L);
  return rep;
}

inline EstimateReport check_coef_estimate(const GridField& f, const GridField& g, const GridField& pi,
                                          const GridField& kappa) {
  return check_coef_estimate(f, g, pi, kappa, pi.full_box());
}

// Grid location of an adjacent pair inside a field's grid.
struct PairBoxes {
  GridBox left;
  GridBox right;
  std::vector<int> shift;  // tau in node units
};

inline PairBoxes locate_pair(const GridField& F, const AdjacentPair& pair) {
  PairBoxes pb;
  auto lb = pair.left.box();
  auto rb = pair.right.box();
  pb.left = F.locate(to_doubles(lb.lo), to_doubles(lb.hi));
  pb.right = F.locate(to_doubles(rb.lo), to_doubles(rb.hi));
  pb.shift.resize(F.dim());
  for (int a = 0; a < F.dim(); ++a) pb.shift[a] = pb.right.begin[a] - pb.left.begin[a];
  return pb;
}

// x -> F(x + tau) - W sampled on the left cube's nodes.
inline GridField translated_comparison(const GridField& F, const PairBoxes& pb, const std::vector<double>& W) {
  if (static_cast<int>(W.size()) != F.ncomp()) throw GridError("W must have one entry per component");
  GridField out = restrict_to(F, pb.right);
  std::vector<double> lo(F.dim());
  for (int a = 0; a < F.dim(); ++a) lo[a] = F.coord(a, pb.left.begin[a]);
  GridField moved(lo, F.h(), pb.left.cells, F.ncomp());
  for (std::size_t n = 0; n < out.node_count(); ++n)
    for (int c = 0; c < F.ncomp(); ++c) moved.at(n, c) = out.at(n, c) - W[c];
  return moved;
}

inline GridField translated_comparison(const GridField& F, const AdjacentPair& pair, const std::vector<double>& W) {
  return translated_comparison(F, locate_pair(F, pair), W);
}

// |pi - pi~|_{l^inf(dQ)} on the left cube of the pair.
inline double translated_boundary_difference(const GridField& F, const PairBoxes& pb, const std::vector<double>& W) {
  GridField moved = translated_comparison(F, pb, W);
  return boundary_sup_difference(F, pb.left, moved, moved.full_box());
}

}  // namespace pje
