#pragma once

// Seeded smooth random fields on uniform grids: affine part plus a few
// trigonometric modes, rescaled to a prescribed grid Lipschitz constant.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pje/grid_field.hpp"
#include "pje/lipschitz_sum.hpp"

namespace pje {

struct TrigMode {
  std::vector<double> freq;
  double amp = 0.0;
  double phase = 0.0;
};

struct TrigComponent {
  std::vector<double> slope;
  double offset = 0.0;
  std::vector<TrigMode> modes;

  double operator()(const double* x) const {
    double v = offset;
    for (std::size_t a = 0; a < slope.size(); ++a) v += slope[a] * x[a];
    for (const auto& m : modes) {
      double t = m.phase;
      for (std::size_t a = 0; a < m.freq.size(); ++a) t += m.freq[a] * x[a];
      v += m.amp * std::sin(t);
    }
    return v;
  }
};

inline TrigComponent random_component(int d, std::mt19937_64& rng, int modes = 3, double max_freq = 6.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TrigComponent c;
  c.offset = u(rng);
  for (int a = 0; a < d; ++a) c.slope.push_back(u(rng));
  for (int m = 0; m < modes; ++m) {
    TrigMode t;
    for (int a = 0; a < d; ++a) t.freq.push_back(max_freq * u(rng));
    t.amp = 0.3 * u(rng);
    t.phase = 3.14159265358979 * u(rng);
    c.modes.push_back(t);
  }
  return c;
}

// Scales each component about its first node so that its grid Lipschitz
// constant equals lip[c] (components with zero Lipschitz constant are left alone).
inline void rescale_components(GridField& F, const std::vector<double>& lip) {
  auto cur = lipschitz_constants(F);
  for (int c = 0; c < F.ncomp(); ++c) {
    if (cur[c] <= 0) continue;
    double s = lip[c] / cur[c];
    double base = F.at(0, c);
    for (std::size_t n = 0; n < F.node_count(); ++n) F.at(n, c) = base + s * (F.at(n, c) - base);
  }
}

inline GridField random_smooth_field(const std::vector<double>& lo, double h, const std::vector<int>& cells,
                                     int ncomp, std::mt19937_64& rng, int modes = 3) {
  const int d = static_cast<int>(cells.size());
  std::vector<TrigComponent> comps;
  for (int c = 0; c < ncomp; ++c) comps.push_back(random_component(d, rng, modes));
  return GridField::sample(lo, h, cells, ncomp, [&](const double* x, double* out) {
    for (int c = 0; c < ncomp; ++c) out[c] = comps[c](x);
  });
}

// Vector field on [0,1]^d (n cells per axis) with every component Lipschitz
// constant drawn uniformly from [lip/2, lip].
inline GridField random_lipschitz_map(int d, int n, double lip, std::mt19937_64& rng, int modes = 3) {
  GridField F = random_smooth_field(std::vector<double>(d, 0.0), 1.0 / n, std::vector<int>(d, n), d, rng, modes);
  std::uniform_real_distribution<double> u(0.5 * lip, lip);
  std::vector<double> target(d);
  for (auto& t : target) t = u(rng);
  rescale_components(F, target);
  return F;
}

inline GridField random_scalar(int d, int n, double lip, std::mt19937_64& rng, int modes = 3) {
  GridField f = random_smooth_field(std::vector<double>(d, 0.0), 1.0 / n, std::vector<int>(d, n), 1, rng, modes);
  std::uniform_real_distribution<double> u(0.5 * lip, lip);
  rescale_components(f, {u(rng)});
  return f;
}

// kappa = pi + amplitude * smooth perturbation, pulled back to the Lipschitz
// bound of pi if the perturbation pushed a component over it.
inline GridField perturb_map(const GridField& pi, double amplitude, double lip, std::mt19937_64& rng) {
  GridField p = random_smooth_field(pi.lo(), pi.h(), pi.cells(), pi.ncomp(), rng);
  GridField out = pi;
  for (std::size_t k = 0; k < out.values().size(); ++k) out.values()[k] += amplitude * p.values()[k];
  auto cur = lipschitz_constants(out);
  std::vector<double> target(cur);
  bool over = false;
  for (auto& t : target)
    if (t > lip) t = lip, over = true;
  if (over) rescale_components(out, target);
  return out;
}

// Random n-term sum with coefficients of norm in [1/2, 1] and component
// Lipschitz constants in [lip/2, lip].
inline LipschitzSum random_sum(int d, int n_cells, int terms, double lip, std::mt19937_64& rng) {
  LipschitzSum s;
  for (int i = 0; i < terms; ++i) {
    GridField f = random_scalar(d, n_cells, 1.0, rng);
    double norm = coefficient_norm(f);
    std::uniform_real_distribution<double> u(0.5, 1.0);
    double target = u(rng);
    for (auto& v : f.values()) v *= target / norm;
    s.add(std::move(f), random_lipschitz_map(d, n_cells, lip, rng));
  }
  return s;
}

}  // namespace pje
