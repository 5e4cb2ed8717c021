#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nlslab/grid.hpp"

namespace nlslab {

enum class PotentialKind { zero, scaled_sech2, tabulated };

// Real potential sampled on a grid.  scaled_sech2 is V(x) = -depth sech^2(x/width),
// depth > 0 (attractive well).  Tabulated potentials keep their source table so
// they can be resampled onto refined grids.
struct Potential {
  GridPtr grid;
  PotentialKind kind = PotentialKind::zero;
  double depth = 0;
  double width = 1;
  VectorXd v;
  std::vector<double> table_x, table_v;
  bool tail_decay_ok = true;

  Potential on_grid(const GridPtr& g) const;
};

namespace detail {

// Exponential-tail bound |V(x)| <= depth e^{-|x|/width} checked on the outer
// decade of the mesh; for sech^2 it holds wherever e^{|x|/width} >= 4, so a
// failure means the box does not contain the potential's decay region.
inline bool sech2_tail_ok(const Grid& g, double depth, double width, const VectorXd& v) {
  bool ok = true;
  for (int i = 0; i < g.n; ++i) {
    if (std::abs(g.x[i]) < 0.9 * g.L) continue;
    if (std::abs(v[i]) > depth * std::exp(-std::abs(g.x[i]) / width) + 1e-300) ok = false;
  }
  return ok;
}

inline double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const size_t j = static_cast<size_t>(it - xs.begin());
  const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return (1.0 - t) * ys[j - 1] + t * ys[j];
}

}  // namespace detail

inline Potential zero_potential(GridPtr g) {
  Potential V;
  V.grid = std::move(g);
  V.kind = PotentialKind::zero;
  V.v = VectorXd::Zero(V.grid->n);
  return V;
}

inline Potential sech2_potential(GridPtr g, double depth, double width) {
  if (!(depth > 0) || !(width > 0)) throw ValidationError("sech2 potential: depth and width must be positive");
  Potential V;
  V.grid = std::move(g);
  V.kind = PotentialKind::scaled_sech2;
  V.depth = depth;
  V.width = width;
  V.v.resize(V.grid->n);
  for (int i = 0; i < V.grid->n; ++i) {
    const double c = std::cosh(V.grid->x[i] / width);
    V.v[i] = -depth / (c * c);
  }
  V.tail_decay_ok = detail::sech2_tail_ok(*V.grid, depth, width, V.v);
  if (!V.tail_decay_ok)
    throw ValidationError("sech2 potential: exponential tail bound fails on the grid edge (box too small for this width)");
  return V;
}

inline Potential tabulated_potential(GridPtr g, std::vector<double> xs, std::vector<double> vs) {
  if (xs.size() != vs.size() || xs.size() < 2) throw ValidationError("tabulated potential: need >= 2 (x, V) rows");
  for (size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] > xs[i - 1])) throw ValidationError("tabulated potential: x column must be strictly increasing");
  Potential V;
  V.grid = std::move(g);
  V.kind = PotentialKind::tabulated;
  V.table_x = std::move(xs);
  V.table_v = std::move(vs);
  V.v.resize(V.grid->n);
  for (int i = 0; i < V.grid->n; ++i) V.v[i] = detail::interp_linear(V.table_x, V.table_v, V.grid->x[i]);
  double edge = 0, peak = 0;
  for (int i = 0; i < V.grid->n; ++i) {
    peak = std::max(peak, std::abs(V.v[i]));
    if (std::abs(V.grid->x[i]) >= 0.9 * V.grid->L) edge = std::max(edge, std::abs(V.v[i]));
  }
  V.tail_decay_ok = peak == 0 || edge <= 1e-8 * peak;
  return V;
}

inline Potential potential_from_file(GridPtr g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("potential file not found: " + path);
  std::vector<double> xs, vs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    double x, v;
    if (row >> x >> v) {
      xs.push_back(x);
      vs.push_back(v);
    }
  }
  if (xs.size() < 2) throw ValidationError("potential file has fewer than 2 usable rows: " + path);
  return tabulated_potential(std::move(g), std::move(xs), std::move(vs));
}

// Off-mesh evaluation (ODE integrators sample between nodes).
inline double potential_value(const Potential& V, double x) {
  switch (V.kind) {
    case PotentialKind::zero:
      return 0.0;
    case PotentialKind::scaled_sech2: {
      const double c = std::cosh(x / V.width);
      return -V.depth / (c * c);
    }
    case PotentialKind::tabulated:
      return detail::interp_linear(V.table_x, V.table_v, x);
  }
  throw ValidationError("unknown potential kind");
}

inline Potential Potential::on_grid(const GridPtr& g) const {
  switch (kind) {
    case PotentialKind::zero:
      return zero_potential(g);
    case PotentialKind::scaled_sech2:
      return sech2_potential(g, depth, width);
    case PotentialKind::tabulated:
      return tabulated_potential(g, table_x, table_v);
  }
  throw ValidationError("unknown potential kind");
}

}  // namespace nlslab
