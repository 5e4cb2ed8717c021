#pragma once

#include <Eigen/Core>
#include <cmath>
#include <complex>
#include <memory>
#include <utility>

#include "nlslab/errors.hpp"

namespace nlslab {

using complexd = std::complex<double>;
using Eigen::VectorXcd;
using Eigen::VectorXd;

enum class Boundary { dirichlet, periodic };

// Uniform symmetric mesh on [-L, L].  Dirichlet includes both endpoints
// (h = 2L/(n-1)); periodic excludes the right one (h = 2L/n, n even so the
// mesh maps onto itself under x -> -x).  Points are built as (i - c)*h so the
// mirror identity x[mirror(i)] == -x[i] holds bit-exactly.
struct Grid {
  double L = 0;
  int n = 0;
  Boundary boundary = Boundary::dirichlet;
  double h = 0;
  VectorXd x;

  int mirror(int i) const {
    return boundary == Boundary::dirichlet ? n - 1 - i : (n - i) % n;
  }
  bool same_as(const Grid& o) const {
    return L == o.L && n == o.n && boundary == o.boundary;
  }
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr build_grid(double L, int n, Boundary boundary) {
  if (!std::isfinite(L) || L <= 0) throw ValidationError("grid: half-width must be finite and positive");
  if (n < 16) throw ValidationError("grid: at least 16 points required");
  if (boundary == Boundary::periodic && n % 2 != 0)
    throw ValidationError("grid: periodic mesh requires even point count");
  auto g = std::make_shared<Grid>();
  g->L = L;
  g->n = n;
  g->boundary = boundary;
  g->h = boundary == Boundary::dirichlet ? 2.0 * L / (n - 1) : 2.0 * L / n;
  g->x.resize(n);
  const double c = boundary == Boundary::dirichlet ? (n - 1) / 2.0 : n / 2.0;
  for (int i = 0; i < n; ++i) g->x[i] = (i - c) * g->h;
  return g;
}

struct ComplexField {
  GridPtr grid;
  VectorXcd v;
};

inline ComplexField make_field(GridPtr g) {
  const int n = g ? g->n : 0;
  return {std::move(g), VectorXcd::Zero(n)};
}

template <class F>
ComplexField field_from(GridPtr g, F&& fn) {
  ComplexField u{std::move(g), VectorXcd(0)};
  u.v.resize(u.grid->n);
  for (int i = 0; i < u.grid->n; ++i) u.v[i] = fn(u.grid->x[i]);
  return u;
}

inline void require_same_grid(const ComplexField& a, const ComplexField& b) {
  if (!a.grid || !b.grid || !a.grid->same_as(*b.grid)) throw ValidationError("fields live on different grids");
}

inline void require_finite(const ComplexField& u, const char* where) {
  if (!u.v.allFinite()) throw NonFiniteFieldError(std::string("non-finite samples in ") + where);
}

// Complex pairing (u,v) = integral of u * conj(v); uniform weight h.  The
// uniform weight keeps the second-difference operator exactly self-adjoint
// w.r.t. this inner product, which downstream tests rely on.
inline complexd cpair(const ComplexField& u, const ComplexField& v) {
  require_same_grid(u, v);
  return u.grid->h * v.v.dot(u.v);  // dot() conjugates the left operand: sum u_i conj(v_i)
}

// Real pairing <u,v> = Re (u,v).
inline double rpair(const ComplexField& u, const ComplexField& v) { return cpair(u, v).real(); }

inline double norm_l2(const ComplexField& u) { return std::sqrt(u.grid->h) * u.v.norm(); }

// Centered first derivative, 2nd order; ghost zeros outside a dirichlet box,
// wraparound when periodic.
inline ComplexField dx(const ComplexField& u) {
  const auto& g = *u.grid;
  ComplexField out{u.grid, VectorXcd(g.n)};
  const double s = 1.0 / (2.0 * g.h);
  const int n = g.n;
  out.v.segment(1, n - 2) = s * (u.v.segment(2, n - 2) - u.v.segment(0, n - 2));
  if (g.boundary == Boundary::dirichlet) {
    out.v[0] = s * u.v[1];
    out.v[n - 1] = -s * u.v[n - 2];
  } else {
    out.v[0] = s * (u.v[1] - u.v[n - 1]);
    out.v[n - 1] = s * (u.v[0] - u.v[n - 2]);
  }
  return out;
}

// Second derivative; order 2 (three-point) or 4 (five-point).
inline ComplexField dxx(const ComplexField& u, int order = 2) {
  const auto& g = *u.grid;
  const int n = g.n;
  ComplexField out{u.grid, VectorXcd(n)};
  auto at = [&](int i) -> complexd {
    if (g.boundary == Boundary::periodic) return u.v[(i % n + n) % n];
    return (i < 0 || i >= n) ? complexd(0.0) : u.v[i];
  };
  if (order == 2) {
    const double s = 1.0 / (g.h * g.h);
    out.v.segment(1, n - 2) =
        s * (u.v.segment(0, n - 2) - 2.0 * u.v.segment(1, n - 2) + u.v.segment(2, n - 2));
    out.v[0] = s * (at(-1) - 2.0 * u.v[0] + u.v[1]);
    out.v[n - 1] = s * (u.v[n - 2] - 2.0 * u.v[n - 1] + at(n));
  } else if (order == 4) {
    const double s = 1.0 / (12.0 * g.h * g.h);
    for (int i = 0; i < n; ++i)
      out.v[i] = s * (-at(i - 2) + 16.0 * at(i - 1) - 30.0 * u.v[i] + 16.0 * at(i + 1) - at(i + 2));
  } else {
    throw ValidationError("second-difference stencil order must be 2 or 4");
  }
  return out;
}

inline double norm_h1(const ComplexField& u) {
  const double a = norm_l2(u), b = norm_l2(dx(u));
  return std::sqrt(a * a + b * b);
}

// Polynomially weighted L^2: || <x>^s u ||, <x> = sqrt(1+x^2).
inline double norm_l2_poly(const ComplexField& u, double s) {
  const auto& g = *u.grid;
  double acc = 0;
  for (int i = 0; i < g.n; ++i) {
    const double w = std::pow(1.0 + g.x[i] * g.x[i], 0.5 * s);
    acc += std::norm(u.v[i]) * w * w;
  }
  return std::sqrt(g.h * acc);
}

// Sech-weighted L^2: || sech(kappa x) u ||.
inline double norm_l2_sech(const ComplexField& u, double kappa) {
  const auto& g = *u.grid;
  double acc = 0;
  for (int i = 0; i < g.n; ++i) {
    const double w = 1.0 / std::cosh(kappa * g.x[i]);
    acc += std::norm(u.v[i]) * w * w;
  }
  return std::sqrt(g.h * acc);
}

// Exponentially weighted H^1 with weight e^{a<x>}; a may be negative (damped
// observation weight) or positive (growth weight for bound-state tails).  The
// derivative of the weighted field is expanded by the product rule with the
// analytic weight derivative, the field derivative by the grid stencil.
inline double norm_h1_exp(const ComplexField& u, double a) {
  const auto& g = *u.grid;
  ComplexField du = dx(u);
  double acc = 0;
  for (int i = 0; i < g.n; ++i) {
    const double ang = std::sqrt(1.0 + g.x[i] * g.x[i]);
    const double w = std::exp(a * ang);
    const double wp = a * g.x[i] / ang * w;
    acc += std::norm(u.v[i]) * w * w + std::norm(w * du.v[i] + wp * u.v[i]);
  }
  return std::sqrt(g.h * acc);
}

}  // namespace nlslab
