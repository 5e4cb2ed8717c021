#pragma once

#include <complex>  // must precede lapacke.h: lapack_complex_* map onto std::complex

#include <lapacke.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nlslab/operator_lab.hpp"

namespace nlslab::ground_states {

using operator_lab::SpectralData;
using operator_lab::Stencil;

// Pure-power nonlinearity g(s) = sigma s^{(p-1)/2}, f(u) = g(|u|^2) u,
// G' = g with G(0) = 0.  sigma = 0 switches the nonlinearity off (linear
// comparison runs).  The second derivative of g is singular at s = 0 for
// p < 3; Jacobian evaluations therefore floor s at kSFloor.
struct Nonlinearity {
  double p = 2.0;
  double sigma = -1.0;

  static constexpr double kSFloor = 1e-28;  // = (1e-14)^2 amplitude floor

  Nonlinearity() = default;
  Nonlinearity(double p_, double sigma_) : p(p_), sigma(sigma_) {
    if (!(p > 1.0)) throw ValidationError("nonlinearity: exponent p must exceed 1");
    if (sigma != -1.0 && sigma != 1.0 && sigma != 0.0)
      throw ValidationError("nonlinearity: sign must be -1, 0 or +1");
  }

  double g(double s) const { return sigma == 0.0 ? 0.0 : sigma * std::pow(s, 0.5 * (p - 1.0)); }
  double gprime(double s) const {
    if (sigma == 0.0) return 0.0;
    return sigma * 0.5 * (p - 1.0) * std::pow(std::max(s, kSFloor), 0.5 * (p - 3.0));
  }
  double G(double s) const {
    return sigma == 0.0 ? 0.0 : sigma * (2.0 / (p + 1.0)) * std::pow(s, 0.5 * (p + 1.0));
  }

  complexd f(complexd u) const {
    const double s = std::norm(u);
    return s == 0.0 ? complexd(0.0) : g(s) * u;
  }

  ComplexField f(const ComplexField& u) const {
    ComplexField out{u.grid, VectorXcd(u.v.size())};
    for (Eigen::Index i = 0; i < u.v.size(); ++i) out.v[i] = f(u.v[i]);
    return out;
  }

  // Df(u)X = g(|u|^2) X + 2 g'(|u|^2) u Re(conj(u) X)
  ComplexField df(const ComplexField& u, const ComplexField& X) const {
    require_same_grid(u, X);
    ComplexField out{u.grid, VectorXcd(u.v.size())};
    for (Eigen::Index i = 0; i < u.v.size(); ++i) {
      const double s = std::norm(u.v[i]);
      if (s == 0.0) {
        out.v[i] = 0.0;  // p > 1 limit
        continue;
      }
      out.v[i] = g(s) * X.v[i] + 2.0 * gprime(s) * u.v[i] * (std::conj(u.v[i]) * X.v[i]).real();
    }
    return out;
  }
};

// E(u) = 1/2 <Hu,u> + int G(|u|^2),  Q(u) = 1/2 ||u||^2.  The quadratic form
// uses the same discrete H as the evolution schemes so that conservation is
// measured against the quantity the integrators actually preserve.
// Flow invariants of i u_t = Hu + g(|u|^2) u: mass 1/2 ||u||^2 and energy
// 1/2 <Hu,u> + 1/2 integral G(|u|^2).  The 1/2 on the nonlinear term makes E
// the conserved quantity (pure power: sigma/(p+1) integral |u|^{p+1}, whose
// variational derivative is f(u); with the full integral of G the two pieces
// exchange at mismatched rates and E drifts along exact solutions).
inline std::pair<double, double> energy_mass(const ComplexField& u, const Potential& V,
                                             const Nonlinearity& nl,
                                             Stencil st = Stencil::order2) {
  const double mass = 0.5 * norm_l2(u) * norm_l2(u);
  double e = 0.5 * rpair(operator_lab::apply_hamiltonian(u, V, st), u);
  double gsum = 0;
  for (Eigen::Index i = 0; i < u.v.size(); ++i) gsum += nl.G(std::norm(u.v[i]));
  e += 0.5 * u.grid->h * gsum;
  return {e, mass};
}

struct BoundStatePoint {
  complexd z = 0;
  ComplexField Q;
  double E = 0;
  ComplexField D1Q, D2Q;  // derivatives along the real and imaginary z-directions
  double newton_residual = 0;
};

struct BranchOptions {
  double z_max = 0.2;
  double tol = 1e-11;
  int max_iter = 40;
  Stencil stencil = Stencil::order2;
};

namespace detail {

// One bordered linear solve  [A, -q; h phi^T, 0] [dq; dE] = [b; c]
// via two solves with A (tridiagonal on the default path, dense otherwise).
struct BorderedSolver {
  const Potential& V;
  Stencil st;
  double E;
  const VectorXd& w;  // diagonal nonlinear weight

  // returns x with A x = rhs, A = H + diag(w) - E
  Eigen::MatrixXd solve(Eigen::MatrixXd rhs) const {
    const auto& g = *V.grid;
    const int n = g.n;
    if (g.boundary == Boundary::dirichlet && st == Stencil::order2) {
      const double ih2 = 1.0 / (g.h * g.h);
      std::vector<double> dl(n - 1, -ih2), du(n - 1, -ih2), d(n);
      for (int i = 0; i < n; ++i) d[i] = 2.0 * ih2 + V.v[i] + w[i] - E;
      lapack_int info = LAPACKE_dgtsv(LAPACK_COL_MAJOR, n, static_cast<lapack_int>(rhs.cols()),
                                      dl.data(), d.data(), du.data(), rhs.data(), n);
      if (info != 0) throw NumericalError("tridiagonal solve failed, info " + std::to_string(info));
      return rhs;
    }
    Eigen::MatrixXd A = operator_lab::detail::assemble_dense(V, st);
    A.diagonal() += w;
    A.diagonal().array() -= E;
    return A.partialPivLu().solve(rhs);
  }
};

}  // namespace detail

// Solve the real gauge-reduced profile equation
//   H q + g(q^2) q = E q,   <q, phi> = r
// by a bordered Newton iteration warm-started from q = r phi, E = -lambda,
// with bisection continuation in r as a safety net.  The complex branch point
// is the exact phase rotation Q[z] = (z/|z|) q_{|z|}.
inline BoundStatePoint solve_branch(const SpectralData& sd, const Potential& V,
                                    const Nonlinearity& nl, complexd z,
                                    const BranchOptions& opts = {}) {
  const double r = std::abs(z);
  if (r > opts.z_max)
    throw BranchRadiusError("branch point |z| = " + std::to_string(r) + " outside radius " +
                            std::to_string(opts.z_max));
  const auto& g = *sd.grid;
  BoundStatePoint out;
  out.z = z;
  if (r == 0.0) {
    out.Q = make_field(sd.grid);
    out.E = -sd.lambda;
    out.D1Q = sd.phi;
    out.D2Q = ComplexField{sd.grid, complexd(0, 1) * sd.phi.v};
    return out;
  }

  VectorXd phi = sd.phi.v.real();
  auto newton = [&](double rr, VectorXd& q, double& E) -> double {
    double last = 1e300;
    for (int it = 0; it < opts.max_iter; ++it) {
      VectorXd gq(g.n), w(g.n);
      for (int i = 0; i < g.n; ++i) {
        const double s = q[i] * q[i];
        gq[i] = nl.g(s);
        w[i] = gq[i] + 2.0 * s * nl.gprime(s);
      }
      ComplexField qf{sd.grid, q.cast<complexd>()};
      VectorXd Hq = operator_lab::apply_hamiltonian(qf, V, opts.stencil).v.real();
      VectorXd F1 = Hq + gq.cwiseProduct(q) - E * q;
      const double F2 = g.h * phi.dot(q) - rr;
      const double res = std::sqrt(g.h) * F1.norm() + std::abs(F2);
      last = res;
      if (res <= opts.tol) return res;
      if (!std::isfinite(res)) break;
      Eigen::MatrixXd rhs(g.n, 2);
      rhs.col(0) = F1;
      rhs.col(1) = q;
      detail::BorderedSolver bs{V, opts.stencil, E, w};
      Eigen::MatrixXd s12 = bs.solve(std::move(rhs));
      const double denom = g.h * phi.dot(s12.col(1));
      if (denom == 0.0) break;
      const double dE = (g.h * phi.dot(s12.col(0)) - F2) / denom;
      q += -s12.col(0) + dE * s12.col(1);
      E += dE;
    }
    return -last;  // negative = did not converge; magnitude = last residual
  };

  VectorXd q = r * phi;
  double E = -sd.lambda;
  double res = newton(r, q, E);
  if (res < 0) {
    // continuation ladder from smaller radii
    q = r * phi;
    E = -sd.lambda;
    bool ok = true;
    for (double f : {0.25, 0.5, 0.75, 1.0}) {
      res = newton(f * r, q, E);
      if (res < 0) {
        ok = false;
        break;
      }
    }
    if (!ok) throw NewtonDivergenceError("bound-state Newton did not converge", -res);
  }
  out.newton_residual = res;
  out.E = E;

  const complexd phase = z / r;
  out.Q = ComplexField{sd.grid, phase * q.cast<complexd>()};

  // branch-direction derivatives: A y = E'(r) q with <y,phi> = 1
  {
    VectorXd w(g.n);
    for (int i = 0; i < g.n; ++i) {
      const double s = q[i] * q[i];
      w[i] = nl.g(s) + 2.0 * s * nl.gprime(s);
    }
    detail::BorderedSolver bs{V, opts.stencil, E, w};
    Eigen::MatrixXd rhs(g.n, 1);
    rhs.col(0) = q;
    Eigen::MatrixXd s2 = bs.solve(std::move(rhs));
    const double proj = g.h * phi.dot(s2.col(0));
    if (proj == 0.0) throw NumericalError("degenerate branch linearization");
    VectorXd dq = s2.col(0) / proj;  // = dq/dr; dE/dr = 1/proj
    // DQ[z](w) = e^{it}( dq/dr Re(e^{-it} w) + i (q/r) Im(e^{-it} w) ), w = 1, i
    const double ct = phase.real(), st = phase.imag();
    VectorXcd radial = dq.cast<complexd>();
    VectorXcd angular = complexd(0, 1) / r * q.cast<complexd>();
    out.D1Q = ComplexField{sd.grid, phase * (ct * radial - st * angular).eval()};
    out.D2Q = ComplexField{sd.grid, phase * (st * radial + ct * angular).eval()};
  }
  return out;
}

struct BranchRow {
  double r, E, residual, dist_h1a, decay_rate;
};

// Table of branch points: |z|, E, Newton residual, || Q - z phi ||_{H^1_{a0}},
// fitted tail decay rate of |Q|.
inline std::vector<BranchRow> branch_table(const SpectralData& sd, const Potential& V,
                                           const Nonlinearity& nl, const std::vector<double>& radii,
                                           double a0, const BranchOptions& opts = {}) {
  std::vector<BranchRow> rows;
  for (double r : radii) {
    auto bp = solve_branch(sd, V, nl, r, opts);
    ComplexField diff{sd.grid, bp.Q.v - r * sd.phi.v};
    std::vector<double> xs, ys;
    for (int i = 0; i < sd.grid->n; ++i) {
      const double ax = std::abs(sd.grid->x[i]);
      const double aq = std::abs(bp.Q.v[i]);
      if (ax >= 8.0 && ax <= 0.8 * sd.grid->L && aq > 1e-250) {
        xs.push_back(ax);
        ys.push_back(std::log(aq));
      }
    }
    const double rate = xs.size() >= 8 ? -linear_fit(xs, ys).slope : 0.0;
    rows.push_back({r, bp.E, bp.newton_residual, norm_h1_exp(diff, a0), rate});
  }
  return rows;
}

}  // namespace nlslab::ground_states
