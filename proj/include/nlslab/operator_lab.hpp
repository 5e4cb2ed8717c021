#pragma once

#include <complex>  // must precede lapacke.h: lapack_complex_* map onto std::complex

#include <lapacke.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "nlslab/grid.hpp"
#include "nlslab/potential.hpp"
#include "nlslab/spectral.hpp"
#include "nlslab/util.hpp"

namespace nlslab::operator_lab {

enum class Stencil { order2 = 2, order4 = 4 };

inline ComplexField apply_hamiltonian(const ComplexField& psi, const Potential& V,
                                      Stencil st = Stencil::order2) {
  if (!psi.grid->same_as(*V.grid)) throw ValidationError("apply_hamiltonian: field and potential grids differ");
  ComplexField out = dxx(psi, static_cast<int>(st));
  out.v = (-out.v.array() + V.v.array().cast<complexd>() * psi.v.array()).matrix();
  return out;
}

namespace detail {

// Symmetric band of H = -D2 + V, lower storage, col-major, ldab = kd+1.
// Dirichlet only; the periodic wrap needs the dense path.
struct Band {
  int kd;
  std::vector<double> ab;  // (kd+1) x n
};

inline Band assemble_band(const Potential& V, Stencil st) {
  const auto& g = *V.grid;
  const double ih2 = 1.0 / (g.h * g.h);
  Band b;
  b.kd = st == Stencil::order2 ? 1 : 2;
  b.ab.assign(static_cast<size_t>(b.kd + 1) * g.n, 0.0);
  auto at = [&](int i, int j) -> double& { return b.ab[static_cast<size_t>(j) * (b.kd + 1) + (i - j)]; };
  for (int j = 0; j < g.n; ++j) {
    if (st == Stencil::order2) {
      at(j, j) = 2.0 * ih2 + V.v[j];
      if (j + 1 < g.n) at(j + 1, j) = -ih2;
    } else {
      at(j, j) = 2.5 * ih2 + V.v[j];
      if (j + 1 < g.n) at(j + 1, j) = -16.0 / 12.0 * ih2;
      if (j + 2 < g.n) at(j + 2, j) = 1.0 / 12.0 * ih2;
    }
  }
  return b;
}

inline Eigen::MatrixXd assemble_dense(const Potential& V, Stencil st) {
  const auto& g = *V.grid;
  const int n = g.n;
  const double ih2 = 1.0 / (g.h * g.h);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  auto wrap = [&](int i) { return (i % n + n) % n; };
  for (int i = 0; i < n; ++i) {
    if (st == Stencil::order2) {
      H(i, i) += 2.0 * ih2 + V.v[i];
      for (int d : {-1, 1}) {
        const int j = g.boundary == Boundary::periodic ? wrap(i + d) : i + d;
        if (j >= 0 && j < n) H(i, j) += -ih2;
      }
    } else {
      H(i, i) += 2.5 * ih2 + V.v[i];
      const double c1 = -16.0 / 12.0 * ih2, c2 = 1.0 / 12.0 * ih2;
      for (int d : {-2, -1, 1, 2}) {
        const int j = g.boundary == Boundary::periodic ? wrap(i + d) : i + d;
        if (j >= 0 && j < n) H(i, j) += std::abs(d) == 1 ? c1 : c2;
      }
    }
  }
  return H;
}

inline std::vector<double> all_eigenvalues(const Potential& V, Stencil st) {
  const auto& g = *V.grid;
  std::vector<double> w(g.n);
  lapack_int info;
  if (g.boundary == Boundary::dirichlet) {
    Band b = assemble_band(V, st);
    info = LAPACKE_dsbevd(LAPACK_COL_MAJOR, 'N', 'L', g.n, b.kd, b.ab.data(), b.kd + 1, w.data(),
                          nullptr, g.n);
  } else {
    Eigen::MatrixXd H = assemble_dense(V, st);
    info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', g.n, H.data(), g.n, w.data());
    // (dsyevd overwrites H; values land in w ascending)
  }
  if (info != 0) throw NumericalError("eigenvalue solve failed, LAPACK info " + std::to_string(info));
  return w;
}

// Solve (A - sigma I) x = rhs once, A the dirichlet order-2 matrix.  With
// sigma below the lowest eigenvalue this is an M-matrix and the Thomas sweep
// below involves only sums of nonnegative terms for rhs > 0, so positivity of
// the solution is preserved exactly in floating point.
inline VectorXd shifted_tridiag_solve(const Potential& V, double sigma, const VectorXd& rhs) {
  const auto& g = *V.grid;
  const int n = g.n;
  const double ih2 = 1.0 / (g.h * g.h);
  VectorXd d(n), y(n);
  for (int i = 0; i < n; ++i) d[i] = 2.0 * ih2 + V.v[i] - sigma;
  const double e = -ih2;
  // forward sweep
  y[0] = rhs[0];
  for (int i = 1; i < n; ++i) {
    const double l = e / d[i - 1];
    d[i] -= l * e;
    y[i] = rhs[i] - l * y[i - 1];
  }
  VectorXd x(n);
  x[n - 1] = y[n - 1] / d[n - 1];
  for (int i = n - 2; i >= 0; --i) x[i] = (y[i] - e * x[i + 1]) / d[i];
  return x;
}

inline VectorXd shifted_solve_general(const Potential& V, Stencil st, double sigma, const VectorXd& rhs) {
  if (V.grid->boundary == Boundary::dirichlet && st == Stencil::order2)
    return shifted_tridiag_solve(V, sigma, rhs);
  Eigen::MatrixXd A = assemble_dense(V, st);
  A.diagonal().array() -= sigma;
  return A.partialPivLu().solve(rhs);
}

}  // namespace detail

struct SpectralData {
  GridPtr grid;
  Stencil stencil = Stencil::order2;
  double lambda = 0;  // working-grid eigenvalue: H phi = -lambda phi, lambda > 0
  ComplexField phi;   // real, positive, unit L^2 quadrature norm
  int n_negative = 0;
  bool multiple_eigenvalues = false;
  double lambda_coarse = 0;        // = lambda (working resolution)
  double lambda_fine = 0;          // refined mesh (h/2)
  double lambda_extrapolated = 0;  // Richardson, order = stencil order
  double residual = 0;             // || H phi + lambda phi ||_{L^2}
};

// Lowest eigenpair of H plus the negative-eigenvalue count.  The eigenvalue
// is reported at the working resolution and on an h/2 mesh, with Richardson
// extrapolation at the stencil's order.  The eigenvector is polished by
// shifted inverse iteration, which on the default (dirichlet, order-2) path
// preserves strict positivity exactly.
inline SpectralData discrete_eigenpair(const Potential& V, Stencil st = Stencil::order2) {
  const auto& g = *V.grid;
  auto w = detail::all_eigenvalues(V, st);
  int nneg = 0;
  while (nneg < g.n && w[nneg] < 0.0) ++nneg;
  if (nneg == 0) throw NoBoundStateError("no negative eigenvalue: potential has no bound state");

  SpectralData sd;
  sd.grid = V.grid;
  sd.stencil = st;
  sd.n_negative = nneg;
  sd.multiple_eigenvalues = nneg > 1;
  sd.lambda = sd.lambda_coarse = -w[0];

  const int n_fine = g.boundary == Boundary::dirichlet ? 2 * g.n - 1 : 2 * g.n;
  auto fine = V.on_grid(build_grid(g.L, n_fine, g.boundary));
  auto wf = detail::all_eigenvalues(fine, st);
  if (wf[0] >= 0.0) throw NoBoundStateError("refined mesh lost the bound state");
  sd.lambda_fine = -wf[0];
  const double q = std::pow(2.0, static_cast<double>(st));
  sd.lambda_extrapolated = sd.lambda_fine + (sd.lambda_fine - sd.lambda_coarse) / (q - 1.0);

  // inverse iteration from a positive seed profile
  const double sigma = w[0] - 1e-8 * std::max(1.0, std::abs(w[0]));
  const double decay = std::sqrt(std::max(sd.lambda, 1e-8));
  VectorXd x(g.n);
  for (int i = 0; i < g.n; ++i) x[i] = 1.0 / std::cosh(decay * g.x[i]);
  for (int pass = 0; pass < 3; ++pass) {
    x = detail::shifted_solve_general(V, st, sigma, x);
    x /= x.norm();
  }
  if (x.sum() < 0) x = -x;
  sd.phi = ComplexField{V.grid, x.cast<complexd>()};
  sd.phi.v /= norm_l2(sd.phi);
  ComplexField r = apply_hamiltonian(sd.phi, V, st);
  r.v += sd.lambda * sd.phi.v;
  sd.residual = norm_l2(r);
  return sd;
}

// P u = <u,phi>phi + <u,i phi>i phi; with phi real and unit this collapses to
// the complex pairing (u,phi) phi.
inline ComplexField project_p(const ComplexField& u, const SpectralData& sd) {
  require_same_grid(u, sd.phi);
  ComplexField out{u.grid, cpair(u, sd.phi) * sd.phi.v};
  return out;
}

inline ComplexField project_pc(const ComplexField& u, const SpectralData& sd) {
  ComplexField p = project_p(u, sd);
  return {u.grid, u.v - p.v};
}

struct EigenDecomposition {
  GridPtr grid;
  Stencil stencil = Stencil::order2;
  VectorXd evals;        // ascending
  Eigen::MatrixXd vecs;  // orthonormal columns (plain ell^2)
  int n_negative = 0;

  // coefficients in the eigenbasis (4 real gemv round trip)
  VectorXcd to_modes(const VectorXcd& u) const {
    VectorXd re = vecs.transpose() * u.real();
    VectorXd im = vecs.transpose() * u.imag();
    return (re.array().cast<complexd>() + complexd(0, 1) * im.array().cast<complexd>()).matrix();
  }
  VectorXcd from_modes(const VectorXcd& c) const {
    VectorXd re = vecs * c.real();
    VectorXd im = vecs * c.imag();
    return (re.array().cast<complexd>() + complexd(0, 1) * im.array().cast<complexd>()).matrix();
  }
  VectorXcd propagate(const VectorXcd& u, double t) const {
    VectorXcd c = to_modes(u);
    for (Eigen::Index j = 0; j < c.size(); ++j) c[j] *= std::polar(1.0, -t * evals[j]);
    return from_modes(c);
  }
};

namespace detail {

inline EigenDecomposition compute_full_decomposition(const Potential& V, Stencil st) {
  const auto& g = *V.grid;
  EigenDecomposition ed;
  ed.grid = V.grid;
  ed.stencil = st;
  ed.evals.resize(g.n);
  lapack_int info;
  if (g.boundary == Boundary::dirichlet) {
    Band b = assemble_band(V, st);
    ed.vecs.resize(g.n, g.n);
    info = LAPACKE_dsbevd(LAPACK_COL_MAJOR, 'V', 'L', g.n, b.kd, b.ab.data(), b.kd + 1,
                          ed.evals.data(), ed.vecs.data(), g.n);
  } else {
    ed.vecs = assemble_dense(V, st);
    info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', g.n, ed.vecs.data(), g.n, ed.evals.data());
  }
  if (info != 0) throw NumericalError("eigendecomposition failed, LAPACK info " + std::to_string(info));
  while (ed.n_negative < g.n && ed.evals[ed.n_negative] < 0.0) ++ed.n_negative;
  return ed;
}

struct CacheKey {
  double L;
  int n;
  int boundary;
  int stencil;
  std::uint64_t pot_hash;
  bool operator<(const CacheKey& o) const {
    return std::tie(L, n, boundary, stencil, pot_hash) <
           std::tie(o.L, o.n, o.boundary, o.stencil, o.pot_hash);
  }
};

inline std::uint64_t potential_hash(const Potential& V) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(V.v.data()),
                                  static_cast<size_t>(V.v.size()) * sizeof(double)));
}

}  // namespace detail

// Read-mostly cache of dense decompositions keyed by (grid, stencil,
// potential samples).  Concurrent readers are fine; a duplicated build under
// contention is idempotent.
inline std::shared_ptr<const EigenDecomposition> full_decomposition(const Potential& V,
                                                                    Stencil st = Stencil::order2) {
  static std::mutex mu;
  static std::map<detail::CacheKey, std::shared_ptr<const EigenDecomposition>> cache;
  detail::CacheKey key{V.grid->L, V.grid->n, static_cast<int>(V.grid->boundary),
                       static_cast<int>(st), detail::potential_hash(V)};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto ed = std::make_shared<EigenDecomposition>(detail::compute_full_decomposition(V, st));
  std::lock_guard<std::mutex> lock(mu);
  auto [it, inserted] = cache.emplace(key, std::move(ed));
  return it->second;
}

enum class PropagatorMethod { eigenbasis, spectral };

// e^{-itH} psi.  eigenbasis: exact phases in the discrete eigenbasis.
// spectral: exact free-kinetic phases; a nonzero potential is handled by
// second-order kinetic/potential splitting with substep dt_sub.
inline ComplexField linear_propagator(const ComplexField& psi, double t, const Potential& V,
                                      PropagatorMethod method = PropagatorMethod::eigenbasis,
                                      Stencil st = Stencil::order2, double dt_sub = 1e-3) {
  if (!std::isfinite(t)) throw ValidationError("linear_propagator: non-finite time");
  if (!psi.grid->same_as(*V.grid)) throw ValidationError("linear_propagator: grid mismatch");
  if (t == 0.0) return psi;
  ComplexField out = psi;
  if (method == PropagatorMethod::eigenbasis) {
    auto ed = full_decomposition(V, st);
    out.v = ed->propagate(psi.v, t);
  } else {
    KineticPhase kin(psi.grid);
    if (V.kind == PotentialKind::zero) {
      kin.apply(out.v, t);
    } else {
      const double sgn = t < 0 ? -1.0 : 1.0;
      double remaining = std::abs(t);
      while (remaining > 1e-15) {
        const double dt = sgn * std::min(dt_sub, remaining);
        out.v.array() *= (complexd(0, -0.5) * dt * V.v.array().cast<complexd>()).exp();
        kin.apply(out.v, dt);
        out.v.array() *= (complexd(0, -0.5) * dt * V.v.array().cast<complexd>()).exp();
        remaining -= std::abs(dt);
      }
    }
  }
  require_finite(out, "linear_propagator");
  return out;
}

}  // namespace nlslab::operator_lab
