#pragma once
// Modulation decomposition u = Q[z] + eta with eta in the continuous spectral
// subspace, the residual zdot + iEz of the modulation equations, and the
// discrete estimate |zdot + iEz| <~ delta^{p-1} ||eta||_(sigma~).

#include <algorithm>
#include <cmath>
#include <vector>

#include "nlslab/ground_states.hpp"
#include "nlslab/util.hpp"

namespace nlslab::modulation {

using ground_states::BoundStatePoint;
using ground_states::BranchOptions;
using ground_states::Nonlinearity;
using operator_lab::SpectralData;

struct ModulationState {
  double t = 0;
  complexd z;
  ComplexField eta;
  double residual_norm = 0;     // final size of the complex orthogonality constraint
  double reconstruction_c = 0;  // (|z| + ||eta||_H1) / ||u||_H1
};

struct DecomposeOptions {
  double small_data_radius = 0.2;  // H^1 ball on which the splitting is solved
  double tol = 5e-14;
  int max_iter = 40;
  BranchOptions branch{};
};

// Splits u into the bound-state part Q[z] and radiation eta with (eta, phi) = 0.
// Newton iteration on the complex constraint c(z) = (u - Q[z], phi), seeded by
// the linear projection z0 = (u, phi); each step differentiates Q through the
// branch solve.
inline ModulationState decompose(const ComplexField& u, const SpectralData& sd,
                                 const Potential& V, const Nonlinearity& nl,
                                 const DecomposeOptions& opts = {}) {
  if (!u.grid->same_as(*sd.grid)) throw ValidationError("field and spectral data grids differ");
  require_finite(u, "decompose input");
  const double nu = norm_h1(u);
  if (nu >= opts.small_data_radius)
    throw OutsideSmallDataRadiusError("H^1 norm " + std::to_string(nu) +
                                      " outside the small-data radius " +
                                      std::to_string(opts.small_data_radius));

  ModulationState out;
  out.eta = ComplexField{u.grid, VectorXcd::Zero(u.grid->n)};
  if (nu == 0) return out;

  BranchOptions bopt = opts.branch;
  bopt.z_max = std::max(bopt.z_max, 2.5 * opts.small_data_radius);

  complexd z = cpair(u, sd.phi);
  BoundStatePoint bp;
  complexd c;
  const double scale = std::max(1.0, norm_l2(u));
  int it = 0;
  for (;; ++it) {
    if (it >= opts.max_iter)
      throw NewtonDivergenceError("modulation constraint did not converge", std::abs(c));
    bp = ground_states::solve_branch(sd, V, nl, z, bopt);
    ComplexField diff{u.grid, u.v - bp.Q.v};
    c = cpair(diff, sd.phi);
    if (std::abs(c) <= opts.tol * scale) break;
    const complexd j1 = cpair(bp.D1Q, sd.phi), j2 = cpair(bp.D2Q, sd.phi);
    const double det = j1.real() * j2.imag() - j2.real() * j1.imag();
    if (std::abs(det) < 1e-12)
      throw NumericalError("modulation constraint Jacobian is singular");
    // solve [Re j1 Re j2; Im j1 Im j2] dz = [Re c; Im c]
    const double dz1 = (c.real() * j2.imag() - j2.real() * c.imag()) / det;
    const double dz2 = (j1.real() * c.imag() - c.real() * j1.imag()) / det;
    z += complexd(dz1, dz2);
  }

  out.z = z;
  out.eta = ComplexField{u.grid, u.v - bp.Q.v};
  out.residual_norm = std::abs(c);
  out.reconstruction_c = (std::abs(z) + norm_h1(out.eta)) / nu;
  return out;
}

struct ResidualSeries {
  std::vector<double> t;             // interior snapshot times
  std::vector<complexd> fd;          // centered difference of z plus iE(|z|^2)z
  std::vector<complexd> projection;  // pairing-identity estimator (Gram solve)
  double agreement_l2 = 0;           // relative L^2 gap between the two estimators
  double gram_condition_max = 1;     // conditioning of the 2x2 pairing matrix
};

namespace detail {

inline void require_uniform_times(const std::vector<ModulationState>& traj) {
  if (traj.size() < 5) throw ValidationError("residual series needs at least 5 samples");
  const double dt = traj[1].t - traj[0].t;
  if (!(dt > 0)) throw ValidationError("snapshot times must increase");
  for (size_t i = 1; i < traj.size(); ++i)
    if (std::abs(traj[i].t - traj[i - 1].t - dt) > 1e-9 * std::max(1.0, dt))
      throw ValidationError("snapshot times must be uniformly spaced");
}

}  // namespace detail

// Two estimators of r(t) = zdot + iE(|z|^2)z along a stored trajectory:
// (a) a centered difference of z(t); (b) the projection identity obtained by
// pairing the radiation equation with phi and i phi, which yields
//   M r = b,  M_{k j} = <i D_jQ[z], i^{k-1} phi>,  b_k = <f(Q+eta) - f(Q), i^{k-1} phi>.
// M tends to a rotation as z -> 0, so its conditioning is reported.
inline ResidualSeries residual_series(const std::vector<ModulationState>& traj,
                                      const SpectralData& sd, const Potential& V,
                                      const Nonlinearity& nl) {
  detail::require_uniform_times(traj);
  const double dt = traj[1].t - traj[0].t;
  BranchOptions bopt;
  bopt.z_max = 1e300;  // radius policing belongs to decompose, not post-processing

  ResidualSeries out;
  double gap2 = 0;
  for (size_t i = 1; i + 1 < traj.size(); ++i) {
    const auto& s = traj[i];
    auto bp = ground_states::solve_branch(sd, V, nl, s.z, bopt);

    const complexd fd =
        (traj[i + 1].z - traj[i - 1].z) / (2.0 * dt) + complexd(0, 1) * bp.E * s.z;

    ComplexField sum{s.eta.grid, bp.Q.v + s.eta.v};
    ComplexField df{s.eta.grid, nl.f(sum).v - nl.f(bp.Q).v};
    const complexd b = cpair(df, sd.phi);
    const complexd a1 = cpair(bp.D1Q, sd.phi), a2 = cpair(bp.D2Q, sd.phi);
    // rows are the phi and i phi pairings of i D_jQ
    const double m11 = -a1.imag(), m12 = -a2.imag();
    const double m21 = a1.real(), m22 = a2.real();
    const double det = m11 * m22 - m12 * m21;
    if (std::abs(det) < 1e-12) throw NumericalError("modulation pairing matrix is singular");
    const double r1 = (b.real() * m22 - m12 * b.imag()) / det;
    const double r2 = (m11 * b.imag() - b.real() * m21) / det;
    const complexd proj(r1, r2);

    const double tr = m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22;
    const double disc = std::sqrt(std::max(tr * tr - 4.0 * det * det, 0.0));
    const double smax = std::sqrt((tr + disc) / 2.0), smin = std::sqrt((tr - disc) / 2.0);
    out.gram_condition_max = std::max(out.gram_condition_max, smax / std::max(smin, 1e-300));

    out.t.push_back(s.t);
    out.fd.push_back(fd);
    out.projection.push_back(proj);
    gap2 += std::norm(fd - proj);
  }
  // relative to the larger estimator, so both-zero series report 0
  double peak2 = 0;
  for (size_t k = 0; k < out.fd.size(); ++k)
    peak2 += std::max(std::norm(out.fd[k]), std::norm(out.projection[k]));
  out.agreement_l2 = peak2 > 0 ? std::sqrt(gap2 / peak2) : 0.0;
  return out;
}

struct EstimateCheck {
  std::vector<double> t;
  std::vector<double> ratio;  // |zdot + iEz| / (delta^{p-1} ||eta||_(sigma~))
  double max_ratio = 0, median = 0, q90 = 0;
  int dropped = 0;  // samples whose denominator fell under the 0/0 guard
  double delta = 0;
  double kappa = 0.3;
};

// Pointwise check of the discrete modulation estimate: the measured residual
// (centered-difference estimator) against delta^{p-1} ||eta||_(sigma~).
// Denominators below 1e-14 are dropped and counted (stationary orbits hit the
// guard identically).
inline EstimateCheck check_discrete_estimate(const std::vector<ModulationState>& traj,
                                             const SpectralData& sd, const Potential& V,
                                             const Nonlinearity& nl, double delta,
                                             double kappa = 0.3) {
  if (!(delta > 0)) throw ValidationError("estimate check: delta must be positive");
  auto series = residual_series(traj, sd, V, nl);
  EstimateCheck out;
  out.delta = delta;
  out.kappa = kappa;
  const double norml = std::pow(delta, nl.p - 1.0);
  for (size_t k = 0; k < series.t.size(); ++k) {
    const double den = norml * norm_l2_sech(traj[k + 1].eta, kappa);
    if (den < 1e-14) {
      ++out.dropped;
      continue;
    }
    out.t.push_back(series.t[k]);
    out.ratio.push_back(std::abs(series.fd[k]) / den);
  }
  if (!out.ratio.empty()) {
    out.max_ratio = *std::max_element(out.ratio.begin(), out.ratio.end());
    out.median = quantile(out.ratio, 0.5);
    out.q90 = quantile(out.ratio, 0.9);
  }
  return out;
}

}  // namespace nlslab::modulation
