#pragma once

#include <complex>  // must precede lapacke.h: lapack_complex_* map onto std::complex

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlslab/ground_states.hpp"
#include "nlslab/modulation.hpp"
#include "nlslab/spectral.hpp"
#include "nlslab/version.hpp"

namespace nlslab::evolution {

using ground_states::Nonlinearity;
using operator_lab::SpectralData;
using operator_lab::Stencil;

enum class Scheme { strang_split, crank_nicolson };

// Linear half of the Strang step: full H propagated exactly in its discrete
// eigenbasis, or kinetic-only Fourier phases with V folded into the pointwise
// nonlinear substep.  The eigenbasis costs O(n^2) per step but treats the
// trapped mode without dispersion error; the spectral option is O(n log n)
// and is the one to use for long runs on fine meshes.
enum class LinearSubstep { eigenbasis, spectral };

struct SpongeConfig {
  bool enabled = false;
  double start_fraction = 0.75;  // damping ramp starts at this fraction of L
  double strength = 1.0;         // peak damping rate, reached at the wall
};

struct EvolutionConfig {
  double dt = 1e-3;
  double t_final = 10.0;
  int snapshot_stride = 100;  // steps between recorded snapshots
  Scheme scheme = Scheme::strang_split;
  LinearSubstep linear = LinearSubstep::eigenbasis;
  Stencil stencil = Stencil::order2;
  SpongeConfig sponge;
  bool modulation = true;         // attach a bound-state/radiation split per snapshot
  double small_data_radius = 0.2; // H^1 ball on which the split is trusted
  int cn_max_iter = 50;
  double cn_tol = 1e-12;          // relative fixed-point stop for crank_nicolson

  void validate() const {
    if (!std::isfinite(dt) || !(dt > 0)) throw ValidationError("evolution: dt must be positive");
    if (!std::isfinite(t_final) || !(t_final >= dt))
      throw ValidationError("evolution: t_final must be at least dt");
    if (snapshot_stride < 1) throw ValidationError("evolution: snapshot_stride must be >= 1");
    if (sponge.enabled) {
      if (!(sponge.start_fraction >= 0.5) || !(sponge.start_fraction < 1.0))
        throw ValidationError("evolution: sponge start_fraction must lie in [0.5, 1)");
      if (!(sponge.strength > 0)) throw ValidationError("evolution: sponge strength must be positive");
    }
    if (!(small_data_radius > 0)) throw ValidationError("evolution: small_data_radius must be positive");
    if (scheme == Scheme::crank_nicolson && stencil != Stencil::order2)
      throw ValidationError("evolution: crank_nicolson is built on the order-2 stencil");
    if (cn_max_iter < 1 || !(cn_tol > 0))
      throw ValidationError("evolution: crank_nicolson iteration knobs invalid");
  }
};

// One full step of i u_t = H u + g(|u|^2) u with the configured scheme.
//
// strang_split: exp half-step of the linear part, pointwise phase rotation
// e^{-i dt g(|u|^2)} (norm-preserving by construction), second half-step.
// crank_nicolson: implicit midpoint with the discrete-gradient nonlinearity
//   i (u' - u)/dt = (H + Gamma) (u' + u)/2,
//   Gamma_j = (G(|u'_j|^2) - G(|u_j|^2)) / (|u'_j|^2 - |u_j|^2),
// which conserves the finite-difference mass and energy exactly at any dt.
// The absorbing sponge, when enabled, multiplies by e^{-dt W(x)} after the
// conservative step; the mass it removes is tracked per step.
class Stepper {
 public:
  Stepper(Potential V, Nonlinearity nl, EvolutionConfig cfg)
      : V_(std::move(V)), nl_(nl), cfg_(cfg) {
    cfg_.validate();
    const auto& g = *V_.grid;
    if (cfg_.scheme == Scheme::strang_split) {
      if (cfg_.linear == LinearSubstep::eigenbasis) {
        ed_ = operator_lab::full_decomposition(V_, cfg_.stencil);
        half_.resize(g.n);
        for (int j = 0; j < g.n; ++j) half_[j] = std::polar(1.0, -0.5 * cfg_.dt * ed_->evals[j]);
      } else {
        kin_ = std::make_unique<KineticPhase>(V_.grid);
      }
    }
    if (cfg_.sponge.enabled) {
      const double x0 = cfg_.sponge.start_fraction * g.L;
      decay_.resize(g.n);
      for (int i = 0; i < g.n; ++i)
        decay_[i] = std::exp(-cfg_.dt * sponge_rate(std::abs(g.x[i]), x0, g.L, cfg_.sponge.strength));
    }
  }

  const EvolutionConfig& config() const { return cfg_; }
  const Potential& potential() const { return V_; }
  const Nonlinearity& nonlinearity() const { return nl_; }

  // Mass removed by the sponge during the most recent step (exact by
  // construction: difference of the quadrature mass across the damping).
  double last_absorbed() const { return last_absorbed_; }

  // W(x): zero up to x0, then a C^2 smoothstep ramp to `strength` at the wall.
  static double sponge_rate(double ax, double x0, double L, double strength) {
    if (ax <= x0) return 0.0;
    const double s = std::min(1.0, (ax - x0) / (L - x0));
    return strength * s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
  }

  ComplexField step(const ComplexField& u) const {
    if (!u.grid->same_as(*V_.grid)) throw ValidationError("evolution step: grid mismatch");
    ComplexField out = u;
    if (cfg_.scheme == Scheme::strang_split)
      strang(out.v);
    else
      crank_nicolson(out.v);
    last_absorbed_ = 0;
    if (cfg_.sponge.enabled) {
      double removed = 0;
      for (Eigen::Index i = 0; i < out.v.size(); ++i) {
        const double before = std::norm(out.v[i]);
        out.v[i] *= decay_[i];
        removed += before - std::norm(out.v[i]);
      }
      last_absorbed_ = 0.5 * u.grid->h * removed;
    }
    return out;
  }

 private:
  void strang(VectorXcd& v) const {
    half_linear(v);
    const double dt = cfg_.dt;
    if (cfg_.linear == LinearSubstep::eigenbasis) {
      for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] *= std::polar(1.0, -dt * nl_.g(std::norm(v[i])));
    } else {
      // V rides along with the nonlinearity in the pointwise phase.
      for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] *= std::polar(1.0, -dt * (V_.v[i] + nl_.g(std::norm(v[i]))));
    }
    half_linear(v);
  }

  void half_linear(VectorXcd& v) const {
    if (cfg_.linear == LinearSubstep::eigenbasis) {
      VectorXcd c = ed_->to_modes(v);
      c.array() *= half_.array();
      v = ed_->from_modes(c);
    } else {
      kin_->apply(v, 0.5 * cfg_.dt);
    }
  }

  // Secant slope of G between the old and new local intensities; falls back
  // to g at the midpoint when the two are too close to difference stably.
  double discrete_gradient(double a, double b) const {
    const double d = a - b;
    if (std::abs(d) <= 1e-12 * (a + b)) return nl_.g(0.5 * (a + b));
    return (nl_.G(a) - nl_.G(b)) / d;
  }

  void crank_nicolson(VectorXcd& v) const {
    const auto& g = *V_.grid;
    const int n = g.n;
    const complexd idt2(0, 0.5 * cfg_.dt);
    const complexd off = idt2 * (-1.0 / (g.h * g.h));
    const bool periodic = g.boundary == Boundary::periodic;

    const VectorXcd u = v;  // state at step start
    VectorXcd up = v;       // fixed-point iterate for the new state
    VectorXcd diag(n), rhs(n), next(n);
    const double uscale = std::max(u.cwiseAbs().maxCoeff(), 1e-300);
    double prev_gap = std::numeric_limits<double>::infinity();

    for (int it = 0;; ++it) {
      if (it == cfg_.cn_max_iter)
        throw NumericalError("crank-nicolson fixed point failed to converge");
      for (int i = 0; i < n; ++i) {
        const double gam = discrete_gradient(std::norm(up[i]), std::norm(u[i]));
        diag[i] = 1.0 + idt2 * (2.0 / (g.h * g.h) + V_.v[i] + gam);
      }
      // Solve A u' = (2I - A) u with A = I + i dt/2 (H + Gamma).
      for (int i = 0; i < n; ++i) {
        complexd au = diag[i] * u[i];
        if (i > 0) au += off * u[i - 1];
        if (i + 1 < n) au += off * u[i + 1];
        if (periodic && i == 0) au += off * u[n - 1];
        if (periodic && i == n - 1) au += off * u[0];
        rhs[i] = 2.0 * u[i] - au;
      }
      next = rhs;
      if (periodic)
        solve_cyclic(diag, off, next);
      else
        solve_tridiag(diag, off, next);
      if (!next.allFinite()) throw NumericalError("crank-nicolson produced non-finite iterate");
      const double gap = (next - up).cwiseAbs().maxCoeff();
      up.swap(next);
      if (gap <= cfg_.cn_tol * uscale) break;
      // The linear-solve roundoff floor sits near n*eps relative; once the
      // gap stops shrinking there, the iterate is as converged as it gets.
      // Stagnation while still far from the tolerance is genuine failure.
      if (it >= 2 && gap >= 0.5 * prev_gap) {
        if (gap <= 1e4 * cfg_.cn_tol * uscale) break;
        throw NumericalError("crank-nicolson fixed point stagnated");
      }
      prev_gap = gap;
    }
    v = up;
  }

  static void solve_tridiag(const VectorXcd& diag, complexd off, VectorXcd& b) {
    const auto n = static_cast<lapack_int>(diag.size());
    VectorXcd dl = VectorXcd::Constant(n - 1, off);
    VectorXcd du = dl;
    VectorXcd d = diag;
    const lapack_int info =
        LAPACKE_zgtsv(LAPACK_COL_MAJOR, n, 1, dl.data(), d.data(), du.data(), b.data(), n);
    if (info != 0) throw NumericalError("tridiagonal solve failed, LAPACK info " + std::to_string(info));
  }

  // Cyclic tridiagonal via a rank-one correction: fold the two corner
  // entries into A = T' + p q^T and apply Sherman-Morrison with a single
  // two-right-hand-side factorization.
  static void solve_cyclic(const VectorXcd& diag, complexd off, VectorXcd& b) {
    const auto n = static_cast<lapack_int>(diag.size());
    const complexd gamma = -diag[0];
    VectorXcd d = diag;
    d[0] -= gamma;
    d[n - 1] -= off * off / gamma;
    Eigen::MatrixXcd rv(n, 2);
    rv.col(0) = b;
    rv.col(1).setZero();
    rv(0, 1) = gamma;
    rv(n - 1, 1) = off;
    VectorXcd dl = VectorXcd::Constant(n - 1, off);
    VectorXcd du = dl;
    const lapack_int info =
        LAPACKE_zgtsv(LAPACK_COL_MAJOR, n, 2, dl.data(), d.data(), du.data(), rv.data(), n);
    if (info != 0) throw NumericalError("cyclic solve failed, LAPACK info " + std::to_string(info));
    const complexd qy = rv(0, 0) + (off / gamma) * rv(n - 1, 0);
    const complexd qw = rv(0, 1) + (off / gamma) * rv(n - 1, 1);
    if (std::abs(1.0 + qw) < 1e-300) throw NumericalError("cyclic solve: singular correction");
    b = rv.col(0) - (qy / (1.0 + qw)) * rv.col(1);
  }

  Potential V_;
  Nonlinearity nl_;
  EvolutionConfig cfg_;
  std::shared_ptr<const operator_lab::EigenDecomposition> ed_;
  VectorXcd half_;  // e^{-i dt/2 lambda_j} for the eigenbasis linear half
  std::unique_ptr<KineticPhase> kin_;
  VectorXd decay_;  // e^{-dt W(x_i)} when the sponge is on
  mutable double last_absorbed_ = 0;
};

struct ConservedRecord {
  double t = 0;
  double mass = 0;    // 1/2 ||u||_{L^2}^2
  double energy = 0;  // 1/2 <Hu,u> + integral of G(|u|^2)
};

struct Snapshot {
  double t = 0;
  ComplexField u;
  std::optional<modulation::ModulationState> mod;
};

struct Trajectory {
  GridPtr grid;
  Potential V;
  Nonlinearity nl;
  EvolutionConfig config;
  std::string code_version = kVersion;

  std::vector<Snapshot> snaps;
  std::vector<ConservedRecord> conserved;

  // First snapshot time at which leading-edge mass shows up at the sponge
  // (or, sponge off, the outer 10% of the box); -1 if the run never gets
  // there.  Statistics taken past this time see boundary artifacts.
  double wavefront_time = -1;

  bool aborted = false;  // non-finite state or solver failure; snaps end at the last good state
  double abort_time = -1;
  std::string abort_reason;

  bool decomposition_failed = false;  // modulation split failed mid-run; run truncated there
  double decomposition_failed_time = -1;

  // Sponge audit (all zero when the sponge is off).
  double sponge_absorbed = 0;       // total mass removed by the damper
  double sponge_flux_integral = 0;  // time integral of the current into |x| >= x0
  double sponge_zone_mass_delta = 0;

  // |(absorbed + zone-mass change) - flux integral| relative to their size:
  // the discrete continuity check for the absorbing layer.
  double sponge_balance_error() const {
    const double lhs = sponge_absorbed + sponge_zone_mass_delta;
    const double scale = std::max({std::abs(lhs), std::abs(sponge_flux_integral), 1e-300});
    return std::abs(lhs - sponge_flux_integral) / scale;
  }
};

namespace detail {

// Probability current j = Im(conj(u) u_x) evaluated at one node.
inline double current_at(const ComplexField& u, int i) {
  const auto& g = *u.grid;
  const int n = g.n;
  complexd dxu;
  if (g.boundary == Boundary::periodic)
    dxu = (u.v[(i + 1) % n] - u.v[(i - 1 + n) % n]) / (2.0 * g.h);
  else
    dxu = ((i + 1 < n ? u.v[i + 1] : complexd(0)) - (i > 0 ? u.v[i - 1] : complexd(0))) / (2.0 * g.h);
  return std::imag(std::conj(u.v[i]) * dxu);
}

}  // namespace detail

inline Trajectory run(const ComplexField& u0, const Potential& V, const Nonlinearity& nl,
                      const EvolutionConfig& cfg) {
  cfg.validate();
  require_finite(u0, "evolution initial data");
  if (!u0.grid->same_as(*V.grid)) throw ValidationError("evolution run: grid mismatch");
  const auto& g = *V.grid;

  SpectralData sd;
  modulation::DecomposeOptions dopt;
  dopt.small_data_radius = cfg.small_data_radius;
  if (cfg.modulation) {
    sd = operator_lab::discrete_eigenpair(V, cfg.stencil);
    (void)modulation::decompose(u0, sd, V, nl, dopt);  // t = 0 split must exist
  }

  Stepper st(V, nl, cfg);
  Trajectory out;
  out.grid = V.grid;
  out.V = V;
  out.nl = nl;
  out.config = cfg;

  // Observation boundary for wavefront detection and the sponge audit.
  const double x0 = (cfg.sponge.enabled ? cfg.sponge.start_fraction : 0.9) * g.L;
  std::vector<int> zone;
  int probe_l = -1, probe_r = -1;  // outermost nodes of the interior |x| < x0
  for (int i = 0; i < g.n; ++i) {
    if (std::abs(g.x[i]) >= x0) {
      zone.push_back(i);
    } else {
      if (probe_l < 0) probe_l = i;
      probe_r = i;
    }
  }
  if (probe_l < 0) throw ValidationError("evolution run: observation boundary leaves no interior");
  const auto zone_mass = [&](const ComplexField& u) {
    double acc = 0;
    for (int i : zone) acc += std::norm(u.v[i]);
    return 0.5 * g.h * acc;
  };
  const double mass0 = 0.5 * norm_l2(u0) * norm_l2(u0);
  const double zone_mass0 = zone_mass(u0);

  long long last_snap_step = -1;
  const auto take_snapshot = [&](long long k, const ComplexField& u) {
    const double t = k * cfg.dt;
    Snapshot s;
    s.t = t;
    s.u = u;
    const auto [energy, mass] = ground_states::energy_mass(u, V, nl, cfg.stencil);
    out.conserved.push_back({t, mass, energy});
    if (cfg.modulation && !out.decomposition_failed) {
      try {
        auto ms = modulation::decompose(u, sd, V, nl, dopt);
        ms.t = t;
        s.mod = std::move(ms);
      } catch (const OutsideSmallDataRadiusError&) {
        out.decomposition_failed = true;
        out.decomposition_failed_time = t;
      } catch (const NewtonDivergenceError&) {
        out.decomposition_failed = true;
        out.decomposition_failed_time = t;
      }
    }
    if (out.wavefront_time < 0) {
      const double zm = zone_mass(u);
      if (zm > std::max(1e-8 * mass0, 2.0 * zone_mass0) + 1e-300) out.wavefront_time = t;
    }
    out.snaps.push_back(std::move(s));
    last_snap_step = k;
  };

  ComplexField u = u0;
  take_snapshot(0, u);
  const auto boundary_flux = [&](const ComplexField& w) {
    return detail::current_at(w, probe_r) - detail::current_at(w, probe_l);
  };
  double flux_prev = cfg.sponge.enabled ? boundary_flux(u) : 0;

  const long long steps = std::max<long long>(1, std::llround(cfg.t_final / cfg.dt));
  for (long long k = 1; k <= steps && !out.aborted && !out.decomposition_failed; ++k) {
    ComplexField next;
    std::string bad;
    try {
      next = st.step(u);
      if (!next.v.allFinite()) bad = "non-finite state";
    } catch (const NumericalError& e) {
      bad = e.what();
    }
    if (!bad.empty()) {
      out.aborted = true;
      out.abort_time = k * cfg.dt;
      out.abort_reason = bad;
      if (last_snap_step != k - 1) take_snapshot(k - 1, u);  // preserve the last good state
      break;
    }
    u = std::move(next);
    if (cfg.sponge.enabled) {
      out.sponge_absorbed += st.last_absorbed();
      const double f = boundary_flux(u);
      out.sponge_flux_integral += 0.5 * cfg.dt * (flux_prev + f);
      flux_prev = f;
    }
    if (k % cfg.snapshot_stride == 0 || k == steps) take_snapshot(k, u);
  }
  if (cfg.sponge.enabled) out.sponge_zone_mass_delta = zone_mass(u) - zone_mass0;
  return out;
}

// sup_t (|z| + ||eta||_{H^1}) / ||u_0||_{H^1}: the empirical orbital
// stability constant of a run.
inline double orbital_stability_constant(const Trajectory& traj) {
  if (traj.snaps.empty()) throw MissingInputError("orbital_stability_constant: empty trajectory");
  double sup = 0;
  bool any = false;
  for (const auto& s : traj.snaps) {
    if (!s.mod) continue;
    any = true;
    sup = std::max(sup, std::abs(s.mod->z) + norm_h1(s.mod->eta));
  }
  if (!any) throw MissingInputError("orbital_stability_constant: no modulation series");
  return sup / std::max(norm_h1(traj.snaps.front().u), 1e-300);
}

struct EquipartitionSeries {
  std::vector<double> t;
  std::vector<double> value;  // mass(u_0) - mass(Q[z(t)]) - mass(eta(t))
  double cross_term_t0 = 0;   // Re<Q[z(0)], eta(0)>, the exact t = 0 value
  double late_time_mean = 0;  // mean over the final quarter of samples
  double eta_mass_peak = 0;   // max_t of the radiation mass
};

// How the mass budget splits between the bound state and radiation.  At
// t = 0 the value equals the cross term Re<Q, eta> identically (expand the
// square); if the radiation disperses, the late-time value shrinks toward
// the cross term's decay.
inline EquipartitionSeries mass_equipartition_check(const Trajectory& traj, const SpectralData& sd) {
  EquipartitionSeries out;
  ground_states::BranchOptions bopt;
  bopt.stencil = traj.config.stencil;
  bopt.z_max = 1e300;  // the run already policed the small-data radius
  const auto qmass = [](const ComplexField& w) {
    const double r = norm_l2(w);
    return 0.5 * r * r;
  };
  double m0 = 0;
  bool first = true;
  for (const auto& s : traj.snaps) {
    if (!s.mod) continue;
    const auto bp = ground_states::solve_branch(sd, traj.V, traj.nl, s.mod->z, bopt);
    if (first) {
      m0 = qmass(s.u);
      out.cross_term_t0 = rpair(bp.Q, s.mod->eta);
      first = false;
    }
    out.t.push_back(s.t);
    out.value.push_back(m0 - qmass(bp.Q) - qmass(s.mod->eta));
    out.eta_mass_peak = std::max(out.eta_mass_peak, qmass(s.mod->eta));
  }
  if (first) throw MissingInputError("mass_equipartition_check: trajectory carries no modulation series");
  const size_t n = out.value.size();
  const size_t quarter = std::max<size_t>(1, n / 4);
  double acc = 0;
  for (size_t i = n - quarter; i < n; ++i) acc += out.value[i];
  out.late_time_mean = acc / static_cast<double>(quarter);
  return out;
}

struct DecaySeries {
  std::vector<double> t;
  std::vector<double> value;     // 1/2 || e^{-a<x>} eta ||_{L^2}^2
  std::vector<double> value_h1;  // same with the weighted H^1 norm
  double final_over_peak = 0;    // L^2 variant; 0 for an identically zero series
};

// Locally weighted radiation mass along the run; a = 0 degrades gracefully
// to the plain (half) L^2 mass of eta.
inline DecaySeries local_decay_series(const Trajectory& traj, double a) {
  if (!std::isfinite(a) || a < 0) throw ValidationError("local_decay_series: weight rate must be >= 0");
  DecaySeries out;
  for (const auto& s : traj.snaps) {
    if (!s.mod) continue;
    const auto& g = *s.u.grid;
    double acc = 0;
    for (int i = 0; i < g.n; ++i)
      acc += std::exp(-2.0 * a * std::sqrt(1.0 + g.x[i] * g.x[i])) * std::norm(s.mod->eta.v[i]);
    out.t.push_back(s.t);
    out.value.push_back(0.5 * g.h * acc);
    const double h1 = norm_h1_exp(s.mod->eta, -a);
    out.value_h1.push_back(0.5 * h1 * h1);
  }
  if (out.value.empty()) throw MissingInputError("local_decay_series: trajectory carries no modulation series");
  const double peak = *std::max_element(out.value.begin(), out.value.end());
  out.final_over_peak = peak > 0 ? out.value.back() / peak : 0.0;
  return out;
}

}  // namespace nlslab::evolution
