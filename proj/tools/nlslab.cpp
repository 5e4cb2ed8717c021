// nlslab command line: a config-driven runner that exposes the library's
// experiments as subcommands and writes reproducible CSV/JSON artifacts.
// Exit codes: 0 success, 2 validation/config, 3 numerical failure, 4 missing
// inputs.  Identical (config, seed) pairs produce byte-identical outputs.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nlslab/diagnostics.hpp"
#include "nlslab/io.hpp"
#include "nlslab/scattering.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace nlslab;
using io::json;

namespace {

struct Common {
  std::string config_path;
  std::string out = ".";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (defaults apply when omitted)");
  c.seed_opt = cmd->add_option("--seed", c.seed, "RNG seed; overrides the config value");
  cmd->add_option("--out", c.out, "output directory, created if missing");
  cmd->add_option("--override", c.overrides,
                  "config override key=value or section.key=value (repeatable)");
}

io::RunConfig load_config(const Common& c) {
  json user = c.config_path.empty() ? json::object() : io::load_config_file(c.config_path);
  for (const auto& o : c.overrides) io::apply_override(user, o);
  if (c.seed_opt && c.seed_opt->count() > 0) user["seed"] = c.seed;
  return io::parse_config(user);
}

GridPtr make_grid(const io::RunConfig& rc) { return build_grid(rc.L, rc.n, rc.boundary); }

Potential make_potential(const io::RunConfig& rc, const GridPtr& g) {
  if (rc.pot_kind == "zero") return zero_potential(g);
  if (rc.pot_kind == "file") return potential_from_file(g, rc.pot_file);
  return sech2_potential(g, rc.depth, rc.width);
}

ComplexField make_initial(const io::RunConfig& rc, const GridPtr& g, const Potential& V) {
  if (rc.init_kind == "zero") return ComplexField{g, Eigen::VectorXcd::Zero(g->n)};
  if (rc.init_kind == "gaussian") {
    return field_from(g, [&](double x) {
      const double d = (x - rc.center) / rc.gwidth;
      return rc.amplitude * std::exp(complexd(-0.5 * d * d, rc.velocity * x));
    });
  }
  auto sd = operator_lab::discrete_eigenpair(V, rc.evo.stencil);
  if (rc.init_kind == "soliton") {
    ground_states::BranchOptions bo;
    bo.z_max = std::max(bo.z_max, 2.0 * std::abs(rc.z0));
    bo.stencil = rc.evo.stencil;
    return ground_states::solve_branch(sd, V, rc.nl, rc.z0, bo).Q;
  }
  std::mt19937_64 rng(rc.seed);
  ComplexField pkt = operator_lab::project_pc(random_smooth_field(g, rng), sd);
  const double np = norm_h1(pkt);
  if (np > 0) pkt.v *= rc.packet_scale / np;
  if (rc.init_kind == "packet") return pkt;
  return ComplexField{g, rc.phi_coef * sd.phi.v + pkt.v};  // phi_packet
}

json provenance(const io::RunConfig& rc) {
  return json{{"version", kVersion}, {"config_hash", io::config_hash(rc.resolved)}};
}

void ensure_dir(const std::string& out) { fs::create_directories(out); }

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

double rel_drift(const std::vector<evolution::ConservedRecord>& rec,
                 double evolution::ConservedRecord::*field) {
  if (rec.empty()) return 0;
  const double v0 = rec.front().*field;
  double worst = 0;
  for (const auto& r : rec) worst = std::max(worst, std::abs(r.*field - v0));
  return v0 == 0 ? worst : worst / std::abs(v0);
}

// ---------------------------------------------------------------------------

int cmd_spectrum(const io::RunConfig& rc, const std::string& out) {
  auto g = make_grid(rc);
  Potential V = make_potential(rc, g);
  auto sd = operator_lab::discrete_eigenpair(V, rc.evo.stencil);
  auto rr = scattering::resonance_indicator(V);

  json j = provenance(rc);
  j["config"] = rc.resolved;
  j["lambda"] = sd.lambda;
  j["lambda_fine"] = sd.lambda_fine;
  j["lambda_extrapolated"] = sd.lambda_extrapolated;
  j["n_negative"] = sd.n_negative;
  j["eigen_residual"] = sd.residual;
  j["multiple_eigenvalues"] = sd.multiple_eigenvalues;
  j["resonance_class"] =
      rr.classification == scattering::ResonanceClass::resonant ? "resonant" : "generic";
  j["resonance_score"] = rr.score;
  j["probe_t_mag"] = rr.probe_t_mag;
  ensure_dir(out);
  io::write_json(join(out, "spectrum.json"), j);
  std::printf("spectrum: lambda=%.12g extrapolated=%.12g negatives=%d class=%s\n", sd.lambda,
              sd.lambda_extrapolated, sd.n_negative,
              j["resonance_class"].get<std::string>().c_str());
  return 0;
}

int cmd_evolve(const io::RunConfig& rc, const std::string& out) {
  auto g = make_grid(rc);
  Potential V = make_potential(rc, g);
  ComplexField u0 = make_initial(rc, g, V);
  auto traj = evolution::run(u0, V, rc.nl, rc.evo);

  const std::string hash = io::config_hash(rc.resolved);
  ensure_dir(out);
  json cfg = provenance(rc);
  cfg["config"] = rc.resolved;
  io::write_json(join(out, "config.json"), cfg);
  io::write_trajectory(join(out, "trajectory.bin"), traj, hash);

  io::CsvTable csv;
  csv.columns = {"t", "mass", "energy", "z_re", "z_im", "z_abs", "eta_l2", "eta_h1"};
  const double qnan = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i < traj.snaps.size(); ++i) {
    const auto& s = traj.snaps[i];
    const auto& c = traj.conserved[i];
    std::vector<double> row{s.t, c.mass, c.energy, qnan, qnan, qnan, qnan, qnan};
    if (s.mod) {
      row[3] = s.mod->z.real();
      row[4] = s.mod->z.imag();
      row[5] = std::abs(s.mod->z);
      row[6] = norm_l2(s.mod->eta);
      row[7] = norm_h1(s.mod->eta);
    }
    csv.rows.push_back(std::move(row));
  }
  io::write_csv(join(out, "conserved.csv"), csv, hash);

  json sum = provenance(rc);
  sum["config"] = rc.resolved;
  sum["snapshots"] = traj.snaps.size();
  sum["aborted"] = traj.aborted;
  sum["abort_time"] = traj.abort_time;
  sum["abort_reason"] = traj.abort_reason;
  sum["decomposition_failed"] = traj.decomposition_failed;
  sum["decomposition_failed_time"] = traj.decomposition_failed_time;
  sum["wavefront_time"] = traj.wavefront_time;
  sum["mass_drift_rel"] = rel_drift(traj.conserved, &evolution::ConservedRecord::mass);
  sum["energy_drift_rel"] = rel_drift(traj.conserved, &evolution::ConservedRecord::energy);
  sum["sponge"] = json{{"absorbed", traj.sponge_absorbed},
                       {"flux_integral", traj.sponge_flux_integral},
                       {"zone_mass_delta", traj.sponge_zone_mass_delta},
                       {"balance_error", rc.evo.sponge.enabled ? traj.sponge_balance_error() : 0.0}};
  try {
    sum["orbital_stability_constant"] = evolution::orbital_stability_constant(traj);
  } catch (const MissingInputError&) {
    sum["orbital_stability_constant"] = nullptr;
  }
  if (rc.init_kind == "soliton") {
    // phase-minimized L^2 distance to the initial profile, closed form
    const double nq2 = 2.0 * traj.conserved.front().mass;
    double sup = 0;
    for (const auto& s : traj.snaps) {
      const double nu2 = norm_l2(s.u) * norm_l2(s.u);
      const double ip = std::abs(cpair(s.u, u0));
      sup = std::max(sup, std::sqrt(std::max(0.0, nu2 + nq2 - 2.0 * ip)));
    }
    sum["orbit_l2_sup"] = sup;
  }
  io::write_json(join(out, "summary.json"), sum);
  std::printf("evolve: %zu snapshots to t=%.6g%s\n", traj.snaps.size(),
              traj.snaps.empty() ? 0.0 : traj.snaps.back().t,
              traj.aborted ? " (aborted)" : "");
  return 0;
}

// Per-block guard: a diagnostic that cannot run on this trajectory records
// why instead of failing the whole report.
template <class F>
json guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return json{{"error", e.what()}};
  }
}

int cmd_diagnose(const std::string& path, const Common& copt) {
  fs::path p(path);
  if (p.empty() || !fs::exists(p)) throw MissingInputError("trajectory path not found: " + path);
  const fs::path dir = fs::is_directory(p) ? p : p.parent_path();
  const std::string traj_file = fs::is_directory(p) ? (p / "trajectory.bin").string() : p.string();
  auto traj = io::read_trajectory(traj_file);

  // weights and observation parameters come from the run's stored config,
  // overridable from the command line
  json user = json::object();
  const fs::path cfg_file = dir / "config.json";
  if (fs::exists(cfg_file)) {
    json stored = io::load_config_file(cfg_file.string());
    if (stored.contains("config")) user = stored["config"];
  }
  for (const auto& o : copt.overrides) io::apply_override(user, o);
  if (copt.seed_opt && copt.seed_opt->count() > 0) user["seed"] = copt.seed;
  io::RunConfig rc = io::parse_config(user);
  const std::string out = copt.out == "." ? dir.string() : copt.out;
  const std::string hash = io::config_hash(rc.resolved);

  auto sd = operator_lab::discrete_eigenpair(traj.V, traj.config.stencil);
  auto wf = diagnostics::build_weights(rc.A, rc.B, rc.kappa, rc.a, traj.grid);

  json j = provenance(rc);
  j["config"] = rc.resolved;
  j["trajectory"] = json{{"snapshots", traj.snaps.size()},
                         {"aborted", traj.aborted},
                         {"abort_reason", traj.abort_reason},
                         {"decomposition_failed", traj.decomposition_failed},
                         {"wavefront_time", traj.wavefront_time},
                         {"sponge_absorbed", traj.sponge_absorbed}};
  j["conservation"] =
      json{{"mass_drift_rel", rel_drift(traj.conserved, &evolution::ConservedRecord::mass)},
           {"energy_drift_rel", rel_drift(traj.conserved, &evolution::ConservedRecord::energy)}};

  j["orbital_stability_constant"] =
      guarded([&] { return json(evolution::orbital_stability_constant(traj)); });
  j["equipartition"] = guarded([&] {
    auto eq = evolution::mass_equipartition_check(traj, sd);
    return json{{"cross_term_t0", eq.cross_term_t0},
                {"late_time_mean", eq.late_time_mean},
                {"eta_mass_peak", eq.eta_mass_peak}};
  });

  // convergence detectors first: their trustworthy window scopes the decay
  // saturation integral below
  json conv = guarded([&] {
    auto cd = diagnostics::convergence_detectors(traj, sd, rc.a);
    return json{{"r_plus", cd.r_plus},
                {"r_plus_deviation", cd.r_plus_deviation},
                {"decay_final_over_peak", cd.decay_final_over_peak},
                {"phase_profile_sup", cd.phase_profile_sup},
                {"t_trust", cd.t_trust},
                {"trimmed", cd.trimmed}};
  });
  j["convergence"] = conv;

  json decay_block = guarded([&] {
    auto ds = evolution::local_decay_series(traj, rc.a);
    double t_window = ds.t.empty() ? 0.0 : ds.t.back();
    if (conv.contains("t_trust")) t_window = std::min(t_window, conv["t_trust"].get<double>());
    double total = 0, head = 0;  // trapezoid of the weighted H^1 mass up to t_window
    for (size_t i = 1; i < ds.t.size() && ds.t[i] <= t_window + 1e-12; ++i) {
      const double inc = 0.5 * (ds.value_h1[i] + ds.value_h1[i - 1]) * (ds.t[i] - ds.t[i - 1]);
      total += inc;
      if (ds.t[i] <= 0.8 * t_window + 1e-12) head += inc;
    }
    double peak = 0;
    for (double v : ds.value) peak = std::max(peak, v);
    return json{{"final_over_peak", ds.final_over_peak},
                {"peak", peak},
                {"h1_integral", total},
                {"tail_increment_frac", total > 0 ? (total - head) / total : 0.0},
                {"t_window", t_window}};
  });
  j["local_decay"] = decay_block;

  j["virial"] = guarded([&] {
    auto vr = diagnostics::virial_inequality_check(traj, wf, sd);
    return json{{"lhs", vr.lhs},           {"rhs", vr.rhs},
                {"sup_virial", vr.sup_virial}, {"c_emp", vr.c_emp},
                {"degenerate", vr.degenerate}, {"anomaly", vr.anomaly}};
  });
  j["virial_rate"] = guarded([&] {
    auto rs = diagnostics::virial_rate_series(traj, wf, sd);
    double sup_fd = 0;
    for (double v : rs.rate_fd) sup_fd = std::max(sup_fd, std::abs(v));
    return json{{"agreement", rs.agreement}, {"sup_rate_fd", sup_fd}};
  });

  j["modulation_residual"] = guarded([&] {
    std::vector<modulation::ModulationState> ms;
    for (const auto& s : traj.snaps)
      if (s.mod) ms.push_back(*s.mod);
    if (ms.size() < 3) throw MissingInputError("too few modulation snapshots");
    auto rs = modulation::residual_series(ms, sd, traj.V, traj.nl);
    const double delta = std::abs(ms.front().z);
    double ratio_max = 0;
    int used = 0;
    for (size_t i = 0; i < rs.t.size(); ++i) {
      const auto& eta = ms[i + 1].eta;  // interior snapshot owning this residual
      const double st = norm_l2_sech(eta, rc.kappa);
      if (delta <= 0 || st <= 0) continue;
      ratio_max = std::max(ratio_max, std::abs(rs.fd[i]) /
                                          (std::pow(delta, traj.nl.p - 1.0) * st));
      ++used;
    }
    return json{{"agreement_l2", rs.agreement_l2},
                {"gram_condition_max", rs.gram_condition_max},
                {"ratio_max", ratio_max},
                {"ratio_count", used}};
  });

  j["localized"] = guarded([&] {
    auto lc = diagnostics::localized_component_series(traj, wf, sd, rc.s);
    return json{{"w_l2t", lc.w_l2t},
                {"recon_c_max", lc.recon_c_max},
                {"phi_coef_max", lc.phi_coef_max}};
  });
  j["b_sweep"] = guarded([&] {
    json bs{{"B", json::array({3.0, 4.0, 6.0})},
            {"w_l2t", json::array()},
            {"phi_coef", json::array()}};
    std::vector<double> w, pc;
    for (double B : {3.0, 4.0, 6.0}) {
      auto wfb = diagnostics::build_weights(rc.A, B, rc.kappa, rc.a, traj.grid);
      auto lc = diagnostics::localized_component_series(traj, wfb, sd, rc.s);
      w.push_back(lc.w_l2t);
      pc.push_back(lc.phi_coef_max);
      bs["w_l2t"].push_back(lc.w_l2t);
      bs["phi_coef"].push_back(lc.phi_coef_max);
    }
    bs["w_monotone_decreasing"] = w[0] > w[1] && w[1] > w[2];
    bs["phi_coef_monotone_decreasing"] = pc[0] > pc[1] && pc[1] > pc[2];
    return bs;
  });

  j["ensembles"] = guarded([&] {
    std::mt19937_64 rng(rc.seed);
    std::vector<ComplexField> e1, e2;
    for (int k = 0; k < 100; ++k) e1.push_back(random_smooth_field(traj.grid, rng));
    for (int k = 0; k < 200; ++k) e2.push_back(random_smooth_field(traj.grid, rng));
    auto cp = diagnostics::commutator_positivity_probe(e1, wf);
    auto pp = diagnostics::pure_power_estimate_check(e2, wf, traj.nl.p);
    return json{{"commutator",
                 {{"fitted_C", cp.fitted_C},
                  {"samples", cp.samples},
                  {"positive_defects", cp.positive_defects}}},
                {"pure_power",
                 {{"max_ratio", pp.max_ratio}, {"samples", pp.samples}, {"dropped", pp.dropped}}}};
  });

  ensure_dir(out);
  const json norms = guarded([&] {
    auto ns = diagnostics::norm_suite(traj, wf, rc.s);
    auto ds = evolution::local_decay_series(traj, rc.a);
    io::CsvTable csv;
    csv.columns = {"t",      "sigma_A", "sigma_tilde", "l2s",
                   "h1_exp", "virial",  "decay_l2",    "decay_h1"};
    for (size_t i = 0; i < ns.t.size(); ++i)
      csv.rows.push_back({ns.t[i], ns.sigma_A[i], ns.sigma_tilde[i], ns.l2s[i], ns.h1_exp[i],
                          ns.virial[i], ds.value[i], ds.value_h1[i]});
    io::write_csv(join(out, "norms.csv"), csv, hash);
    return json(true);
  });
  j["norms_csv_written"] = norms;

  io::write_json(join(out, "diagnose.json"), j);
  std::printf("diagnose: %zu snapshots -> %s\n", traj.snaps.size(),
              join(out, "diagnose.json").c_str());
  return 0;
}

int cmd_scatter(const io::RunConfig& rc, const std::string& out) {
  auto g = make_grid(rc);
  Potential V = make_potential(rc, g);
  const std::string hash = io::config_hash(rc.resolved);

  io::CsvTable csv;
  csv.columns = {"k", "T_re", "T_im", "T_abs", "W_re", "W_im", "w_variation"};
  double w_var_max = 0;
  for (double k : rc.k_values) {
    auto ss = scattering::transmission(V, k);
    csv.rows.push_back({k, ss.T.real(), ss.T.imag(), std::abs(ss.T), ss.W.real(), ss.W.imag(),
                        ss.w_variation});
    w_var_max = std::max(w_var_max, ss.w_variation);
  }
  ensure_dir(out);
  io::write_csv(join(out, "scattering.csv"), csv, hash);

  json j = provenance(rc);
  j["config"] = rc.resolved;
  j["w_variation_max"] = w_var_max;
  auto rr = scattering::resonance_indicator(V);
  j["resonance_class"] =
      rr.classification == scattering::ResonanceClass::resonant ? "resonant" : "generic";
  j["resonance_score"] = rr.score;
  j["t_small_abs"] = std::abs(scattering::transmission(V, rc.k_small).T);
  j["k_small"] = rc.k_small;

  if (rc.pot_kind == "sech2" && rc.depth == 2.0 && rc.width == 1.0) {
    // reflectionless well: closed-form profile and purely imaginary T at k=1
    auto jp = scattering::compute_jost(V, complexd(1.0, 0.0), scattering::Side::plus);
    double m_gap = 0;
    for (int i = 0; i < g->n; ++i) {
      const complexd exact = (1.0 + complexd(0, 1) * std::tanh(g->x[i])) / complexd(1.0, 1.0);
      m_gap = std::max(m_gap, std::abs(jp.m.v[i] - exact));
    }
    j["oracle"] = json{{"m_plus_sup_gap", m_gap},
                       {"t1_gap", std::abs(scattering::transmission(V, 1.0).T - complexd(0, 1))}};
  }

  j["resolvent"] = guarded([&] {
    json blocks = json::array();
    for (double lam : rc.lambda_values) {
      auto Kp = scattering::resolvent_kernel(V, lam, +1);
      auto Km = scattering::resolvent_kernel(V, lam, -1);
      double conj_gap = 0;
      for (int i = 0; i < g->n; i += 53)
        for (int jj = 0; jj < g->n; jj += 59)
          conj_gap = std::max(conj_gap, std::abs(Km.R(i, jj) - std::conj(Kp.R(i, jj))));
      double dev = 0;
      const int n_cols = std::max(1, rc.columns);
      for (int c = 1; c <= n_cols; ++c) {
        const int col = g->n / (n_cols + 1) * c;
        ComplexField u{g, Kp.R.col(col)};
        ComplexField hu = operator_lab::apply_hamiltonian(u, V, rc.evo.stencil);
        for (int i = 1; i < g->n - 1; ++i) {
          const double target = i == col ? 1.0 : 0.0;
          dev = std::max(dev, std::abs(g->h * (hu.v[i] - lam * u.v[i]) - target));
        }
      }
      const double tol = g->h * g->h * (lam + 1.0);  // kink-node stencil error scale
      blocks.push_back(json{{"lambda", lam},
                            {"conj_gap", conj_gap},
                            {"identity_sup", dev},
                            {"identity_tol", tol},
                            {"identity_pass", dev < tol},
                            {"columns", n_cols}});
    }
    return json{{"per_lambda", blocks}};
  });

  j["limiting_absorption"] = guarded([&] {
    json blocks = json::array();
    for (double lam : rc.lambda_values) {
      // symmetric weight exponents: the boundary limit is approached fastest
      // when both sides decay, and tau = s keeps the 2% window at a = 0.01
      const double na = scattering::limiting_absorption_norm(V, lam, rc.lap_a, rc.s, rc.s);
      const double nh = scattering::limiting_absorption_norm(V, lam, rc.lap_a / 2, rc.s, rc.s);
      const double n0 = scattering::limiting_absorption_norm(V, lam, 0.0, rc.s, rc.s);
      blocks.push_back(json{{"lambda", lam},
                            {"a", rc.lap_a},
                            {"norm_a", na},
                            {"norm_half_a", nh},
                            {"norm_boundary", n0},
                            {"cauchy_rel", nh == 0 ? 0.0 : std::abs(na - nh) / nh},
                            {"boundary_rel", n0 == 0 ? 0.0 : std::abs(nh - n0) / n0}});
    }
    return json{{"per_lambda", blocks}};
  });

  io::write_json(join(out, "scatter.json"), j);
  std::printf("scatter: %zu wavenumbers, class=%s\n", rc.k_values.size(),
              j["resonance_class"].get<std::string>().c_str());
  return 0;
}

int cmd_smoothing(const io::RunConfig& rc, const std::string& out) {
  auto g = make_grid(rc);
  Potential V = make_potential(rc, g);
  auto sd_st = rc.evo.stencil;
  std::mt19937_64 rng(rc.seed);

  json j = provenance(rc);
  j["config"] = rc.resolved;

  auto sd = operator_lab::discrete_eigenpair(V, sd_st);

  std::vector<double> ratios;
  int saturated = 0;
  ComplexField first{g, Eigen::VectorXcd::Zero(g->n)};
  bool have_first = false;
  for (int i = 0; i < rc.smoothing_count; ++i) {
    // bound states projected out so the ratio probes the dispersive part only
    ComplexField f = operator_lab::project_pc(random_smooth_field(g, rng), sd);
    const double nf = norm_l2(f);
    if (nf == 0) continue;
    f.v /= nf;
    if (!have_first) {
      first = f;
      have_first = true;
    }
    auto ks = scattering::kato_smoothing_ratio(V, f, rc.smoothing_horizon, rc.s);
    ratios.push_back(ks.ratio);
    if (ks.saturated) ++saturated;
  }
  if (ratios.empty()) throw MissingInputError("smoothing: no usable fields in the ensemble");
  const auto [mn, mx] = std::minmax_element(ratios.begin(), ratios.end());
  j["count"] = static_cast<int>(ratios.size());
  j["ratio_min"] = *mn;
  j["ratio_max"] = *mx;
  j["max_over_min"] = *mn == 0 ? 0.0 : *mx / *mn;
  j["saturated_count"] = saturated;

  const double base = scattering::kato_smoothing_ratio(V, first, rc.smoothing_horizon, rc.s).ratio;
  ComplexField doubled{g, 2.0 * first.v};
  ComplexField rotated{g, std::polar(1.0, 1.1) * first.v};
  j["homogeneity_gap"] =
      std::abs(scattering::kato_smoothing_ratio(V, doubled, rc.smoothing_horizon, rc.s).ratio -
               base);
  j["phase_gap"] =
      std::abs(scattering::kato_smoothing_ratio(V, rotated, rc.smoothing_horizon, rc.s).ratio -
               base);

  if (rc.run_duhamel) {
    j["duhamel"] = guarded([&] {
      const double T = 20.0, tau_t = T / 16.0;
      auto theta = [&](double t) {
        return complexd(std::exp(-0.5 * std::pow((t - T / 2) / tau_t, 2)), 0);
      };
      ComplexField G = field_from(g, [](double x) { return std::exp(-0.25 * x * x); });
      G = operator_lab::project_pc(G, sd);
      scattering::DuhamelOptions opts;
      auto d1 = scattering::duhamel_identity_check(V, theta, G, T, opts, sd_st);
      scattering::DuhamelOptions fine;
      fine.n_time = 2 * opts.n_time;
      fine.n_lambda = 2 * opts.n_lambda;
      auto d2 = scattering::duhamel_identity_check(V, theta, G, T, fine, sd_st);
      return json{{"discrepancy", d1.discrepancy},
                  {"discrepancy_coarse", d1.discrepancy_coarse},
                  {"discrepancy_refined", d2.discrepancy},
                  {"refined_improves", d2.discrepancy < d1.discrepancy},
                  {"lambda_window", json::array({d1.lambda_lo, d1.lambda_hi})}};
    });
  }

  ensure_dir(out);
  io::write_json(join(out, "ratios.json"), j);
  std::printf("smoothing: %d ratios in [%.6g, %.6g]\n", j["count"].get<int>(), *mn, *mx);
  return 0;
}

int cmd_branch(const io::RunConfig& rc, const std::string& out) {
  auto g = make_grid(rc);
  Potential V = make_potential(rc, g);
  auto sd = operator_lab::discrete_eigenpair(V, rc.evo.stencil);
  const double a0 = 0.5 * std::min(std::sqrt(sd.lambda), rc.kappa);
  const std::string hash = io::config_hash(rc.resolved);
  if (rc.branch_count < 2 || !(rc.r_min > 0) || !(rc.r_max > rc.r_min))
    throw ValidationError("branch: need 0 < r_min < r_max and count >= 2");

  ground_states::BranchOptions bo;
  bo.z_max = std::max(bo.z_max, 2.0 * rc.r_max);
  bo.stencil = rc.evo.stencil;

  io::CsvTable csv;
  csv.columns = {"r", "E", "newton_residual", "q_h1", "gap_h1a", "d1_gap", "d2_gap", "e_gap"};
  std::vector<double> logr, loggap, logd;
  double residual_max = 0, e_trend_c = 0;
  for (int i = 0; i < rc.branch_count; ++i) {
    const double fr = rc.branch_count == 1 ? 0.0 : double(i) / (rc.branch_count - 1);
    const double r = rc.r_min * std::pow(rc.r_max / rc.r_min, fr);
    auto bp = ground_states::solve_branch(sd, V, rc.nl, r, bo);
    ComplexField dq{g, bp.Q.v - r * sd.phi.v};
    ComplexField d1{g, bp.D1Q.v - sd.phi.v};
    ComplexField d2{g, bp.D2Q.v - complexd(0, 1) * sd.phi.v};
    const double gap = norm_h1_exp(dq, a0);
    const double g1 = norm_h1_exp(d1, a0), g2 = norm_h1_exp(d2, a0);
    const double eg = std::abs(bp.E + sd.lambda);
    csv.rows.push_back({r, bp.E, bp.newton_residual, norm_h1(bp.Q), gap, g1, g2, eg});
    residual_max = std::max(residual_max, bp.newton_residual);
    e_trend_c = std::max(e_trend_c, eg / std::pow(r, rc.nl.p - 1.0));
    if (gap > 0 && g1 > 0 && g2 > 0) {
      logr.push_back(std::log(r));
      loggap.push_back(std::log(gap));
      logd.push_back(0.5 * (std::log(g1) + std::log(g2)));
    }
  }
  ensure_dir(out);
  io::write_csv(join(out, "branch.csv"), csv, hash);

  auto slope = [](const std::vector<double>& xs, const std::vector<double>& ys) {
    const size_t m = xs.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < m; ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    const double den = m * sxx - sx * sx;
    return den == 0 ? 0.0 : (m * sxy - sx * sy) / den;
  };

  json j = provenance(rc);
  j["config"] = rc.resolved;
  j["residual_max"] = residual_max;
  j["slope_q"] = logr.size() >= 2 ? slope(logr, loggap) : 0.0;
  j["slope_d"] = logr.size() >= 2 ? slope(logr, logd) : 0.0;
  j["e_trend_C"] = e_trend_c;
  j["weight_a0"] = a0;

  {
    auto ref = ground_states::solve_branch(sd, V, rc.nl, rc.r_max, bo);
    double gauge = 0;
    for (double th : {0.7, 2.1, -1.3}) {
      auto rot = ground_states::solve_branch(sd, V, rc.nl, std::polar(rc.r_max, th), bo);
      ComplexField diff{g, rot.Q.v - std::polar(1.0, th) * ref.Q.v};
      gauge = std::max(gauge, norm_h1(diff));
    }
    j["gauge_gap"] = gauge;
  }

  j["roundtrip"] = guarded([&] {
    std::mt19937_64 rng(rc.seed);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    modulation::DecomposeOptions dopt;
    dopt.small_data_radius = 0.5;
    dopt.branch = bo;
    double max_err = 0, gauge_cov = 0;
    for (int i = 0; i < rc.roundtrip_count; ++i) {
      const complexd z = std::polar(rc.r_max * ur(rng), 2.0 * M_PI * ur(rng));
      ComplexField eta = operator_lab::project_pc(random_smooth_field(g, rng), sd);
      const double ne = norm_h1(eta);
      if (ne > 0) eta.v *= rc.eta_scale * ur(rng) / ne;
      auto bp = ground_states::solve_branch(sd, V, rc.nl, z, bo);
      ComplexField u{g, bp.Q.v + eta.v};
      auto dec = modulation::decompose(u, sd, V, rc.nl, dopt);
      ComplexField deta{g, dec.eta.v - eta.v};
      max_err = std::max({max_err, std::abs(dec.z - z), norm_h1(deta)});
      if (i < 10) {
        const complexd rot = std::polar(1.0, 1.9);
        ComplexField ur2{g, rot * u.v};
        auto dec2 = modulation::decompose(ur2, sd, V, rc.nl, dopt);
        ComplexField gdiff{g, dec2.eta.v - rot * dec.eta.v};
        gauge_cov = std::max({gauge_cov, std::abs(dec2.z - rot * dec.z), norm_h1(gdiff)});
      }
    }
    return json{{"count", rc.roundtrip_count}, {"max_err", max_err}, {"gauge_cov", gauge_cov}};
  });

  io::write_json(join(out, "branch.json"), j);
  std::printf("branch: %d points, max residual %.3g\n", rc.branch_count, residual_max);
  return 0;
}

// ---------------------------------------------------------------------------
// cmd_report: walk a run directory, collect the artifacts the other commands
// wrote, and grade every acceptance check that has inputs.

struct RunDir {
  fs::path dir;
  json config;  // resolved tree
  std::string hash;
  json summary, diagnose;
  fs::path traj_file, csv_file;
};

json jget(const json& j, std::initializer_list<const char*> path) {
  const json* cur = &j;
  for (const char* k : path) {
    if (!cur->is_object() || !cur->contains(k)) return json();
    cur = &(*cur)[k];
  }
  return *cur;
}

bool jnum_lt(const json& v, double bound) { return v.is_number() && v.get<double>() < bound; }

// numeric leaf with a fallback: non-finite values serialize as null, and a
// missing block must read as a failing number, not a crash
double jnum(const json& v, double fallback = std::numeric_limits<double>::quiet_NaN()) {
  return v.is_number() ? v.get<double>() : fallback;
}

int cmd_report(const std::string& root, const std::string& out) {
  if (!fs::is_directory(root)) throw MissingInputError("run directory not found: " + root);
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
       ++it)
    if (it->is_regular_file()) files.push_back(it->path());
  std::sort(files.begin(), files.end());

  std::vector<json> spectra, scatters, smoothings, branches;
  std::map<std::string, RunDir> runs;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    auto load = [&]() { return io::load_config_file(f.string()); };
    if (name == "spectrum.json") spectra.push_back(load());
    else if (name == "scatter.json") scatters.push_back(load());
    else if (name == "ratios.json") smoothings.push_back(load());
    else if (name == "branch.json") branches.push_back(load());
    else if (name == "summary.json" || name == "diagnose.json" || name == "config.json" ||
             name == "trajectory.bin" || name == "conserved.csv") {
      RunDir& rd = runs[f.parent_path().string()];
      rd.dir = f.parent_path();
      if (name == "summary.json") rd.summary = load();
      else if (name == "diagnose.json") rd.diagnose = load();
      else if (name == "config.json") {
        json c = load();
        rd.config = c.contains("config") ? c["config"] : json();
        rd.hash = c.contains("config_hash") ? c["config_hash"].get<std::string>() : "";
      } else if (name == "trajectory.bin") rd.traj_file = f;
      else rd.csv_file = f;
    }
  }

  auto spectrum_for = [&](double depth) -> json {
    for (const auto& s : spectra)
      if (jget(s, {"config", "potential", "kind"}) == "sech2" &&
          jget(s, {"config", "potential", "depth"}).is_number() &&
          jget(s, {"config", "potential", "depth"}).get<double>() == depth)
        return s;
    return json();
  };
  auto scatter_for = [&](double depth) -> json {
    for (const auto& s : scatters)
      if (jget(s, {"config", "potential", "depth"}).is_number() &&
          jget(s, {"config", "potential", "depth"}).get<double>() == depth)
        return s;
    return json();
  };

  json criteria = json::array();
  int passed = 0, failed = 0, skipped = 0;
  auto add = [&](int id, const std::string& name, int status /*1 pass, 0 fail, -1 skip*/,
                 json detail) {
    criteria.push_back(json{{"id", id},
                            {"name", name},
                            {"status", status == 1 ? "pass" : status == 0 ? "fail" : "skipped"},
                            {"detail", detail}});
    (status == 1 ? passed : status == 0 ? failed : skipped) += 1;
  };

  {  // 1: eigenvalue oracles
    json s2 = spectrum_for(2.0), s1 = spectrum_for(1.0);
    if (s2.is_null() || s1.is_null())
      add(1, "eigenvalue oracles", -1, json{{"reason", "need spectrum runs at depths 1 and 2"}});
    else {
      const double l2 = jnum(s2["lambda_extrapolated"]);
      const double l1 = jnum(s1["lambda_extrapolated"]);
      const double target1 = (3.0 - std::sqrt(5.0)) / 2.0;
      const bool ok = std::abs(l2 - 1.0) < 1e-6 && std::abs(l1 - target1) < 1e-6;
      add(1, "eigenvalue oracles", ok ? 1 : 0,
          json{{"lambda_depth2", l2}, {"lambda_depth1", l1}, {"target_depth1", target1}});
    }
  }
  {  // 2: transmission oracle + wronskian flatness
    json s2 = scatter_for(2.0);
    if (s2.is_null() || !s2.contains("oracle"))
      add(2, "jost and transmission oracles", -1,
          json{{"reason", "need a scatter run on the depth-2 well"}});
    else {
      double wmax = 0;
      for (const auto& s : scatters) wmax = std::max(wmax, jnum(s["w_variation_max"], 1.0));
      const double mg = jnum(s2["oracle"]["m_plus_sup_gap"]);
      const double tg = jnum(s2["oracle"]["t1_gap"]);
      add(2, "jost and transmission oracles", (mg < 1e-6 && tg < 1e-5 && wmax < 1e-6) ? 1 : 0,
          json{{"m_plus_sup_gap", mg}, {"t1_gap", tg}, {"w_variation_max", wmax}});
    }
  }
  {  // 3: resonance classification
    json p2 = spectrum_for(2.0), p1 = spectrum_for(1.0), sc1 = scatter_for(1.0);
    if (p2.is_null() || p1.is_null() || sc1.is_null())
      add(3, "resonance classification", -1,
          json{{"reason", "need spectrum and scatter runs at depths 1 and 2"}});
    else {
      const bool ok = p2["resonance_class"] == "resonant" && p1["resonance_class"] == "generic" &&
                      jnum_lt(sc1["t_small_abs"], 0.1);
      add(3, "resonance classification", ok ? 1 : 0,
          json{{"depth2_class", p2["resonance_class"]},
               {"depth1_class", p1["resonance_class"]},
               {"t_small_abs", sc1["t_small_abs"]}});
    }
  }
  {  // 4: resolvent identity, conjugation, limiting absorption
    json sc;
    for (const auto& s : scatters)
      if (!jget(s, {"resolvent", "per_lambda"}).is_null()) sc = s;
    if (sc.is_null())
      add(4, "boundary resolvent checks", -1, json{{"reason", "no scatter run with resolvent block"}});
    else {
      bool ok = true;
      json detail = json::array();
      for (const auto& b : sc["resolvent"]["per_lambda"]) {
        ok = ok && b["identity_pass"].get<bool>() && jnum_lt(b["conj_gap"], 1e-12);
        detail.push_back(b);
      }
      if (sc.contains("limiting_absorption"))
        for (const auto& b : sc["limiting_absorption"]["per_lambda"]) {
          ok = ok && jnum_lt(b["cauchy_rel"], 0.02) && jnum_lt(b["boundary_rel"], 0.02);
          detail.push_back(b);
        }
      else
        ok = false;
      add(4, "boundary resolvent checks", ok ? 1 : 0, json{{"per_lambda", detail}});
    }
  }
  {  // 5: smoothing ratio ensemble
    if (smoothings.empty())
      add(5, "kato smoothing ensemble", -1, json{{"reason", "no smoothing run"}});
    else {
      const json& s = smoothings.front();
      const bool ok = jnum_lt(s["max_over_min"], 50.0) && jnum_lt(s["homogeneity_gap"], 1e-12) &&
                      jnum_lt(s["phase_gap"], 1e-12) && std::isfinite(jnum(s["ratio_max"]));
      add(5, "kato smoothing ensemble", ok ? 1 : 0,
          json{{"max_over_min", s["max_over_min"]},
               {"homogeneity_gap", s["homogeneity_gap"]},
               {"phase_gap", s["phase_gap"]}});
    }
  }
  {  // 6: duhamel identity
    json d;
    for (const auto& s : smoothings)
      if (s.contains("duhamel") && !s["duhamel"].contains("error")) d = s["duhamel"];
    if (d.is_null())
      add(6, "duhamel identity", -1, json{{"reason", "no smoothing run with the duhamel block"}});
    else
      add(6, "duhamel identity",
          (jnum_lt(d["discrepancy"], 0.05) && d["refined_improves"].get<bool>()) ? 1 : 0, d);
  }
  {  // 7: bound-state branch
    if (branches.empty())
      add(7, "bound-state branch", -1, json{{"reason", "no branch run"}});
    else {
      const json& b = branches.front();
      const double p = jnum(jget(b, {"config", "nonlinearity", "p"}));
      const bool ok = jnum_lt(b["residual_max"], 1e-10 * 1.0000001) &&
                      jnum_lt(b["gauge_gap"], 1e-14) &&
                      std::abs(jnum(b["slope_q"]) - p) < 0.1 &&
                      std::abs(jnum(b["slope_d"]) - (p - 1.0)) < 0.1 &&
                      std::isfinite(jnum(b["e_trend_C"]));
      add(7, "bound-state branch", ok ? 1 : 0,
          json{{"residual_max", b["residual_max"]},
               {"gauge_gap", b["gauge_gap"]},
               {"slope_q", b["slope_q"]},
               {"slope_d", b["slope_d"]},
               {"e_trend_C", b["e_trend_C"]}});
    }
  }
  {  // 8: decomposition roundtrip
    json rt;
    for (const auto& b : branches)
      if (b.contains("roundtrip") && !b["roundtrip"].contains("error")) rt = b["roundtrip"];
    if (rt.is_null())
      add(8, "decomposition roundtrip", -1, json{{"reason", "no branch run with roundtrip block"}});
    else
      add(8, "decomposition roundtrip",
          (jnum_lt(rt["max_err"], 1e-10) && jnum_lt(rt["gauge_cov"], 1e-11)) ? 1 : 0, rt);
  }
  {  // 9: evolution fidelity (orbit preservation + conservation)
    json orbit, conserve;
    for (const auto& [k, rd] : runs) {
      if (rd.summary.is_null()) continue;
      if (jget(rd.config, {"initial", "kind"}) == "soliton" &&
          jget(rd.config, {"evolution", "sponge"}) == false) {
        if (rd.summary.contains("orbit_l2_sup") && orbit.is_null()) orbit = rd.summary;
        if (jnum(jget(rd.config, {"evolution", "T"}), 0.0) >= 50.0) conserve = rd.summary;
      }
    }
    if (orbit.is_null() || conserve.is_null())
      add(9, "evolution fidelity", -1,
          json{{"reason", "need soliton runs with T >= 10 and T >= 50, sponge off"}});
    else {
      const bool ok = jnum_lt(orbit["orbit_l2_sup"], 1e-6) &&
                      jnum_lt(conserve["mass_drift_rel"], 1e-8) &&
                      jnum_lt(conserve["energy_drift_rel"], 1e-7);
      add(9, "evolution fidelity", ok ? 1 : 0,
          json{{"orbit_l2_sup", orbit["orbit_l2_sup"]},
               {"mass_drift_rel", conserve["mass_drift_rel"]},
               {"energy_drift_rel", conserve["energy_drift_rel"]},
               {"note", "time-step order ratio is exercised by the acceptance suite"}});
    }
  }

  // pair diagnose artifacts that differ only in time resolution
  auto family_key = [](const json& cfg) {
    json c = cfg;
    if (c.contains("evolution")) {
      c["evolution"].erase("dt");
      c["evolution"].erase("stride");
    }
    return io::config_hash(c);
  };
  std::map<std::string, std::vector<const RunDir*>> families;
  for (const auto& [k, rd] : runs)
    if (!rd.diagnose.is_null() && !rd.config.is_null())
      families[family_key(rd.config)].push_back(&rd);

  // coarsest/finest-dt pair within a family whose named diagnose block is valid
  auto dt_pair = [&](const char* block) -> std::pair<const RunDir*, const RunDir*> {
    for (const auto& [k, v] : families) {
      std::vector<std::tuple<double, double, const RunDir*>> usable;
      for (const auto* rd : v) {
        json b = jget(rd->diagnose, {block});
        if (b.is_object() && !b.contains("error"))
          usable.emplace_back(jnum(jget(rd->config, {"evolution", "dt"}), 0.0),
                              jnum(jget(rd->config, {"evolution", "stride"}), 0.0), rd);
      }
      if (usable.size() >= 2) {
        std::sort(usable.begin(), usable.end(),
                  [](const auto& a, const auto& b) {
                    return std::make_pair(std::get<0>(a), std::get<1>(a)) <
                           std::make_pair(std::get<0>(b), std::get<1>(b));
                  });
        return {std::get<2>(usable.back()), std::get<2>(usable.front())};  // coarse, fine
      }
    }
    return {nullptr, nullptr};
  };

  {  // 10: modulation residual estimate
    auto [base, fine] = dt_pair("modulation_residual");
    if (!base || !fine)
      add(10, "modulation residual estimate", -1,
          json{{"reason", "need two diagnosed runs differing only in dt"}});
    else {
      const json mb = base->diagnose["modulation_residual"];
      const json mf = fine->diagnose["modulation_residual"];
      const double rb = jnum(mb["ratio_max"]), rf = jnum(mf["ratio_max"]);
      const bool ok = std::isfinite(rb) && rb > 0 &&
                      std::abs(rb - rf) <= 0.1 * std::max(rb, rf) &&
                      jnum_lt(mb["agreement_l2"], 0.05) && jnum_lt(mf["agreement_l2"], 0.05);
      add(10, "modulation residual estimate", ok ? 1 : 0,
          json{{"ratio_max", rb},
               {"ratio_max_refined", rf},
               {"agreement_l2", mb["agreement_l2"]}});
    }
  }
  {  // 11: virial constant stability + ensemble probes
    auto [base, fine] = dt_pair("virial");
    json ens;
    for (const auto& [k, rd] : runs) {
      json e = jget(rd.diagnose, {"ensembles"});
      if (!e.is_null() && !e.contains("error")) ens = e;
    }
    if (!base || !fine || ens.is_null())
      add(11, "virial inequality constant", -1,
          json{{"reason", "need a dt-refined diagnosed pair plus ensemble probes"}});
    else {
      const double cb = jnum(base->diagnose["virial"]["c_emp"]);
      const double cf = jnum(fine->diagnose["virial"]["c_emp"]);
      const bool stable = std::isfinite(cb) && cb > 0 && std::abs(cb - cf) <= 0.1 * cb;
      const bool probes = jnum(jget(ens, {"commutator", "samples"}), 0) >= 100 &&
                          std::isfinite(jnum(jget(ens, {"commutator", "fitted_C"}))) &&
                          jnum(jget(ens, {"pure_power", "samples"}), 0) >= 200 &&
                          std::isfinite(jnum(jget(ens, {"pure_power", "max_ratio"})));
      add(11, "virial inequality constant", (stable && probes) ? 1 : 0,
          json{{"c_emp", cb},
               {"c_emp_refined", cf},
               {"commutator_fitted_C", jget(ens, {"commutator", "fitted_C"})},
               {"pure_power_max_ratio", jget(ens, {"pure_power", "max_ratio"})}});
    }
  }
  {  // 12: long-run trend suite
    const RunDir* trend = nullptr;
    for (const auto& [k, rd] : runs)
      if (jget(rd.config, {"initial", "kind"}) == "phi_packet" && !rd.diagnose.is_null())
        if (!trend || jnum(jget(rd.config, {"evolution", "T"}), 0.0) >
                          jnum(jget(trend->config, {"evolution", "T"}), 0.0))
          trend = &rd;
    if (!trend)
      add(12, "soliton selection trend suite", -1,
          json{{"reason", "need a diagnosed run started from the trapped mode plus a packet"}});
    else {
      const json& d = trend->diagnose;
      json conv = jget(d, {"convergence"});
      json dec = jget(d, {"local_decay"});
      json bsw = jget(d, {"b_sweep"});
      json osc = trend->summary.is_null() ? json() : jget(trend->summary, {"orbital_stability_constant"});
      json checks = json::object();
      bool have = conv.is_object() && !conv.contains("error") && dec.is_object() &&
                  !dec.contains("error") && bsw.is_object() && !bsw.contains("error") &&
                  osc.is_number();
      if (!have)
        add(12, "soliton selection trend suite", -1,
            json{{"reason", "trend run lacks one of the diagnostic blocks"},
                 {"convergence", conv},
                 {"local_decay", dec},
                 {"b_sweep", bsw}});
      else {
        checks["stability_constant"] = json{{"value", osc}, {"pass", jnum_lt(osc, 3.0)}};
        checks["local_decay_final_over_peak"] =
            json{{"value", conv["decay_final_over_peak"]},
                 {"pass", jnum_lt(conv["decay_final_over_peak"], 0.1)}};
        checks["r_deviation"] = json{{"value", conv["r_plus_deviation"]},
                                     {"pass", jnum_lt(conv["r_plus_deviation"], 1e-3)}};
        checks["phase_profile"] = json{{"value", conv["phase_profile_sup"]},
                                       {"pass", jnum_lt(conv["phase_profile_sup"], 5e-3)}};
        checks["decay_integral_saturates"] =
            json{{"value", dec["tail_increment_frac"]},
                 {"pass", jnum_lt(dec["tail_increment_frac"], 0.01)}};
        checks["localized_component_b_trend"] =
            json{{"value", bsw["w_l2t"]}, {"pass", bsw["w_monotone_decreasing"].get<bool>()}};
        bool all = true;
        for (const auto& [k2, v2] : checks.items()) all = all && v2["pass"].get<bool>();
        add(12, "soliton selection trend suite", all ? 1 : 0, checks);
      }
    }
  }
  {  // 13: determinism
    std::map<std::string, std::vector<const RunDir*>> by_hash;
    for (const auto& [k, rd] : runs)
      if (!rd.hash.empty() && !rd.traj_file.empty() && !rd.csv_file.empty())
        by_hash[rd.hash].push_back(&rd);
    const std::vector<const RunDir*>* pair = nullptr;
    for (const auto& [h, v] : by_hash)
      if (v.size() >= 2) pair = &v;
    if (!pair)
      add(13, "byte-identical reruns", -1,
          json{{"reason", "need two run directories with the same config hash"}});
    else {
      auto bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
      };
      const RunDir* a = (*pair)[0];
      const RunDir* b = (*pair)[1];
      const bool ok = bytes(a->traj_file) == bytes(b->traj_file) &&
                      bytes(a->csv_file) == bytes(b->csv_file);
      add(13, "byte-identical reruns", ok ? 1 : 0,
          json{{"dirs", json::array({a->dir.string(), b->dir.string()})}});
    }
  }

  json rep{{"version", kVersion},
           {"criteria", criteria},
           {"summary", json{{"evaluated", passed + failed},
                            {"passed", passed},
                            {"failed", failed},
                            {"skipped", skipped}}}};
  ensure_dir(out);
  io::write_json(join(out, "report.json"), rep);
  for (const auto& c : criteria)
    std::printf("criterion %2d %-34s %s\n", c["id"].get<int>(),
                c["name"].get<std::string>().c_str(), c["status"].get<std::string>().c_str());
  std::printf("report: %d passed, %d failed, %d skipped -> %s\n", passed, failed, skipped,
              join(out, "report.json").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nlslab: numerical experiments for a trapped nonlinear Schrodinger flow"};
  app.require_subcommand(1);

  Common c_spectrum, c_evolve, c_diagnose, c_scatter, c_smoothing, c_branch, c_report;
  std::string diagnose_path, report_path;

  auto* sp = app.add_subcommand("spectrum", "lowest eigenpair and resonance classification");
  add_common(sp, c_spectrum);
  auto* ev = app.add_subcommand("evolve", "integrate the flow and dump the trajectory");
  add_common(ev, c_evolve);
  auto* di = app.add_subcommand("diagnose", "post-process a stored trajectory");
  di->add_option("path", diagnose_path, "run directory or trajectory.bin")->required();
  add_common(di, c_diagnose);
  auto* sc = app.add_subcommand("scatter", "transmission, resolvent, and absorption checks");
  add_common(sc, c_scatter);
  auto* sm = app.add_subcommand("smoothing", "dispersive smoothing ratio ensemble");
  add_common(sm, c_smoothing);
  auto* br = app.add_subcommand("branch", "nonlinear bound-state continuation");
  add_common(br, c_branch);
  auto* rp = app.add_subcommand("report", "grade the artifacts in a run directory");
  rp->add_option("path", report_path, "directory holding prior outputs")->required();
  add_common(rp, c_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sp->parsed()) return cmd_spectrum(load_config(c_spectrum), c_spectrum.out);
    if (ev->parsed()) return cmd_evolve(load_config(c_evolve), c_evolve.out);
    if (di->parsed()) return cmd_diagnose(diagnose_path, c_diagnose);
    if (sc->parsed()) return cmd_scatter(load_config(c_scatter), c_scatter.out);
    if (sm->parsed()) return cmd_smoothing(load_config(c_smoothing), c_smoothing.out);
    if (br->parsed()) return cmd_branch(load_config(c_branch), c_branch.out);
    if (rp->parsed()) return cmd_report(report_path, c_report.out == "." ? report_path : c_report.out);
  } catch (const MissingInputError& e) {
    std::fprintf(stderr, "error (missing inputs): %s\n", e.what());
    return 4;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error (validation): %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error (numerical): %s\n", e.what());
    return 3;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error (config): %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
