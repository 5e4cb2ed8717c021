#pragma once

// Artifact plumbing for the experiment runner: a flat two-level JSON config
// with typo-rejecting key validation, canonical serialization + content hash
// so every output can name the exact inputs that produced it, a CSV writer,
// and a self-describing binary trajectory dump that round-trips through the
// diagnose pipeline without re-running the flow.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlslab/evolution.hpp"

namespace nlslab::io {

using ground_states::Nonlinearity;
using json = nlohmann::json;  // map-backed: keys always serialize sorted

// ---------------------------------------------------------------------------
// Config schema.  Two levels only: top-level sections hold scalar (or flat
// array) leaves.  Every key below is the complete vocabulary; anything else
// in a user file is rejected so sweep typos fail loudly instead of silently
// running the defaults.

inline json default_config_json() {
  json j;
  j["seed"] = std::uint64_t{1};
  j["grid"] = {{"L", 40.0}, {"n", 4096}, {"boundary", "dirichlet"}};
  j["potential"] = {{"kind", "sech2"}, {"depth", 1.0}, {"width", 1.0}, {"file", ""}};
  j["nonlinearity"] = {{"p", 2.0}, {"sigma", -1.0}};
  j["weights"] = {{"A", 64.0}, {"B", 4.0},   {"kappa", 0.3},
                  {"a", 0.2},  {"s", 2.0},   {"tau", 0.6}};
  j["evolution"] = {{"dt", 1e-3},
                    {"T", 10.0},
                    {"scheme", "strang"},
                    {"linear", "eigenbasis"},
                    {"stencil", 2},
                    {"stride", 100},
                    {"modulation", true},
                    {"small_data_radius", 0.2},
                    {"sponge", false},
                    {"sponge_start", 0.75},
                    {"sponge_strength", 1.0}};
  j["initial"] = {{"kind", "soliton"},
                  {"z_re", 0.01},
                  {"z_im", 0.0},
                  {"phi_coef", 0.01},
                  {"packet_scale", 0.005},
                  {"amplitude", 0.01},
                  {"center", 0.0},
                  {"width", 2.0},
                  {"velocity", 0.0}};
  j["scatter"] = {{"k_values", json::array({0.5, 1.0, 2.0})},
                  {"k_small", 0.01},
                  {"lambda_values", json::array({0.25, 1.0})},
                  {"lap_a", 0.01},
                  {"columns", 20}};
  j["smoothing"] = {{"count", 50}, {"horizon", 40.0}, {"duhamel", true}};
  j["branch"] = {{"r_min", 1e-3}, {"r_max", 0.1}, {"count", 13},
                 {"roundtrip_count", 100}, {"eta_scale", 0.05}};
  return j;
}

namespace detail {

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;  // int literals for double leaves are fine
  return a.type() == b.type();
}

// Deep-update `base` with `user`, rejecting unknown sections/keys and type
// mismatches.  Only two levels exist, so the walk is explicit.
inline void merge_checked(json& base, const json& user) {
  if (!user.is_object()) throw ValidationError("config: top level must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!base.contains(it.key()))
      throw ValidationError("config: unknown section or key '" + it.key() + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it.value().is_object())
        throw ValidationError("config: section '" + it.key() + "' must be an object");
      for (auto kv = it.value().begin(); kv != it.value().end(); ++kv) {
        if (!slot.contains(kv.key()))
          throw ValidationError("config: unknown key '" + it.key() + "." + kv.key() + "'");
        if (!same_kind(slot[kv.key()], kv.value()))
          throw ValidationError("config: wrong value type for '" + it.key() + "." + kv.key() + "'");
        slot[kv.key()] = kv.value();
      }
    } else {
      if (!same_kind(slot, it.value()))
        throw ValidationError("config: wrong value type for '" + it.key() + "'");
      slot = it.value();
    }
  }
}

}  // namespace detail

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config parse failure in " + path + ": " + e.what());
  }
  return j;
}

// `--override sec.key=value`; the value is parsed as a JSON literal when it
// is one (numbers, booleans), otherwise taken as a string.
inline void apply_override(json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError("override must look like key=value or section.key=value: " + kv);
  const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json val;
  try {
    val = json::parse(raw);
  } catch (const json::exception&) {
    val = raw;  // bare strings need no quotes on the command line
  }
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    j[key] = val;
  } else {
    const std::string sec = key.substr(0, dot), leaf = key.substr(dot + 1);
    if (leaf.empty() || leaf.find('.') != std::string::npos)
      throw ValidationError("override key must have at most one dot: " + kv);
    j[sec][leaf] = val;
  }
}

// ---------------------------------------------------------------------------
// Typed view of the merged config.

struct RunConfig {
  std::uint64_t seed = 1;

  double L = 40.0;
  int n = 4096;
  Boundary boundary = Boundary::dirichlet;

  std::string pot_kind = "sech2";
  double depth = 1.0, width = 1.0;
  std::string pot_file;

  Nonlinearity nl{2.0, -1.0};

  double A = 64.0, B = 4.0, kappa = 0.3, a = 0.2, s = 2.0, tau = 0.6;

  evolution::EvolutionConfig evo;

  std::string init_kind = "soliton";
  complexd z0{0.01, 0.0};
  double phi_coef = 0.01, packet_scale = 0.005;
  double amplitude = 0.01, center = 0.0, gwidth = 2.0, velocity = 0.0;

  std::vector<double> k_values{0.5, 1.0, 2.0};
  double k_small = 0.01;
  std::vector<double> lambda_values{0.25, 1.0};
  double lap_a = 0.01;
  int columns = 20;

  int smoothing_count = 50;
  double smoothing_horizon = 40.0;
  bool run_duhamel = true;

  double r_min = 1e-3, r_max = 0.1;
  int branch_count = 13;
  int roundtrip_count = 100;
  double eta_scale = 0.05;

  json resolved;  // the exact merged tree the run is answering for
};

inline RunConfig parse_config(const json& user) {
  json j = default_config_json();
  detail::merge_checked(j, user);

  RunConfig rc;
  rc.resolved = j;
  rc.seed = j["seed"].get<std::uint64_t>();

  rc.L = j["grid"]["L"].get<double>();
  rc.n = j["grid"]["n"].get<int>();
  const std::string bd = j["grid"]["boundary"].get<std::string>();
  if (bd == "dirichlet")
    rc.boundary = Boundary::dirichlet;
  else if (bd == "periodic")
    rc.boundary = Boundary::periodic;
  else
    throw ValidationError("config: grid.boundary must be dirichlet or periodic");

  rc.pot_kind = j["potential"]["kind"].get<std::string>();
  if (rc.pot_kind != "sech2" && rc.pot_kind != "zero" && rc.pot_kind != "file")
    throw ValidationError("config: potential.kind must be sech2, zero, or file");
  rc.depth = j["potential"]["depth"].get<double>();
  rc.width = j["potential"]["width"].get<double>();
  rc.pot_file = j["potential"]["file"].get<std::string>();
  if (rc.pot_kind == "file" && rc.pot_file.empty())
    throw ValidationError("config: potential.kind = file needs potential.file");

  rc.nl = Nonlinearity(j["nonlinearity"]["p"].get<double>(),
                       j["nonlinearity"]["sigma"].get<double>());

  rc.A = j["weights"]["A"].get<double>();
  rc.B = j["weights"]["B"].get<double>();
  rc.kappa = j["weights"]["kappa"].get<double>();
  rc.a = j["weights"]["a"].get<double>();
  rc.s = j["weights"]["s"].get<double>();
  rc.tau = j["weights"]["tau"].get<double>();

  rc.evo.dt = j["evolution"]["dt"].get<double>();
  rc.evo.t_final = j["evolution"]["T"].get<double>();
  const std::string sch = j["evolution"]["scheme"].get<std::string>();
  if (sch == "strang")
    rc.evo.scheme = evolution::Scheme::strang_split;
  else if (sch == "crank_nicolson")
    rc.evo.scheme = evolution::Scheme::crank_nicolson;
  else
    throw ValidationError("config: evolution.scheme must be strang or crank_nicolson");
  const std::string lin = j["evolution"]["linear"].get<std::string>();
  if (lin == "eigenbasis")
    rc.evo.linear = evolution::LinearSubstep::eigenbasis;
  else if (lin == "spectral")
    rc.evo.linear = evolution::LinearSubstep::spectral;
  else
    throw ValidationError("config: evolution.linear must be eigenbasis or spectral");
  const int st = j["evolution"]["stencil"].get<int>();
  if (st == 2)
    rc.evo.stencil = operator_lab::Stencil::order2;
  else if (st == 4)
    rc.evo.stencil = operator_lab::Stencil::order4;
  else
    throw ValidationError("config: evolution.stencil must be 2 or 4");
  rc.evo.snapshot_stride = j["evolution"]["stride"].get<int>();
  rc.evo.modulation = j["evolution"]["modulation"].get<bool>();
  rc.evo.small_data_radius = j["evolution"]["small_data_radius"].get<double>();
  rc.evo.sponge.enabled = j["evolution"]["sponge"].get<bool>();
  rc.evo.sponge.start_fraction = j["evolution"]["sponge_start"].get<double>();
  rc.evo.sponge.strength = j["evolution"]["sponge_strength"].get<double>();

  rc.init_kind = j["initial"]["kind"].get<std::string>();
  if (rc.init_kind != "zero" && rc.init_kind != "soliton" && rc.init_kind != "phi_packet" &&
      rc.init_kind != "packet" && rc.init_kind != "gaussian")
    throw ValidationError(
        "config: initial.kind must be zero, soliton, phi_packet, packet, or gaussian");
  rc.z0 = complexd(j["initial"]["z_re"].get<double>(), j["initial"]["z_im"].get<double>());
  rc.phi_coef = j["initial"]["phi_coef"].get<double>();
  rc.packet_scale = j["initial"]["packet_scale"].get<double>();
  rc.amplitude = j["initial"]["amplitude"].get<double>();
  rc.center = j["initial"]["center"].get<double>();
  rc.gwidth = j["initial"]["width"].get<double>();
  rc.velocity = j["initial"]["velocity"].get<double>();

  rc.k_values = j["scatter"]["k_values"].get<std::vector<double>>();
  rc.k_small = j["scatter"]["k_small"].get<double>();
  rc.lambda_values = j["scatter"]["lambda_values"].get<std::vector<double>>();
  rc.lap_a = j["scatter"]["lap_a"].get<double>();
  rc.columns = j["scatter"]["columns"].get<int>();

  rc.smoothing_count = j["smoothing"]["count"].get<int>();
  rc.smoothing_horizon = j["smoothing"]["horizon"].get<double>();
  rc.run_duhamel = j["smoothing"]["duhamel"].get<bool>();

  rc.r_min = j["branch"]["r_min"].get<double>();
  rc.r_max = j["branch"]["r_max"].get<double>();
  rc.branch_count = j["branch"]["count"].get<int>();
  rc.roundtrip_count = j["branch"]["roundtrip_count"].get<int>();
  rc.eta_scale = j["branch"]["eta_scale"].get<double>();
  return rc;
}

// ---------------------------------------------------------------------------
// Canonical text + content hash.  nlohmann's map backing already sorts keys,
// so dump() is stable; the hash is FNV-1a 64 over that canonical text.

inline std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline std::string config_hash(const json& resolved) {
  return hash_hex(fnv1a64(canonical_dump(resolved)));
}

// ---------------------------------------------------------------------------
// Text artifacts.

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);  // binary: keep LF endings everywhere
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out << body;
  if (!out) throw ValidationError("short write: " + path);
}

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// One comment line carrying provenance, then the header row, then data.
inline std::string csv_to_string(const CsvTable& t, const std::string& hash) {
  std::ostringstream out;
  out << "# nlslab " << kVersion << " config " << hash << "\n";
  for (size_t c = 0; c < t.columns.size(); ++c)
    out << t.columns[c] << (c + 1 < t.columns.size() ? "," : "\n");
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw ValidationError("csv row width mismatch");
    for (size_t c = 0; c < row.size(); ++c)
      out << fmt_g17(row[c]) << (c + 1 < row.size() ? "," : "\n");
  }
  return out.str();
}

inline void write_csv(const std::string& path, const CsvTable& t, const std::string& hash) {
  write_text(path, csv_to_string(t, hash));
}

inline void write_json(const std::string& path, const json& j) {
  write_text(path, canonical_dump(j));
}

// ---------------------------------------------------------------------------
// Binary trajectory dump.  Fixed-width little-endian fields, no padding:
// the reader below is the format's one consumer and documents the layout.

namespace detail {

inline void put_bytes(std::ostream& o, const void* p, size_t n) {
  o.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void put_u64(std::ostream& o, std::uint64_t v) { put_bytes(o, &v, 8); }
inline void put_u32(std::ostream& o, std::uint32_t v) { put_bytes(o, &v, 4); }
inline void put_u8(std::ostream& o, std::uint8_t v) { put_bytes(o, &v, 1); }
inline void put_f64(std::ostream& o, double v) { put_bytes(o, &v, 8); }
inline void put_cvec(std::ostream& o, const VectorXcd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    put_f64(o, v[i].real());
    put_f64(o, v[i].imag());
  }
}

struct ByteReader {
  std::ifstream in;
  explicit ByteReader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw MissingInputError("trajectory file not found: " + path);
  }
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw ValidationError("trajectory file truncated");
  }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  VectorXcd cvec(int n) {
    VectorXcd v(n);
    for (int i = 0; i < n; ++i) {
      const double re = f64(), im = f64();
      v[i] = complexd(re, im);
    }
    return v;
  }
};

constexpr char kTrajMagic[8] = {'N', 'L', 'S', 'T', 'R', 'J', '0', '1'};

}  // namespace detail

inline void write_trajectory(const std::string& path, const evolution::Trajectory& traj,
                             const std::string& hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  using namespace detail;
  put_bytes(out, kTrajMagic, 8);
  put_u64(out, fnv1a64(hash));
  char ver[16] = {0};
  std::strncpy(ver, kVersion, sizeof(ver) - 1);
  put_bytes(out, ver, 16);

  const auto& g = *traj.grid;
  put_u64(out, static_cast<std::uint64_t>(g.n));
  put_f64(out, g.L);
  put_u32(out, static_cast<std::uint32_t>(g.boundary));

  put_u32(out, static_cast<std::uint32_t>(traj.V.kind));
  put_f64(out, traj.V.depth);
  put_f64(out, traj.V.width);
  for (int i = 0; i < g.n; ++i) put_f64(out, traj.V.v[i]);

  put_f64(out, traj.nl.p);
  put_f64(out, traj.nl.sigma);

  const auto& c = traj.config;
  put_u32(out, static_cast<std::uint32_t>(c.scheme));
  put_u32(out, static_cast<std::uint32_t>(c.linear));
  put_u32(out, static_cast<std::uint32_t>(c.stencil));
  put_f64(out, c.dt);
  put_f64(out, c.t_final);
  put_u64(out, static_cast<std::uint64_t>(c.snapshot_stride));
  put_u8(out, c.sponge.enabled ? 1 : 0);
  put_f64(out, c.sponge.start_fraction);
  put_f64(out, c.sponge.strength);
  put_u8(out, c.modulation ? 1 : 0);
  put_f64(out, c.small_data_radius);

  put_u8(out, traj.aborted ? 1 : 0);
  put_f64(out, traj.abort_time);
  put_u8(out, traj.decomposition_failed ? 1 : 0);
  put_f64(out, traj.decomposition_failed_time);
  put_f64(out, traj.wavefront_time);
  put_f64(out, traj.sponge_absorbed);
  put_f64(out, traj.sponge_flux_integral);
  put_f64(out, traj.sponge_zone_mass_delta);
  put_u32(out, static_cast<std::uint32_t>(traj.abort_reason.size()));
  put_bytes(out, traj.abort_reason.data(), traj.abort_reason.size());

  put_u64(out, traj.snaps.size());
  for (const auto& s : traj.snaps) {
    put_f64(out, s.t);
    put_u8(out, s.mod ? 1 : 0);
    if (s.mod) {
      put_f64(out, s.mod->z.real());
      put_f64(out, s.mod->z.imag());
      put_f64(out, s.mod->residual_norm);
      put_f64(out, s.mod->reconstruction_c);
    }
    put_cvec(out, s.u.v);
    if (s.mod) put_cvec(out, s.mod->eta.v);
  }

  put_u64(out, traj.conserved.size());
  for (const auto& r : traj.conserved) {
    put_f64(out, r.t);
    put_f64(out, r.mass);
    put_f64(out, r.energy);
  }
  if (!out) throw ValidationError("short write: " + path);
}

inline evolution::Trajectory read_trajectory(const std::string& path) {
  detail::ByteReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, detail::kTrajMagic, 8) != 0)
    throw ValidationError("not a trajectory file: " + path);
  r.u64();  // config hash echo; informational
  char ver[16];
  r.bytes(ver, 16);

  const int n = static_cast<int>(r.u64());
  const double L = r.f64();
  const auto bd = static_cast<Boundary>(r.u32());
  if (n < 3 || !(L > 0)) throw ValidationError("trajectory header corrupt: " + path);
  GridPtr grid = build_grid(L, n, bd);

  evolution::Trajectory traj;
  traj.grid = grid;
  const auto pk = static_cast<PotentialKind>(r.u32());
  const double depth = r.f64(), width = r.f64();
  VectorXd vs(n);
  for (int i = 0; i < n; ++i) vs[i] = r.f64();
  if (pk == PotentialKind::zero)
    traj.V = zero_potential(grid);
  else if (pk == PotentialKind::scaled_sech2)
    traj.V = sech2_potential(grid, depth, width);
  else
    traj.V = Potential{grid, pk, depth, width, std::move(vs), {}, {}, true};

  const double nl_p = r.f64(), nl_sigma = r.f64();
  traj.nl = Nonlinearity(nl_p, nl_sigma);

  traj.config.scheme = static_cast<evolution::Scheme>(r.u32());
  traj.config.linear = static_cast<evolution::LinearSubstep>(r.u32());
  traj.config.stencil = static_cast<operator_lab::Stencil>(r.u32());
  traj.config.dt = r.f64();
  traj.config.t_final = r.f64();
  traj.config.snapshot_stride = static_cast<int>(r.u64());
  traj.config.sponge.enabled = r.u8() != 0;
  traj.config.sponge.start_fraction = r.f64();
  traj.config.sponge.strength = r.f64();
  traj.config.modulation = r.u8() != 0;
  traj.config.small_data_radius = r.f64();

  traj.aborted = r.u8() != 0;
  traj.abort_time = r.f64();
  traj.decomposition_failed = r.u8() != 0;
  traj.decomposition_failed_time = r.f64();
  traj.wavefront_time = r.f64();
  traj.sponge_absorbed = r.f64();
  traj.sponge_flux_integral = r.f64();
  traj.sponge_zone_mass_delta = r.f64();
  const auto reason_len = r.u32();
  traj.abort_reason.resize(reason_len);
  if (reason_len) r.bytes(traj.abort_reason.data(), reason_len);

  const auto n_snap = r.u64();
  traj.snaps.reserve(n_snap);
  for (std::uint64_t k = 0; k < n_snap; ++k) {
    evolution::Snapshot s;
    s.t = r.f64();
    const bool has_mod = r.u8() != 0;
    complexd z;
    double resn = 0, recc = 0;
    if (has_mod) {
      const double zr = r.f64(), zi = r.f64();
      z = complexd(zr, zi);
      resn = r.f64();
      recc = r.f64();
    }
    s.u = ComplexField{grid, r.cvec(n)};
    if (has_mod) {
      modulation::ModulationState m;
      m.t = s.t;
      m.z = z;
      m.residual_norm = resn;
      m.reconstruction_c = recc;
      m.eta = ComplexField{grid, r.cvec(n)};
      s.mod = std::move(m);
    }
    traj.snaps.push_back(std::move(s));
  }

  const auto n_cons = r.u64();
  traj.conserved.reserve(n_cons);
  for (std::uint64_t k = 0; k < n_cons; ++k) {
    evolution::ConservedRecord rec;
    rec.t = r.f64();
    rec.mass = r.f64();
    rec.energy = r.f64();
    traj.conserved.push_back(rec);
  }
  return traj;
}

}  // namespace nlslab::io
