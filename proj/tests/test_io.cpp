// Run configuration handling, text artifact formats, and the binary
// trajectory container: merge/override semantics, canonical hashing,
// exact CSV bytes, and bit-exact roundtrips.

#include <catch2/catch_amalgamated.hpp>

#include "nlslab/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

using namespace nlslab;
using io::json;

namespace {

// Unique scratch path under the system temp dir, removed on destruction.
struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& stem) {
    static std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() /
           (stem + "-" + std::to_string(rng()) + ".bin");
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  std::string str() const { return path.string(); }
};

evolution::Trajectory tiny_run() {
  auto grid = build_grid(20.0, 128, Boundary::dirichlet);
  Potential V = sech2_potential(grid, 1.0, 1.0);
  ground_states::Nonlinearity nl(2.0, -1.0);
  auto sd = operator_lab::discrete_eigenpair(V);

  ComplexField u0{grid, 0.02 * sd.phi.v.cast<complexd>()};
  evolution::EvolutionConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_final = 0.05;
  cfg.snapshot_stride = 10;
  cfg.scheme = evolution::Scheme::crank_nicolson;
  return evolution::run(u0, V, nl, cfg);
}

}  // namespace

TEST_CASE("default config parses and carries the documented defaults") {
  io::RunConfig rc = io::parse_config(json::object());

  CHECK(rc.seed == 1);
  CHECK(rc.L == 40.0);
  CHECK(rc.n == 4096);
  CHECK(rc.boundary == Boundary::dirichlet);
  CHECK(rc.pot_kind == "sech2");
  CHECK(rc.depth == 1.0);
  CHECK(rc.width == 1.0);
  CHECK(rc.nl.p == 2.0);
  CHECK(rc.nl.sigma == -1.0);
  CHECK(rc.A == 64.0);
  CHECK(rc.B == 4.0);
  CHECK(rc.kappa == 0.3);
  CHECK(rc.a == 0.2);
  CHECK(rc.s == 2.0);
  CHECK(rc.tau == 0.6);
  CHECK(rc.evo.dt == 1e-3);
  CHECK(rc.evo.t_final == 10.0);
  CHECK(rc.evo.snapshot_stride == 100);
  CHECK(rc.evo.scheme == evolution::Scheme::strang_split);
  CHECK(rc.evo.linear == evolution::LinearSubstep::eigenbasis);
  CHECK(rc.evo.stencil == operator_lab::Stencil::order2);
  CHECK(rc.evo.modulation);
  CHECK_FALSE(rc.evo.sponge.enabled);
  CHECK(rc.init_kind == "soliton");
  CHECK(rc.k_values == std::vector<double>{0.5, 1.0, 2.0});
  CHECK(rc.lambda_values == std::vector<double>{0.25, 1.0});
  CHECK(rc.lap_a == 0.01);

  // the resolved tree answers for every leaf and hashes deterministically
  CHECK(rc.resolved == io::default_config_json());
  const std::string h = io::config_hash(rc.resolved);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(h == io::config_hash(rc.resolved));
}

TEST_CASE("user keys merge over defaults; unknown keys and bad types are rejected") {
  {
    io::RunConfig rc = io::parse_config(json{{"grid", {{"n", 512}}}});
    CHECK(rc.n == 512);
    CHECK(rc.L == 40.0);  // untouched sibling keeps its default
  }
  {
    // integer literal for a double-valued leaf is accepted
    io::RunConfig rc = io::parse_config(json{{"grid", {{"L", 41}}}});
    CHECK(rc.L == 41.0);
  }

  CHECK_THROWS_AS(io::parse_config(json{{"grids", json::object()}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"grid", {{"m", 99}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"grid", {{"n", "big"}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"grid", {{"boundary", 3}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"grid", 3}}), ValidationError);

  // enum leaves validate their value set
  CHECK_THROWS_AS(io::parse_config(json{{"grid", {{"boundary", "open"}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"evolution", {{"scheme", "euler"}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"evolution", {{"linear", "fft"}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"evolution", {{"stencil", 3}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"potential", {{"kind", "well"}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"potential", {{"kind", "file"}}}}), ValidationError);
  CHECK_THROWS_AS(io::parse_config(json{{"initial", {{"kind", "bump"}}}}), ValidationError);

  CHECK(io::parse_config(json{{"grid", {{"boundary", "periodic"}}}}).boundary ==
        Boundary::periodic);
}

TEST_CASE("overrides parse dotted keys and JSON literals") {
  json j = json::object();

  io::apply_override(j, "grid.n=1024");
  CHECK(j["grid"]["n"] == json(1024));  // numeric literal stays numeric

  io::apply_override(j, "evolution.scheme=crank_nicolson");
  CHECK(j["evolution"]["scheme"] == json("crank_nicolson"));  // bare word -> string

  io::apply_override(j, "seed=7");
  CHECK(j["seed"] == json(7));  // top-level leaf, no dot

  io::apply_override(j, "scatter.k_values=[0.5,1]");
  CHECK(j["scatter"]["k_values"] == json::array({0.5, 1}));

  io::apply_override(j, "potential.kind=\"zero\"");
  CHECK(j["potential"]["kind"] == json("zero"));  // quoted JSON string

  io::apply_override(j, "evolution.sponge=true");
  CHECK(j["evolution"]["sponge"] == json(true));

  CHECK_THROWS_AS(io::apply_override(j, "=5"), ValidationError);
  CHECK_THROWS_AS(io::apply_override(j, "noequals"), ValidationError);
  CHECK_THROWS_AS(io::apply_override(j, "a.b.c=1"), ValidationError);
  CHECK_THROWS_AS(io::apply_override(j, "grid.=1"), ValidationError);

  // overrides participate in validation like file keys do
  json bad = json::object();
  io::apply_override(bad, "grid.m=1");
  CHECK_THROWS_AS(io::parse_config(bad), ValidationError);
}

TEST_CASE("canonical dump is stable and the hash pins every leaf") {
  json j;
  j["b"] = 1;
  j["a"] = 2;
  CHECK(io::canonical_dump(j) == "{\n  \"a\": 2,\n  \"b\": 1\n}\n");

  // FNV-1a 64-bit reference vectors
  CHECK(io::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(io::hash_hex(0xdeadbeefull) == "00000000deadbeef");

  const json base = io::default_config_json();
  json tweaked = base;
  tweaked["grid"]["n"] = 2048;
  CHECK(io::config_hash(base) != io::config_hash(tweaked));
  CHECK(io::config_hash(base) == io::config_hash(io::default_config_json()));
}

TEST_CASE("csv serialization is exact bytes") {
  io::CsvTable t;
  t.columns = {"t", "x"};
  t.rows = {{1.0, 0.5}, {2.5, 1e-17}};
  const std::string got = io::csv_to_string(t, "deadbeef00000000");
  const std::string want = std::string("# nlslab ") + kVersion +
                           " config deadbeef00000000\n"
                           "t,x\n"
                           "1,0.5\n"
                           "2.5,1.0000000000000001e-17\n";
  CHECK(got == want);

  // %.17g reproduces the double exactly on read-back
  for (double x : {1.0 / 3.0, 1e300, -0.1, 123456789.123456789}) {
    CHECK(std::stod(io::fmt_g17(x)) == x);
  }

  io::CsvTable bad;
  bad.columns = {"a", "b"};
  bad.rows = {{1.0}};
  CHECK_THROWS_AS(io::csv_to_string(bad, "x"), ValidationError);
}

TEST_CASE("trajectory container roundtrips bit-exactly") {
  const evolution::Trajectory traj = tiny_run();
  REQUIRE(traj.snaps.size() >= 3);
  REQUIRE(traj.snaps.front().mod.has_value());

  TempFile f("nlslab-traj");
  io::write_trajectory(f.str(), traj, "0123456789abcdef");
  const evolution::Trajectory back = io::read_trajectory(f.str());

  CHECK(back.grid->n == traj.grid->n);
  CHECK(back.grid->L == traj.grid->L);
  CHECK(back.grid->boundary == traj.grid->boundary);

  CHECK(back.V.kind == traj.V.kind);
  CHECK(back.V.depth == traj.V.depth);
  CHECK(back.V.width == traj.V.width);
  CHECK(back.V.v == traj.V.v);  // sech2 is rebuilt analytically: bit-exact

  CHECK(back.nl.p == traj.nl.p);
  CHECK(back.nl.sigma == traj.nl.sigma);

  CHECK(back.config.scheme == traj.config.scheme);
  CHECK(back.config.linear == traj.config.linear);
  CHECK(back.config.stencil == traj.config.stencil);
  CHECK(back.config.dt == traj.config.dt);
  CHECK(back.config.t_final == traj.config.t_final);
  CHECK(back.config.snapshot_stride == traj.config.snapshot_stride);
  CHECK(back.config.sponge.enabled == traj.config.sponge.enabled);
  CHECK(back.config.modulation == traj.config.modulation);
  CHECK(back.config.small_data_radius == traj.config.small_data_radius);

  CHECK(back.aborted == traj.aborted);
  CHECK(back.abort_time == traj.abort_time);
  CHECK(back.abort_reason == traj.abort_reason);
  CHECK(back.decomposition_failed == traj.decomposition_failed);
  CHECK(back.wavefront_time == traj.wavefront_time);
  CHECK(back.sponge_absorbed == traj.sponge_absorbed);

  REQUIRE(back.snaps.size() == traj.snaps.size());
  for (size_t k = 0; k < traj.snaps.size(); ++k) {
    const auto& a = traj.snaps[k];
    const auto& b = back.snaps[k];
    CHECK(b.t == a.t);
    REQUIRE(b.mod.has_value() == a.mod.has_value());
    CHECK(b.u.v == a.u.v);
    if (a.mod) {
      CHECK(b.mod->z == a.mod->z);
      CHECK(b.mod->residual_norm == a.mod->residual_norm);
      CHECK(b.mod->reconstruction_c == a.mod->reconstruction_c);
      CHECK(b.mod->eta.v == a.mod->eta.v);
    }
  }

  REQUIRE(back.conserved.size() == traj.conserved.size());
  for (size_t k = 0; k < traj.conserved.size(); ++k) {
    CHECK(back.conserved[k].t == traj.conserved[k].t);
    CHECK(back.conserved[k].mass == traj.conserved[k].mass);
    CHECK(back.conserved[k].energy == traj.conserved[k].energy);
  }
}

TEST_CASE("trajectory reader rejects missing, truncated, and foreign files") {
  CHECK_THROWS_AS(io::read_trajectory("/nonexistent/path/t.bin"), MissingInputError);

  const evolution::Trajectory traj = tiny_run();
  TempFile f("nlslab-trunc");
  io::write_trajectory(f.str(), traj, "0123456789abcdef");

  {
    // truncate to 100 bytes
    std::filesystem::resize_file(f.path, 100);
    CHECK_THROWS_AS(io::read_trajectory(f.str()), ValidationError);
  }
  {
    // corrupt the magic
    io::write_trajectory(f.str(), traj, "0123456789abcdef");
    std::fstream io_(f.str(), std::ios::in | std::ios::out | std::ios::binary);
    io_.put('X');
    io_.close();
    CHECK_THROWS_AS(io::read_trajectory(f.str()), ValidationError);
  }
}

TEST_CASE("config files load with merge semantics") {
  TempFile f("nlslab-config");
  {
    std::ofstream out(f.str());
    out << "{\"grid\": {\"n\": 256}, \"seed\": 9}\n";
  }
  json j = io::load_config_file(f.str());
  io::RunConfig rc = io::parse_config(j);
  CHECK(rc.n == 256);
  CHECK(rc.seed == 9);
  CHECK(rc.L == 40.0);

  CHECK_THROWS_AS(io::load_config_file("/nonexistent/c.json"), MissingInputError);

  TempFile g("nlslab-badjson");
  {
    std::ofstream out(g.str());
    out << "{not json";
  }
  CHECK_THROWS_AS(io::load_config_file(g.str()), ValidationError);
}
