#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "nlslab/operator_lab.hpp"

using namespace nlslab;
using namespace nlslab::operator_lab;

namespace {
const double kLambdaShallow = (3.0 - std::sqrt(5.0)) / 2.0;  // lowest level of the depth-1 well
}

TEST_CASE("hamiltonian on a plane-wave mode, free periodic operator") {
  auto g = build_grid(10.0, 256, Boundary::periodic);
  auto V = zero_potential(g);
  const double k = M_PI * 5.0 / g->L;  // grid-resonant mode
  auto psi = field_from(g, [&](double x) { return std::exp(complexd(0, k * x)); });
  auto H2 = apply_hamiltonian(psi, V, Stencil::order2);

  // exact discrete symbol of the three-point stencil
  const double sym2 = (2.0 - 2.0 * std::cos(k * g->h)) / (g->h * g->h);
  double err_sym = 0, err_cont = 0;
  for (int i = 0; i < g->n; ++i) {
    err_sym = std::max(err_sym, std::abs(H2.v[i] - sym2 * psi.v[i]));
    err_cont = std::max(err_cont, std::abs(H2.v[i] - k * k * psi.v[i]));
  }
  CHECK(err_sym < 1e-10);
  CHECK(err_cont < std::pow(k, 4) * g->h * g->h / 8.0);  // stencil accuracy

  auto H4 = apply_hamiltonian(psi, V, Stencil::order4);
  double err4 = 0;
  for (int i = 0; i < g->n; ++i) err4 = std::max(err4, std::abs(H4.v[i] - k * k * psi.v[i]));
  CHECK(err4 < std::pow(k, 6) * std::pow(g->h, 4));

  auto zero = make_field(g);
  CHECK(norm_l2(apply_hamiltonian(zero, V)) == 0.0);

  auto other = zero_potential(build_grid(10.0, 128, Boundary::periodic));
  CHECK_THROWS_AS(apply_hamiltonian(psi, other), ValidationError);
}

TEST_CASE("hamiltonian closed form: (-d2 - 2 sech^2) sech = -sech") {
  auto g = build_grid(20.0, 2048, Boundary::dirichlet);
  auto V = sech2_potential(g, 2.0, 1.0);
  auto psi = field_from(g, [](double x) { return 1.0 / std::cosh(x); });
  for (auto st : {Stencil::order2, Stencil::order4}) {
    auto H = apply_hamiltonian(psi, V, st);
    double err = 0;
    for (int i = 0; i < g->n; ++i) {
      if (std::abs(g->x[i]) > 15.0) continue;  // away from the box edge
      err = std::max(err, std::abs(H.v[i] + psi.v[i]));
    }
    // truncation bounds: h^2 |sech''''|_inf / 12 resp. h^4 |sech^(6)|_inf / 90
    const double h = g->h;
    CHECK(err < 1.2 * (st == Stencil::order2 ? 5.0 * h * h / 12.0 : 61.0 * h * h * h * h / 90.0));
  }
}

TEST_CASE("discrete self-adjointness on random fields") {
  std::mt19937_64 rng(21);
  for (auto bk : {Boundary::dirichlet, Boundary::periodic}) {
    auto g = build_grid(25.0, 384, bk);
    auto V = sech2_potential(g, 1.0, 1.0);
    for (auto st : {Stencil::order2, Stencil::order4}) {
      for (int trial = 0; trial < 10; ++trial) {
        auto a = random_smooth_field(g, rng);
        auto b = random_smooth_field(g, rng);
        const double scale = norm_l2(a) * norm_l2(b) / (g->h * g->h);
        CHECK(std::abs(cpair(apply_hamiltonian(a, V, st), b) - cpair(a, apply_hamiltonian(b, V, st))) <
              1e-10 * scale);
      }
    }
  }
}

TEST_CASE("eigenpair oracle: depth-2 well") {
  auto g = build_grid(40.0, 4096, Boundary::dirichlet);
  auto V = sech2_potential(g, 2.0, 1.0);
  auto sd = discrete_eigenpair(V);
  CHECK(std::abs(sd.lambda_extrapolated - 1.0) < 1e-6);
  CHECK(sd.n_negative == 1);
  CHECK_FALSE(sd.multiple_eigenvalues);
  CHECK(std::abs(norm_l2(sd.phi) - 1.0) < 1e-12);
  CHECK(sd.residual < 1e-10);
  double min_phi = 1e300;
  for (int i = 0; i < g->n; ++i) min_phi = std::min(min_phi, sd.phi.v[i].real());
  CHECK(min_phi > 0.0);  // strict positivity on the default path

  // eigenfunction against sech(x)/sqrt(2); 4th-order stencil keeps the
  // discretization error of the vector itself below the stated tolerance
  auto sd4 = discrete_eigenpair(V, Stencil::order4);
  auto exact = field_from(g, [](double x) { return 1.0 / (std::sqrt(2.0) * std::cosh(x)); });
  ComplexField diff{g, sd4.phi.v - exact.v};
  CHECK(norm_l2(diff) < 1e-5);
  CHECK(std::abs(sd4.lambda_extrapolated - 1.0) < 1e-8);
}

TEST_CASE("eigenpair oracle: depth-1 well and free operator") {
  auto g = build_grid(40.0, 4096, Boundary::dirichlet);
  auto V = sech2_potential(g, 1.0, 1.0);
  auto sd = discrete_eigenpair(V);
  CHECK(std::abs(sd.lambda_extrapolated - kLambdaShallow) < 1e-6);
  CHECK(sd.n_negative == 1);

  CHECK_THROWS_AS(discrete_eigenpair(zero_potential(g)), NoBoundStateError);
}

TEST_CASE("deep well carries two levels and raises the flag") {
  auto g = build_grid(20.0, 1024, Boundary::dirichlet);
  auto V = sech2_potential(g, 6.0, 1.0);  // levels at -4 and -1
  auto sd = discrete_eigenpair(V);
  CHECK(sd.n_negative == 2);
  CHECK(sd.multiple_eigenvalues);
  CHECK(std::abs(sd.lambda_extrapolated - 4.0) < 1e-5);
}

TEST_CASE("eigenvalue mesh convergence at the stencil order") {
  auto run = [](int n, Stencil st) {
    auto g = build_grid(30.0, n, Boundary::dirichlet);
    return discrete_eigenpair(sech2_potential(g, 2.0, 1.0), st).lambda_coarse;
  };
  for (auto st : {Stencil::order2, Stencil::order4}) {
    const double e1 = std::abs(run(512, st) - 1.0);
    const double e2 = std::abs(run(1023, st) - 1.0);  // h exactly halves at 2n-1
    const double ratio = e1 / e2;
    const double expect = st == Stencil::order2 ? 4.0 : 16.0;
    CHECK(ratio > 0.7 * expect);
    CHECK(ratio < 1.4 * expect);
  }
}

TEST_CASE("projections: completeness, idempotence, orthogonality") {
  auto g = build_grid(40.0, 1024, Boundary::dirichlet);
  auto V = sech2_potential(g, 1.0, 1.0);
  auto sd = discrete_eigenpair(V);

  auto p_phi = project_p(sd.phi, sd);
  ComplexField d{g, p_phi.v - sd.phi.v};
  CHECK(norm_l2(d) < 1e-12);
  ComplexField iphi{g, complexd(0, 1) * sd.phi.v};
  CHECK(norm_l2(project_pc(iphi, sd)) < 1e-12);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto u = random_smooth_field(g, rng);
    auto p = project_p(u, sd);
    auto pc = project_pc(u, sd);
    // complement is defined by subtraction, so completeness holds to rounding
    ComplexField sum{g, p.v + pc.v - u.v};
    CHECK(norm_l2(sum) < 1e-14 * std::max(1.0, norm_l2(u)));
    auto pp = project_p(p, sd);
    ComplexField ip{g, pp.v - p.v};
    CHECK(norm_l2(ip) < 1e-12 * std::max(1.0, norm_l2(u)));
    CHECK(std::abs(rpair(pc, sd.phi)) < 1e-12 * norm_l2(u));
    CHECK(std::abs(rpair(pc, iphi)) < 1e-12 * norm_l2(u));
    auto ppc = project_p(pc, sd);
    CHECK(norm_l2(ppc) < 1e-12 * norm_l2(u));
  }

  // a field already orthogonal to the bound state passes through P_c
  auto u = random_smooth_field(g, rng);
  auto upc = project_pc(u, sd);
  auto upc2 = project_pc(upc, sd);
  ComplexField dd{g, upc2.v - upc.v};
  CHECK(norm_l2(dd) < 1e-12 * norm_l2(u));
}

TEST_CASE("propagator: eigenvector phase, identity, unitarity, semigroup") {
  auto g = build_grid(40.0, 768, Boundary::dirichlet);
  auto V = sech2_potential(g, 1.0, 1.0);
  auto sd = discrete_eigenpair(V);

  const double t = 3.7;
  auto rot = linear_propagator(sd.phi, t, V);
  double err = 0;
  for (int i = 0; i < g->n; ++i)
    err = std::max(err, std::abs(rot.v[i] - std::polar(1.0, sd.lambda * t) * sd.phi.v[i]));
  CHECK(err < 1e-9);

  std::mt19937_64 rng(9);
  auto u = random_smooth_field(g, rng);
  auto id = linear_propagator(u, 0.0, V);
  CHECK((id.v - u.v).norm() == 0.0);

  auto moved = linear_propagator(u, 1.3, V);
  CHECK(std::abs(norm_l2(moved) - norm_l2(u)) < 1e-10 * norm_l2(u));

  auto two_hops = linear_propagator(linear_propagator(u, 0.4, V), 0.9, V);
  ComplexField diff{g, two_hops.v - moved.v};
  CHECK(norm_l2(diff) < 1e-9 * norm_l2(u));

  auto back = linear_propagator(moved, -1.3, V);
  ComplexField rt{g, back.v - u.v};
  CHECK(norm_l2(rt) < 1e-9 * norm_l2(u));

  CHECK_THROWS_AS(linear_propagator(u, std::nan(""), V), ValidationError);
}

TEST_CASE("free Gaussian against the closed-form spreading solution") {
  auto oracle = [](double t, double x) {
    const complexd den(1.0, 2.0 * t);
    return std::sqrt(1.0 / den) * std::exp(-x * x / (2.0 * den));
  };
  for (auto bk : {Boundary::periodic, Boundary::dirichlet}) {
    auto g = build_grid(40.0, bk == Boundary::periodic ? 2048 : 2047, bk);
    auto V = zero_potential(g);
    auto u0 = field_from(g, [](double x) { return std::exp(-x * x / 2.0); });
    auto u1 = linear_propagator(u0, 1.0, V, PropagatorMethod::spectral);
    double err = 0;
    for (int i = 0; i < g->n; ++i) err = std::max(err, std::abs(u1.v[i] - oracle(1.0, g->x[i])));
    CHECK(err < 1e-6);
  }
}

TEST_CASE("spectral and eigenbasis propagators agree with a potential present") {
  auto g = build_grid(30.0, 512, Boundary::periodic);
  auto V = sech2_potential(g, 1.0, 1.0);
  std::mt19937_64 rng(13);
  auto u = random_smooth_field(g, rng);
  auto a = linear_propagator(u, 0.5, V, PropagatorMethod::eigenbasis);
  auto b = linear_propagator(u, 0.5, V, PropagatorMethod::spectral, Stencil::order2, 2.5e-4);
  ComplexField diff{g, a.v - b.v};
  // eigenbasis carries the O(h^2) stencil dispersion, the split-step carries
  // O(dt^2); both are small but they differ, so the tolerance is loose
  CHECK(norm_l2(diff) < 2e-3 * norm_l2(u));
}

TEST_CASE("decomposition cache returns the identical object") {
  auto g = build_grid(20.0, 256, Boundary::dirichlet);
  auto V = sech2_potential(g, 1.0, 1.0);
  auto a = full_decomposition(V);
  auto b = full_decomposition(V);
  CHECK(a.get() == b.get());
  auto c = full_decomposition(V, Stencil::order4);
  CHECK(a.get() != c.get());
}
