#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "pdnpulse/boards.hpp"
#include "pdnpulse/solver.hpp"

using namespace pdnpulse;
using Catch::Approx;

namespace {

double rel_err(complexd got, complexd want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace

TEST_CASE("branch_admittance matches textbook element stamps") {
  SECTION("capacitor") {
    RlcBranch b;
    b.kind = BranchKind::capacitor;
    b.c = 1e-9;
    const complexd y = branch_admittance(b, 1e6);
    REQUIRE(y.real() == Approx(0.0).margin(1e-15));
    REQUIRE(y.imag() == Approx(2.0 * M_PI * 1e-3));
  }
  SECTION("resistor at any frequency") {
    RlcBranch b;
    b.kind = BranchKind::resistor;
    b.r = 1.0;
    for (double f : {1.0, 1e3, 1e9}) {
      const complexd y = branch_admittance(b, f);
      REQUIRE(y.real() == Approx(1.0));
      REQUIRE(y.imag() == 0.0);
    }
  }
  SECTION("inductor") {
    RlcBranch b;
    b.kind = BranchKind::inductor;
    b.l = 1e-9;
    const complexd y = branch_admittance(b, 1e6);
    REQUIRE(y.real() == Approx(0.0).margin(1e-15));
    REQUIRE(y.imag() == Approx(-1.0 / (2.0 * M_PI * 1e6 * 1e-9)));
  }
  SECTION("series RLC at its resonance is resistive") {
    RlcBranch b;
    b.kind = BranchKind::series_rlc;
    b.r = 3.0;
    b.l = 21e-9;
    b.c = 0.9e-9;
    const double f_res = 1.0 / (2.0 * M_PI * std::sqrt(b.l * b.c));
    REQUIRE(f_res == Approx(36.6e6).epsilon(0.01));  // lands mid-band
    const complexd y = branch_admittance(b, f_res);
    REQUIRE(std::abs(y) == Approx(1.0 / 3.0).epsilon(1e-9));
    REQUIRE(std::arg(y) == Approx(0.0).margin(1e-9));
  }
  SECTION("series RLC with c = 0 omits the capacitive term") {
    RlcBranch b;
    b.kind = BranchKind::series_rlc;
    b.r = 1.0;
    b.l = 1e-9;
    const double f = 1e6;
    const complexd z_expect(1.0, 2.0 * M_PI * f * 1e-9);
    REQUIRE(rel_err(branch_admittance(b, f), 1.0 / z_expect) < 1e-12);
  }
  SECTION("parallel RLC with l = 0 omits the inductive term") {
    RlcBranch b;
    b.kind = BranchKind::parallel_rlc;
    b.r = 2.0;
    b.c = 1e-9;
    const double f = 5e6;
    const complexd want(0.5, 2.0 * M_PI * f * 1e-9);
    REQUIRE(rel_err(branch_admittance(b, f), want) < 1e-12);
  }
}

TEST_CASE("solve_z of a single shunt capacitor gives 1/(j 2 pi f C)") {
  PdnNetlist net;
  RlcBranch b;
  b.id = "c1";
  b.node_a = "p";
  b.node_b = ground_node;
  b.kind = BranchKind::capacitor;
  b.c = 1e-6;
  net.add_branch(b);
  net.add_port(1, "p");

  FrequencyGrid grid{1e3, 2e3, 2, GridSpacing::log};
  BoardSignature sig = solve_z(net, grid);
  REQUIRE(sig.n_ports == 1);
  REQUIRE(sig.z[0](0, 0).real() == Approx(0.0).margin(1e-12));
  REQUIRE(sig.z[0](0, 0).imag() == Approx(-159.1549431).epsilon(1e-9));
}

TEST_CASE("solve_z matches the toy-network formulas on random values") {
  // Analytic oracle: the three-leg reduced network has closed forms for
  // Z11 and Z13; nodal analysis must reproduce both to 1e-9 relative.
  std::mt19937_64 eng(20240301);
  std::uniform_real_distribution<double> re(0.5, 5.0);
  std::uniform_real_distribution<double> im(-5.0, 5.0);
  const double f0 = 10e6;

  for (int it = 0; it < 100; ++it) {
    ToyNetwork t;
    t.za = {re(eng), im(eng)};
    t.zb = {re(eng), im(eng)};
    t.zc = {re(eng), im(eng)};
    t.zd = {re(eng), im(eng)};
    t.ze = {re(eng), im(eng)};

    PdnNetlist net = toy_network_netlist(t, f0);
    FrequencyGrid grid{f0, 2 * f0, 2, GridSpacing::log};
    BoardSignature sig = solve_z(net, grid);

    REQUIRE(rel_err(sig.z[0](0, 0), toy_z11(t)) < 1e-9);
    REQUIRE(rel_err(sig.z[0](0, 2), toy_z13(t)) < 1e-9);
    REQUIRE(rel_err(sig.z[0](2, 0), toy_z13(t)) < 1e-9);  // reciprocity
  }
}

TEST_CASE("toy formulas: equal elements and sensitivity") {
  ToyNetwork ones;
  ones.za = ones.zb = ones.zc = ones.zd = ones.ze = complexd(1.0, 0.0);
  REQUIRE(rel_err(toy_z11(ones), complexd(0.5, 0.0)) < 1e-12);  // 1 || 2 || 2

  ToyNetwork bumped = ones;
  bumped.zb += complexd(0.25, 0.0);
  REQUIRE(std::abs(toy_z11(bumped) - toy_z11(ones)) > 1e-6);
  REQUIRE(std::abs(toy_z13(bumped) - toy_z13(ones)) > 1e-6);
}

TEST_CASE("toy formulas on a 2-port realization") {
  ToyNetwork t;
  t.za = {2.0, 1.0};
  t.zb = {1.5, -0.5};
  t.zc = {3.0, 0.25};
  t.zd = {0.75, 2.0};
  t.ze = {1.0, -1.5};
  const double f0 = 1e6;

  PdnNetlist full = toy_network_netlist(t, f0);
  PdnNetlist two = full;
  two.ports.clear();
  two.add_port(1, "t1");
  two.add_port(2, "t3");

  FrequencyGrid grid{f0, 2 * f0, 2, GridSpacing::log};
  BoardSignature sig = solve_z(two, grid);
  REQUIRE(rel_err(sig.z[0](0, 0), toy_z11(t)) < 1e-9);
  REQUIRE(rel_err(sig.z[0](0, 1), toy_z13(t)) < 1e-9);
}

TEST_CASE("solver output is symmetric and passive on the decap chain") {
  PdnNetlist board = with_chain_ports(make_decap_chain_board(true), {1, 2, 3, 4, 5, 6});
  FrequencyGrid grid{300e3, 3e9, 64, GridSpacing::log};
  BoardSignature sig = solve_z(board, grid);
  REQUIRE(sig.n_ports == 6);
  REQUIRE(sig.provenance == Provenance::simulated);
  for (std::size_t fi = 0; fi < sig.size(); ++fi) {
    const auto& z = sig.z[fi];
    for (int x = 0; x < 6; ++x) {
      REQUIRE(z(x, x).real() >= -1e-9);  // passivity of an R >= 0 network
      for (int y = 0; y < 6; ++y) REQUIRE(z(x, y) == z(y, x));  // bit-stable symmetry
    }
  }
}

TEST_CASE("default grid covers the band of interest") {
  FrequencyGrid g = default_grid();
  REQUIRE(g.f_start == Approx(300e3));
  REQUIRE(g.f_stop == Approx(3e9));
  REQUIRE(g.points == 1024);
  REQUIRE(g.spacing == GridSpacing::log);
  auto f = g.frequencies();
  REQUIRE(f.size() == 1024);
  REQUIRE(f.front() == 300e3);
  REQUIRE(f.back() == 3e9);
  REQUIRE(std::is_sorted(f.begin(), f.end()));
}

TEST_CASE("grid refinement shares frequencies and impedances exactly") {
  // 513-point and 1025-point log grids share every coarse frequency
  // bit-for-bit (i/512 == 2i/1024 in floating point), and the solver is
  // pointwise, so shared frequencies must produce identical impedances.
  PdnNetlist board = with_chain_ports(make_decap_chain_board(false), {1, 6});
  FrequencyGrid coarse{300e3, 3e9, 513, GridSpacing::log};
  FrequencyGrid fine{300e3, 3e9, 1025, GridSpacing::log};
  BoardSignature a = solve_z(board, coarse);
  BoardSignature b = solve_z(board, fine);
  for (std::size_t i = 0; i < a.freqs.size(); ++i) {
    REQUIRE(a.freqs[i] == b.freqs[2 * i]);
    REQUIRE((a.z[i] - b.z[2 * i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("solve_z names floating subgraphs") {
  PdnNetlist net;
  RlcBranch b;
  b.id = "c1";
  b.node_a = "p";
  b.node_b = ground_node;
  b.kind = BranchKind::capacitor;
  b.c = 1e-6;
  net.add_branch(b);
  net.add_port(1, "p");
  RlcBranch island;
  island.id = "iso";
  island.node_a = "x1";
  island.node_b = "x2";
  island.kind = BranchKind::resistor;
  island.r = 1.0;
  net.add_branch(island);

  FrequencyGrid grid{1e6, 2e6, 2, GridSpacing::log};
  REQUIRE_THROWS_WITH(solve_z(net, grid),
                      Catch::Matchers::ContainsSubstring("x1") &&
                          Catch::Matchers::ContainsSubstring("no path to ground"));
}

TEST_CASE("solve_z rejects invalid netlists and empty port lists") {
  PdnNetlist net;
  RlcBranch b;
  b.id = "c1";
  b.node_a = "p";
  b.node_b = ground_node;
  b.kind = BranchKind::capacitor;
  b.c = 1e-6;
  net.add_branch(b);
  FrequencyGrid grid{1e6, 2e6, 2, GridSpacing::log};
  REQUIRE_THROWS_AS(solve_z(net, grid), NetlistError);  // no ports

  net.add_port(1, "p");
  net.branches[0].c = -1.0;
  REQUIRE_THROWS_AS(solve_z(net, grid), NetlistError);  // fails validation
}

TEST_CASE("anomaly add-then-remove restores solved impedances") {
  PdnNetlist board = with_chain_ports(make_decap_chain_board(false), {1, 6});
  PdnNetlist tampered = apply_anomalies(board, {anomaly_attiny85});
  tampered.anomalies.push_back(
      AnomalySpec{"undo", AnomalyKind::remove_branch, anomaly_attiny85, 0, 0, 0});
  PdnNetlist restored = apply_anomalies(tampered, {"undo"});

  FrequencyGrid grid{300e3, 3e9, 32, GridSpacing::log};
  BoardSignature original = solve_z(board, grid);
  BoardSignature roundtrip = solve_z(restored, grid);
  for (std::size_t fi = 0; fi < original.size(); ++fi)
    REQUIRE((original.z[fi] - roundtrip.z[fi]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adding a parallel RLC anomaly changes at least one profile") {
  PdnNetlist board = with_chain_ports(make_decap_chain_board(false), {1, 6});
  PdnNetlist tampered = apply_anomalies(board, {anomaly_attiny85});
  FrequencyGrid grid{300e3, 3e9, 128, GridSpacing::log};
  BoardSignature gold = solve_z(board, grid);
  BoardSignature anom = solve_z(tampered, grid);
  double max_shift = 0.0;
  for (std::size_t fi = 0; fi < gold.size(); ++fi)
    for (int x = 0; x < gold.n_ports; ++x)
      for (int y = x; y < gold.n_ports; ++y) {
        const double lg = std::log10(std::max(std::abs(gold.z[fi](x, y)), 1e-12));
        const double la = std::log10(std::max(std::abs(anom.z[fi](x, y)), 1e-12));
        max_shift = std::max(max_shift, std::abs(lg - la));
      }
  REQUIRE(max_shift > 0.0);
}

TEST_CASE("decap chain self-impedance dips near each group's series resonance") {
  PdnNetlist board = with_chain_ports(make_decap_chain_board(false), {1});
  FrequencyGrid grid = default_grid();
  BoardSignature sig = solve_z(board, grid);

  std::vector<double> mag(sig.size());
  for (std::size_t i = 0; i < sig.size(); ++i) mag[i] = std::abs(sig.z[i](0, 0));

  auto nearest_index = [&](double f) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < sig.freqs.size(); ++i)
      if (std::abs(sig.freqs[i] - f) < std::abs(sig.freqs[best] - f)) best = i;
    return best;
  };

  // Per-group series resonance 1/(2 pi sqrt(L C)) with the factory ESL.
  for (double c : {10e-6, 4.7e-6, 470e-9, 47e-9}) {
    const double f_res = 1.0 / (2.0 * M_PI * std::sqrt(0.5e-9 * c));
    const std::size_t center = nearest_index(f_res);
    // A local minimum of |Z11| must sit within one grid step.
    bool found = false;
    for (std::size_t i = (center == 0 ? 1 : center - 1); i <= center + 1 && i + 1 < mag.size();
         ++i) {
      if (mag[i] <= mag[i - 1] && mag[i] <= mag[i + 1]) found = true;
    }
    INFO("group C = " << c << " f_res = " << f_res);
    REQUIRE(found);
  }
}
