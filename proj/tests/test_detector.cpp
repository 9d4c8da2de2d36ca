#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "pdnpulse/boards.hpp"
#include "pdnpulse/detector.hpp"

using namespace pdnpulse;
using Catch::Approx;

namespace {

// Small, fast boards for detector-level tests: the decap chain with ports
// at the ends, sampled with mild manufacturing variation.
BoardSignature chain_signature(std::uint64_t seed, std::uint64_t trial, double tolerance,
                               bool tampered = false, int points = 48) {
  PdnNetlist board = with_chain_ports(make_decap_chain_board(false), {1, 6});
  if (tampered) board = apply_anomalies(board, {anomaly_attiny85});
  ToleranceModel model;
  model.tolerance = tolerance;
  model.seed = seed;
  PdnNetlist sampled = sample_variation(board, model, trial);
  BoardSignature sig = solve_z(sampled, FrequencyGrid{300e3, 3e9, points, GridSpacing::log});
  sig.label = tampered ? "tampered" : "genuine";
  return sig;
}

}  // namespace

TEST_CASE("fit_golden on identical signatures gives zero mean and threshold") {
  BoardSignature sig = chain_signature(1, 0, 0.0);
  GoldenModel m = fit_golden({sig, sig, sig}, FdConfig{});
  REQUIRE(m.intra_fds.size() == 3);  // 3 unordered pairs of 3 boards
  REQUIRE(m.mu == 0.0);
  REQUIRE(m.sigma == 0.0);
  REQUIRE(m.threshold == 0.0);
}

TEST_CASE("fit_golden counts unordered pairs and computes sample statistics") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 5; ++t) genuine.push_back(chain_signature(7, t, 0.10));
  GoldenModel m = fit_golden(genuine, FdConfig{}, 3.0);
  REQUIRE(m.intra_fds.size() == 10);  // 5 choose 2

  double mu = 0.0;
  for (double d : m.intra_fds) mu += d;
  mu /= 10.0;
  double ss = 0.0;
  for (double d : m.intra_fds) ss += (d - mu) * (d - mu);
  const double sigma = std::sqrt(ss / 9.0);  // divisor m-1
  REQUIRE(m.mu == Approx(mu));
  REQUIRE(m.sigma == Approx(sigma));
  REQUIRE(m.threshold == Approx(mu + 3.0 * sigma));
  REQUIRE(m.threshold >= m.mu);
  REQUIRE(m.warnings.empty());
}

TEST_CASE("fit_golden with k = 0 thresholds at the mean") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 3; ++t) genuine.push_back(chain_signature(9, t, 0.10));
  GoldenModel m = fit_golden(genuine, FdConfig{}, 0.0);
  REQUIRE(m.threshold == Approx(m.mu));
}

TEST_CASE("fit_golden with two boards warns and zeroes sigma") {
  GoldenModel m =
      fit_golden({chain_signature(3, 0, 0.10), chain_signature(3, 1, 0.10)}, FdConfig{});
  REQUIRE(m.intra_fds.size() == 1);
  REQUIRE(m.sigma == 0.0);
  REQUIRE_FALSE(m.warnings.empty());
  REQUIRE(m.warnings.front().code == "degenerate-sigma");
}

TEST_CASE("fit_golden rejects undersized or mismatched inputs") {
  REQUIRE_THROWS_AS(fit_golden({chain_signature(1, 0, 0.0)}, FdConfig{}), DetectorError);
  BoardSignature a = chain_signature(1, 0, 0.0, false, 32);
  BoardSignature b = chain_signature(1, 1, 0.0, false, 64);
  REQUIRE_THROWS_AS(fit_golden({a, b}, FdConfig{}), ShapeError);
}

TEST_CASE("detect labels a training member genuine and respects the threshold") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 4; ++t) genuine.push_back(chain_signature(21, t, 0.10));
  GoldenModel m = fit_golden(genuine, FdConfig{});

  DetectionReport rep = detect(m, genuine[2]);
  REQUIRE(rep.decision_statistic == 0.0);  // distance to itself
  REQUIRE(rep.verdict == Verdict::genuine);
  REQUIRE(rep.threshold_used == m.threshold);
  REQUIRE(rep.fds_to_training.size() == 4);
}

TEST_CASE("detect flags a tampered board at modest tolerance") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 5; ++t) genuine.push_back(chain_signature(33, t, 0.10));
  GoldenModel m = fit_golden(genuine, FdConfig{});
  BoardSignature bad = chain_signature(33, 100, 0.10, true);
  DetectionReport rep = detect(m, bad);
  REQUIRE(rep.verdict == Verdict::anomalous);
  REQUIRE(rep.decision_statistic > m.threshold);
}

TEST_CASE("detect with an effectively infinite threshold always says genuine") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 3; ++t) genuine.push_back(chain_signature(5, t, 0.10));
  GoldenModel m = fit_golden(genuine, FdConfig{}, 1e9);
  BoardSignature bad = chain_signature(5, 50, 0.10, true);
  REQUIRE(detect(m, bad).verdict == Verdict::genuine);
}

TEST_CASE("raising k never flips genuine to anomalous") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 4; ++t) genuine.push_back(chain_signature(13, t, 0.20));
  BoardSignature probe = chain_signature(13, 9, 0.20);
  Verdict last = Verdict::anomalous;
  for (double k : {0.0, 1.0, 3.0, 10.0}) {
    GoldenModel m = fit_golden(genuine, FdConfig{}, k);
    Verdict v = detect(m, probe).verdict;
    if (last == Verdict::genuine) REQUIRE(v == Verdict::genuine);
    last = v;
  }
}

TEST_CASE("detect supports min and mean statistics") {
  std::vector<BoardSignature> genuine;
  for (std::uint64_t t = 0; t < 3; ++t) genuine.push_back(chain_signature(44, t, 0.10));
  GoldenModel m = fit_golden(genuine, FdConfig{});
  BoardSignature probe = chain_signature(44, 7, 0.10);
  DetectionReport isolated = detect(m, probe, DecisionStatistic::min);
  DetectionReport averaged = detect(m, probe, DecisionStatistic::mean);
  const double lo = *std::min_element(isolated.fds_to_training.begin(),
                                      isolated.fds_to_training.end());
  double mean = 0.0;
  for (double d : averaged.fds_to_training) mean += d;
  mean /= static_cast<double>(averaged.fds_to_training.size());
  REQUIRE(isolated.decision_statistic == Approx(lo));
  REQUIRE(averaged.decision_statistic == Approx(mean));
  REQUIRE(isolated.decision_statistic <= averaged.decision_statistic);
}

TEST_CASE("fd_knn nearest-neighbor basics") {
  LabeledLibrary lib;
  lib.entries.push_back({chain_signature(50, 0, 0.10), "alpha"});
  lib.entries.push_back({chain_signature(50, 1, 0.10), "alpha"});
  lib.entries.push_back({chain_signature(50, 2, 0.10, true), "beta"});
  lib.entries.push_back({chain_signature(50, 3, 0.10, true), "beta"});

  SECTION("k = 1 returns the label of the nearest board") {
    BoardSignature probe = chain_signature(50, 10, 0.10, true);
    REQUIRE(fd_knn(lib, probe, 1) == "beta");
  }
  SECTION("a training board classifies as its own label") {
    REQUIRE(fd_knn(lib, lib.entries[1].sig, 1) == "alpha");
    REQUIRE(fd_knn(lib, lib.entries[3].sig, 3) == "beta");
  }
  SECTION("parameter validation") {
    BoardSignature probe = chain_signature(50, 11, 0.10);
    REQUIRE_THROWS_AS(fd_knn(LabeledLibrary{}, probe, 1), DetectorError);
    REQUIRE_THROWS_AS(fd_knn(lib, probe, 5), DetectorError);   // k > N
    REQUIRE_THROWS_AS(fd_knn(lib, probe, 2), DetectorError);   // even k
    REQUIRE_THROWS_AS(fd_knn(lib, probe, 0), DetectorError);
  }
}

TEST_CASE("fd_knn is stable under library permutation when distances are distinct") {
  LabeledLibrary lib;
  lib.entries.push_back({chain_signature(60, 0, 0.15), "a"});
  lib.entries.push_back({chain_signature(60, 1, 0.15), "b"});
  lib.entries.push_back({chain_signature(60, 2, 0.15), "c"});
  lib.entries.push_back({chain_signature(60, 3, 0.15), "a"});
  lib.entries.push_back({chain_signature(60, 4, 0.15, true), "b"});
  BoardSignature probe = chain_signature(60, 20, 0.15);

  const std::string expect = fd_knn(lib, probe, 3);
  std::mt19937_64 eng(2);
  for (int it = 0; it < 6; ++it) {
    std::shuffle(lib.entries.begin(), lib.entries.end(), eng);
    REQUIRE(fd_knn(lib, probe, 3) == expect);
  }
}

TEST_CASE("fd_knn breaks three-way vote ties by summed distance") {
  // k = 3 with three distinct single-member classes: the nearest class
  // (smallest summed distance, here the single nearest board) must win.
  LabeledLibrary lib;
  lib.entries.push_back({chain_signature(70, 0, 0.20), "x"});
  lib.entries.push_back({chain_signature(70, 1, 0.20), "y"});
  lib.entries.push_back({chain_signature(70, 2, 0.20), "z"});
  BoardSignature probe = chain_signature(70, 30, 0.20);

  double best = std::numeric_limits<double>::infinity();
  std::string best_label;
  for (const auto& e : lib.entries) {
    const double d = fd_prime(e.sig, probe);
    if (d < best) {
      best = d;
      best_label = e.label;
    }
  }
  REQUIRE(fd_knn(lib, probe, 3) == best_label);
}

TEST_CASE("roc on separated and identical populations") {
  RocCurve perfect = roc({0.1, 0.2, 0.3}, {0.9, 1.1, 1.5});
  REQUIRE(perfect.auc == Approx(1.0));

  RocCurve coin = roc({0.1, 0.2, 0.3}, {0.1, 0.2, 0.3});
  REQUIRE(coin.auc == Approx(0.5));
}

TEST_CASE("roc points are monotone and span the unit square") {
  std::mt19937_64 eng(31);
  std::normal_distribution<double> g(0.0, 1.0), a(0.7, 1.3);
  std::vector<double> gs, as;
  for (int i = 0; i < 50; ++i) {
    gs.push_back(g(eng));
    as.push_back(a(eng));
  }
  RocCurve c = roc(gs, as);
  REQUIRE(c.points.front().fpr == 0.0);
  REQUIRE(c.points.front().tpr == 0.0);
  REQUIRE(c.points.back().fpr == 1.0);
  REQUIRE(c.points.back().tpr == 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    REQUIRE(c.points[i].fpr >= c.points[i - 1].fpr);
    REQUIRE(c.points[i].tpr >= c.points[i - 1].tpr);
  }
  REQUIRE(c.auc >= 0.0);
  REQUIRE(c.auc <= 1.0);
}

TEST_CASE("roc auc is invariant under strictly increasing transforms") {
  std::vector<double> gs = {0.01, 0.05, 0.2, 0.11, 0.3};
  std::vector<double> as = {0.25, 0.4, 0.18, 0.5, 0.33};
  const double base = roc(gs, as).auc;
  auto warp = [](std::vector<double> v) {
    for (double& x : v) x = std::exp(3.0 * x) - 1.0;
    return v;
  };
  REQUIRE(roc(warp(gs), warp(as)).auc == Approx(base));
}

TEST_CASE("roc rejects empty inputs") {
  REQUIRE_THROWS_AS(roc({}, {1.0}), DetectorError);
  REQUIRE_THROWS_AS(roc({1.0}, {}), DetectorError);
}

TEST_CASE("accuracy formula") {
  REQUIRE(accuracy(10, 10, 0, 0) == 1.0);
  REQUIRE(accuracy(0, 0, 10, 10) == 0.0);
  REQUIRE(accuracy(52, 52, 48, 48) == Approx(0.52));
  REQUIRE_THROWS_AS(accuracy(0, 0, 0, 0), DetectorError);
}

TEST_CASE("best_accuracy sweeps thresholds") {
  ThresholdAccuracy best = best_accuracy({0.1, 0.2, 0.3}, {0.4, 0.5, 0.6});
  REQUIRE(best.accuracy == Approx(1.0));

  // One anomalous sample below every genuine one caps accuracy at 5/6.
  ThresholdAccuracy mixed = best_accuracy({0.1, 0.2, 0.3}, {0.05, 0.5, 0.6});
  REQUIRE(mixed.accuracy == Approx(5.0 / 6.0));
}

TEST_CASE("fd histogram bins both classes over a shared range") {
  FdHistogram h = make_fd_histogram({0.0, 0.1, 0.2, 0.2}, {0.8, 1.0}, 5);
  REQUIRE(h.edges.size() == 6);
  REQUIRE(h.edges.front() == Approx(0.0));
  REQUIRE(h.edges.back() == Approx(1.0));
  long g_total = 0, a_total = 0;
  for (long c : h.genuine_counts) g_total += c;
  for (long c : h.anomalous_counts) a_total += c;
  REQUIRE(g_total == 4);
  REQUIRE(a_total == 2);
  REQUIRE(h.genuine_counts[0] == 2);   // 0.0 and 0.1 in [0, 0.2)
  REQUIRE(h.anomalous_counts[4] == 2);  // 0.8 and 1.0 in the top bin
}
