#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdnpulse/frechet.hpp"

// Golden-model anomaly detection and nearest-neighbor board classification
// on top of the board-level Frechet metric, plus ROC/accuracy scoring.

namespace pdnpulse {

class DetectorError : public std::runtime_error {
 public:
  explicit DetectorError(const std::string& what) : std::runtime_error(what) {}
};

// Reference model fitted on genuine boards: the statistical spread of
// board-to-board distance within the genuine population sets the decision
// threshold mu + k*sigma.
struct GoldenModel {
  std::vector<BoardSignature> genuine;
  std::vector<double> intra_fds;  // all unordered genuine pairs, g(g-1)/2 values
  double mu = 0.0;
  double sigma = 0.0;
  double k = 3.0;
  double threshold = 0.0;
  FdConfig cfg;
  std::vector<Diagnostic> warnings;
};

enum class Verdict { genuine, anomalous };

inline const char* to_string(Verdict v) {
  return v == Verdict::genuine ? "genuine" : "anomalous";
}

enum class DecisionStatistic { min, mean };

inline const char* to_string(DecisionStatistic s) {
  return s == DecisionStatistic::min ? "min" : "mean";
}

inline DecisionStatistic decision_statistic_from_string(const std::string& s) {
  if (s == "min") return DecisionStatistic::min;
  if (s == "mean") return DecisionStatistic::mean;
  throw std::invalid_argument("unknown decision statistic: " + s);
}

struct DetectionReport {
  std::string board_label;
  std::vector<double> fds_to_training;
  double decision_statistic = 0.0;
  Verdict verdict = Verdict::genuine;
  double threshold_used = 0.0;
  DecisionStatistic statistic = DecisionStatistic::min;
};

struct LibraryEntry {
  BoardSignature sig;
  std::string label;
};

struct LabeledLibrary {
  std::vector<LibraryEntry> entries;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // ascending fpr (thresholds descending)
  double auc = 0.0;
};

// Fits the golden model: all pairwise distances among genuine boards, their
// mean and sample standard deviation (divisor m-1), threshold mu + k*sigma.
// Exactly two genuine boards give a single pair, so sigma is undefined; it
// is set to 0 with a warning rather than rejected.
inline GoldenModel fit_golden(const std::vector<BoardSignature>& genuine, const FdConfig& cfg,
                              double k = 3.0) {
  if (genuine.size() < 2) throw DetectorError("fit_golden: need at least 2 genuine boards");
  for (std::size_t i = 1; i < genuine.size(); ++i)
    if (!same_shape(genuine[0], genuine[i]))
      throw ShapeError("fit_golden: genuine boards differ in grid or port count");

  GoldenModel m;
  m.genuine = genuine;
  m.cfg = cfg;
  m.k = k;
  for (std::size_t i = 0; i < genuine.size(); ++i)
    for (std::size_t j = i + 1; j < genuine.size(); ++j)
      m.intra_fds.push_back(fd_prime(genuine[i], genuine[j], cfg));

  const double count = static_cast<double>(m.intra_fds.size());
  m.mu = std::accumulate(m.intra_fds.begin(), m.intra_fds.end(), 0.0) / count;
  if (m.intra_fds.size() >= 2) {
    double ss = 0.0;
    for (double d : m.intra_fds) ss += (d - m.mu) * (d - m.mu);
    m.sigma = std::sqrt(ss / (count - 1.0));
  } else {
    m.sigma = 0.0;
    m.warnings.push_back(
        {"degenerate-sigma", "only one genuine pair; sigma set to 0, threshold = mu"});
  }
  m.threshold = m.mu + k * m.sigma;
  return m;
}

// Scores a test board against the golden model.  The decision statistic is
// the min (default) or mean distance to the genuine boards; strictly above
// threshold means anomalous.
inline DetectionReport detect(const GoldenModel& model, const BoardSignature& test,
                              DecisionStatistic statistic = DecisionStatistic::min) {
  if (model.genuine.empty()) throw DetectorError("detect: empty golden model");
  if (!same_shape(model.genuine.front(), test))
    throw ShapeError("detect: test board shape differs from golden model");

  DetectionReport rep;
  rep.board_label = test.label;
  rep.statistic = statistic;
  rep.threshold_used = model.threshold;
  for (const auto& g : model.genuine)
    rep.fds_to_training.push_back(fd_prime(g, test, model.cfg));
  if (statistic == DecisionStatistic::min) {
    rep.decision_statistic =
        *std::min_element(rep.fds_to_training.begin(), rep.fds_to_training.end());
  } else {
    rep.decision_statistic =
        std::accumulate(rep.fds_to_training.begin(), rep.fds_to_training.end(), 0.0) /
        static_cast<double>(rep.fds_to_training.size());
  }
  rep.verdict =
      rep.decision_statistic > model.threshold ? Verdict::anomalous : Verdict::genuine;
  return rep;
}

// k-nearest-neighbor classification under the board metric.  Distances are
// sorted ascending with ties kept in library entry order; the majority
// label among the k nearest wins.  A vote tie goes to the tied class with
// the smallest summed distance inside the neighbor set, then to the class
// appearing earliest among the sorted neighbors.
inline std::string fd_knn(const LabeledLibrary& lib, const BoardSignature& test, int k,
                          const FdConfig& cfg = {}) {
  const std::size_t n = lib.entries.size();
  if (n == 0) throw DetectorError("fd_knn: empty library");
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw DetectorError("fd_knn: k must satisfy 1 <= k <= library size");
  if (k % 2 == 0) throw DetectorError("fd_knn: k must be odd");
  for (std::size_t i = 1; i < n; ++i)
    if (!same_shape(lib.entries[0].sig, lib.entries[i].sig))
      throw ShapeError("fd_knn: library boards differ in grid or port count");
  if (!same_shape(lib.entries[0].sig, test))
    throw ShapeError("fd_knn: test board shape differs from library");

  struct Neighbor {
    double d;
    std::size_t entry;
  };
  std::vector<Neighbor> all(n);
  for (std::size_t i = 0; i < n; ++i)
    all[i] = {fd_prime(lib.entries[i].sig, test, cfg), i};
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.d < b.d;  // stability preserves entry order among equal distances
  });

  struct Tally {
    int votes = 0;
    double dist_sum = 0.0;
    std::size_t first_rank = 0;  // earliest position among sorted neighbors
  };
  std::map<std::string, Tally> tallies;
  for (int r = 0; r < k; ++r) {
    const auto& nb = all[static_cast<std::size_t>(r)];
    const std::string& label = lib.entries[nb.entry].label;
    auto [it, fresh] = tallies.try_emplace(label);
    if (fresh) it->second.first_rank = static_cast<std::size_t>(r);
    it->second.votes += 1;
    it->second.dist_sum += nb.d;
  }

  const std::string* best = nullptr;
  const Tally* best_tally = nullptr;
  for (const auto& [label, tally] : tallies) {
    if (best == nullptr) {
      best = &label;
      best_tally = &tally;
      continue;
    }
    const bool wins = tally.votes > best_tally->votes ||
                      (tally.votes == best_tally->votes &&
                       (tally.dist_sum < best_tally->dist_sum ||
                        (tally.dist_sum == best_tally->dist_sum &&
                         tally.first_rank < best_tally->first_rank)));
    if (wins) {
      best = &label;
      best_tally = &tally;
    }
  }
  return *best;
}

// ROC over decision statistics: for each threshold in the sorted union of
// both lists plus the infinities, tpr is the anomalous fraction above it
// and fpr the genuine fraction above it.  Points come out with thresholds
// descending, i.e. fpr ascending from 0 to 1; auc by trapezoid.
inline RocCurve roc(const std::vector<double>& genuine_stats,
                    const std::vector<double>& anomalous_stats) {
  if (genuine_stats.empty() || anomalous_stats.empty())
    throw DetectorError("roc: both statistic lists must be nonempty");

  std::vector<double> thresholds;
  thresholds.reserve(genuine_stats.size() + anomalous_stats.size() + 2);
  thresholds.push_back(std::numeric_limits<double>::infinity());
  thresholds.insert(thresholds.end(), genuine_stats.begin(), genuine_stats.end());
  thresholds.insert(thresholds.end(), anomalous_stats.begin(), anomalous_stats.end());
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  auto frac_above = [](const std::vector<double>& v, double th) {
    std::size_t c = 0;
    for (double x : v)
      if (x > th) ++c;
    return static_cast<double>(c) / static_cast<double>(v.size());
  };

  RocCurve curve;
  for (double th : thresholds)
    curve.points.push_back({frac_above(genuine_stats, th), frac_above(anomalous_stats, th), th});

  double auc = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& p0 = curve.points[i - 1];
    const auto& p1 = curve.points[i];
    auc += (p1.fpr - p0.fpr) * 0.5 * (p0.tpr + p1.tpr);
  }
  curve.auc = auc;
  return curve;
}

inline double accuracy(long tp, long tn, long fp, long fn) {
  const long total = tp + tn + fp + fn;
  if (total <= 0) throw DetectorError("accuracy: zero total");
  if (tp < 0 || tn < 0 || fp < 0 || fn < 0) throw DetectorError("accuracy: negative count");
  return static_cast<double>(tp + tn) / static_cast<double>(total);
}

struct ThresholdAccuracy {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Best achievable (TP+TN)/total over a threshold sweep of the two
// statistic populations (genuine should score low, anomalous high).
inline ThresholdAccuracy best_accuracy(const std::vector<double>& genuine_stats,
                                       const std::vector<double>& anomalous_stats) {
  if (genuine_stats.empty() || anomalous_stats.empty())
    throw DetectorError("best_accuracy: both statistic lists must be nonempty");
  std::vector<double> thresholds;
  thresholds.push_back(std::numeric_limits<double>::infinity());
  thresholds.insert(thresholds.end(), genuine_stats.begin(), genuine_stats.end());
  thresholds.insert(thresholds.end(), anomalous_stats.begin(), anomalous_stats.end());
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double total = static_cast<double>(genuine_stats.size() + anomalous_stats.size());
  ThresholdAccuracy best{0.0, -1.0};
  for (double th : thresholds) {
    std::size_t tn = 0, tp = 0;
    for (double g : genuine_stats)
      if (!(g > th)) ++tn;
    for (double a : anomalous_stats)
      if (a > th) ++tp;
    const double acc = static_cast<double>(tn + tp) / total;
    if (acc > best.accuracy) best = {th, acc};
  }
  return best;
}

struct FdHistogram {
  std::vector<double> edges;  // n_bins + 1 ascending edges
  std::vector<long> genuine_counts;
  std::vector<long> anomalous_counts;
};

// Uniform-bin histogram of the two distance populations on a shared range;
// the top edge is inclusive so no sample falls outside.
inline FdHistogram make_fd_histogram(const std::vector<double>& genuine_fds,
                                     const std::vector<double>& anomalous_fds, int n_bins) {
  if (n_bins < 1) throw DetectorError("make_fd_histogram: need at least 1 bin");
  if (genuine_fds.empty() && anomalous_fds.empty())
    throw DetectorError("make_fd_histogram: no samples");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto* v : {&genuine_fds, &anomalous_fds})
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (!(hi > lo)) hi = lo + 1.0;  // all samples equal: one unit-wide bin span

  FdHistogram h;
  h.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i)
    h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / n_bins;
  h.genuine_counts.assign(static_cast<std::size_t>(n_bins), 0);
  h.anomalous_counts.assign(static_cast<std::size_t>(n_bins), 0);
  auto bin_of = [&](double x) {
    const int b = static_cast<int>((x - lo) / (hi - lo) * n_bins);
    return static_cast<std::size_t>(std::clamp(b, 0, n_bins - 1));
  };
  for (double x : genuine_fds) h.genuine_counts[bin_of(x)] += 1;
  for (double x : anomalous_fds) h.anomalous_counts[bin_of(x)] += 1;
  return h;
}

}  // namespace pdnpulse
