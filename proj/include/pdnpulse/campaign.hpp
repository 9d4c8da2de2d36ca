#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pdnpulse/boards.hpp"
#include "pdnpulse/detector.hpp"
#include "pdnpulse/frechet.hpp"
#include "pdnpulse/io.hpp"
#include "pdnpulse/netlist.hpp"
#include "pdnpulse/rng.hpp"
#include "pdnpulse/solver.hpp"

// Seeded Monte-Carlo studies: tolerance ROC sweeps, anomaly-size sensitivity
// scaling, the source/probe placement grid, port-count ablation, and the
// multi-class clone KNN campaign.  Every trial draws from a stream derived as
// hash(seed, arm-label, trial-index), so arms rerun independently and any
// rerun with the same config + seed reproduces results bit-identically.

namespace pdnpulse {

class CampaignError : public std::runtime_error {
 public:
  explicit CampaignError(const std::string& what) : std::runtime_error(what) {}
};

struct CampaignConfig {
  PdnNetlist base_netlist;  // ports included
  AnomalySpec anomaly;
  std::vector<AnomalySpec> extra_anomalies;  // applied on top for multi-anomaly studies
  std::vector<double> tolerance_list;        // fractions, e.g. 0.10 for +/-10%
  int trials_per_arm = 200;
  int golden_count = 5;
  FrequencyGrid grid = default_grid();
  FdConfig cfg;
  DecisionStatistic statistic = DecisionStatistic::min;
  std::uint64_t seed = 1;
};

inline void validate_campaign_config(const CampaignConfig& cfg) {
  if (cfg.trials_per_arm < 10) throw CampaignError("trials_per_arm must be >= 10");
  if (cfg.golden_count < 2) throw CampaignError("golden_count must be >= 2");
  if (cfg.tolerance_list.empty()) throw CampaignError("tolerance_list must not be empty");
  for (double t : cfg.tolerance_list)
    if (!(t >= 0.0) || !(t < 1.0))
      throw CampaignError("tolerances must lie in [0, 1), got " + std::to_string(t));
  if (cfg.anomaly.id.empty()) throw CampaignError("anomaly id must not be empty");
  cfg.grid.validate();
  const auto diags = validate_netlist(cfg.base_netlist);
  if (!diags.empty()) {
    std::string msg = "base netlist invalid:";
    for (const auto& d : diags) msg += " [" + d.code + " " + d.detail + "]";
    throw CampaignError(msg);
  }
  if (cfg.base_netlist.ports.empty()) throw CampaignError("base netlist declares no ports");
}

namespace detail {

// Index-keyed parallel loop.  Each index owns its output slot, so the merge
// is deterministic no matter how work is scheduled; the lowest-index failure
// wins when several trials throw.
inline void parallel_for_indexed(int n, const std::function<void(int)>& fn) {
  const unsigned hw = std::thread::hardware_concurrency();
  const int workers = static_cast<int>(std::min(hw == 0 ? 1u : hw, 8u));
  if (workers <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  int first_error_index = n;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (first_error && i > first_error_index) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (i < first_error_index) {
          first_error = std::current_exception();
          first_error_index = i;
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string tol_key(double t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", t);
  return buf;
}

// Installs the given anomaly specs into the netlist's menu (replacing any
// same-id entries) and applies them all.
inline PdnNetlist with_anomaly_specs(PdnNetlist net, const std::vector<AnomalySpec>& specs) {
  std::vector<std::string> ids;
  ids.reserve(specs.size());
  for (const auto& s : specs) {
    bool found = false;
    for (auto& a : net.anomalies)
      if (a.id == s.id) {
        a = s;
        found = true;
        break;
      }
    if (!found) net.anomalies.push_back(s);
    ids.push_back(s.id);
  }
  return apply_anomalies(net, ids);
}

inline std::vector<AnomalySpec> all_anomalies(const CampaignConfig& cfg) {
  std::vector<AnomalySpec> specs{cfg.anomaly};
  specs.insert(specs.end(), cfg.extra_anomalies.begin(), cfg.extra_anomalies.end());
  return specs;
}

inline BoardSignature solve_variated(const PdnNetlist& base, double tolerance,
                                     std::uint64_t stream_seed, int trial,
                                     const FrequencyGrid& grid) {
  ToleranceModel model;
  model.tolerance = tolerance;
  model.seed = stream_seed;
  return solve_z(sample_variation(base, model, trial), grid);
}

// The genuine side of an arm at one tolerance: golden model plus the genuine
// trial statistics.  Stream labels depend only on the tolerance, so every
// study at the same tolerance sees the same genuine population under one
// seed (and anomaly arms stay comparable through common random numbers).
struct GenuinePopulation {
  GoldenModel model;
  std::vector<double> genuine_stats;
};

inline GenuinePopulation build_genuine_population(const CampaignConfig& cfg, double t) {
  GenuinePopulation pop;
  std::vector<BoardSignature> goldens(static_cast<std::size_t>(cfg.golden_count));
  const std::uint64_t golden_stream = derive_stream(cfg.seed, "golden/t=" + tol_key(t), 0);
  parallel_for_indexed(cfg.golden_count, [&](int g) {
    try {
      goldens[static_cast<std::size_t>(g)] =
          solve_variated(cfg.base_netlist, t, golden_stream, g, cfg.grid);
    } catch (const std::exception& e) {
      throw CampaignError("golden board " + std::to_string(g) + " at t=" + tol_key(t) + ": " +
                          e.what());
    }
  });
  pop.model = fit_golden(goldens, cfg.cfg);

  pop.genuine_stats.assign(static_cast<std::size_t>(cfg.trials_per_arm), 0.0);
  const std::uint64_t trial_stream = derive_stream(cfg.seed, "genuine/t=" + tol_key(t), 0);
  parallel_for_indexed(cfg.trials_per_arm, [&](int i) {
    try {
      const BoardSignature sig =
          solve_variated(cfg.base_netlist, t, trial_stream, i, cfg.grid);
      pop.genuine_stats[static_cast<std::size_t>(i)] =
          detect(pop.model, sig, cfg.statistic).decision_statistic;
    } catch (const std::exception& e) {
      throw CampaignError("genuine trial " + std::to_string(i) + " at t=" + tol_key(t) + ": " +
                          e.what());
    }
  });
  return pop;
}

inline std::vector<double> anomalous_stats(const CampaignConfig& cfg, double t,
                                           const GoldenModel& model,
                                           const PdnNetlist& tampered) {
  std::vector<double> stats(static_cast<std::size_t>(cfg.trials_per_arm), 0.0);
  const std::uint64_t trial_stream = derive_stream(cfg.seed, "anomalous/t=" + tol_key(t), 0);
  parallel_for_indexed(cfg.trials_per_arm, [&](int i) {
    try {
      const BoardSignature sig = solve_variated(tampered, t, trial_stream, i, cfg.grid);
      stats[static_cast<std::size_t>(i)] =
          detect(model, sig, cfg.statistic).decision_statistic;
    } catch (const std::exception& e) {
      throw CampaignError("anomalous trial " + std::to_string(i) + " at t=" + tol_key(t) +
                          ": " + e.what());
    }
  });
  return stats;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// tolerance sweep

struct ToleranceArm {
  double tolerance = 0.0;
  RocCurve roc;
  std::vector<double> genuine_stats;
  std::vector<double> anomalous_stats;
};

inline std::vector<ToleranceArm> run_tolerance_sweep(const CampaignConfig& cfg) {
  validate_campaign_config(cfg);
  const PdnNetlist tampered =
      detail::with_anomaly_specs(cfg.base_netlist, detail::all_anomalies(cfg));
  std::vector<ToleranceArm> arms;
  arms.reserve(cfg.tolerance_list.size());
  for (double t : cfg.tolerance_list) {
    detail::GenuinePopulation pop = detail::build_genuine_population(cfg, t);
    ToleranceArm arm;
    arm.tolerance = t;
    arm.anomalous_stats = detail::anomalous_stats(cfg, t, pop.model, tampered);
    arm.genuine_stats = std::move(pop.genuine_stats);
    arm.roc = roc(arm.genuine_stats, arm.anomalous_stats);
    arms.push_back(std::move(arm));
  }
  return arms;
}

// ---------------------------------------------------------------------------
// sensitivity sweep

enum class SensitivityParameter { scale_c, scale_l, scale_r };

inline const char* to_string(SensitivityParameter p) {
  switch (p) {
    case SensitivityParameter::scale_c: return "scale_c";
    case SensitivityParameter::scale_l: return "scale_l";
    case SensitivityParameter::scale_r: return "scale_r";
  }
  return "?";
}

inline SensitivityParameter sensitivity_parameter_from_string(const std::string& s) {
  if (s == "scale_c") return SensitivityParameter::scale_c;
  if (s == "scale_l") return SensitivityParameter::scale_l;
  if (s == "scale_r") return SensitivityParameter::scale_r;
  throw CampaignError("unknown sensitivity parameter: " + s);
}

struct SensitivityArm {
  std::string name;
  double multiplier = 1.0;
  AnomalySpec anomaly;
  RocCurve roc;
  std::vector<double> anomalous_stats;
};

struct SensitivitySweep {
  SensitivityParameter parameter = SensitivityParameter::scale_c;
  std::vector<double> multipliers;
  // reference parasitics the multipliers scale from (a small MCU package)
  double reference_r = 3.0;      // ohms
  double reference_l = 21e-9;    // henries
  double reference_c = 0.9e-9;   // farads
  bool include_sot23 = true;     // add the named tiny-package arm
  std::vector<SensitivityArm> arms;          // filled by run_sensitivity_sweep
  std::vector<double> genuine_stats;         // shared across arms (one tolerance)
  double tolerance = 0.0;                    // the tolerance the sweep ran at
};

// One ROC per multiplier at the first configured tolerance.  All arms share
// the same golden model and genuine population (their stream labels depend
// only on the tolerance), so a multiplier-1.0 arm with the reference anomaly
// reproduces the tolerance sweep's arm at that t exactly.
inline SensitivitySweep run_sensitivity_sweep(const CampaignConfig& cfg,
                                              const SensitivitySweep& sweep) {
  validate_campaign_config(cfg);
  if (sweep.multipliers.empty() && !sweep.include_sot23)
    throw CampaignError("sensitivity sweep has no arms");
  for (double m : sweep.multipliers)
    if (!(m > 0.0)) throw CampaignError("multipliers must be > 0");

  const double t = cfg.tolerance_list.front();
  detail::GenuinePopulation pop = detail::build_genuine_population(cfg, t);

  SensitivitySweep filled = sweep;
  filled.arms.clear();
  filled.genuine_stats = pop.genuine_stats;
  filled.tolerance = t;

  auto run_arm = [&](const std::string& name, double mult, const AnomalySpec& spec) {
    const PdnNetlist tampered = detail::with_anomaly_specs(cfg.base_netlist, {spec});
    SensitivityArm arm;
    arm.name = name;
    arm.multiplier = mult;
    arm.anomaly = spec;
    arm.anomalous_stats = detail::anomalous_stats(cfg, t, pop.model, tampered);
    arm.roc = roc(pop.genuine_stats, arm.anomalous_stats);
    filled.arms.push_back(std::move(arm));
  };

  for (double m : sweep.multipliers) {
    AnomalySpec spec = cfg.anomaly;
    spec.r = sweep.reference_r;
    spec.l = sweep.reference_l;
    spec.c = sweep.reference_c;
    switch (sweep.parameter) {
      case SensitivityParameter::scale_c: spec.c *= m; break;
      case SensitivityParameter::scale_l: spec.l *= m; break;
      case SensitivityParameter::scale_r: spec.r *= m; break;
    }
    char name[64];
    std::snprintf(name, sizeof name, "%s_x%g", to_string(sweep.parameter), m);
    run_arm(name, m, spec);
  }
  if (sweep.include_sot23) {
    AnomalySpec spec = cfg.anomaly;
    spec.r = 3.0;
    spec.l = 1.4e-9;
    spec.c = 0.12e-12;
    run_arm("sot23", 1.0, spec);
  }
  return filled;
}

// ---------------------------------------------------------------------------
// placement grid

inline constexpr double placement_tolerance = 0.10;
inline constexpr int placement_positions = 6;

struct AccuracyGrid {
  bool doubled = false;
  int anomaly_index = 0;
  double tolerance = placement_tolerance;
  // cells[x-1][y-1] = best accuracy detecting via profile Z_xy alone;
  // symmetric because Z_xy = Z_yx is the same curve
  std::array<std::array<double, placement_positions>, placement_positions> cells{};

  double mean() const {
    double sum = 0.0;
    for (const auto& row : cells)
      for (double c : row) sum += c;
    return sum / (placement_positions * placement_positions);
  }
};

// Detection accuracy cell-by-cell when only the single profile Z_xy is
// available, with the reference parasitic anomaly placed at one chain
// position of the decap-chain board.  All cells reuse the same solved
// trials; only the embedded curve differs.
inline AccuracyGrid run_placement_grid(bool doubled, int anomaly_index,
                                       const CampaignConfig& cfg) {
  if (anomaly_index < 1 || anomaly_index > placement_positions)
    throw CampaignError("anomaly_index must lie in 1..6");
  if (cfg.trials_per_arm < 10) throw CampaignError("trials_per_arm must be >= 10");
  if (cfg.golden_count < 2) throw CampaignError("golden_count must be >= 2");
  cfg.grid.validate();

  std::vector<int> all_positions(placement_positions);
  for (int i = 0; i < placement_positions; ++i) all_positions[static_cast<std::size_t>(i)] = i + 1;
  const PdnNetlist board = with_chain_ports(make_decap_chain_board(doubled), all_positions);

  AnomalySpec spec;
  spec.id = anomaly_attiny85;
  spec.kind = AnomalyKind::parallel_rlc_at_node;
  spec.target = chain_node(anomaly_index);
  spec.r = 3.0;
  spec.l = 21e-9;
  spec.c = 0.9e-9;
  const PdnNetlist tampered = detail::with_anomaly_specs(board, {spec});

  const double t = placement_tolerance;
  const std::string prefix = doubled ? "placement12/" : "placement6/";
  const int n = placement_positions;
  const int n_pairs = n * (n + 1) / 2;
  const int trials = cfg.trials_per_arm;

  // goldens, embedded per profile: golden_curves[pair][g]
  std::vector<BoardSignature> goldens(static_cast<std::size_t>(cfg.golden_count));
  const std::uint64_t golden_stream = derive_stream(cfg.seed, prefix + "golden", 0);
  detail::parallel_for_indexed(cfg.golden_count, [&](int g) {
    try {
      goldens[static_cast<std::size_t>(g)] =
          detail::solve_variated(board, t, golden_stream, g, cfg.grid);
    } catch (const std::exception& e) {
      throw CampaignError(prefix + "golden board " + std::to_string(g) + ": " + e.what());
    }
  });
  std::vector<std::vector<ProfileCurve>> golden_curves(static_cast<std::size_t>(n_pairs));
  {
    int p = 0;
    for (int x = 1; x <= n; ++x)
      for (int y = x; y <= n; ++y, ++p) {
        auto& per_pair = golden_curves[static_cast<std::size_t>(p)];
        per_pair.reserve(goldens.size());
        for (const auto& g : goldens) per_pair.push_back(embed_profile(g, x, y));
      }
  }

  // stats[pair][trial] per class, filled trial-by-trial so each solved
  // signature is embedded once for all 21 profiles and then dropped
  auto run_class = [&](const PdnNetlist& net, const std::string& label) {
    std::vector<std::vector<double>> stats(static_cast<std::size_t>(n_pairs),
                                           std::vector<double>(static_cast<std::size_t>(trials), 0.0));
    const std::uint64_t stream = derive_stream(cfg.seed, prefix + label, 0);
    detail::parallel_for_indexed(trials, [&](int i) {
      try {
        const BoardSignature sig = detail::solve_variated(net, t, stream, i, cfg.grid);
        int p = 0;
        for (int x = 1; x <= n; ++x)
          for (int y = x; y <= n; ++y, ++p) {
            const ProfileCurve curve = embed_profile(sig, x, y);
            const auto& per_pair = golden_curves[static_cast<std::size_t>(p)];
            double stat;
            if (cfg.statistic == DecisionStatistic::min) {
              stat = std::numeric_limits<double>::infinity();
              for (const auto& gc : per_pair) stat = std::min(stat, frechet(curve, gc));
            } else {
              stat = 0.0;
              for (const auto& gc : per_pair) stat += frechet(curve, gc);
              stat /= static_cast<double>(per_pair.size());
            }
            stats[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)] = stat;
          }
      } catch (const std::exception& e) {
        throw CampaignError(prefix + label + " trial " + std::to_string(i) + ": " + e.what());
      }
    });
    return stats;
  };

  const auto genuine = run_class(board, "genuine");
  const auto anomalous = run_class(tampered, "anomalous");

  AccuracyGrid grid;
  grid.doubled = doubled;
  grid.anomaly_index = anomaly_index;
  grid.tolerance = t;
  int p = 0;
  for (int x = 1; x <= n; ++x)
    for (int y = x; y <= n; ++y, ++p) {
      const double acc =
          best_accuracy(genuine[static_cast<std::size_t>(p)], anomalous[static_cast<std::size_t>(p)])
              .accuracy;
      grid.cells[static_cast<std::size_t>(x - 1)][static_cast<std::size_t>(y - 1)] = acc;
      grid.cells[static_cast<std::size_t>(y - 1)][static_cast<std::size_t>(x - 1)] = acc;
    }
  return grid;
}

// ---------------------------------------------------------------------------
// port ablation

struct AblationRow {
  std::vector<int> ports;
  double accuracy = 0.0;
};

namespace detail {

// lexicographic index of the (x, y) profile, x <= y, in pairwise_fds order
inline int pair_index(int x, int y, int n) {
  return (x - 1) * (n + 1) - (x - 1) * x / 2 + (y - x);
}

inline double subset_statistic(const std::vector<std::vector<double>>& fd_tables,
                               const std::vector<int>& subset, int n, FdNorm norm,
                               DecisionStatistic statistic) {
  std::vector<double> sub;
  sub.reserve(subset.size() * (subset.size() + 1) / 2);
  double best = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& table : fd_tables) {
    sub.clear();
    for (std::size_t i = 0; i < subset.size(); ++i)
      for (std::size_t j = i; j < subset.size(); ++j)
        sub.push_back(table[static_cast<std::size_t>(
            pair_index(subset[i], subset[j], n))]);
    const double fd = fd_aggregate(sub, norm);
    best = std::min(best, fd);
    sum += fd;
  }
  return statistic == DecisionStatistic::min ? best
                                             : sum / static_cast<double>(fd_tables.size());
}

}  // namespace detail

// Detection accuracy when FD' is restricted to each port subset's profiles.
// Full-port pairwise FD tables are computed once per trial; every subset is
// then an aggregation over the same tables, so subsets are evaluated on
// identical trials by construction.
inline std::vector<AblationRow> run_port_ablation(const CampaignConfig& cfg,
                                                  const std::vector<std::vector<int>>& port_subsets) {
  validate_campaign_config(cfg);
  if (port_subsets.empty()) throw CampaignError("need at least one port subset");
  const int n = static_cast<int>(cfg.base_netlist.ports.size());
  std::vector<std::vector<int>> subsets = port_subsets;
  for (auto& s : subsets) {
    if (s.empty()) throw CampaignError("port subsets must not be empty");
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (int p : s)
      if (p < 1 || p > n)
        throw CampaignError("port " + std::to_string(p) + " outside 1.." + std::to_string(n));
  }

  const double t = cfg.tolerance_list.front();
  const PdnNetlist tampered =
      detail::with_anomaly_specs(cfg.base_netlist, detail::all_anomalies(cfg));

  std::vector<BoardSignature> goldens(static_cast<std::size_t>(cfg.golden_count));
  const std::uint64_t golden_stream = derive_stream(cfg.seed, "golden/t=" + detail::tol_key(t), 0);
  detail::parallel_for_indexed(cfg.golden_count, [&](int g) {
    try {
      goldens[static_cast<std::size_t>(g)] =
          detail::solve_variated(cfg.base_netlist, t, golden_stream, g, cfg.grid);
    } catch (const std::exception& e) {
      throw CampaignError("golden board " + std::to_string(g) + ": " + e.what());
    }
  });

  const int trials = cfg.trials_per_arm;
  // stats[subset][trial] per class
  auto run_class = [&](const PdnNetlist& net, const std::string& label) {
    std::vector<std::vector<double>> stats(subsets.size(),
                                           std::vector<double>(static_cast<std::size_t>(trials), 0.0));
    const std::uint64_t stream =
        derive_stream(cfg.seed, label + "/t=" + detail::tol_key(t), 0);
    detail::parallel_for_indexed(trials, [&](int i) {
      try {
        const BoardSignature sig = detail::solve_variated(net, t, stream, i, cfg.grid);
        std::vector<std::vector<double>> fd_tables;
        fd_tables.reserve(goldens.size());
        for (const auto& g : goldens) fd_tables.push_back(pairwise_fds(g, sig));
        for (std::size_t s = 0; s < subsets.size(); ++s)
          stats[s][static_cast<std::size_t>(i)] = detail::subset_statistic(
              fd_tables, subsets[s], n, cfg.cfg.norm_order, cfg.statistic);
      } catch (const std::exception& e) {
        throw CampaignError(label + " trial " + std::to_string(i) + ": " + e.what());
      }
    });
    return stats;
  };

  const auto genuine = run_class(cfg.base_netlist, "genuine");
  const auto anomalous = run_class(tampered, "anomalous");

  std::vector<AblationRow> rows;
  rows.reserve(subsets.size());
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    AblationRow row;
    row.ports = subsets[s];
    row.accuracy = best_accuracy(genuine[s], anomalous[s]).accuracy;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// KNN clone campaign

struct KnnCampaignConfig {
  std::vector<PdnNetlist> class_netlists;  // one per class, ports already set
  std::vector<std::string> class_labels;
  int train_per_class = 4;
  int k = 3;
  double tolerance = 0.10;
  int trials = 500;
  FrequencyGrid grid = default_grid();
  FdConfig cfg;
  std::uint64_t seed = 1;
};

struct KnnCampaignResult {
  std::vector<std::string> class_labels;
  int trials = 0;
  int correct = 0;
  double accuracy = 0.0;
  std::vector<int> confusion;  // row-major, confusion[true * n_classes + predicted]
};

inline KnnCampaignResult run_knn_campaign(const KnnCampaignConfig& cfg) {
  const int n_classes = static_cast<int>(cfg.class_netlists.size());
  if (n_classes < 2) throw CampaignError("need at least 2 classes");
  if (cfg.class_labels.size() != cfg.class_netlists.size())
    throw CampaignError("class_labels must match class_netlists");
  for (std::size_t i = 0; i < cfg.class_labels.size(); ++i)
    for (std::size_t j = i + 1; j < cfg.class_labels.size(); ++j)
      if (cfg.class_labels[i] == cfg.class_labels[j])
        throw CampaignError("duplicate class label: " + cfg.class_labels[i]);
  if (cfg.train_per_class < 1) throw CampaignError("train_per_class must be >= 1");
  if (cfg.trials < 1) throw CampaignError("trials must be >= 1");
  if (!(cfg.tolerance >= 0.0) || !(cfg.tolerance < 1.0))
    throw CampaignError("tolerance must lie in [0, 1)");
  cfg.grid.validate();
  for (const auto& net : cfg.class_netlists) {
    const auto diags = validate_netlist(net);
    if (!diags.empty()) throw CampaignError("class netlist '" + net.label + "' invalid");
  }

  // training library
  LabeledLibrary lib;
  lib.entries.resize(static_cast<std::size_t>(n_classes * cfg.train_per_class));
  detail::parallel_for_indexed(n_classes * cfg.train_per_class, [&](int slot) {
    const int c = slot / cfg.train_per_class;
    const int g = slot % cfg.train_per_class;
    const std::uint64_t stream =
        derive_stream(cfg.seed, "knn/train/" + cfg.class_labels[static_cast<std::size_t>(c)], 0);
    try {
      LibraryEntry entry;
      entry.sig = detail::solve_variated(cfg.class_netlists[static_cast<std::size_t>(c)],
                                         cfg.tolerance, stream, g, cfg.grid);
      entry.label = cfg.class_labels[static_cast<std::size_t>(c)];
      lib.entries[static_cast<std::size_t>(slot)] = std::move(entry);
    } catch (const std::exception& e) {
      throw CampaignError("training board " + std::to_string(g) + " of class " +
                          cfg.class_labels[static_cast<std::size_t>(c)] + ": " + e.what());
    }
  });

  // the class of each trial comes from one serial pick stream so trial
  // execution order cannot change it
  std::vector<int> picks(static_cast<std::size_t>(cfg.trials));
  {
    GaussianStream pick_stream(derive_stream(cfg.seed, "knn/pick", 0));
    for (auto& p : picks) p = static_cast<int>(pick_stream.next_index(static_cast<std::size_t>(n_classes)));
  }

  std::vector<int> predicted(static_cast<std::size_t>(cfg.trials), -1);
  detail::parallel_for_indexed(cfg.trials, [&](int i) {
    const int c = picks[static_cast<std::size_t>(i)];
    const std::uint64_t stream =
        derive_stream(cfg.seed, "knn/test/" + cfg.class_labels[static_cast<std::size_t>(c)], 0);
    try {
      const BoardSignature sig = detail::solve_variated(
          cfg.class_netlists[static_cast<std::size_t>(c)], cfg.tolerance, stream, i, cfg.grid);
      const std::string label = fd_knn(lib, sig, cfg.k, cfg.cfg);
      for (int j = 0; j < n_classes; ++j)
        if (cfg.class_labels[static_cast<std::size_t>(j)] == label) {
          predicted[static_cast<std::size_t>(i)] = j;
          break;
        }
    } catch (const std::exception& e) {
      throw CampaignError("knn trial " + std::to_string(i) + ": " + e.what());
    }
  });

  KnnCampaignResult result;
  result.class_labels = cfg.class_labels;
  result.trials = cfg.trials;
  result.confusion.assign(static_cast<std::size_t>(n_classes * n_classes), 0);
  for (int i = 0; i < cfg.trials; ++i) {
    const int c = picks[static_cast<std::size_t>(i)];
    const int p = predicted[static_cast<std::size_t>(i)];
    result.confusion[static_cast<std::size_t>(c * n_classes + p)] += 1;
    if (p == c) result.correct += 1;
  }
  result.accuracy = static_cast<double>(result.correct) / static_cast<double>(cfg.trials);
  return result;
}

// ---------------------------------------------------------------------------
// CSV writers (fixed 12-significant-digit formatting, byte-reproducible)

namespace detail {

inline void csv_num(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

}  // namespace detail

inline std::string sweep_summary_to_csv(const std::vector<ToleranceArm>& arms) {
  std::string out = "tolerance,auc,genuine_trials,anomalous_trials\n";
  for (const auto& a : arms) {
    detail::csv_num(out, a.tolerance);
    out += ',';
    detail::csv_num(out, a.roc.auc);
    out += ',' + std::to_string(a.genuine_stats.size()) + ',' +
           std::to_string(a.anomalous_stats.size()) + '\n';
  }
  return out;
}

inline std::string sweep_rocs_to_csv(const std::vector<ToleranceArm>& arms) {
  std::string out = "tolerance,fpr,tpr,threshold\n";
  for (const auto& a : arms)
    for (const auto& p : a.roc.points) {
      detail::csv_num(out, a.tolerance);
      out += ',';
      detail::csv_num(out, p.fpr);
      out += ',';
      detail::csv_num(out, p.tpr);
      out += ',';
      detail::csv_num(out, p.threshold);
      out += '\n';
    }
  return out;
}

inline std::string sensitivity_to_csv(const SensitivitySweep& sweep) {
  std::string out = "arm,parameter,multiplier,auc\n";
  for (const auto& a : sweep.arms) {
    out += a.name;
    out += ',';
    out += to_string(sweep.parameter);
    out += ',';
    detail::csv_num(out, a.multiplier);
    out += ',';
    detail::csv_num(out, a.roc.auc);
    out += '\n';
  }
  return out;
}

inline std::string accuracy_grid_to_csv(const AccuracyGrid& grid) {
  std::string out = "x,y,accuracy\n";
  for (int x = 1; x <= placement_positions; ++x)
    for (int y = 1; y <= placement_positions; ++y) {
      out += std::to_string(x) + ',' + std::to_string(y) + ',';
      detail::csv_num(out, grid.cells[static_cast<std::size_t>(x - 1)][static_cast<std::size_t>(y - 1)]);
      out += '\n';
    }
  return out;
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string out = "ports,accuracy\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.ports.size(); ++i) {
      if (i) out += ';';
      out += std::to_string(r.ports[i]);
    }
    out += ',';
    detail::csv_num(out, r.accuracy);
    out += '\n';
  }
  return out;
}

inline std::string knn_to_csv(const KnnCampaignResult& result) {
  std::string out = "true_label,predicted_label,count\n";
  const int n = static_cast<int>(result.class_labels.size());
  for (int c = 0; c < n; ++c)
    for (int p = 0; p < n; ++p)
      out += result.class_labels[static_cast<std::size_t>(c)] + ',' +
             result.class_labels[static_cast<std::size_t>(p)] + ',' +
             std::to_string(result.confusion[static_cast<std::size_t>(c * n + p)]) + '\n';
  return out;
}

inline std::string knn_summary_to_csv(const KnnCampaignResult& result) {
  std::string out = "trials,correct,accuracy\n";
  out += std::to_string(result.trials) + ',' + std::to_string(result.correct) + ',';
  detail::csv_num(out, result.accuracy);
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// TOML campaign configs

enum class CampaignKind { tolerance, sensitivity, placement, ablation, knn };

inline const char* to_string(CampaignKind k) {
  switch (k) {
    case CampaignKind::tolerance: return "tolerance";
    case CampaignKind::sensitivity: return "sensitivity";
    case CampaignKind::placement: return "placement";
    case CampaignKind::ablation: return "ablation";
    case CampaignKind::knn: return "knn";
  }
  return "?";
}

struct LoadedCampaign {
  CampaignKind kind = CampaignKind::tolerance;
  CampaignConfig cfg;
  SensitivitySweep sweep;                       // sensitivity
  bool doubled = false;                         // placement
  int anomaly_index = 4;                        // placement
  std::vector<std::vector<int>> port_subsets;   // ablation
  KnnCampaignConfig knn;                        // knn
};

namespace detail {

inline std::vector<int> parse_port_list(const std::string& text) {
  std::vector<int> ports;
  std::istringstream is(text);
  int p;
  while (is >> p) ports.push_back(p);
  if (ports.empty() || !is.eof())
    throw IoError("cannot parse port list '" + text + "' (expected space-separated integers)");
  return ports;
}

inline AnomalySpec anomaly_from_menu(const PdnNetlist& net, const std::string& id) {
  for (const auto& a : net.anomalies)
    if (a.id == id) return a;
  throw IoError("anomaly '" + id + "' not found in the netlist's anomaly menu");
}

}  // namespace detail

// Reads a campaign config.  `load_file` maps a path to file contents (the
// CLI passes a filesystem reader; tests can pass a stub).
inline LoadedCampaign load_campaign_toml(
    const std::string& text,
    const std::function<std::string(const std::string&)>& load_file = read_text_file) {
  const TomlTable t = parse_toml(text);
  LoadedCampaign out;

  const std::string kind = toml_string(t, "kind", "tolerance");
  if (kind == "tolerance") out.kind = CampaignKind::tolerance;
  else if (kind == "sensitivity") out.kind = CampaignKind::sensitivity;
  else if (kind == "placement") out.kind = CampaignKind::placement;
  else if (kind == "ablation") out.kind = CampaignKind::ablation;
  else if (kind == "knn") out.kind = CampaignKind::knn;
  else
    throw IoError("unknown campaign kind '" + kind + "'");

  // board: an explicit netlist file, or the built-in decap chain
  PdnNetlist board;
  if (const TomlValue* v = toml_find(t, "netlist")) {
    board = netlist_from_json(json::parse(load_file(v->as_string("netlist"))));
    if (toml_find(t, "ports"))
      throw IoError("'ports' applies to the built-in board only; declare ports in the netlist");
  } else {
    const std::string name = toml_string(t, "board", "decap_chain");
    bool doubled_board = false;
    if (name == "decap_chain") doubled_board = false;
    else if (name == "decap_chain_doubled") doubled_board = true;
    else
      throw IoError("unknown built-in board '" + name + "'");
    std::vector<int> ports = {1, 2, 3, 4, 5, 6};
    if (const TomlValue* pv = toml_find(t, "ports")) {
      ports.clear();
      for (double d : pv->as_doubles("ports")) ports.push_back(static_cast<int>(d));
    }
    board = with_chain_ports(make_decap_chain_board(doubled_board), ports);
  }

  CampaignConfig& cfg = out.cfg;
  cfg.base_netlist = board;
  cfg.tolerance_list = {0.10};
  if (const TomlValue* v = toml_find(t, "tolerances")) cfg.tolerance_list = v->as_doubles("tolerances");
  cfg.trials_per_arm = static_cast<int>(toml_int(t, "trials", 200));
  cfg.golden_count = static_cast<int>(toml_int(t, "goldens", 5));
  cfg.seed = static_cast<std::uint64_t>(toml_int(t, "seed", 1));
  cfg.statistic = decision_statistic_from_string(toml_string(t, "statistic", "min"));
  cfg.cfg.norm_order = fd_norm_from_string(toml_string(t, "norm", "l2"));
  cfg.grid.f_start = toml_double(t, "f_start", cfg.grid.f_start);
  cfg.grid.f_stop = toml_double(t, "f_stop", cfg.grid.f_stop);
  cfg.grid.points = static_cast<int>(toml_int(t, "points", cfg.grid.points));
  cfg.grid.spacing = grid_spacing_from_string(
      toml_string(t, "spacing", to_string(cfg.grid.spacing)));

  // the anomaly: a menu id, or an inline [anomaly] section
  if (toml_find(t, "anomaly.kind")) {
    AnomalySpec a;
    a.id = toml_string(t, "anomaly.id", "inline");
    a.kind = anomaly_kind_from_string(toml_string(t, "anomaly.kind", ""));
    a.target = toml_string(t, "anomaly.target", "");
    if (a.target.empty()) throw IoError("inline anomaly needs 'anomaly.target'");
    a.r = toml_double(t, "anomaly.r", 0.0);
    a.l = toml_double(t, "anomaly.l", 0.0);
    a.c = toml_double(t, "anomaly.c", 0.0);
    cfg.anomaly = a;
  } else {
    const std::string id = toml_string(t, "anomaly", anomaly_attiny85);
    cfg.anomaly = detail::anomaly_from_menu(board, id);
  }
  if (const TomlValue* v = toml_find(t, "extra_anomalies"))
    for (const auto& id : v->as_strings("extra_anomalies"))
      cfg.extra_anomalies.push_back(detail::anomaly_from_menu(board, id));

  switch (out.kind) {
    case CampaignKind::tolerance:
      break;
    case CampaignKind::sensitivity: {
      out.sweep.parameter =
          sensitivity_parameter_from_string(toml_string(t, "parameter", "scale_c"));
      if (const TomlValue* v = toml_find(t, "multipliers"))
        out.sweep.multipliers = v->as_doubles("multipliers");
      out.sweep.include_sot23 = toml_bool(t, "include_sot23", true);
      out.sweep.reference_r = toml_double(t, "reference_r", out.sweep.reference_r);
      out.sweep.reference_l = toml_double(t, "reference_l", out.sweep.reference_l);
      out.sweep.reference_c = toml_double(t, "reference_c", out.sweep.reference_c);
      break;
    }
    case CampaignKind::placement: {
      out.doubled = toml_bool(t, "doubled", false);
      out.anomaly_index = static_cast<int>(toml_int(t, "anomaly_index", 4));
      break;
    }
    case CampaignKind::ablation: {
      if (const TomlValue* v = toml_find(t, "port_subsets")) {
        for (const auto& s : v->as_strings("port_subsets"))
          out.port_subsets.push_back(detail::parse_port_list(s));
      } else {
        // default: every single port plus the full set
        const int n = static_cast<int>(board.ports.size());
        for (int p = 1; p <= n; ++p) out.port_subsets.push_back({p});
        std::vector<int> all;
        for (int p = 1; p <= n; ++p) all.push_back(p);
        out.port_subsets.push_back(all);
      }
      break;
    }
    case CampaignKind::knn: {
      const TomlValue* cv = toml_find(t, "classes");
      if (!cv) throw IoError("knn campaign needs 'classes'");
      out.knn.class_labels = cv->as_strings("classes");
      for (const auto& label : out.knn.class_labels) {
        const double sr = toml_double(t, "class." + label + ".scale_r", 1.0);
        const double sl = toml_double(t, "class." + label + ".scale_l", 1.0);
        const double sc = toml_double(t, "class." + label + ".scale_c", 1.0);
        PdnNetlist clone = scale_branch_values(board, "cap", sr, sl, sc);
        clone.label = board.label + "/" + label;
        out.knn.class_netlists.push_back(std::move(clone));
      }
      out.knn.train_per_class = static_cast<int>(toml_int(t, "train_per_class", 4));
      out.knn.k = static_cast<int>(toml_int(t, "k", 3));
      out.knn.tolerance = cfg.tolerance_list.front();
      out.knn.trials = cfg.trials_per_arm;
      out.knn.grid = cfg.grid;
      out.knn.cfg = cfg.cfg;
      out.knn.seed = cfg.seed;
      break;
    }
  }
  return out;
}

}  // namespace pdnpulse
