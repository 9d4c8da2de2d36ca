#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "pdnpulse/boards.hpp"
#include "pdnpulse/campaign.hpp"
#include "pdnpulse/io.hpp"

using namespace pdnpulse;

namespace {

FrequencyGrid coarse_grid(int points = 48) {
  FrequencyGrid g;
  g.points = points;
  return g;
}

// A small but honest campaign: 2-port view of the decap chain, 10 trials.
CampaignConfig small_config(std::vector<double> tolerances = {0.10}) {
  CampaignConfig cfg;
  cfg.base_netlist = with_chain_ports(make_decap_chain_board(), {1, 6});
  cfg.anomaly = detail::anomaly_from_menu(cfg.base_netlist, anomaly_attiny85);
  cfg.tolerance_list = std::move(tolerances);
  cfg.trials_per_arm = 10;
  cfg.golden_count = 2;
  cfg.grid = coarse_grid();
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("tolerance sweep is deterministic to the byte") {
  const CampaignConfig cfg = small_config({0.05, 0.20});
  const auto arms1 = run_tolerance_sweep(cfg);
  const auto arms2 = run_tolerance_sweep(cfg);

  REQUIRE(arms1.size() == 2);
  REQUIRE(sweep_summary_to_csv(arms1) == sweep_summary_to_csv(arms2));
  REQUIRE(sweep_rocs_to_csv(arms1) == sweep_rocs_to_csv(arms2));

  for (const auto& arm : arms1) {
    REQUIRE(arm.genuine_stats.size() == 10);
    REQUIRE(arm.anomalous_stats.size() == 10);
    REQUIRE(arm.roc.auc >= 0.0);
    REQUIRE(arm.roc.auc <= 1.0);
    for (double s : arm.genuine_stats) REQUIRE(s >= 0.0);
  }

  // a different seed moves the statistics
  CampaignConfig other = cfg;
  other.seed = 8;
  const auto arms3 = run_tolerance_sweep(other);
  REQUIRE(arms3[0].genuine_stats != arms1[0].genuine_stats);
}

TEST_CASE("zero tolerance separates tampered boards perfectly") {
  const CampaignConfig cfg = small_config({0.0});
  const auto arms = run_tolerance_sweep(cfg);
  REQUIRE(arms.size() == 1);
  // every genuine board is the nominal board, so all genuine FDs collapse to 0
  for (double s : arms[0].genuine_stats) REQUIRE(s == 0.0);
  for (double s : arms[0].anomalous_stats) REQUIRE(s > 0.0);
  REQUIRE(arms[0].roc.auc == 1.0);
}

TEST_CASE("sensitivity arm at multiplier 1 reproduces the tolerance arm") {
  CampaignConfig cfg = small_config({0.10});
  // the menu anomaly carries exactly the reference parasitics
  REQUIRE(cfg.anomaly.r == 3.0);
  REQUIRE(cfg.anomaly.l == 21e-9);
  REQUIRE(cfg.anomaly.c == 0.9e-9);

  const auto arms = run_tolerance_sweep(cfg);

  SensitivitySweep sweep;
  sweep.parameter = SensitivityParameter::scale_c;
  sweep.multipliers = {1.0};
  sweep.include_sot23 = false;
  const SensitivitySweep filled = run_sensitivity_sweep(cfg, sweep);

  REQUIRE(filled.tolerance == 0.10);
  REQUIRE(filled.arms.size() == 1);
  REQUIRE(filled.arms[0].name == "scale_c_x1");
  REQUIRE(filled.genuine_stats == arms[0].genuine_stats);
  REQUIRE(filled.arms[0].anomalous_stats == arms[0].anomalous_stats);
  REQUIRE(filled.arms[0].roc.auc == arms[0].roc.auc);
}

TEST_CASE("sensitivity sweep names arms and honors the sot23 flag") {
  CampaignConfig cfg = small_config({0.10});
  cfg.trials_per_arm = 10;
  SensitivitySweep sweep;
  sweep.parameter = SensitivityParameter::scale_l;
  sweep.multipliers = {0.5, 10.0};
  sweep.include_sot23 = true;
  const SensitivitySweep filled = run_sensitivity_sweep(cfg, sweep);
  REQUIRE(filled.arms.size() == 3);
  REQUIRE(filled.arms[0].name == "scale_l_x0.5");
  REQUIRE(filled.arms[1].name == "scale_l_x10");
  REQUIRE(filled.arms[2].name == "sot23");
  REQUIRE(filled.arms[1].anomaly.l == 21e-9 * 10.0);
  REQUIRE(filled.arms[2].anomaly.c == 0.12e-12);
  // every arm shares the same genuine population
  const std::string csv = sensitivity_to_csv(filled);
  REQUIRE(csv.rfind("arm,parameter,multiplier,auc\n", 0) == 0);
}

TEST_CASE("campaign configs are validated before any solving") {
  using Catch::Matchers::ContainsSubstring;
  CampaignConfig good = small_config();
  REQUIRE_NOTHROW(validate_campaign_config(good));

  CampaignConfig bad = good;
  bad.trials_per_arm = 5;
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("trials_per_arm"));

  bad = good;
  bad.golden_count = 1;
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("golden_count"));

  bad = good;
  bad.tolerance_list = {};
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("tolerance_list"));

  bad = good;
  bad.tolerance_list = {1.0};
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("[0, 1)"));

  bad = good;
  bad.anomaly.id.clear();
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("anomaly id"));

  bad = good;
  bad.base_netlist.ports.clear();
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("no ports"));

  bad = good;
  bad.base_netlist.branches[0].node_a = "nowhere";
  REQUIRE_THROWS_WITH(validate_campaign_config(bad), ContainsSubstring("netlist invalid"));
}

TEST_CASE("placement grid is symmetric with accuracies in range") {
  CampaignConfig cfg;
  cfg.trials_per_arm = 10;
  cfg.golden_count = 2;
  cfg.grid = coarse_grid();
  cfg.seed = 3;
  const AccuracyGrid grid = run_placement_grid(false, 4, cfg);

  REQUIRE(grid.anomaly_index == 4);
  REQUIRE(grid.doubled == false);
  REQUIRE(grid.tolerance == 0.10);
  for (int x = 0; x < placement_positions; ++x)
    for (int y = 0; y < placement_positions; ++y) {
      REQUIRE(grid.cells[x][y] >= 0.0);
      REQUIRE(grid.cells[x][y] <= 1.0);
      REQUIRE(grid.cells[x][y] == grid.cells[y][x]);
    }

  const std::string csv = accuracy_grid_to_csv(grid);
  REQUIRE(csv.rfind("x,y,accuracy\n", 0) == 0);
  int lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  REQUIRE(lines == 37);  // header + 36 cells

  REQUIRE_THROWS_WITH(run_placement_grid(false, 0, cfg),
                      Catch::Matchers::ContainsSubstring("1..6"));
  REQUIRE_THROWS_WITH(run_placement_grid(false, 7, cfg),
                      Catch::Matchers::ContainsSubstring("1..6"));
}

TEST_CASE("pair_index walks the x<=y profiles lexicographically") {
  REQUIRE(detail::pair_index(1, 1, 3) == 0);
  REQUIRE(detail::pair_index(1, 2, 3) == 1);
  REQUIRE(detail::pair_index(1, 3, 3) == 2);
  REQUIRE(detail::pair_index(2, 2, 3) == 3);
  REQUIRE(detail::pair_index(2, 3, 3) == 4);
  REQUIRE(detail::pair_index(3, 3, 3) == 5);
  // matches the flattening used by pairwise_fds for any n
  for (int n : {1, 2, 4, 6}) {
    int k = 0;
    for (int x = 1; x <= n; ++x)
      for (int y = x; y <= n; ++y) REQUIRE(detail::pair_index(x, y, n) == k++);
  }
}

TEST_CASE("ablation over the full port set matches the plain detector") {
  CampaignConfig cfg = small_config({0.10});
  cfg.base_netlist = with_chain_ports(make_decap_chain_board(), {1, 4, 6});
  cfg.anomaly = detail::anomaly_from_menu(cfg.base_netlist, anomaly_attiny85);

  const auto rows = run_port_ablation(cfg, {{1}, {2}, {3}, {1, 2, 3}});
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    REQUIRE(row.accuracy >= 0.0);
    REQUIRE(row.accuracy <= 1.0);
  }
  REQUIRE(rows[3].ports == std::vector<int>{1, 2, 3});

  // same trials, same statistic: the full subset must agree with the
  // tolerance sweep's accuracy at this tolerance, bit for bit
  const auto arms = run_tolerance_sweep(cfg);
  const double direct = best_accuracy(arms[0].genuine_stats, arms[0].anomalous_stats).accuracy;
  REQUIRE(rows[3].accuracy == direct);

  REQUIRE_THROWS_WITH(run_port_ablation(cfg, {}),
                      Catch::Matchers::ContainsSubstring("at least one"));
  REQUIRE_THROWS_WITH(run_port_ablation(cfg, {{4}}),
                      Catch::Matchers::ContainsSubstring("outside 1..3"));
  REQUIRE_THROWS_WITH(run_port_ablation(cfg, {std::vector<int>{}}),
                      Catch::Matchers::ContainsSubstring("not be empty"));

  const std::string csv = ablation_to_csv(rows);
  REQUIRE(csv.rfind("ports,accuracy\n", 0) == 0);
  REQUIRE(csv.find("1;2;3,") != std::string::npos);
}

TEST_CASE("knn campaign separates strongly different clone classes") {
  const PdnNetlist base = with_chain_ports(make_decap_chain_board(), {6});
  KnnCampaignConfig cfg;
  cfg.class_netlists = {base, scale_branch_values(base, "cap", 1.0, 1.0, 3.0)};
  cfg.class_netlists[1].label = "cap_x3";
  cfg.class_labels = {"genuine", "cap_x3"};
  cfg.train_per_class = 2;
  cfg.k = 3;
  cfg.tolerance = 0.05;
  cfg.trials = 10;
  cfg.grid = coarse_grid();
  cfg.seed = 11;

  const KnnCampaignResult result = run_knn_campaign(cfg);
  REQUIRE(result.trials == 10);
  REQUIRE(result.correct == 10);
  REQUIRE(result.accuracy == 1.0);
  REQUIRE(result.confusion.size() == 4);
  REQUIRE(result.confusion[0] + result.confusion[1] + result.confusion[2] +
              result.confusion[3] ==
          10);
  // diagonal only
  REQUIRE(result.confusion[1] == 0);
  REQUIRE(result.confusion[2] == 0);

  // reruns are bitwise identical
  const KnnCampaignResult again = run_knn_campaign(cfg);
  REQUIRE(knn_to_csv(result) == knn_to_csv(again));
  REQUIRE(knn_summary_to_csv(result) == knn_summary_to_csv(again));
}

TEST_CASE("knn campaign validates its inputs") {
  using Catch::Matchers::ContainsSubstring;
  const PdnNetlist base = with_chain_ports(make_decap_chain_board(), {6});
  KnnCampaignConfig cfg;
  cfg.class_netlists = {base, base};
  cfg.class_labels = {"a", "a"};
  cfg.trials = 10;
  cfg.grid = coarse_grid();
  REQUIRE_THROWS_WITH(run_knn_campaign(cfg), ContainsSubstring("duplicate class label"));

  cfg.class_labels = {"a"};
  REQUIRE_THROWS_WITH(run_knn_campaign(cfg), ContainsSubstring("class_labels"));

  cfg.class_netlists = {base};
  REQUIRE_THROWS_WITH(run_knn_campaign(cfg), ContainsSubstring("at least 2 classes"));
}

TEST_CASE("campaign toml maps every surface of the config") {
  const std::string text =
      "kind = \"tolerance\"\n"
      "board = \"decap_chain\"\n"
      "ports = [1, 6]\n"
      "tolerances = [0.05, 0.1]\n"
      "trials = 25\n"
      "goldens = 3\n"
      "seed = 99\n"
      "statistic = \"mean\"\n"
      "norm = \"linf\"\n"
      "points = 64\n"
      "spacing = \"log\"\n"
      "f_start = 1e6\n"
      "f_stop = 1e9\n";
  const LoadedCampaign c = load_campaign_toml(text);
  REQUIRE(c.kind == CampaignKind::tolerance);
  REQUIRE(c.cfg.base_netlist.ports.size() == 2);
  REQUIRE(c.cfg.base_netlist.ports[1].node == chain_node(6));
  REQUIRE(c.cfg.tolerance_list == std::vector<double>{0.05, 0.1});
  REQUIRE(c.cfg.trials_per_arm == 25);
  REQUIRE(c.cfg.golden_count == 3);
  REQUIRE(c.cfg.seed == 99);
  REQUIRE(c.cfg.statistic == DecisionStatistic::mean);
  REQUIRE(c.cfg.cfg.norm_order == FdNorm::Linf);
  REQUIRE(c.cfg.grid.points == 64);
  REQUIRE(c.cfg.grid.f_start == 1e6);
  REQUIRE(c.cfg.grid.f_stop == 1e9);
  // the default anomaly is the menu's small MCU
  REQUIRE(c.cfg.anomaly.id == anomaly_attiny85);
  REQUIRE(c.cfg.anomaly.r == 3.0);
}

TEST_CASE("campaign toml supports inline anomalies and named kinds") {
  const std::string text =
      "kind = \"sensitivity\"\n"
      "ports = [6]\n"
      "parameter = \"scale_l\"\n"
      "multipliers = [0.1, 1.0, 10.0]\n"
      "include_sot23 = false\n"
      "[anomaly]\n"
      "id = \"probe\"\n"
      "kind = \"parallel_rlc_at_node\"\n"
      "target = \"n3\"\n"
      "r = 2.0\n"
      "l = 5e-9\n";
  const LoadedCampaign c = load_campaign_toml(text);
  REQUIRE(c.kind == CampaignKind::sensitivity);
  REQUIRE(c.sweep.parameter == SensitivityParameter::scale_l);
  REQUIRE(c.sweep.multipliers == std::vector<double>{0.1, 1.0, 10.0});
  REQUIRE(c.sweep.include_sot23 == false);
  REQUIRE(c.cfg.anomaly.id == "probe");
  REQUIRE(c.cfg.anomaly.target == "n3");
  REQUIRE(c.cfg.anomaly.l == 5e-9);
  REQUIRE(c.cfg.anomaly.c == 0.0);
}

TEST_CASE("campaign toml handles placement, ablation, and knn sections") {
  using Catch::Matchers::ContainsSubstring;

  const LoadedCampaign p = load_campaign_toml(
      "kind = \"placement\"\ndoubled = true\nanomaly_index = 2\n");
  REQUIRE(p.kind == CampaignKind::placement);
  REQUIRE(p.doubled);
  REQUIRE(p.anomaly_index == 2);

  const LoadedCampaign a = load_campaign_toml(
      "kind = \"ablation\"\nports = [1, 4, 6]\n"
      "port_subsets = [\"1\", \"1 2 3\"]\n");
  REQUIRE(a.kind == CampaignKind::ablation);
  REQUIRE(a.port_subsets.size() == 2);
  REQUIRE(a.port_subsets[1] == std::vector<int>{1, 2, 3});

  // ablation defaults: one subset per port plus the full set
  const LoadedCampaign ad =
      load_campaign_toml("kind = \"ablation\"\nports = [1, 6]\n");
  REQUIRE(ad.port_subsets.size() == 3);
  REQUIRE(ad.port_subsets[2] == std::vector<int>{1, 2});

  const LoadedCampaign k = load_campaign_toml(
      "kind = \"knn\"\n"
      "ports = [1, 4, 6]\n"
      "classes = [\"genuine\", \"fat_caps\"]\n"
      "train_per_class = 2\n"
      "k = 1\n"
      "trials = 40\n"
      "tolerances = [0.08]\n"
      "seed = 5\n"
      "[class.fat_caps]\n"
      "scale_c = 1.5\n");
  REQUIRE(k.kind == CampaignKind::knn);
  REQUIRE(k.knn.class_labels == std::vector<std::string>{"genuine", "fat_caps"});
  REQUIRE(k.knn.class_netlists.size() == 2);
  REQUIRE(k.knn.train_per_class == 2);
  REQUIRE(k.knn.k == 1);
  REQUIRE(k.knn.trials == 40);
  REQUIRE(k.knn.tolerance == 0.08);
  REQUIRE(k.knn.seed == 5);

  REQUIRE_THROWS_WITH(load_campaign_toml("kind = \"knn\"\n"),
                      ContainsSubstring("needs 'classes'"));
  REQUIRE_THROWS_WITH(load_campaign_toml("kind = \"mystery\"\n"),
                      ContainsSubstring("unknown campaign kind"));
  REQUIRE_THROWS_WITH(load_campaign_toml("board = \"other\"\n"),
                      ContainsSubstring("unknown built-in board"));
  REQUIRE_THROWS_WITH(
      load_campaign_toml("anomaly = \"ghost\"\n"),
      ContainsSubstring("not found in the netlist's anomaly menu"));
}

TEST_CASE("campaign toml loads external netlists through the reader hook") {
  const PdnNetlist net = with_chain_ports(make_decap_chain_board(), {2, 5});
  const std::string netlist_json = netlist_to_json(net).dump();
  int reads = 0;
  const auto loader = [&](const std::string& path) {
    ++reads;
    REQUIRE(path == "board.json");
    return netlist_json;
  };
  const LoadedCampaign c =
      load_campaign_toml("netlist = \"board.json\"\n", loader);
  REQUIRE(reads == 1);
  REQUIRE(c.cfg.base_netlist.label == net.label);
  REQUIRE(c.cfg.base_netlist.ports.size() == 2);

  REQUIRE_THROWS_WITH(
      load_campaign_toml("netlist = \"board.json\"\nports = [1]\n", loader),
      Catch::Matchers::ContainsSubstring("built-in board only"));
}
