// pdnpulse: PDN impedance-signature anomaly detection from the command line.
//
// Subcommands: simulate, import, golden, detect, classify, roc, campaign,
// convert.  Exit codes: 0 = success (or genuine verdict), 2 = anomalous
// verdict, 1 = error (one machine-parsable line on stderr).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdnpulse/pdnpulse.hpp"

namespace pp = pdnpulse;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_error = 1;
constexpr int exit_anomalous = 2;

// Tracks everything a run reads and writes so the manifest describes the
// run completely.
struct ArtifactTracker {
  pp::RunManifest manifest;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  std::string read(const std::string& path) {
    const std::string text = pp::read_text_file(path);
    manifest.inputs.push_back({path, pp::hash_text_hex(text)});
    return text;
  }
  void write(const std::string& path, const std::string& content) {
    pp::write_text_file(path, content);
    manifest.outputs.push_back(path);
  }
  void finish(const std::string& manifest_path) {
    manifest.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    pp::save_manifest(manifest, manifest_path);
  }
};

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

bool seed_from_env(std::uint64_t& seed) {
  const char* env = std::getenv("PDNPULSE_SEED");
  if (!env || !*env) return false;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    seed = static_cast<std::uint64_t>(v);
    return true;
  } catch (const std::exception&) {
    throw pp::IoError(std::string("PDNPULSE_SEED is not an unsigned integer: ") + env);
  }
}

// Signature file dispatch by extension: .csv rows or Touchstone .sNp.
pp::BoardSignature load_signature(ArtifactTracker& tracker, const std::string& path,
                                  const std::string& label) {
  const std::string text = tracker.read(path);
  const std::string name = label.empty() ? std::filesystem::path(path).stem().string() : label;
  if (std::filesystem::path(path).extension() == ".csv")
    return pp::signature_from_csv(text, name);
  const pp::TouchstoneDocument doc = pp::parse_touchstone(text, pp::ports_from_filename(path));
  return pp::signature_from_touchstone(doc, name);
}

void write_signature(ArtifactTracker& tracker, const pp::BoardSignature& sig,
                     const std::string& path) {
  if (std::filesystem::path(path).extension() == ".csv") {
    tracker.write(path, pp::signature_to_csv(sig));
    return;
  }
  const int ext_ports = pp::ports_from_filename(path);
  if (ext_ports != 0 && ext_ports != sig.n_ports)
    throw pp::IoError(path + ": extension says " + std::to_string(ext_ports) +
                      " port(s) but the signature has " + std::to_string(sig.n_ports));
  pp::TouchstoneOptions options;
  options.unit = pp::FrequencyUnit::hz;
  options.format = pp::TsFormat::ri;
  tracker.write(path, pp::write_touchstone(sig, options));
}

std::vector<double> load_statistics(ArtifactTracker& tracker, const std::string& path) {
  const std::string text = tracker.read(path);
  std::istringstream is(text);
  std::vector<double> values;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(line, &used));
      if (line.find_first_not_of(" \t", used) != std::string::npos)
        throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw pp::IoError(path + " line " + std::to_string(line_no) +
                        ": expected one statistic per line");
    }
  }
  if (values.empty()) throw pp::IoError(path + ": no statistics found");
  return values;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string netlist_path;
  std::string board = "decap_chain";
  std::vector<int> ports;
  std::vector<std::string> apply_ids;
  double tolerance = 0.0;
  int trial = 0;
  std::uint64_t stream_seed = 1;
  bool vary = false;
  double f_start = 300e3, f_stop = 3e9;
  int points = 1024;
  std::string spacing = "log";
  std::string out;
  std::string label;
};

int run_simulate(const SimulateArgs& args, const std::string& command) {
  ArtifactTracker tracker;
  tracker.manifest.command = command;

  pp::PdnNetlist net;
  if (!args.netlist_path.empty()) {
    net = pp::netlist_from_json(pp::json::parse(tracker.read(args.netlist_path)));
  } else {
    bool doubled = false;
    if (args.board == "decap_chain") doubled = false;
    else if (args.board == "decap_chain_doubled") doubled = true;
    else
      throw pp::IoError("unknown built-in board '" + args.board + "'");
    std::vector<int> ports = args.ports;
    if (ports.empty()) ports = {1, 2, 3, 4, 5, 6};
    net = pp::with_chain_ports(pp::make_decap_chain_board(doubled), ports);
  }
  if (!args.label.empty()) net.label = args.label;
  if (!args.apply_ids.empty()) net = pp::apply_anomalies(net, args.apply_ids);

  std::uint64_t stream_seed = args.stream_seed;
  seed_from_env(stream_seed);
  if (args.vary) {
    pp::ToleranceModel model;
    model.tolerance = args.tolerance;
    model.seed = stream_seed;
    net = pp::sample_variation(net, model, args.trial);
    tracker.manifest.seed = stream_seed;
  }

  pp::FrequencyGrid grid;
  grid.f_start = args.f_start;
  grid.f_stop = args.f_stop;
  grid.points = args.points;
  grid.spacing = pp::grid_spacing_from_string(args.spacing);

  const pp::BoardSignature sig = pp::solve_z(net, grid);
  write_signature(tracker, sig, args.out);
  tracker.finish(args.out + ".manifest.json");
  std::cout << "wrote " << args.out << " (" << sig.n_ports << " ports, " << sig.freqs.size()
            << " points)\n";
  return exit_ok;
}

// --- campaign ---------------------------------------------------------------

int run_campaign_cmd(const std::string& config_path, const std::string& out_dir,
                     const std::string& command) {
  ArtifactTracker tracker;
  tracker.manifest.command = command;
  const std::string config_text = tracker.read(config_path);
  tracker.manifest.config_hash = pp::hash_text_hex(config_text);

  pp::LoadedCampaign campaign = pp::load_campaign_toml(
      config_text, [&](const std::string& path) { return tracker.read(path); });
  std::uint64_t seed = campaign.cfg.seed;
  if (seed_from_env(seed)) {
    campaign.cfg.seed = seed;
    campaign.knn.seed = seed;
  }
  tracker.manifest.seed = campaign.cfg.seed;

  std::filesystem::create_directories(out_dir);
  const auto out_path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  switch (campaign.kind) {
    case pp::CampaignKind::tolerance: {
      const auto arms = pp::run_tolerance_sweep(campaign.cfg);
      tracker.write(out_path("tolerance_sweep.csv"), pp::sweep_summary_to_csv(arms));
      tracker.write(out_path("tolerance_rocs.csv"), pp::sweep_rocs_to_csv(arms));
      for (const auto& arm : arms)
        std::cout << "t=" << arm.tolerance << " auc=" << arm.roc.auc << "\n";
      break;
    }
    case pp::CampaignKind::sensitivity: {
      const auto sweep = pp::run_sensitivity_sweep(campaign.cfg, campaign.sweep);
      tracker.write(out_path("sensitivity.csv"), pp::sensitivity_to_csv(sweep));
      for (const auto& arm : sweep.arms)
        std::cout << arm.name << " auc=" << arm.roc.auc << "\n";
      break;
    }
    case pp::CampaignKind::placement: {
      const auto grid =
          pp::run_placement_grid(campaign.doubled, campaign.anomaly_index, campaign.cfg);
      tracker.write(out_path("accuracy_grid.csv"), pp::accuracy_grid_to_csv(grid));
      std::cout << "anomaly_index=" << grid.anomaly_index << " mean_accuracy=" << grid.mean()
                << "\n";
      break;
    }
    case pp::CampaignKind::ablation: {
      const auto rows = pp::run_port_ablation(campaign.cfg, campaign.port_subsets);
      tracker.write(out_path("ablation.csv"), pp::ablation_to_csv(rows));
      for (const auto& row : rows) {
        std::cout << "ports";
        for (int p : row.ports) std::cout << ' ' << p;
        std::cout << " accuracy=" << row.accuracy << "\n";
      }
      break;
    }
    case pp::CampaignKind::knn: {
      const auto result = pp::run_knn_campaign(campaign.knn);
      tracker.write(out_path("knn_summary.csv"), pp::knn_summary_to_csv(result));
      tracker.write(out_path("knn_confusion.csv"), pp::knn_to_csv(result));
      std::cout << "accuracy=" << result.accuracy << " (" << result.correct << "/"
                << result.trials << ")\n";
      break;
    }
  }
  tracker.finish(out_path("manifest.json"));
  return exit_ok;
}

// --- convert ----------------------------------------------------------------

int run_convert(const std::string& in_path, const std::string& to, const std::string& out,
                const std::string& format, const std::string& unit, double z0,
                const std::string& command) {
  ArtifactTracker tracker;
  tracker.manifest.command = command;
  const pp::TouchstoneDocument doc =
      pp::parse_touchstone(tracker.read(in_path), pp::ports_from_filename(in_path));

  pp::TouchstoneOptions options = doc.options;
  if (!format.empty()) {
    if (format == "ri") options.format = pp::TsFormat::ri;
    else if (format == "ma") options.format = pp::TsFormat::ma;
    else if (format == "db") options.format = pp::TsFormat::db;
    else
      throw pp::IoError("unknown format '" + format + "' (ri, ma, db)");
  }
  if (!unit.empty()) {
    if (unit == "hz") options.unit = pp::FrequencyUnit::hz;
    else if (unit == "khz") options.unit = pp::FrequencyUnit::khz;
    else if (unit == "mhz") options.unit = pp::FrequencyUnit::mhz;
    else if (unit == "ghz") options.unit = pp::FrequencyUnit::ghz;
    else
      throw pp::IoError("unknown unit '" + unit + "' (hz, khz, mhz, ghz)");
  }

  const std::string name = std::filesystem::path(in_path).stem().string();
  std::string text;
  if (to == "z") {
    const pp::BoardSignature sig = pp::signature_from_touchstone(doc, name);
    options.resistance = sig.port_z0.front();
    text = pp::write_touchstone(sig, options);
  } else if (to == "s") {
    pp::SParameterSweep sweep;
    if (doc.options.parameter == pp::TsParameter::s) {
      sweep = pp::sweep_from_touchstone(doc, name);
    } else {
      pp::BoardSignature sig = pp::signature_from_touchstone(doc, name);
      if (z0 > 0.0) sig.port_z0.assign(sig.port_z0.size(), z0);
      sweep = pp::z_to_s(sig);
    }
    options.resistance = sweep.port_z0.front();
    text = pp::write_touchstone(sweep, options);
  } else {
    throw pp::IoError("--to must be 'z' or 's'");
  }

  const int ext_ports = pp::ports_from_filename(out);
  if (ext_ports != 0 && ext_ports != doc.n_ports)
    throw pp::IoError(out + ": extension says " + std::to_string(ext_ports) +
                      " port(s) but the data has " + std::to_string(doc.n_ports));
  tracker.write(out, text);
  tracker.finish(out + ".manifest.json");
  std::cout << "wrote " << out << "\n";
  return exit_ok;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PDN impedance-signature anomaly detection"};
  app.require_subcommand(1);
  const std::string command = join_args(argc, argv);

  // simulate
  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "solve a netlist to a signature file");
  simulate->add_option("--netlist", sim.netlist_path, "netlist JSON file");
  simulate->add_option("--board", sim.board,
                       "built-in board (decap_chain, decap_chain_doubled)");
  simulate->add_option("--ports", sim.ports, "built-in board port positions")->delimiter(',');
  simulate->add_option("--apply", sim.apply_ids, "anomaly ids to apply");
  simulate->add_flag("--vary", sim.vary, "draw one tolerance variation before solving");
  simulate->add_option("--tolerance", sim.tolerance, "variation tolerance fraction");
  simulate->add_option("--trial", sim.trial, "variation trial index");
  simulate->add_option("--stream-seed", sim.stream_seed, "variation stream seed");
  simulate->add_option("--f-start", sim.f_start, "sweep start in Hz");
  simulate->add_option("--f-stop", sim.f_stop, "sweep stop in Hz");
  simulate->add_option("--points", sim.points, "sweep point count");
  simulate->add_option("--spacing", sim.spacing, "log or linear");
  simulate->add_option("--label", sim.label, "signature label");
  simulate->add_option("--out", sim.out, "output file (.csv or .sNp)")->required();

  // import
  std::string import_in, import_out, import_label;
  CLI::App* import_cmd = app.add_subcommand("import", "read a Touchstone sweep into a signature");
  import_cmd->add_option("input", import_in, "Touchstone .sNp file")->required();
  import_cmd->add_option("--out", import_out, "output file (.csv or .sNp)")->required();
  import_cmd->add_option("--label", import_label, "signature label");

  // golden
  std::vector<std::string> golden_inputs;
  std::string golden_out, golden_norm = "l2";
  double golden_k = 3.0;
  CLI::App* golden_cmd = app.add_subcommand("golden", "fit a golden model from genuine signatures");
  golden_cmd->add_option("inputs", golden_inputs, "genuine signature files")->required();
  golden_cmd->add_option("--out", golden_out, "golden model JSON")->required();
  golden_cmd->add_option("--k", golden_k, "threshold sigma multiplier");
  golden_cmd->add_option("--norm", golden_norm, "FD' norm (l1, l2, linf)");

  // detect
  std::string detect_model, detect_test, detect_out, detect_statistic = "min";
  CLI::App* detect_cmd = app.add_subcommand("detect", "test one board against a golden model");
  detect_cmd->add_option("--model", detect_model, "golden model JSON")->required();
  detect_cmd->add_option("--test", detect_test, "signature under test")->required();
  detect_cmd->add_option("--statistic", detect_statistic, "min or mean");
  detect_cmd->add_option("--out", detect_out, "also write the report JSON here");

  // classify
  std::vector<std::string> classify_train;
  std::string classify_test, classify_out, classify_norm = "l2", classify_genuine;
  int classify_k = 3;
  CLI::App* classify_cmd = app.add_subcommand("classify", "KNN-classify a board against a library");
  classify_cmd->add_option("--train", classify_train, "labeled signature, as label=path")
      ->required();
  classify_cmd->add_option("--test", classify_test, "signature under test")->required();
  classify_cmd->add_option("--k", classify_k, "neighbor count (odd)");
  classify_cmd->add_option("--norm", classify_norm, "FD' norm (l1, l2, linf)");
  classify_cmd->add_option("--genuine-label", classify_genuine,
                           "exit 2 unless the prediction matches this label");
  classify_cmd->add_option("--out", classify_out, "also write the result JSON here");

  // roc
  std::string roc_genuine, roc_anomalous, roc_out, roc_json;
  CLI::App* roc_cmd = app.add_subcommand("roc", "ROC/AUC from two statistic lists");
  roc_cmd->add_option("--genuine", roc_genuine, "file with one genuine statistic per line")
      ->required();
  roc_cmd->add_option("--anomalous", roc_anomalous, "file with one anomalous statistic per line")
      ->required();
  roc_cmd->add_option("--out", roc_out, "ROC CSV output")->required();
  roc_cmd->add_option("--json", roc_json, "also write the curve as JSON here");

  // campaign
  std::string campaign_config, campaign_dir;
  CLI::App* campaign_cmd = app.add_subcommand("campaign", "run a seeded study from a config");
  campaign_cmd->add_option("--config", campaign_config, "campaign config (TOML)")->required();
  campaign_cmd->add_option("--out-dir", campaign_dir, "directory for result tables")->required();

  // convert
  std::string convert_in, convert_to, convert_out, convert_format, convert_unit;
  double convert_z0 = 0.0;
  CLI::App* convert_cmd = app.add_subcommand("convert", "convert Touchstone between S and Z");
  convert_cmd->add_option("input", convert_in, "Touchstone file")->required();
  convert_cmd->add_option("--to", convert_to, "target parameter (s or z)")->required();
  convert_cmd->add_option("--out", convert_out, "output Touchstone file")->required();
  convert_cmd->add_option("--format", convert_format, "ri, ma, or db");
  convert_cmd->add_option("--unit", convert_unit, "hz, khz, mhz, or ghz");
  convert_cmd->add_option("--z0", convert_z0, "reference impedance for Z-to-S");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "pdnpulse: error: " << one_line(e.what()) << "\n";
    return exit_error;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim, command);

    if (import_cmd->parsed()) {
      ArtifactTracker tracker;
      tracker.manifest.command = command;
      const pp::BoardSignature sig = load_signature(tracker, import_in, import_label);
      write_signature(tracker, sig, import_out);
      tracker.finish(import_out + ".manifest.json");
      std::cout << "wrote " << import_out << " (" << sig.n_ports << " ports, "
                << sig.freqs.size() << " points)\n";
      return exit_ok;
    }

    if (golden_cmd->parsed()) {
      ArtifactTracker tracker;
      tracker.manifest.command = command;
      std::vector<pp::BoardSignature> genuine;
      genuine.reserve(golden_inputs.size());
      for (const auto& path : golden_inputs)
        genuine.push_back(load_signature(tracker, path, ""));
      pp::FdConfig cfg;
      cfg.norm_order = pp::fd_norm_from_string(golden_norm);
      const pp::GoldenModel model = pp::fit_golden(genuine, cfg, golden_k);
      tracker.write(golden_out, pp::golden_to_json(model).dump() + "\n");
      tracker.finish(golden_out + ".manifest.json");
      std::cout << "golden model: mu=" << model.mu << " sigma=" << model.sigma
                << " threshold=" << model.threshold << "\n";
      for (const auto& w : model.warnings)
        std::cout << "warning: " << w.code << " (" << w.detail << ")\n";
      return exit_ok;
    }

    if (detect_cmd->parsed()) {
      ArtifactTracker tracker;
      tracker.manifest.command = command;
      const pp::GoldenModel model = pp::golden_from_json(pp::json::parse(tracker.read(detect_model)));
      const pp::BoardSignature test = load_signature(tracker, detect_test, "");
      const pp::DetectionReport report =
          pp::detect(model, test, pp::decision_statistic_from_string(detect_statistic));
      std::cout << pp::report_to_json(report).dump(2) << "\n";
      if (!detect_out.empty()) {
        tracker.write(detect_out, pp::report_to_json(report).dump(2) + "\n");
        tracker.finish(detect_out + ".manifest.json");
      }
      return report.verdict == pp::Verdict::anomalous ? exit_anomalous : exit_ok;
    }

    if (classify_cmd->parsed()) {
      ArtifactTracker tracker;
      tracker.manifest.command = command;
      pp::LabeledLibrary lib;
      for (const auto& spec : classify_train) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
          throw pp::IoError("--train expects label=path, got '" + spec + "'");
        pp::LibraryEntry entry;
        entry.label = spec.substr(0, eq);
        entry.sig = load_signature(tracker, spec.substr(eq + 1), entry.label);
        lib.entries.push_back(std::move(entry));
      }
      const pp::BoardSignature test = load_signature(tracker, classify_test, "");
      pp::FdConfig cfg;
      cfg.norm_order = pp::fd_norm_from_string(classify_norm);
      const std::string label = pp::fd_knn(lib, test, classify_k, cfg);
      std::cout << label << "\n";
      if (!classify_out.empty()) {
        pp::json j;
        j["format_version"] = pp::format_version;
        j["kind"] = "classification";
        j["predicted_label"] = label;
        j["k"] = classify_k;
        tracker.write(classify_out, j.dump(2) + "\n");
        tracker.finish(classify_out + ".manifest.json");
      }
      if (!classify_genuine.empty() && label != classify_genuine) return exit_anomalous;
      return exit_ok;
    }

    if (roc_cmd->parsed()) {
      ArtifactTracker tracker;
      tracker.manifest.command = command;
      const std::vector<double> genuine = load_statistics(tracker, roc_genuine);
      const std::vector<double> anomalous = load_statistics(tracker, roc_anomalous);
      const pp::RocCurve curve = pp::roc(genuine, anomalous);
      tracker.write(roc_out, pp::roc_to_csv(curve));
      if (!roc_json.empty()) tracker.write(roc_json, pp::roc_to_json(curve).dump(2) + "\n");
      tracker.finish(roc_out + ".manifest.json");
      std::cout << "auc=" << curve.auc << "\n";
      return exit_ok;
    }

    if (campaign_cmd->parsed())
      return run_campaign_cmd(campaign_config, campaign_dir, command);

    if (convert_cmd->parsed())
      return run_convert(convert_in, convert_to, convert_out, convert_format, convert_unit,
                         convert_z0, command);
  } catch (const std::exception& e) {
    std::cerr << "pdnpulse: error: " << one_line(e.what()) << "\n";
    return exit_error;
  }
  std::cerr << "pdnpulse: error: no subcommand\n";
  return exit_error;
}
