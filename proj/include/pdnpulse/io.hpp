#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdnpulse/detector.hpp"
#include "pdnpulse/netlist.hpp"
#include "pdnpulse/rng.hpp"
#include "pdnpulse/solver.hpp"
#include "pdnpulse/version.hpp"

// Serialization: netlists and golden models as JSON, signatures and result
// tables as CSV, run manifests, and a small flat TOML reader for campaign
// configs.  All JSON documents carry a format_version field.

namespace pdnpulse {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// files and hashing

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read error on " + path);
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out.good()) throw IoError("write error on " + path);
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string hash_text_hex(const std::string& text) { return hash_hex(fnv1a64(text)); }

inline std::string hash_file_hex(const std::string& path) {
  return hash_text_hex(read_text_file(path));
}

// ---------------------------------------------------------------------------
// JSON plumbing

namespace detail {

inline void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw IoError(what + ": expected a JSON object");
}

// Strict field policy: any key outside the schema is an error, so typos in a
// hand-edited file fail loudly instead of silently defaulting.
inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& what) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known) throw IoError(what + ": unknown field '" + item.key() + "'");
  }
}

inline double number_or(const json& j, const char* key, double fallback,
                        const std::string& what) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw IoError(what + ": field '" + key + "' must be a number");
  return j.at(key).get<double>();
}

inline std::string string_at(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw IoError(what + ": missing string field '" + key + "'");
  return j.at(key).get<std::string>();
}

inline void check_format_version(const json& j, const std::string& what) {
  if (!j.contains("format_version") || !j.at("format_version").is_number_integer())
    throw IoError(what + ": missing integer field 'format_version'");
  const int v = j.at("format_version").get<int>();
  if (v != format_version)
    throw IoError(what + ": unsupported format_version " + std::to_string(v));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// netlist JSON

inline json netlist_to_json(const PdnNetlist& net) {
  json j;
  j["format_version"] = format_version;
  j["label"] = net.label;
  j["nodes"] = net.nodes;
  json branches = json::array();
  for (const auto& b : net.branches) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = to_string(b.kind);
    jb["a"] = b.node_a;
    jb["b"] = b.node_b;
    jb["r"] = b.r;
    jb["l"] = b.l;
    jb["c"] = b.c;
    jb["tol"] = b.tolerance_pct;
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);
  json ports = json::array();
  for (const auto& p : net.ports) {
    json jp;
    jp["index"] = p.index;
    jp["node"] = p.node;
    jp["z0"] = p.z0;
    ports.push_back(std::move(jp));
  }
  j["ports"] = std::move(ports);
  json anomalies = json::array();
  for (const auto& a : net.anomalies) {
    json ja;
    ja["id"] = a.id;
    ja["kind"] = to_string(a.kind);
    ja["target"] = a.target;
    ja["r"] = a.r;
    ja["l"] = a.l;
    ja["c"] = a.c;
    anomalies.push_back(std::move(ja));
  }
  j["anomalies"] = std::move(anomalies);
  return j;
}

inline PdnNetlist netlist_from_json(const json& j) {
  const std::string what = "netlist";
  detail::require_object(j, what);
  detail::reject_unknown_keys(
      j, {"format_version", "label", "nodes", "branches", "ports", "anomalies"}, what);
  detail::check_format_version(j, what);

  PdnNetlist net;
  if (j.contains("label")) net.label = j.at("label").get<std::string>();
  if (!j.contains("nodes") || !j.at("nodes").is_array())
    throw IoError(what + ": missing array field 'nodes'");
  for (const auto& n : j.at("nodes")) net.nodes.push_back(n.get<std::string>());
  if (!j.contains("branches") || !j.at("branches").is_array())
    throw IoError(what + ": missing array field 'branches'");
  for (const auto& jb : j.at("branches")) {
    const std::string bw = what + " branch";
    detail::require_object(jb, bw);
    detail::reject_unknown_keys(jb, {"id", "kind", "a", "b", "r", "l", "c", "tol"}, bw);
    RlcBranch b;
    b.id = detail::string_at(jb, "id", bw);
    b.kind = branch_kind_from_string(detail::string_at(jb, "kind", bw));
    b.node_a = detail::string_at(jb, "a", bw);
    b.node_b = detail::string_at(jb, "b", bw);
    b.r = detail::number_or(jb, "r", 0.0, bw);
    b.l = detail::number_or(jb, "l", 0.0, bw);
    b.c = detail::number_or(jb, "c", 0.0, bw);
    b.tolerance_pct = detail::number_or(jb, "tol", 0.0, bw);
    net.branches.push_back(std::move(b));
  }
  if (j.contains("ports")) {
    for (const auto& jp : j.at("ports")) {
      const std::string pw = what + " port";
      detail::require_object(jp, pw);
      detail::reject_unknown_keys(jp, {"index", "node", "z0"}, pw);
      PortSpec p;
      if (!jp.contains("index") || !jp.at("index").is_number_integer())
        throw IoError(pw + ": missing integer field 'index'");
      p.index = jp.at("index").get<int>();
      p.node = detail::string_at(jp, "node", pw);
      p.z0 = detail::number_or(jp, "z0", 50.0, pw);
      net.ports.push_back(std::move(p));
    }
  }
  if (j.contains("anomalies")) {
    for (const auto& ja : j.at("anomalies")) {
      const std::string aw = what + " anomaly";
      detail::require_object(ja, aw);
      detail::reject_unknown_keys(ja, {"id", "kind", "target", "r", "l", "c"}, aw);
      AnomalySpec a;
      a.id = detail::string_at(ja, "id", aw);
      a.kind = anomaly_kind_from_string(detail::string_at(ja, "kind", aw));
      a.target = detail::string_at(ja, "target", aw);
      a.r = detail::number_or(ja, "r", 0.0, aw);
      a.l = detail::number_or(ja, "l", 0.0, aw);
      a.c = detail::number_or(ja, "c", 0.0, aw);
      net.anomalies.push_back(std::move(a));
    }
  }
  return net;
}

inline void save_netlist(const PdnNetlist& net, const std::string& path) {
  write_text_file(path, netlist_to_json(net).dump(2) + "\n");
}

inline PdnNetlist load_netlist(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  try {
    return netlist_from_json(j);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// signature JSON (embedded in golden-model files) and CSV

inline json signature_to_json(const BoardSignature& sig) {
  json j;
  j["label"] = sig.label;
  j["provenance"] = to_string(sig.provenance);
  j["n_ports"] = sig.n_ports;
  j["port_z0"] = sig.port_z0;
  j["grid"] = {{"f_start", sig.grid.f_start},
               {"f_stop", sig.grid.f_stop},
               {"points", sig.grid.points},
               {"spacing", to_string(sig.grid.spacing)}};
  j["freqs"] = sig.freqs;
  // store the upper triangle only (x <= y); the matrix is symmetric by
  // construction
  json z = json::array();
  for (const auto& m : sig.z) {
    json zf = json::array();
    for (int x = 0; x < sig.n_ports; ++x)
      for (int y = x; y < sig.n_ports; ++y) {
        zf.push_back(m(x, y).real());
        zf.push_back(m(x, y).imag());
      }
    z.push_back(std::move(zf));
  }
  j["z"] = std::move(z);
  return j;
}

inline BoardSignature signature_from_json(const json& j) {
  const std::string what = "signature";
  detail::require_object(j, what);
  detail::reject_unknown_keys(
      j, {"label", "provenance", "n_ports", "port_z0", "grid", "freqs", "z"}, what);
  BoardSignature sig;
  sig.label = detail::string_at(j, "label", what);
  sig.provenance = provenance_from_string(detail::string_at(j, "provenance", what));
  if (!j.contains("n_ports") || !j.at("n_ports").is_number_integer())
    throw IoError(what + ": missing integer field 'n_ports'");
  sig.n_ports = j.at("n_ports").get<int>();
  if (sig.n_ports < 1) throw IoError(what + ": n_ports must be >= 1");
  sig.port_z0 = j.at("port_z0").get<std::vector<double>>();
  const json& jg = j.at("grid");
  detail::reject_unknown_keys(jg, {"f_start", "f_stop", "points", "spacing"}, what + " grid");
  sig.grid.f_start = jg.at("f_start").get<double>();
  sig.grid.f_stop = jg.at("f_stop").get<double>();
  sig.grid.points = jg.at("points").get<int>();
  sig.grid.spacing = grid_spacing_from_string(jg.at("spacing").get<std::string>());
  sig.freqs = j.at("freqs").get<std::vector<double>>();
  const json& jz = j.at("z");
  if (!jz.is_array() || jz.size() != sig.freqs.size())
    throw IoError(what + ": 'z' must have one entry per frequency");
  const int n = sig.n_ports;
  const std::size_t expected = static_cast<std::size_t>(n) * (n + 1);  // pairs * 2 doubles
  for (const auto& zf : jz) {
    if (!zf.is_array() || zf.size() != expected)
      throw IoError(what + ": each 'z' entry needs " + std::to_string(expected) + " numbers");
    Eigen::MatrixXcd m(n, n);
    std::size_t k = 0;
    for (int x = 0; x < n; ++x)
      for (int y = x; y < n; ++y) {
        const complexd v(zf[k].get<double>(), zf[k + 1].get<double>());
        k += 2;
        m(x, y) = v;
        m(y, x) = v;
      }
    sig.z.push_back(std::move(m));
  }
  return sig;
}

// CSV sweep: one row per (frequency, x <= y) entry, symmetric matrix
// reconstructed on read.
inline std::string signature_to_csv(const BoardSignature& sig) {
  std::string out = "freq_hz,x,y,re_ohm,im_ohm\n";
  char buf[160];
  for (std::size_t fi = 0; fi < sig.freqs.size(); ++fi)
    for (int x = 0; x < sig.n_ports; ++x)
      for (int y = x; y < sig.n_ports; ++y) {
        const complexd v = sig.z[fi](x, y);
        std::snprintf(buf, sizeof buf, "%.12g,%d,%d,%.12g,%.12g\n", sig.freqs[fi], x + 1,
                      y + 1, v.real(), v.imag());
        out += buf;
      }
  return out;
}

inline BoardSignature signature_from_csv(const std::string& text,
                                         const std::string& label = "",
                                         double default_z0 = 50.0) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw IoError("signature csv: empty document");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "freq_hz,x,y,re_ohm,im_ohm")
    throw IoError("signature csv: unexpected header '" + line + "'");

  struct Row {
    double f;
    int x, y;
    complexd v;
  };
  std::vector<Row> rows;
  int n_ports = 0;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Row r;
    double re, im;
    if (std::sscanf(line.c_str(), "%lf,%d,%d,%lf,%lf", &r.f, &r.x, &r.y, &re, &im) != 5)
      throw IoError("signature csv line " + std::to_string(line_no) + ": malformed row");
    if (r.x < 1 || r.y < r.x)
      throw IoError("signature csv line " + std::to_string(line_no) +
                    ": ports must satisfy 1 <= x <= y");
    r.v = complexd(re, im);
    n_ports = std::max(n_ports, r.y);
    rows.push_back(r);
  }
  if (rows.empty()) throw IoError("signature csv: no data rows");

  const std::size_t per_freq = static_cast<std::size_t>(n_ports) * (n_ports + 1) / 2;
  if (rows.size() % per_freq != 0)
    throw IoError("signature csv: row count is not a multiple of " + std::to_string(per_freq));

  BoardSignature sig;
  sig.n_ports = n_ports;
  sig.label = label;
  sig.provenance = Provenance::measured;
  sig.port_z0.assign(static_cast<std::size_t>(n_ports), default_z0);
  for (std::size_t at = 0; at < rows.size(); at += per_freq) {
    const double f = rows[at].f;
    if (!sig.freqs.empty() && !(f > sig.freqs.back()))
      throw IoError("signature csv: frequencies must be strictly increasing");
    sig.freqs.push_back(f);
    Eigen::MatrixXcd m(n_ports, n_ports);
    std::size_t k = at;
    for (int x = 1; x <= n_ports; ++x)
      for (int y = x; y <= n_ports; ++y, ++k) {
        if (k >= rows.size() || rows[k].f != f || rows[k].x != x || rows[k].y != y)
          throw IoError("signature csv: block at f=" + std::to_string(f) +
                        " is not a complete x<=y sweep");
        m(x - 1, y - 1) = rows[k].v;
        m(y - 1, x - 1) = rows[k].v;
      }
    sig.z.push_back(std::move(m));
  }
  if (sig.freqs.size() < 2) throw IoError("signature csv: need at least 2 frequency points");
  sig.grid = detail::describe_grid(sig.freqs);
  return sig;
}

// ---------------------------------------------------------------------------
// golden model / detection report / ROC / histogram

inline json golden_to_json(const GoldenModel& model) {
  json j;
  j["format_version"] = format_version;
  j["kind"] = "golden_model";
  j["mu"] = model.mu;
  j["sigma"] = model.sigma;
  j["k"] = model.k;
  j["threshold"] = model.threshold;
  j["intra_fds"] = model.intra_fds;
  j["cfg"] = {{"norm_order", to_string(model.cfg.norm_order)}};
  json warnings = json::array();
  for (const auto& w : model.warnings)
    warnings.push_back({{"code", w.code}, {"detail", w.detail}});
  j["warnings"] = std::move(warnings);
  json genuine = json::array();
  for (const auto& g : model.genuine) genuine.push_back(signature_to_json(g));
  j["genuine"] = std::move(genuine);
  return j;
}

inline GoldenModel golden_from_json(const json& j) {
  const std::string what = "golden model";
  detail::require_object(j, what);
  detail::reject_unknown_keys(j,
                              {"format_version", "kind", "mu", "sigma", "k", "threshold",
                               "intra_fds", "cfg", "warnings", "genuine"},
                              what);
  detail::check_format_version(j, what);
  if (detail::string_at(j, "kind", what) != "golden_model")
    throw IoError(what + ": wrong document kind");
  GoldenModel m;
  m.mu = j.at("mu").get<double>();
  m.sigma = j.at("sigma").get<double>();
  m.k = j.at("k").get<double>();
  m.threshold = j.at("threshold").get<double>();
  m.intra_fds = j.at("intra_fds").get<std::vector<double>>();
  m.cfg.norm_order = fd_norm_from_string(j.at("cfg").at("norm_order").get<std::string>());
  for (const auto& w : j.at("warnings"))
    m.warnings.push_back({w.at("code").get<std::string>(), w.at("detail").get<std::string>()});
  for (const auto& g : j.at("genuine")) m.genuine.push_back(signature_from_json(g));
  if (m.genuine.size() < 2) throw IoError(what + ": needs at least 2 genuine signatures");
  return m;
}

inline void save_golden(const GoldenModel& model, const std::string& path) {
  write_text_file(path, golden_to_json(model).dump() + "\n");
}

inline GoldenModel load_golden(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  try {
    return golden_from_json(j);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline json report_to_json(const DetectionReport& r) {
  json j;
  j["format_version"] = format_version;
  j["kind"] = "detection_report";
  j["board_label"] = r.board_label;
  j["verdict"] = to_string(r.verdict);
  j["statistic"] = to_string(r.statistic);
  j["decision_statistic"] = r.decision_statistic;
  j["threshold_used"] = r.threshold_used;
  j["fds_to_training"] = r.fds_to_training;
  return j;
}

inline json roc_to_json(const RocCurve& roc) {
  json j;
  j["format_version"] = format_version;
  j["kind"] = "roc";
  j["auc"] = roc.auc;
  json pts = json::array();
  for (const auto& p : roc.points)
    pts.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
  j["points"] = std::move(pts);
  return j;
}

inline std::string roc_to_csv(const RocCurve& roc) {
  std::string out = "fpr,tpr,threshold\n";
  char buf[120];
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", p.fpr, p.tpr, p.threshold);
    out += buf;
  }
  return out;
}

inline std::string histogram_to_csv(const FdHistogram& h) {
  std::string out = "bin_lo,bin_hi,genuine,anomalous\n";
  char buf[140];
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%ld,%ld\n", h.edges[i], h.edges[i + 1],
                  h.genuine_counts[i], h.anomalous_counts[i]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// run manifest

struct ManifestInput {
  std::string path;
  std::string hash;  // fnv1a-64 of the file bytes, hex
};

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;  // fnv1a-64 of the effective config text, hex
  double runtime_seconds = 0.0;
  std::vector<ManifestInput> inputs;
  std::vector<std::string> outputs;
};

inline json manifest_to_json(const RunManifest& m) {
  json j;
  j["format_version"] = format_version;
  j["kind"] = "run_manifest";
  j["tool_version"] = version_string();
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["runtime_seconds"] = m.runtime_seconds;
  json inputs = json::array();
  for (const auto& in : m.inputs) inputs.push_back({{"path", in.path}, {"hash", in.hash}});
  j["inputs"] = std::move(inputs);
  j["outputs"] = m.outputs;
  return j;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
  write_text_file(path, manifest_to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// flat TOML subset for campaign configs
//
// Supported: `key = value` pairs, `[section]` headers (keys become
// "section.key"), `#` comments, double-quoted strings, booleans, integers,
// floats, and single-line arrays of those scalars.  That is the whole
// config surface this tool needs; nested tables and multi-line arrays are
// rejected with clear errors.

struct TomlValue {
  enum class Kind { string, integer, real, boolean, array };
  Kind kind = Kind::string;
  std::string str;
  std::int64_t int_val = 0;
  double real_val = 0.0;
  bool bool_val = false;
  std::vector<TomlValue> items;

  double as_double(const std::string& key) const {
    if (kind == Kind::real) return real_val;
    if (kind == Kind::integer) return static_cast<double>(int_val);
    throw IoError("config key '" + key + "' must be a number");
  }
  std::int64_t as_int(const std::string& key) const {
    if (kind == Kind::integer) return int_val;
    throw IoError("config key '" + key + "' must be an integer");
  }
  const std::string& as_string(const std::string& key) const {
    if (kind == Kind::string) return str;
    throw IoError("config key '" + key + "' must be a string");
  }
  bool as_bool(const std::string& key) const {
    if (kind == Kind::boolean) return bool_val;
    throw IoError("config key '" + key + "' must be a boolean");
  }
  std::vector<double> as_doubles(const std::string& key) const {
    if (kind != Kind::array) throw IoError("config key '" + key + "' must be an array");
    std::vector<double> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.as_double(key));
    return out;
  }
  std::vector<std::string> as_strings(const std::string& key) const {
    if (kind != Kind::array) throw IoError("config key '" + key + "' must be an array");
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.as_string(key));
    return out;
  }
};

using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

inline std::string toml_trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline TomlValue parse_toml_scalar(const std::string& raw, int line_no) {
  TomlValue v;
  const std::string t = toml_trim(raw);
  if (t.empty()) throw IoError("config line " + std::to_string(line_no) + ": empty value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"')
      throw IoError("config line " + std::to_string(line_no) + ": unterminated string");
    v.kind = TomlValue::Kind::string;
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\') {
        if (i + 2 >= t.size())
          throw IoError("config line " + std::to_string(line_no) + ": dangling escape");
        const char e = t[++i];
        if (e == '"') out += '"';
        else if (e == '\\') out += '\\';
        else if (e == 'n') out += '\n';
        else if (e == 't') out += '\t';
        else
          throw IoError("config line " + std::to_string(line_no) + ": unsupported escape \\" +
                        std::string(1, e));
      } else {
        out += t[i];
      }
    }
    v.str = std::move(out);
    return v;
  }
  if (t == "true" || t == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.bool_val = (t == "true");
    return v;
  }
  const bool looks_real = t.find_first_of(".eE") != std::string::npos &&
                          t.find_first_not_of("+-0123456789.eE") == std::string::npos;
  try {
    std::size_t used = 0;
    if (!looks_real) {
      const std::int64_t iv = std::stoll(t, &used);
      if (used == t.size()) {
        v.kind = TomlValue::Kind::integer;
        v.int_val = iv;
        return v;
      }
    }
    used = 0;
    const double dv = std::stod(t, &used);
    if (used == t.size()) {
      v.kind = TomlValue::Kind::real;
      v.real_val = dv;
      return v;
    }
  } catch (const std::exception&) {
    // fall through to the error below
  }
  throw IoError("config line " + std::to_string(line_no) + ": cannot parse value '" + t + "'");
}

// splits "a, b, c" at top level (no nesting supported); quoted commas are
// respected
inline std::vector<std::string> split_toml_array(const std::string& inner, int line_no) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_string = false;
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const char c = inner[i];
    if (in_string) {
      cur += c;
      if (c == '\\' && i + 1 < inner.size()) cur += inner[++i];
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
      cur += c;
    } else if (c == '[')
      throw IoError("config line " + std::to_string(line_no) +
                    ": nested arrays are not supported");
    else if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_string)
    throw IoError("config line " + std::to_string(line_no) + ": unterminated string");
  if (!toml_trim(cur).empty() || !parts.empty()) parts.push_back(cur);
  // allow a trailing comma: drop a final empty part
  if (!parts.empty() && toml_trim(parts.back()).empty()) parts.pop_back();
  return parts;
}

}  // namespace detail

inline TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream is(text);
  std::string line;
  std::string prefix;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // strip comments outside strings
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
      } else if (c == '"') {
        in_string = true;
      } else if (c == '#') {
        line.erase(i);
        break;
      }
    }
    const std::string t = detail::toml_trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw IoError("config line " + std::to_string(line_no) + ": malformed section header");
      prefix = detail::toml_trim(t.substr(1, t.size() - 2));
      if (prefix.empty())
        throw IoError("config line " + std::to_string(line_no) + ": empty section name");
      prefix += '.';
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw IoError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = prefix + detail::toml_trim(t.substr(0, eq));
    if (key.empty() || key == prefix)
      throw IoError("config line " + std::to_string(line_no) + ": empty key");
    if (table.count(key))
      throw IoError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    const std::string raw = detail::toml_trim(t.substr(eq + 1));
    if (!raw.empty() && raw.front() == '[') {
      if (raw.back() != ']')
        throw IoError("config line " + std::to_string(line_no) +
                      ": arrays must close on the same line");
      TomlValue v;
      v.kind = TomlValue::Kind::array;
      for (const auto& part : detail::split_toml_array(raw.substr(1, raw.size() - 2), line_no))
        v.items.push_back(detail::parse_toml_scalar(part, line_no));
      table.emplace(key, std::move(v));
    } else {
      table.emplace(key, detail::parse_toml_scalar(raw, line_no));
    }
  }
  return table;
}

inline const TomlValue* toml_find(const TomlTable& t, const std::string& key) {
  const auto it = t.find(key);
  return it == t.end() ? nullptr : &it->second;
}

inline std::string toml_string(const TomlTable& t, const std::string& key,
                               const std::string& fallback) {
  const TomlValue* v = toml_find(t, key);
  return v ? v->as_string(key) : fallback;
}

inline double toml_double(const TomlTable& t, const std::string& key, double fallback) {
  const TomlValue* v = toml_find(t, key);
  return v ? v->as_double(key) : fallback;
}

inline std::int64_t toml_int(const TomlTable& t, const std::string& key,
                             std::int64_t fallback) {
  const TomlValue* v = toml_find(t, key);
  return v ? v->as_int(key) : fallback;
}

inline bool toml_bool(const TomlTable& t, const std::string& key, bool fallback) {
  const TomlValue* v = toml_find(t, key);
  return v ? v->as_bool(key) : fallback;
}

}  // namespace pdnpulse
