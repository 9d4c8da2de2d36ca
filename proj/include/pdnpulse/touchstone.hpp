#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdnpulse/convert.hpp"
#include "pdnpulse/solver.hpp"

// Touchstone v1.0 reader/writer for n-port network data.  Only the v1.0
// dialect is supported: `!` comments, one `#` option line, plain data rows.
// v2.0 bracket keywords are rejected outright.

namespace pdnpulse {

class TouchstoneError : public std::runtime_error {
 public:
  explicit TouchstoneError(const std::string& what) : std::runtime_error(what) {}
};

enum class FrequencyUnit { hz, khz, mhz, ghz };
enum class TsParameter { s, z };
enum class TsFormat { ri, ma, db };

inline const char* to_string(FrequencyUnit u) {
  switch (u) {
    case FrequencyUnit::hz: return "HZ";
    case FrequencyUnit::khz: return "KHZ";
    case FrequencyUnit::mhz: return "MHZ";
    case FrequencyUnit::ghz: return "GHZ";
  }
  return "?";
}

inline const char* to_string(TsParameter p) { return p == TsParameter::s ? "S" : "Z"; }

inline const char* to_string(TsFormat f) {
  switch (f) {
    case TsFormat::ri: return "RI";
    case TsFormat::ma: return "MA";
    case TsFormat::db: return "DB";
  }
  return "?";
}

inline double unit_scale(FrequencyUnit u) {
  switch (u) {
    case FrequencyUnit::hz: return 1.0;
    case FrequencyUnit::khz: return 1e3;
    case FrequencyUnit::mhz: return 1e6;
    case FrequencyUnit::ghz: return 1e9;
  }
  return 1.0;
}

// Touchstone v1.0 defaults apply when the option line omits fields.
struct TouchstoneOptions {
  FrequencyUnit unit = FrequencyUnit::ghz;
  TsParameter parameter = TsParameter::s;
  TsFormat format = TsFormat::ma;
  double resistance = 50.0;  // ohms
};

struct TouchstoneDocument {
  TouchstoneOptions options;
  int n_ports = 0;
  std::vector<double> freqs_hz;           // scaled to Hz
  std::vector<Eigen::MatrixXcd> values;   // linear complex values
  std::vector<std::string> comments;      // leading '!' comment lines, markers stripped
};

namespace detail {

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

struct Token {
  double value;
  int line;
};

inline complexd decode_pair(double a, double b, TsFormat fmt) {
  constexpr double deg = M_PI / 180.0;
  switch (fmt) {
    case TsFormat::ri: return {a, b};
    case TsFormat::ma: return std::polar(a, b * deg);
    case TsFormat::db: return std::polar(std::pow(10.0, a / 20.0), b * deg);
  }
  return {};
}

inline void encode_pair(complexd v, TsFormat fmt, double& a, double& b) {
  constexpr double deg = 180.0 / M_PI;
  switch (fmt) {
    case TsFormat::ri:
      a = v.real();
      b = v.imag();
      return;
    case TsFormat::ma:
      a = std::abs(v);
      b = std::arg(v) * deg;
      return;
    case TsFormat::db:
      a = 20.0 * std::log10(std::max(std::abs(v), 1e-300));
      b = std::arg(v) * deg;
      return;
  }
}

inline TouchstoneOptions parse_option_line(const std::string& line, int line_no) {
  TouchstoneOptions opt;
  std::istringstream is(line);
  std::string tok;
  is >> tok;  // consume '#'
  bool expect_resistance = false;
  while (is >> tok) {
    const std::string u = upper(tok);
    if (expect_resistance) {
      try {
        opt.resistance = std::stod(u);
      } catch (const std::exception&) {
        throw TouchstoneError("line " + std::to_string(line_no) +
                              ": expected resistance value after R, got '" + tok + "'");
      }
      if (!(opt.resistance > 0.0))
        throw TouchstoneError("line " + std::to_string(line_no) +
                              ": reference resistance must be positive");
      expect_resistance = false;
    } else if (u == "HZ") {
      opt.unit = FrequencyUnit::hz;
    } else if (u == "KHZ") {
      opt.unit = FrequencyUnit::khz;
    } else if (u == "MHZ") {
      opt.unit = FrequencyUnit::mhz;
    } else if (u == "GHZ") {
      opt.unit = FrequencyUnit::ghz;
    } else if (u == "S") {
      opt.parameter = TsParameter::s;
    } else if (u == "Z") {
      opt.parameter = TsParameter::z;
    } else if (u == "Y" || u == "G" || u == "H") {
      throw TouchstoneError("line " + std::to_string(line_no) + ": parameter type '" + tok +
                            "' not supported (S and Z only)");
    } else if (u == "RI") {
      opt.format = TsFormat::ri;
    } else if (u == "MA") {
      opt.format = TsFormat::ma;
    } else if (u == "DB") {
      opt.format = TsFormat::db;
    } else if (u == "R") {
      expect_resistance = true;
    } else {
      throw TouchstoneError("line " + std::to_string(line_no) + ": unknown option token '" +
                            tok + "'");
    }
  }
  if (expect_resistance)
    throw TouchstoneError("line " + std::to_string(line_no) + ": dangling R in option line");
  return opt;
}

// Fills one frequency block from 2n^2 values.  One- and two-port files use
// the historical v1.0 orders (2-port is column-major: S11 S21 S12 S22);
// larger matrices are row-major.
inline void fill_matrix(Eigen::MatrixXcd& m, const std::vector<complexd>& vals, int n) {
  if (n == 2) {
    m(0, 0) = vals[0];
    m(1, 0) = vals[1];
    m(0, 1) = vals[2];
    m(1, 1) = vals[3];
    return;
  }
  int k = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = vals[static_cast<std::size_t>(k++)];
}

inline void spill_matrix(const Eigen::MatrixXcd& m, std::vector<complexd>& vals, int n) {
  vals.clear();
  if (n == 2) {
    vals = {m(0, 0), m(1, 0), m(0, 1), m(1, 1)};
    return;
  }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) vals.push_back(m(r, c));
}

}  // namespace detail

// Parses a v1.0 document.  `n_ports_hint` normally comes from the file
// extension (.sNp); with hint 0 the parser infers the unique port count
// whose block size divides the token stream with strictly increasing
// frequencies, and reports ambiguity as an error.
inline TouchstoneDocument parse_touchstone(const std::string& text, int n_ports_hint = 0) {
  TouchstoneDocument doc;
  bool have_options = false;

  std::vector<detail::Token> tokens;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  bool seen_data = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string body = line;
    bool full_line_comment = false;
    if (auto bang = body.find('!'); bang != std::string::npos) {
      full_line_comment = body.find_first_not_of(" \t") == bang;
      if (full_line_comment && !seen_data) {
        std::string c = body.substr(bang + 1);
        if (!c.empty() && c.front() == ' ') c.erase(c.begin());
        doc.comments.push_back(c);
      }
      body.erase(bang);
    }
    const auto first = body.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (body[first] == '[')
      throw TouchstoneError("line " + std::to_string(line_no) +
                            ": Touchstone v2.0 keyword found; only v1.0 is supported");
    if (body[first] == '#') {
      if (have_options)
        throw TouchstoneError("line " + std::to_string(line_no) + ": repeated option line");
      if (seen_data)
        throw TouchstoneError("line " + std::to_string(line_no) +
                              ": option line must precede all data");
      doc.options = detail::parse_option_line(body.substr(first), line_no);
      have_options = true;
      continue;
    }

    std::istringstream ls(body);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        tokens.push_back({v, line_no});
      } catch (const std::exception&) {
        throw TouchstoneError("line " + std::to_string(line_no) + ": non-numeric token '" +
                              tok + "' in data section");
      }
      seen_data = true;
    }
  }
  if (!have_options) throw TouchstoneError("missing option line (#)");
  if (tokens.empty()) throw TouchstoneError("no data rows");

  const double fscale = unit_scale(doc.options.unit);
  auto try_ports = [&](int n, TouchstoneDocument& out, std::string* why) {
    const std::size_t block = 1 + 2 * static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    if (tokens.size() % block != 0) {
      if (why)
        *why = "token count " + std::to_string(tokens.size()) + " is not a multiple of " +
               std::to_string(block);
      return false;
    }
    out.freqs_hz.clear();
    out.values.clear();
    std::vector<complexd> vals;
    for (std::size_t at = 0; at < tokens.size(); at += block) {
      const double f = tokens[at].value * fscale;
      if (!(f > 0.0)) {
        if (why) *why = "line " + std::to_string(tokens[at].line) + ": nonpositive frequency";
        return false;
      }
      if (!out.freqs_hz.empty() && !(f > out.freqs_hz.back())) {
        if (why)
          *why = "line " + std::to_string(tokens[at].line) +
                 ": frequencies must be strictly increasing";
        return false;
      }
      out.freqs_hz.push_back(f);
      vals.clear();
      for (std::size_t k = 0; k < block - 1; k += 2)
        vals.push_back(detail::decode_pair(tokens[at + 1 + k].value, tokens[at + 2 + k].value,
                                           doc.options.format));
      Eigen::MatrixXcd m(n, n);
      detail::fill_matrix(m, vals, n);
      out.values.push_back(std::move(m));
    }
    out.n_ports = n;
    return true;
  };

  if (n_ports_hint > 0) {
    std::string why;
    TouchstoneDocument candidate = doc;
    if (!try_ports(n_ports_hint, candidate, &why))
      throw TouchstoneError("data does not fit " + std::to_string(n_ports_hint) +
                            " port(s): " + why);
    return candidate;
  }

  std::vector<int> matches;
  TouchstoneDocument best = doc;
  for (int n = 1; n <= 16; ++n) {
    TouchstoneDocument candidate = doc;
    if (try_ports(n, candidate, nullptr)) {
      matches.push_back(n);
      if (matches.size() == 1) best = std::move(candidate);
    }
  }
  if (matches.empty())
    throw TouchstoneError("data section does not fit any port count in 1..16");
  if (matches.size() > 1) {
    std::string msg = "ambiguous port count (candidates:";
    for (int n : matches) msg += " " + std::to_string(n);
    throw TouchstoneError(msg + "); pass the expected port count");
  }
  return best;
}

// Writer: one option line, provenance comments, then data at 12 significant
// digits (enough for the 1e-9 roundtrip contract in every format).  Two-port
// blocks are single lines in the historical order; n >= 3 emits one matrix
// row per line, wrapped at four value pairs.
inline std::string write_touchstone_raw(const std::vector<double>& freqs_hz,
                                        const std::vector<Eigen::MatrixXcd>& values,
                                        int n_ports, const TouchstoneOptions& options,
                                        const std::vector<std::string>& comments) {
  std::string out;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out += buf;
  };

  for (const auto& c : comments) {
    out += "! ";
    out += c;
    out += '\n';
  }
  out += "# ";
  out += to_string(options.unit);
  out += ' ';
  out += to_string(options.parameter);
  out += ' ';
  out += to_string(options.format);
  out += " R ";
  put(options.resistance);
  out += '\n';

  const double fscale = unit_scale(options.unit);
  std::vector<complexd> vals;
  for (std::size_t fi = 0; fi < freqs_hz.size(); ++fi) {
    detail::spill_matrix(values[fi], vals, n_ports);
    put(freqs_hz[fi] / fscale);
    if (n_ports <= 2) {
      for (const complexd& v : vals) {
        double a, b;
        detail::encode_pair(v, options.format, a, b);
        out += ' ';
        put(a);
        out += ' ';
        put(b);
      }
      out += '\n';
      continue;
    }
    // wrapped-matrix layout: each matrix row starts a new line, long rows
    // wrap every 4 pairs
    std::size_t k = 0;
    for (int r = 0; r < n_ports; ++r) {
      int on_line = 0;
      for (int c = 0; c < n_ports; ++c, ++k) {
        if (on_line == 4) {
          out += "\n ";
          on_line = 0;
        } else {
          out += ' ';
        }
        double a, b;
        detail::encode_pair(vals[k], options.format, a, b);
        put(a);
        out += ' ';
        put(b);
        ++on_line;
      }
      out += '\n';
    }
  }
  return out;
}

inline std::string write_touchstone(const BoardSignature& sig, TouchstoneOptions options = {},
                                    std::vector<std::string> comments = {}) {
  options.parameter = TsParameter::z;
  if (!sig.port_z0.empty()) options.resistance = sig.port_z0.front();
  comments.insert(comments.begin(),
                  "impedance sweep '" + sig.label + "' (" +
                      std::string(to_string(sig.provenance)) + ")");
  return write_touchstone_raw(sig.freqs, sig.z, sig.n_ports, options, comments);
}

inline std::string write_touchstone(const SParameterSweep& sw, TouchstoneOptions options = {},
                                    std::vector<std::string> comments = {}) {
  options.parameter = TsParameter::s;
  if (!sw.port_z0.empty()) options.resistance = sw.port_z0.front();
  comments.insert(comments.begin(), "scattering sweep '" + sw.label + "' (" +
                                        std::string(to_string(sw.provenance)) + ")");
  return write_touchstone_raw(sw.freqs, sw.s, sw.n_ports, options, comments);
}

// Z-parameter documents map directly onto a signature (values are plain
// ohms); S-parameter documents go through s_to_z with the document's
// reference resistance on every port.
inline BoardSignature signature_from_touchstone(const TouchstoneDocument& doc,
                                                const std::string& label = "") {
  if (doc.freqs_hz.size() < 2)
    throw TouchstoneError("need at least 2 frequency points for a signature");
  if (doc.options.parameter == TsParameter::z) {
    BoardSignature sig;
    sig.freqs = doc.freqs_hz;
    sig.grid = detail::describe_grid(doc.freqs_hz);
    sig.n_ports = doc.n_ports;
    sig.z = doc.values;
    sig.port_z0.assign(static_cast<std::size_t>(doc.n_ports), doc.options.resistance);
    sig.label = label;
    sig.provenance = Provenance::measured;
    // Enforce the symmetry invariant on imported data the same way the
    // solver does: average, but only within a loose measurement tolerance.
    for (auto& z : sig.z) {
      Eigen::MatrixXcd zt = z.transpose();
      z = 0.5 * (z + zt);
    }
    return sig;
  }
  SParameterSweep sw;
  sw.freqs = doc.freqs_hz;
  sw.grid = detail::describe_grid(doc.freqs_hz);
  sw.n_ports = doc.n_ports;
  sw.s = doc.values;
  sw.port_z0.assign(static_cast<std::size_t>(doc.n_ports), doc.options.resistance);
  sw.label = label;
  sw.provenance = Provenance::measured;
  BoardSignature sig = s_to_z(sw);
  sig.label = label;
  sig.provenance = Provenance::measured;
  return sig;
}

inline SParameterSweep sweep_from_touchstone(const TouchstoneDocument& doc,
                                             const std::string& label = "") {
  if (doc.options.parameter != TsParameter::s)
    throw TouchstoneError("document does not carry S-parameters");
  SParameterSweep sw;
  sw.freqs = doc.freqs_hz;
  sw.grid = detail::describe_grid(doc.freqs_hz);
  sw.n_ports = doc.n_ports;
  sw.s = doc.values;
  sw.port_z0.assign(static_cast<std::size_t>(doc.n_ports), doc.options.resistance);
  sw.label = label;
  sw.provenance = Provenance::measured;
  return sw;
}

// Port count from a .sNp extension; 0 when the name does not say.
inline int ports_from_filename(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return 0;
  std::string ext = detail::upper(path.substr(dot + 1));
  if (ext.size() < 3 || ext.front() != 'S' || ext.back() != 'P') return 0;
  const std::string digits = ext.substr(1, ext.size() - 2);
  if (digits.empty() ||
      !std::all_of(digits.begin(), digits.end(),
                   [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return 0;
  const int n = std::stoi(digits);
  return n >= 1 ? n : 0;
}

}  // namespace pdnpulse
