#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdnpulse/netlist.hpp"

// Frequency-domain solver: nodal analysis of an RLC netlist, producing the
// full symmetric n-port impedance matrix over a frequency grid.

namespace pdnpulse {

using complexd = std::complex<double>;

class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

enum class GridSpacing { log, linear };

inline const char* to_string(GridSpacing s) {
  return s == GridSpacing::log ? "log" : "linear";
}

inline GridSpacing grid_spacing_from_string(const std::string& s) {
  if (s == "log") return GridSpacing::log;
  if (s == "linear") return GridSpacing::linear;
  throw std::invalid_argument("unknown grid spacing: " + s);
}

struct FrequencyGrid {
  double f_start = 300e3;  // Hz
  double f_stop = 3e9;     // Hz
  int points = 1024;
  GridSpacing spacing = GridSpacing::log;

  void validate() const {
    if (!(f_start > 0.0) || !(f_stop > f_start))
      throw std::invalid_argument("frequency grid requires 0 < f_start < f_stop");
    if (points < 2) throw std::invalid_argument("frequency grid requires points >= 2");
  }

  std::vector<double> frequencies() const {
    validate();
    std::vector<double> f(static_cast<std::size_t>(points));
    const int n = points;
    if (spacing == GridSpacing::log) {
      const double ratio = f_stop / f_start;
      for (int i = 0; i < n; ++i)
        f[static_cast<std::size_t>(i)] =
            f_start * std::pow(ratio, static_cast<double>(i) / (n - 1));
    } else {
      const double step = (f_stop - f_start) / (n - 1);
      for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = f_start + step * i;
    }
    f.front() = f_start;
    f.back() = f_stop;
    return f;
  }

  friend bool operator==(const FrequencyGrid& a, const FrequencyGrid& b) {
    return a.f_start == b.f_start && a.f_stop == b.f_stop && a.points == b.points &&
           a.spacing == b.spacing;
  }
};

inline FrequencyGrid default_grid() { return FrequencyGrid{}; }

namespace detail {

// Best-effort parametric description of an imported frequency list; the
// explicit freqs stay authoritative either way.
inline FrequencyGrid describe_grid(const std::vector<double>& freqs) {
  FrequencyGrid g;
  g.f_start = freqs.front();
  g.f_stop = freqs.back();
  g.points = static_cast<int>(freqs.size());
  g.spacing = GridSpacing::linear;
  if (freqs.size() >= 3) {
    bool log_like = true;
    const double r0 = freqs[1] / freqs[0];
    for (std::size_t i = 2; i < freqs.size() && log_like; ++i)
      log_like = std::abs(freqs[i] / freqs[i - 1] - r0) <= 1e-9 * r0;
    if (log_like) g.spacing = GridSpacing::log;
  }
  return g;
}

}  // namespace detail

enum class Provenance { simulated, measured };

inline const char* to_string(Provenance p) {
  return p == Provenance::simulated ? "simulated" : "measured";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "simulated") return Provenance::simulated;
  if (s == "measured") return Provenance::measured;
  throw std::invalid_argument("unknown provenance: " + s);
}

// An impedance signature: the n-port Z matrix at each grid frequency.
// `freqs` is authoritative (imported data may not fit a parametric grid
// description exactly); `grid` describes how the sweep was generated.
struct BoardSignature {
  FrequencyGrid grid;
  std::vector<double> freqs;
  int n_ports = 0;
  std::vector<Eigen::MatrixXcd> z;  // one n_ports x n_ports matrix per frequency
  std::vector<double> port_z0;      // per-port reference impedance, ohms
  std::string label;
  Provenance provenance = Provenance::simulated;

  std::size_t size() const { return freqs.size(); }
};

// Signatures are comparable when they sample identical frequencies with the
// same port count.
inline bool same_shape(const BoardSignature& a, const BoardSignature& b) {
  return a.n_ports == b.n_ports && a.freqs == b.freqs;
}

// AC admittance stamp of a branch.  Zero element values mean "absent":
// shorted in a series chain, open in a parallel bank.
inline complexd branch_admittance(const RlcBranch& b, double f) {
  if (!(f > 0.0)) throw std::invalid_argument("branch_admittance requires f > 0");
  const double w = 2.0 * M_PI * f;
  const complexd jw(0.0, w);
  switch (b.kind) {
    case BranchKind::resistor:
      return complexd(1.0 / b.r, 0.0);
    case BranchKind::inductor:
      return 1.0 / (jw * b.l);
    case BranchKind::capacitor:
      return jw * b.c;
    case BranchKind::series_rlc: {
      complexd z(b.r, w * b.l);
      if (b.c > 0.0) z += 1.0 / (jw * b.c);
      return 1.0 / z;
    }
    case BranchKind::parallel_rlc: {
      complexd y(0.0, 0.0);
      if (b.r > 0.0) y += 1.0 / b.r;
      if (b.l > 0.0) y += 1.0 / (jw * b.l);
      if (b.c > 0.0) y += jw * b.c;
      return y;
    }
  }
  throw std::logic_error("unreachable branch kind");
}

namespace detail {

struct NodeIndex {
  std::map<std::string, int> index;  // excludes ground
  int count = 0;
};

inline NodeIndex index_nodes(const PdnNetlist& net) {
  NodeIndex ni;
  for (const auto& n : net.nodes) {
    if (n == ground_node) continue;
    if (ni.index.emplace(n, ni.count).second) ++ni.count;
  }
  return ni;
}

// Names every node with no branch path to ground; such nodes make the node
// matrix structurally singular.
inline std::vector<std::string> floating_nodes(const PdnNetlist& net) {
  std::map<std::string, std::string> parent;
  for (const auto& n : net.nodes) parent[n] = n;
  auto find = [&parent](std::string x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  for (const auto& b : net.branches) {
    if (parent.count(b.node_a) && parent.count(b.node_b)) parent[find(b.node_a)] = find(b.node_b);
  }
  std::vector<std::string> out;
  if (!parent.count(ground_node)) {
    for (const auto& n : net.nodes) out.push_back(n);
    return out;
  }
  const std::string g = find(ground_node);
  for (const auto& n : net.nodes)
    if (n != ground_node && find(n) != g) out.push_back(n);
  return out;
}

inline std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace detail

// Solves the n-port impedance matrix over the grid.  For each frequency the
// node admittance matrix (ground row/column eliminated) is LU-factored once
// and solved against one unit-current injection per port; Z[x][k] is then
// the voltage at port x's node.  The result is symmetrized by averaging
// after asserting reciprocity to 1e-6 relative.
inline BoardSignature solve_z(const PdnNetlist& net, const FrequencyGrid& grid) {
  {
    auto diags = validate_netlist(net);
    if (!diags.empty()) {
      std::string msg = "netlist failed validation:";
      for (const auto& d : diags) msg += " [" + d.code + ": " + d.detail + "]";
      throw NetlistError(msg);
    }
  }
  if (net.ports.empty()) throw NetlistError("netlist has no ports");

  // Structural singularity first, so the message can name the subgraph.
  {
    auto floating = detail::floating_nodes(net);
    if (!floating.empty())
      throw SolverError("singular node system: nodes {" + detail::join(floating, ", ") +
                        "} have no path to ground");
  }

  const auto ni = detail::index_nodes(net);
  const int n = ni.count;

  std::vector<PortSpec> ports = net.ports;
  std::sort(ports.begin(), ports.end(),
            [](const PortSpec& a, const PortSpec& b) { return a.index < b.index; });
  const int np = static_cast<int>(ports.size());
  std::vector<int> port_node(static_cast<std::size_t>(np));
  for (int k = 0; k < np; ++k)
    port_node[static_cast<std::size_t>(k)] = ni.index.at(ports[static_cast<std::size_t>(k)].node);

  BoardSignature sig;
  sig.grid = grid;
  sig.freqs = grid.frequencies();
  sig.n_ports = np;
  sig.label = net.label;
  sig.provenance = Provenance::simulated;
  for (const auto& p : ports) sig.port_z0.push_back(p.z0);
  sig.z.resize(sig.freqs.size());

  Eigen::MatrixXcd y(n, n);
  Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(n, np);
  for (int k = 0; k < np; ++k) rhs(port_node[static_cast<std::size_t>(k)], k) = complexd(1.0, 0.0);

  for (std::size_t fi = 0; fi < sig.freqs.size(); ++fi) {
    const double f = sig.freqs[fi];
    y.setZero();
    for (const auto& b : net.branches) {
      const complexd yb = branch_admittance(b, f);
      const int ia = b.node_a == ground_node ? -1 : ni.index.at(b.node_a);
      const int ib = b.node_b == ground_node ? -1 : ni.index.at(b.node_b);
      if (ia >= 0) y(ia, ia) += yb;
      if (ib >= 0) y(ib, ib) += yb;
      if (ia >= 0 && ib >= 0) {
        y(ia, ib) -= yb;
        y(ib, ia) -= yb;
      }
    }

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);
    Eigen::MatrixXcd v = lu.solve(rhs);
    bool ok = v.allFinite();
    if (ok) {
      // Catch numerically singular systems (e.g. a lossless L||C bank
      // anti-resonant exactly on a grid point) via the residual.
      const double resid = (y * v - rhs).cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, y.cwiseAbs().maxCoeff() * v.cwiseAbs().maxCoeff());
      ok = resid <= 1e-6 * scale;
    }
    if (!ok) {
      std::ostringstream os;
      os << "singular node system at f=" << f << " Hz";
      throw SolverError(os.str());
    }

    Eigen::MatrixXcd zf(np, np);
    for (int x = 0; x < np; ++x)
      for (int k = 0; k < np; ++k) zf(x, k) = v(port_node[static_cast<std::size_t>(x)], k);

    const double asym = (zf - zf.transpose()).cwiseAbs().maxCoeff();
    const double zmax = zf.cwiseAbs().maxCoeff();
    if (asym > 1e-6 * std::max(zmax, 1e-30)) {
      std::ostringstream os;
      os << "internal error: reciprocity violated at f=" << f << " Hz (relative asymmetry "
         << asym / std::max(zmax, 1e-30) << ")";
      throw SolverError(os.str());
    }
    sig.z[fi] = 0.5 * (zf + zf.transpose().eval());

    if (!sig.z[fi].allFinite()) {
      std::ostringstream os;
      os << "non-finite impedance at f=" << f << " Hz";
      throw SolverError(os.str());
    }
  }
  return sig;
}

// Reduced three-port example network: Za from node 1 to ground, a series
// leg Zd-then-Zb to ground (tapped at node 2), and a series leg Ze-then-Zc
// to ground (tapped at node 3).
struct ToyNetwork {
  complexd za, zb, zc, zd, ze;
};

inline complexd parallel_z(complexd a, complexd b) {
  const complexd denom = a + b;
  if (std::abs(denom) == 0.0) throw std::domain_error("parallel combination of z and -z");
  return a * b / denom;
}

// Self-impedance at node 1: all three legs in parallel.
inline complexd toy_z11(const ToyNetwork& t) {
  return parallel_z(parallel_z(t.za, t.zb + t.zd), t.zc + t.ze);
}

// Transfer impedance from node 1 to the tap between Ze and Zc.  With
// q = Za || (Zb + Zd), current dividing down the Ze-Zc leg gives
// Z13 = Zc*q / (q + Zc + Ze).
inline complexd toy_z13(const ToyNetwork& t) {
  const complexd q = parallel_z(t.za, t.zb + t.zd);
  const complexd denom = q + t.zc + t.ze;
  if (std::abs(denom) == 0.0) throw std::domain_error("toy_z13: zero denominator");
  return t.zc * q / denom;
}

// Realizes the toy network as a netlist at a single frequency: each complex
// impedance becomes a resistor in series with an inductor (positive
// reactance) or capacitor (negative reactance) sized for f0.
inline PdnNetlist toy_network_netlist(const ToyNetwork& t, double f0) {
  if (!(f0 > 0.0)) throw std::invalid_argument("toy_network_netlist requires f0 > 0");
  PdnNetlist net;
  net.label = "toy3";
  const double w = 2.0 * M_PI * f0;
  auto realize = [&](const std::string& id, const std::string& a, const std::string& b,
                     complexd z) {
    RlcBranch br;
    br.id = id;
    br.node_a = a;
    br.node_b = b;
    br.kind = BranchKind::series_rlc;
    br.r = z.real();
    if (z.imag() > 0.0)
      br.l = z.imag() / w;
    else if (z.imag() < 0.0)
      br.c = -1.0 / (w * z.imag());
    net.add_branch(br);
  };
  realize("za", "t1", ground_node, t.za);
  realize("zd", "t1", "t2", t.zd);
  realize("zb", "t2", ground_node, t.zb);
  realize("ze", "t1", "t3", t.ze);
  realize("zc", "t3", ground_node, t.zc);
  net.add_port(1, "t1");
  net.add_port(2, "t2");
  net.add_port(3, "t3");
  return net;
}

}  // namespace pdnpulse
