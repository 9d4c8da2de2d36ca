#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdnpulse/rng.hpp"

// Power-delivery-network netlists: lumped RLC branches between named nodes,
// with numbered observation ports and a library of switchable anomalies
// (rogue components, altered branches) that model tampered boards.

namespace pdnpulse {

inline constexpr const char* ground_node = "gnd";

struct Diagnostic {
  std::string code;    // stable machine-readable id, e.g. "negative-value"
  std::string detail;  // human-readable context
};

class NetlistError : public std::runtime_error {
 public:
  explicit NetlistError(const std::string& what) : std::runtime_error(what) {}
};

enum class BranchKind { resistor, inductor, capacitor, series_rlc, parallel_rlc };

inline const char* to_string(BranchKind k) {
  switch (k) {
    case BranchKind::resistor: return "resistor";
    case BranchKind::inductor: return "inductor";
    case BranchKind::capacitor: return "capacitor";
    case BranchKind::series_rlc: return "series_rlc";
    case BranchKind::parallel_rlc: return "parallel_rlc";
  }
  return "?";
}

inline BranchKind branch_kind_from_string(const std::string& s) {
  if (s == "resistor") return BranchKind::resistor;
  if (s == "inductor") return BranchKind::inductor;
  if (s == "capacitor") return BranchKind::capacitor;
  if (s == "series_rlc") return BranchKind::series_rlc;
  if (s == "parallel_rlc") return BranchKind::parallel_rlc;
  throw NetlistError("unknown branch kind: " + s);
}

// A two-terminal branch.  Element values of zero mean "element absent":
// absent in a series chain is a short (skipped term), absent in a parallel
// bank is an open (skipped term).
struct RlcBranch {
  std::string id;
  std::string node_a;
  std::string node_b;
  BranchKind kind = BranchKind::series_rlc;
  double r = 0.0;  // ohms
  double l = 0.0;  // henries
  double c = 0.0;  // farads
  // Manufacturing tolerance for this branch as a fraction of nominal
  // (3-sigma).  Zero defers to the sampling model's global tolerance.
  double tolerance_pct = 0.0;
};

// A decoupling-capacitor part: nominal capacitance plus parasitics, placed
// `count` times in parallel at a node.
struct CapacitorSpec {
  double nominal_c = 0.0;  // farads
  double esr = 0.0;        // ohms
  double esl = 0.0;        // henries
  int count = 1;
};

enum class AnomalyKind {
  parallel_rlc_at_node,  // rogue part hung from a node to ground
  series_r_in_branch,    // resistance spliced into an existing branch
  remove_branch,         // depopulated component
  replace_branch         // component swapped for different values
};

inline const char* to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::parallel_rlc_at_node: return "parallel_rlc_at_node";
    case AnomalyKind::series_r_in_branch: return "series_r_in_branch";
    case AnomalyKind::remove_branch: return "remove_branch";
    case AnomalyKind::replace_branch: return "replace_branch";
  }
  return "?";
}

inline AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "parallel_rlc_at_node") return AnomalyKind::parallel_rlc_at_node;
  if (s == "series_r_in_branch") return AnomalyKind::series_r_in_branch;
  if (s == "remove_branch") return AnomalyKind::remove_branch;
  if (s == "replace_branch") return AnomalyKind::replace_branch;
  throw NetlistError("unknown anomaly kind: " + s);
}

struct AnomalySpec {
  std::string id;
  AnomalyKind kind = AnomalyKind::parallel_rlc_at_node;
  // Node id for parallel_rlc_at_node, branch id for the other kinds.
  std::string target;
  double r = 0.0;
  double l = 0.0;
  double c = 0.0;
};

struct PortSpec {
  int index = 1;  // 1-based; ports form a contiguous 1..n sequence
  std::string node;
  double z0 = 50.0;  // reference impedance, ohms
};

enum class VariationDistribution { gaussian };

// Component-value variation model: `tolerance` is the datasheet-style
// 3-sigma bound as a fraction of nominal (0.10 means +/-10%).
struct ToleranceModel {
  VariationDistribution distribution = VariationDistribution::gaussian;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};

struct PdnNetlist {
  std::string label;
  std::vector<std::string> nodes;  // includes ground_node once used
  std::vector<RlcBranch> branches;
  std::vector<PortSpec> ports;
  std::vector<AnomalySpec> anomalies;

  bool has_node(const std::string& n) const {
    return std::find(nodes.begin(), nodes.end(), n) != nodes.end();
  }

  void add_node(const std::string& n) {
    if (!has_node(n)) nodes.push_back(n);
  }

  RlcBranch& add_branch(RlcBranch b) {
    add_node(b.node_a);
    add_node(b.node_b);
    branches.push_back(std::move(b));
    return branches.back();
  }

  void add_port(int index, const std::string& node, double z0 = 50.0) {
    add_node(node);
    ports.push_back(PortSpec{index, node, z0});
  }

  const RlcBranch* find_branch(const std::string& id) const {
    for (const auto& b : branches)
      if (b.id == id) return &b;
    return nullptr;
  }

  RlcBranch* find_branch(const std::string& id) {
    for (auto& b : branches)
      if (b.id == id) return &b;
    return nullptr;
  }
};

namespace detail {

// True when the branch conducts at no frequency (open) or at every
// frequency with zero impedance (ideal short); both break nodal analysis.
inline bool branch_is_degenerate(const RlcBranch& b) {
  switch (b.kind) {
    case BranchKind::resistor: return b.r <= 0.0;
    case BranchKind::inductor: return b.l <= 0.0;
    case BranchKind::capacitor: return b.c <= 0.0;
    case BranchKind::series_rlc: return b.r == 0.0 && b.l == 0.0 && b.c == 0.0;
    case BranchKind::parallel_rlc: return b.r == 0.0 && b.l == 0.0 && b.c == 0.0;
  }
  return true;
}

}  // namespace detail

// Structural validation.  Returns one diagnostic per violation; an empty
// result is the precondition for solving.  Nothing here throws: callers
// decide whether a finding is fatal.
inline std::vector<Diagnostic> validate_netlist(const PdnNetlist& net) {
  std::vector<Diagnostic> out;
  auto add = [&out](std::string code, std::string detail) {
    out.push_back(Diagnostic{std::move(code), std::move(detail)});
  };

  std::set<std::string> branch_ids;
  for (const auto& b : net.branches) {
    if (b.id.empty()) add("empty-branch-id", "branch between " + b.node_a + " and " + b.node_b);
    if (!branch_ids.insert(b.id).second)
      add("duplicate-branch-id", b.id);
    if (b.node_a == b.node_b)
      add("self-loop", "branch " + b.id + " connects " + b.node_a + " to itself");
    if (!net.has_node(b.node_a))
      add("unknown-node", "branch " + b.id + " endpoint " + b.node_a);
    if (!net.has_node(b.node_b))
      add("unknown-node", "branch " + b.id + " endpoint " + b.node_b);
    if (b.r < 0.0 || b.l < 0.0 || b.c < 0.0)
      add("negative-value", "branch " + b.id);
    if (b.tolerance_pct < 0.0 || b.tolerance_pct >= 1.0)
      add("tolerance-out-of-range", "branch " + b.id);
    if (detail::branch_is_degenerate(b))
      add("degenerate-branch", "branch " + b.id + " (" + std::string(to_string(b.kind)) + ")");
  }

  std::set<int> port_indices;
  std::set<std::string> port_nodes;
  for (const auto& p : net.ports) {
    if (!net.has_node(p.node))
      add("unknown-node", "port " + std::to_string(p.index) + " at " + p.node);
    if (p.node == ground_node)
      add("port-at-ground", "port " + std::to_string(p.index));
    if (!port_indices.insert(p.index).second)
      add("duplicate-port-index", std::to_string(p.index));
    if (!port_nodes.insert(p.node).second)
      add("duplicate-port", p.node);
    if (p.z0 <= 0.0)
      add("nonpositive-z0", "port " + std::to_string(p.index));
  }
  if (!net.ports.empty()) {
    // Indices must be exactly 1..n.
    int expect = 1;
    for (int idx : port_indices) {
      if (idx != expect) {
        add("port-index-gap", "expected contiguous 1..n indices");
        break;
      }
      ++expect;
    }
  }

  // Connectivity: every port must see ground through some branch chain,
  // otherwise its column of the impedance matrix is undefined.
  {
    std::map<std::string, std::string> parent;
    for (const auto& n : net.nodes) parent[n] = n;
    auto find = [&parent](std::string x) {
      while (parent[x] != x) x = parent[x];
      return x;
    };
    auto unite = [&](const std::string& a, const std::string& b) {
      parent[find(a)] = find(b);
    };
    for (const auto& b : net.branches) {
      if (net.has_node(b.node_a) && net.has_node(b.node_b)) unite(b.node_a, b.node_b);
    }
    if (net.has_node(ground_node)) {
      const std::string groot = find(ground_node);
      for (const auto& p : net.ports) {
        if (net.has_node(p.node) && find(p.node) != groot)
          add("floating-port", "port " + std::to_string(p.index) + " at " + p.node +
                                   " has no path to ground");
      }
    } else if (!net.ports.empty()) {
      add("no-ground", "netlist has ports but no ground node");
    }
  }

  std::set<std::string> anomaly_ids;
  for (const auto& a : net.anomalies) {
    if (a.id.empty()) add("empty-anomaly-id", "target " + a.target);
    if (!anomaly_ids.insert(a.id).second) add("duplicate-anomaly-id", a.id);
    if (a.r < 0.0 || a.l < 0.0 || a.c < 0.0) add("negative-value", "anomaly " + a.id);
    switch (a.kind) {
      case AnomalyKind::parallel_rlc_at_node:
        if (!net.has_node(a.target))
          add("unknown-node", "anomaly " + a.id + " target " + a.target);
        break;
      case AnomalyKind::series_r_in_branch:
      case AnomalyKind::remove_branch:
      case AnomalyKind::replace_branch:
        if (net.find_branch(a.target) == nullptr)
          add("unknown-branch", "anomaly " + a.id + " target " + a.target);
        break;
    }
  }

  return out;
}

// Materializes the selected anomalies into a copy of the netlist.  The
// subset is matched against anomaly ids; application order is the order the
// anomalies appear in the netlist, so a caller-supplied set yields the same
// board regardless of how the set was ordered.
inline PdnNetlist apply_anomalies(const PdnNetlist& net,
                                  const std::vector<std::string>& which) {
  PdnNetlist out = net;
  std::set<std::string> wanted(which.begin(), which.end());
  for (const auto& id : wanted) {
    bool known = false;
    for (const auto& a : net.anomalies)
      if (a.id == id) known = true;
    if (!known) throw NetlistError("unknown anomaly id: " + id);
  }
  for (const auto& a : net.anomalies) {
    if (wanted.find(a.id) == wanted.end()) continue;
    switch (a.kind) {
      case AnomalyKind::parallel_rlc_at_node: {
        if (!out.has_node(a.target))
          throw NetlistError("anomaly " + a.id + " targets unknown node " + a.target);
        RlcBranch b;
        b.id = a.id;
        b.node_a = a.target;
        b.node_b = ground_node;
        b.kind = BranchKind::series_rlc;  // R, L, C of the rogue part in series
        b.r = a.r;
        b.l = a.l;
        b.c = a.c;
        out.add_branch(std::move(b));
        break;
      }
      case AnomalyKind::series_r_in_branch: {
        RlcBranch* t = out.find_branch(a.target);
        if (t == nullptr)
          throw NetlistError("anomaly " + a.id + " targets unknown branch " + a.target);
        const std::string mid = a.target + "." + a.id + ".mid";
        if (out.has_node(mid))
          throw NetlistError("anomaly " + a.id + ": split node " + mid + " already exists");
        const std::string old_b = t->node_b;
        t->node_b = mid;
        out.add_node(mid);
        RlcBranch r;
        r.id = a.id;
        r.node_a = mid;
        r.node_b = old_b;
        r.kind = BranchKind::resistor;
        r.r = a.r;
        out.add_branch(std::move(r));
        break;
      }
      case AnomalyKind::remove_branch: {
        auto it = std::find_if(out.branches.begin(), out.branches.end(),
                               [&](const RlcBranch& b) { return b.id == a.target; });
        if (it == out.branches.end())
          throw NetlistError("anomaly " + a.id + " targets unknown branch " + a.target);
        out.branches.erase(it);
        break;
      }
      case AnomalyKind::replace_branch: {
        RlcBranch* t = out.find_branch(a.target);
        if (t == nullptr)
          throw NetlistError("anomaly " + a.id + " targets unknown branch " + a.target);
        t->r = a.r;
        t->l = a.l;
        t->c = a.c;
        break;
      }
    }
  }
  // Applied anomalies disappear from the result's menu; the unapplied ones
  // stay available.
  out.anomalies.clear();
  for (const auto& a : net.anomalies)
    if (wanted.find(a.id) == wanted.end()) out.anomalies.push_back(a);
  return out;
}

// Draws one manufacturing sample: every nonzero element value v becomes
// v * (1 + eps) with eps ~ N(0, (tol/3)^2), clamped to stay positive.  A
// branch with its own tolerance_pct overrides the model's global tolerance.
// The draw for a given (model.seed, trial) pair is reproducible; zero
// tolerance returns the input values exactly.
inline PdnNetlist sample_variation(const PdnNetlist& net, const ToleranceModel& model,
                                   std::uint64_t trial) {
  if (model.tolerance < 0.0 || model.tolerance >= 1.0)
    throw NetlistError("tolerance must lie in [0, 1)");
  PdnNetlist out = net;
  GaussianStream g(hash_mix(model.seed, trial));
  for (auto& b : out.branches) {
    const double tol = b.tolerance_pct > 0.0 ? b.tolerance_pct : model.tolerance;
    const double sigma = tol / 3.0;
    auto perturb = [&](double v) {
      if (v <= 0.0) return v;  // absent element stays absent
      const double eps = sigma * g.next_normal();
      return std::max(v * (1.0 + eps), 1e-6 * v);
    };
    b.r = perturb(b.r);
    b.l = perturb(b.l);
    b.c = perturb(b.c);
  }
  return out;
}

}  // namespace pdnpulse
