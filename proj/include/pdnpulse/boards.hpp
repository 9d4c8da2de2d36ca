#pragma once

#include <string>
#include <vector>

#include "pdnpulse/netlist.hpp"

// Factory for the reference evaluation board: a six-node PDN chain from the
// voltage regulator (index 1) to the load SoC (index 6), with decoupling
// capacitor groups hung between them and a menu of built-in anomalies.

namespace pdnpulse {

struct DecapGroup {
  int node_index;  // 1-based chain position
  CapacitorSpec part;
};

// Wireline parasitics per chain segment.
inline constexpr double chain_segment_r = 5e-3;   // ohms
inline constexpr double chain_segment_l = 1e-9;   // henries

// Decap parasitics shared by all groups.
inline constexpr double decap_esr = 10e-3;        // ohms
inline constexpr double decap_esl = 0.5e-9;       // henries

// Built-in anomaly ids.
inline constexpr const char* anomaly_attiny85 = "attiny85";        // small MCU on the SoC node
inline constexpr const char* anomaly_sot23 = "sot23";              // tiny SOT-23 transistor
inline constexpr const char* anomaly_sampling_r = "sampling_r";    // 1-ohm series tap resistor

inline std::string chain_node(int index) { return "n" + std::to_string(index); }

// Six-position decap chain.  `doubled` doubles every group's part count
// (the dense-population variant).  Ports are not assigned here; see
// with_chain_ports().
inline PdnNetlist make_decap_chain_board(bool doubled = false) {
  PdnNetlist net;
  net.label = doubled ? "decap_chain_12cap" : "decap_chain_6cap";

  constexpr int n_positions = 6;
  for (int i = 1; i < n_positions; ++i) {
    RlcBranch seg;
    seg.id = "seg" + std::to_string(i) + std::to_string(i + 1);
    seg.node_a = chain_node(i);
    seg.node_b = chain_node(i + 1);
    seg.kind = BranchKind::series_rlc;
    seg.r = chain_segment_r;
    seg.l = chain_segment_l;
    net.add_branch(seg);
  }

  const int mult = doubled ? 2 : 1;
  const std::vector<DecapGroup> groups = {
      {2, CapacitorSpec{10e-6, decap_esr, decap_esl, 1 * mult}},
      {3, CapacitorSpec{4.7e-6, decap_esr, decap_esl, 1 * mult}},
      {4, CapacitorSpec{470e-9, decap_esr, decap_esl, 2 * mult}},
      {5, CapacitorSpec{47e-9, decap_esr, decap_esl, 2 * mult}},
  };
  for (const auto& g : groups) {
    for (int k = 0; k < g.part.count; ++k) {
      RlcBranch cap;
      cap.id = "cap" + std::to_string(g.node_index) + "_" + std::to_string(k + 1);
      cap.node_a = chain_node(g.node_index);
      cap.node_b = ground_node;
      cap.kind = BranchKind::series_rlc;
      cap.r = g.part.esr;
      cap.l = g.part.esl;
      cap.c = g.part.nominal_c;
      net.add_branch(cap);
    }
  }

  // Rogue 8-pin MCU seen from its supply pins: on-die capacitance behind
  // package/bond inductance and loss resistance.
  {
    AnomalySpec a;
    a.id = anomaly_attiny85;
    a.kind = AnomalyKind::parallel_rlc_at_node;
    a.target = chain_node(6);
    a.r = 3.0;
    a.l = 21e-9;
    a.c = 0.9e-9;
    net.anomalies.push_back(a);
  }
  // Rogue SOT-23 small-signal transistor across supply and ground.
  {
    AnomalySpec a;
    a.id = anomaly_sot23;
    a.kind = AnomalyKind::parallel_rlc_at_node;
    a.target = chain_node(6);
    a.r = 3.0;
    a.l = 1.4e-9;
    a.c = 0.12e-12;
    net.anomalies.push_back(a);
  }
  // In-line current-sampling resistor spliced into the last segment.
  {
    AnomalySpec a;
    a.id = anomaly_sampling_r;
    a.kind = AnomalyKind::series_r_in_branch;
    a.target = "seg56";
    a.r = 1.0;
    net.anomalies.push_back(a);
  }

  return net;
}

// Assigns measurement ports at the given chain positions (1..6), numbered
// 1..k in the order given.
inline PdnNetlist with_chain_ports(PdnNetlist net, const std::vector<int>& positions,
                                   double z0 = 50.0) {
  int index = 1;
  for (int pos : positions) {
    if (pos < 1 || pos > 6)
      throw NetlistError("chain position out of range: " + std::to_string(pos));
    net.add_port(index++, chain_node(pos), z0);
  }
  return net;
}

// Scales R/L/C of every branch whose id starts with `id_prefix`; used to
// derive board revisions that differ in their bill of materials.
inline PdnNetlist scale_branch_values(PdnNetlist net, const std::string& id_prefix,
                                      double r_scale, double l_scale, double c_scale) {
  for (auto& b : net.branches) {
    if (b.id.rfind(id_prefix, 0) != 0) continue;
    b.r *= r_scale;
    b.l *= l_scale;
    b.c *= c_scale;
  }
  return net;
}

}  // namespace pdnpulse
