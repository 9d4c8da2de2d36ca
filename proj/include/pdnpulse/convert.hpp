#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdnpulse/solver.hpp"

// S/Z parameter conversions with per-port reference impedances, plus the
// two-port shunt-through identity used when reconstructing transfer
// impedance from a VNA S21 measurement.

namespace pdnpulse {

class ConversionError : public std::runtime_error {
 public:
  explicit ConversionError(const std::string& what) : std::runtime_error(what) {}
};

struct SParameterSweep {
  FrequencyGrid grid;
  std::vector<double> freqs;
  int n_ports = 0;
  std::vector<Eigen::MatrixXcd> s;  // one n_ports x n_ports matrix per frequency
  std::vector<double> port_z0;
  std::string label;
  Provenance provenance = Provenance::simulated;

  std::size_t size() const { return freqs.size(); }
};

namespace detail {

inline Eigen::VectorXd normalization_diag(const std::vector<double>& z0, int n_ports) {
  if (static_cast<int>(z0.size()) != n_ports)
    throw ConversionError("port reference impedance list does not match port count");
  Eigen::VectorXd d(n_ports);
  for (int i = 0; i < n_ports; ++i) {
    if (!(z0[static_cast<std::size_t>(i)] > 0.0))
      throw ConversionError("nonpositive reference impedance on port " + std::to_string(i + 1));
    d(i) = 1.0 / std::sqrt(z0[static_cast<std::size_t>(i)]);
  }
  return d;
}

}  // namespace detail

// S = (Zn - I)(Zn + I)^-1 with Zn = D Z D, D = diag(1/sqrt(z0_k)).  Since
// both factors are polynomials in Zn they commute, so the system is solved
// as (Zn + I) S = (Zn - I).
inline SParameterSweep z_to_s(const BoardSignature& sig) {
  SParameterSweep out;
  out.grid = sig.grid;
  out.freqs = sig.freqs;
  out.n_ports = sig.n_ports;
  out.port_z0 = sig.port_z0;
  out.label = sig.label;
  out.provenance = sig.provenance;
  out.s.resize(sig.z.size());

  const Eigen::VectorXd d = detail::normalization_diag(sig.port_z0, sig.n_ports);
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(sig.n_ports, sig.n_ports);
  for (std::size_t fi = 0; fi < sig.z.size(); ++fi) {
    const Eigen::MatrixXcd zn = d.asDiagonal() * sig.z[fi] * d.asDiagonal();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(zn + eye);
    Eigen::MatrixXcd s = lu.solve(zn - eye);
    const double resid = ((zn + eye) * s - (zn - eye)).cwiseAbs().maxCoeff();
    if (!s.allFinite() || resid > 1e-6 * std::max(1.0, zn.cwiseAbs().maxCoeff())) {
      std::ostringstream os;
      os << "singular (Z + Z0*I) at f=" << sig.freqs[fi] << " Hz";
      throw ConversionError(os.str());
    }
    out.s[fi] = std::move(s);
  }
  return out;
}

// Z = D^-1 (I - S)^-1 (I + S) D^-1, the inverse of z_to_s.
inline BoardSignature s_to_z(const SParameterSweep& sw) {
  BoardSignature out;
  out.grid = sw.grid;
  out.freqs = sw.freqs;
  out.n_ports = sw.n_ports;
  out.port_z0 = sw.port_z0;
  out.label = sw.label;
  out.provenance = sw.provenance;
  out.z.resize(sw.s.size());

  const Eigen::VectorXd d = detail::normalization_diag(sw.port_z0, sw.n_ports);
  Eigen::VectorXd dinv(sw.n_ports);
  for (int i = 0; i < sw.n_ports; ++i) dinv(i) = 1.0 / d(i);
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(sw.n_ports, sw.n_ports);
  for (std::size_t fi = 0; fi < sw.s.size(); ++fi) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(eye - sw.s[fi]);
    Eigen::MatrixXcd zn = lu.solve(eye + sw.s[fi]);
    const double resid = ((eye - sw.s[fi]) * zn - (eye + sw.s[fi])).cwiseAbs().maxCoeff();
    if (!zn.allFinite() || resid > 1e-6 * std::max(1.0, zn.cwiseAbs().maxCoeff())) {
      std::ostringstream os;
      os << "singular (I - S) at f=" << sw.freqs[fi] << " Hz";
      throw ConversionError(os.str());
    }
    out.z[fi] = dinv.asDiagonal() * zn * dinv.asDiagonal();
  }
  return out;
}

// Two-port transfer impedance from a shunt-through S21 measurement plus the
// separately measured self-impedances:
//
//   Z21 = S21 * (Z0/2) * (1 + Z11/Z0 + Z22/Z0 + (Z11/Z0)(Z22/Z0))
//                      / (1 + S21 * Z11 / (2 Z0))
//
// Exact whenever the network's Z12 equals Z11 (low-impedance DUTs measured
// shunt-through are near that regime); the closure against the full
// conversion is tested on PDN-scale fixtures.
inline complexd shunt_through_z21(complexd s21, complexd z11, complexd z22, double z0) {
  if (!(z0 > 0.0)) throw std::domain_error("shunt_through_z21 requires z0 > 0");
  const complexd a = z11 / z0;
  const complexd b = z22 / z0;
  const complexd denom = 1.0 + s21 * z11 / (2.0 * z0);
  if (std::abs(denom) == 0.0) throw std::domain_error("shunt_through_z21: zero denominator");
  return s21 * (z0 / 2.0) * (1.0 + a + b + a * b) / denom;
}

}  // namespace pdnpulse
