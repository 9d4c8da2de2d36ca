#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pdnpulse/solver.hpp"

// Curve embedding of impedance profiles and the discrete Frechet distance,
// plus the multi-port aggregate metric FD' used to compare whole boards.

namespace pdnpulse {

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct CurvePoint {
  double u = 0.0;  // normalized log-frequency in [0, 1]
  double v = 0.0;  // log10 |Z|
};

struct ProfileCurve {
  std::vector<CurvePoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

enum class FdNorm { L1, L2, Linf };

inline const char* to_string(FdNorm n) {
  switch (n) {
    case FdNorm::L1: return "L1";
    case FdNorm::L2: return "L2";
    case FdNorm::Linf: return "Linf";
  }
  return "?";
}

inline FdNorm fd_norm_from_string(const std::string& s) {
  if (s == "L1" || s == "l1") return FdNorm::L1;
  if (s == "L2" || s == "l2") return FdNorm::L2;
  if (s == "Linf" || s == "linf") return FdNorm::Linf;
  throw std::invalid_argument("unknown norm: " + s);
}

struct FdConfig {
  FdNorm norm_order = FdNorm::L2;
};

// A monotone alignment between two curves: starts at (0,0), ends at
// (|A|-1, |B|-1), and each step advances one or both indices by one.  The
// discrete counterpart of the reparameterization pair in the continuous
// definition.  Used by tests to cross-check the DP by direct enumeration.
struct CouplingPath {
  std::vector<std::pair<std::size_t, std::size_t>> steps;
};

inline bool is_valid_coupling(const CouplingPath& p, std::size_t na, std::size_t nb) {
  if (na == 0 || nb == 0 || p.steps.empty()) return false;
  if (p.steps.front() != std::make_pair(std::size_t{0}, std::size_t{0})) return false;
  if (p.steps.back() != std::make_pair(na - 1, nb - 1)) return false;
  for (std::size_t k = 1; k < p.steps.size(); ++k) {
    const auto [pi, pj] = p.steps[k - 1];
    const auto [ci, cj] = p.steps[k];
    const bool di_ok = ci == pi || ci == pi + 1;
    const bool dj_ok = cj == pj || cj == pj + 1;
    if (!di_ok || !dj_ok || (ci == pi && cj == pj)) return false;
  }
  return true;
}

inline double point_distance(const CurvePoint& a, const CurvePoint& b) {
  return std::hypot(a.u - b.u, a.v - b.v);
}

// Width of a coupling: the largest point distance it matches.
inline double coupling_cost(const CouplingPath& p, const ProfileCurve& a,
                            const ProfileCurve& b) {
  double worst = 0.0;
  for (const auto& [i, j] : p.steps)
    worst = std::max(worst, point_distance(a.points[i], b.points[j]));
  return worst;
}

inline constexpr double abs_z_floor = 1e-12;  // ohms, keeps log10 finite

// Embeds profile Z_xy of a signature as a 2-D curve: u is log-frequency
// normalized to [0, 1] over the sweep, v is log10 of |Z| floored at
// abs_z_floor.  Ports are 1-based and x <= y (the distinct-pair canonical
// order).
inline ProfileCurve embed_profile(const BoardSignature& sig, int x, int y) {
  if (x < 1 || y < x || y > sig.n_ports)
    throw std::out_of_range("embed_profile: require 1 <= x <= y <= n_ports, got x=" +
                            std::to_string(x) + " y=" + std::to_string(y) + " n_ports=" +
                            std::to_string(sig.n_ports));
  if (sig.freqs.size() < 2) throw ShapeError("embed_profile: signature has fewer than 2 points");
  const double lf0 = std::log10(sig.freqs.front());
  const double lf1 = std::log10(sig.freqs.back());
  if (!(lf1 > lf0)) throw ShapeError("embed_profile: degenerate frequency span");

  ProfileCurve curve;
  curve.points.resize(sig.freqs.size());
  for (std::size_t i = 0; i < sig.freqs.size(); ++i) {
    const double mag = std::abs(sig.z[i](x - 1, y - 1));
    curve.points[i].u = (std::log10(sig.freqs[i]) - lf0) / (lf1 - lf0);
    curve.points[i].v = std::log10(std::max(mag, abs_z_floor));
  }
  return curve;
}

// Discrete Frechet distance between two point sequences (classic quadratic
// dynamic program).  The recurrence runs on squared distances — max and min
// commute with the monotone square root, so one sqrt at the end suffices;
// this matters because campaign runs evaluate millions of cells.
inline double frechet(const ProfileCurve& a, const ProfileCurve& b) {
  const std::size_t na = a.size(), nb = b.size();
  if (na == 0 || nb == 0) throw std::invalid_argument("frechet: empty curve");

  auto d2 = [&](std::size_t i, std::size_t j) {
    const double du = a.points[i].u - b.points[j].u;
    const double dv = a.points[i].v - b.points[j].v;
    return du * du + dv * dv;
  };

  // Column-rolling DP over curve A's index; col[j] holds ca(i, j).
  std::vector<double> col(nb);
  col[0] = d2(0, 0);
  for (std::size_t j = 1; j < nb; ++j) col[j] = std::max(col[j - 1], d2(0, j));
  for (std::size_t i = 1; i < na; ++i) {
    double diag = col[0];  // ca(i-1, j-1)
    col[0] = std::max(col[0], d2(i, 0));
    for (std::size_t j = 1; j < nb; ++j) {
      const double up = col[j];  // ca(i-1, j)
      const double best = std::min(std::min(up, diag), col[j - 1]);
      col[j] = std::max(best, d2(i, j));
      diag = up;
    }
  }
  return std::sqrt(col[nb - 1]);
}

// Aggregates a list of per-profile distances into the board-level metric:
// the configured vector norm divided by the pair count.
inline double fd_aggregate(const std::vector<double>& fds, FdNorm norm) {
  if (fds.empty()) throw std::invalid_argument("fd_aggregate: empty distance list");
  double agg = 0.0;
  switch (norm) {
    case FdNorm::L1:
      for (double d : fds) agg += std::abs(d);
      break;
    case FdNorm::L2: {
      for (double d : fds) agg += d * d;
      agg = std::sqrt(agg);
      break;
    }
    case FdNorm::Linf:
      for (double d : fds) agg = std::max(agg, std::abs(d));
      break;
  }
  return agg / static_cast<double>(fds.size());
}

// Per-pair Frechet distances between two boards, in (x, y) lexicographic
// order over all distinct pairs x <= y.
inline std::vector<double> pairwise_fds(const BoardSignature& b1, const BoardSignature& b2) {
  if (!same_shape(b1, b2))
    throw ShapeError("fd_prime: signatures differ in grid or port count (no resampling)");
  std::vector<double> fds;
  fds.reserve(static_cast<std::size_t>(b1.n_ports) * (b1.n_ports + 1) / 2);
  for (int x = 1; x <= b1.n_ports; ++x)
    for (int y = x; y <= b1.n_ports; ++y)
      fds.push_back(frechet(embed_profile(b1, x, y), embed_profile(b2, x, y)));
  return fds;
}

// Board-level distance: norm of the (n^2+n)/2 per-profile Frechet
// distances, divided by (n^2+n)/2.
inline double fd_prime(const BoardSignature& b1, const BoardSignature& b2,
                       const FdConfig& cfg = {}) {
  return fd_aggregate(pairwise_fds(b1, b2), cfg.norm_order);
}

}  // namespace pdnpulse
