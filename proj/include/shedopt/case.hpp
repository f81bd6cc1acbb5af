#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "shedopt/errors.hpp"

namespace shedopt {

/// A network node. Demands are in MW/MVAr, voltage bounds in per-unit,
/// shunts in MW/MVAr consumed at V = 1 pu.
struct Bus {
  int id = 0;
  double p_demand = 0.0;
  double q_demand = 0.0;
  double v_min = 0.94;
  double v_max = 1.06;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  bool is_reference = false;

  bool operator==(const Bus&) const = default;
};

/// A dispatchable machine. Power bounds in MW/MVAr; cost_coeffs are
/// ascending polynomial coefficients of f(P), $/h with P in MW
/// (so {c0, c1, c2} means c0 + c1*P + c2*P^2), at most quadratic.
struct Generator {
  int at_bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  std::vector<double> cost_coeffs;
  bool in_service = true;

  bool operator==(const Generator&) const = default;
};

/// A pi-model branch. r, x, b_charging in per-unit on the system base;
/// tap is the off-nominal ratio on the from side (1.0 if none), shift in
/// radians, rate in MVA with 0 meaning unlimited.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap = 1.0;
  double shift = 0.0;
  double rate = 0.0;
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

/// Immutable grid description. Buses are kept in input order; every matrix
/// in the library is indexed by position in `buses` (the internal ordinal),
/// never by external id.
struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;

  bool operator==(const NetworkCase&) const = default;
};

/// MW (or MVAr) -> per-unit.
inline double to_pu(double mw, double base_mva) { return mw / base_mva; }

/// Per-unit -> MW (or MVAr).
inline double from_pu(double pu, double base_mva) { return pu * base_mva; }

/// Bidirectional id <-> ordinal map for a case's buses.
class BusIndex {
 public:
  explicit BusIndex(const NetworkCase& c) {
    ord_to_id_.reserve(c.buses.size());
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
      id_to_ord_.emplace(c.buses[i].id, static_cast<int>(i));
      ord_to_id_.push_back(c.buses[i].id);
    }
  }

  int ordinal(int bus_id) const {
    auto it = id_to_ord_.find(bus_id);
    if (it == id_to_ord_.end())
      throw ValidationError("unknown bus id " + std::to_string(bus_id));
    return it->second;
  }

  int id(int ordinal) const { return ord_to_id_.at(ordinal); }
  int size() const { return static_cast<int>(ord_to_id_.size()); }

 private:
  std::unordered_map<int, int> id_to_ord_;
  std::vector<int> ord_to_id_;
};

/// Evaluates a generator cost polynomial at p_mw.
inline double generation_cost(const Generator& g, double p_mw) {
  double c = 0.0;
  double p_pow = 1.0;
  for (double coeff : g.cost_coeffs) {
    c += coeff * p_pow;
    p_pow *= p_mw;
  }
  return c;
}

/// Ordinals of buses with strictly positive real demand -- the subregions
/// of the equity metric.
inline std::vector<int> load_bus_ordinals(const NetworkCase& c) {
  std::vector<int> out;
  for (std::size_t i = 0; i < c.buses.size(); ++i)
    if (c.buses[i].p_demand > 0.0) out.push_back(static_cast<int>(i));
  return out;
}

inline double total_p_demand(const NetworkCase& c) {
  double t = 0.0;
  for (const auto& b : c.buses) t += b.p_demand;
  return t;
}

inline double total_active_capacity(const NetworkCase& c) {
  double t = 0.0;
  for (const auto& g : c.generators)
    if (g.in_service) t += g.p_max;
  return t;
}

/// Checks every model invariant; throws ValidationError on the first
/// violation found.
inline void validate(const NetworkCase& c) {
  if (c.base_mva <= 0.0) throw ValidationError("base_mva must be positive");
  if (c.buses.empty()) throw ValidationError("case has no buses");

  std::unordered_map<int, int> seen;
  int n_ref = 0;
  for (const auto& b : c.buses) {
    if (b.id <= 0)
      throw ValidationError("bus id must be a positive integer, got " +
                            std::to_string(b.id));
    if (!seen.emplace(b.id, 1).second)
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
    if (!(b.v_min > 0.0) || !(b.v_min <= b.v_max))
      throw ValidationError("bus " + std::to_string(b.id) +
                            ": requires 0 < v_min <= v_max");
    if (b.is_reference) ++n_ref;
  }
  if (n_ref != 1)
    throw ValidationError("exactly one reference bus required, found " +
                          std::to_string(n_ref));

  for (std::size_t gi = 0; gi < c.generators.size(); ++gi) {
    const auto& g = c.generators[gi];
    const std::string tag = "generator " + std::to_string(gi + 1);
    if (!seen.count(g.at_bus))
      throw ValidationError(tag + ": dangling bus reference " +
                            std::to_string(g.at_bus));
    if (g.p_min > g.p_max || g.q_min > g.q_max)
      throw ValidationError(tag + ": inverted power bounds");
    if (g.cost_coeffs.empty() || g.cost_coeffs.size() > 3)
      throw ValidationError(tag + ": cost_coeffs must have 1-3 entries");
    if (g.cost_coeffs.size() == 3 && g.cost_coeffs[2] < 0.0)
      throw ValidationError(tag + ": quadratic cost coefficient must be >= 0");
  }

  for (std::size_t bi = 0; bi < c.branches.size(); ++bi) {
    const auto& br = c.branches[bi];
    const std::string tag = "branch " + std::to_string(bi + 1);
    if (!seen.count(br.from_bus) || !seen.count(br.to_bus))
      throw ValidationError(tag + ": dangling bus reference");
    if (br.from_bus == br.to_bus)
      throw ValidationError(tag + ": from_bus equals to_bus");
    if (br.r == 0.0 && br.x == 0.0)
      throw ValidationError(tag + ": degenerate impedance (r = x = 0)");
    if (!(br.tap > 0.0)) throw ValidationError(tag + ": tap must be positive");
  }
}

/// True when every bus is reachable from the first one over in-service
/// branches.
inline bool is_connected(const NetworkCase& c) {
  if (c.buses.empty()) return false;
  if (c.buses.size() == 1) return true;
  BusIndex idx(c);
  std::vector<std::vector<int>> adj(c.buses.size());
  for (const auto& br : c.branches) {
    if (!br.in_service) continue;
    int f = idx.ordinal(br.from_bus), t = idx.ordinal(br.to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<char> vis(c.buses.size(), 0);
  std::vector<int> stack{0};
  vis[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!vis[v]) {
        vis[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == c.buses.size();
}

}  // namespace shedopt
