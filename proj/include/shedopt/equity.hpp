#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "shedopt/case.hpp"
#include "shedopt/errors.hpp"

namespace shedopt {

/// Per-solution equity figures. ori holds one curtailment ratio per load
/// bus, ggc the normalized mean pairwise disparity of those ratios.
struct EquityReport {
  Eigen::VectorXd ori;
  double ori_mean = 0.0;
  double ggc = 0.0;
  int n_subregions = 0;
};

/// Curtailment ratio per load bus: shed_i / demand_i, elementwise.
/// Shed and demand must share units (both MW or both pu).
inline Eigen::VectorXd compute_ori(const Eigen::VectorXd& p_shed,
                                   const Eigen::VectorXd& p_demand) {
  if (p_shed.size() != p_demand.size())
    throw DomainError("shed and demand vectors differ in length");
  for (Eigen::Index i = 0; i < p_demand.size(); ++i)
    if (!(p_demand[i] > 0.0))
      throw DomainError("load bus " + std::to_string(i) +
                        " has non-positive demand; not a valid subregion");
  return p_shed.cwiseQuotient(p_demand);
}

/// Grid Gini coefficient of a curtailment-ratio vector:
///
///   sum_i sum_j |ori_i - ori_j| / (2 n (n-1) mean(ori))
///
/// Zero shedding everywhere is maximally equitable, so the 0/0 case is
/// defined as 0. A single loaded entry among zeros evaluates to exactly 1.
inline double compute_ggc(const Eigen::VectorXd& ori) {
  const Eigen::Index n = ori.size();
  if (n < 2)
    throw DomainError("pairwise disparity needs at least two subregions");
  const double mean = ori.mean();
  if (mean == 0.0) return 0.0;
  double disparity = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      disparity += std::abs(ori[i] - ori[j]);
  disparity *= 2.0;  // the i<j half-sum counted once
  return disparity /
         (2.0 * static_cast<double>(n) * static_cast<double>(n - 1) * mean);
}

/// One sparse linear row: sum of coeff * x[col] compared against 0.
struct LinearTerm {
  int col = 0;
  double coeff = 0.0;
};

struct LinearRow {
  std::vector<LinearTerm> terms;

  double eval(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.coeff * x[t.col];
    return v;
  }
};

/// Linear encoding of the disparity cap
///
///   sum_ij |ori_i - ori_j|  <=  beta * 2 n (n-1) * mean(ori)
///
/// with |.| split into auxiliary pairs z+ >= 0, z- >= 0 per unordered bus
/// pair. Rows are written over a local column space
///
///   [ p_shed[0..n) | z_plus[0..pairs) | z_minus[0..pairs) ]
///
/// with shed in the same unit as the demands passed in. coupling_rows are
/// equalities (== 0), budget_row is an inequality (<= 0).
struct EquityLinearization {
  int n = 0;
  std::vector<std::pair<int, int>> pair_index;
  int aux_count = 0;
  std::vector<LinearRow> coupling_rows;
  LinearRow budget_row;

  int p_shed_col(int load_ordinal) const { return load_ordinal; }
  int z_plus_col(int pair) const { return n + pair; }
  int z_minus_col(int pair) const { return n + aux_count + pair; }
  int total_cols() const { return n + 2 * aux_count; }
};

/// Builds the coupling and budget rows for a load-bus demand vector.
///
/// Pairs are enumerated i < j, and the budget row carries the factor of 2
/// that restores the full double sum. With every shed at zero the budget
/// row reads 0 <= 0, so a shed-free dispatch is always feasible.
inline EquityLinearization build_equity_linearization(
    const Eigen::VectorXd& load_demand, double beta) {
  if (beta < 0.0) throw DomainError("beta must be nonnegative");
  const int n = static_cast<int>(load_demand.size());
  for (int i = 0; i < n; ++i)
    if (!(load_demand[i] > 0.0))
      throw DomainError("load bus " + std::to_string(i) +
                        " has non-positive demand");

  EquityLinearization lin;
  lin.n = n;
  lin.aux_count = n * (n - 1) / 2;
  lin.pair_index.reserve(lin.aux_count);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) lin.pair_index.emplace_back(i, j);

  // z+_ij - z-_ij - shed_i/d_i + shed_j/d_j = 0
  lin.coupling_rows.resize(lin.pair_index.size());
  for (std::size_t p = 0; p < lin.pair_index.size(); ++p) {
    const auto [i, j] = lin.pair_index[p];
    auto& row = lin.coupling_rows[p];
    row.terms = {{lin.z_plus_col(static_cast<int>(p)), 1.0},
                 {lin.z_minus_col(static_cast<int>(p)), -1.0},
                 {lin.p_shed_col(i), -1.0 / load_demand[i]},
                 {lin.p_shed_col(j), 1.0 / load_demand[j]}};
  }

  // 2 sum_pairs (z+ + z-) - beta * 2 (n-1) * sum_i shed_i/d_i <= 0
  for (std::size_t p = 0; p < lin.pair_index.size(); ++p) {
    lin.budget_row.terms.push_back({lin.z_plus_col(static_cast<int>(p)), 2.0});
    lin.budget_row.terms.push_back({lin.z_minus_col(static_cast<int>(p)), 2.0});
  }
  const double demand_factor = 2.0 * beta * static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i)
    lin.budget_row.terms.push_back(
        {lin.p_shed_col(i), -demand_factor / load_demand[i]});
  return lin;
}

/// Assembles the full equity report for a per-load-bus shed vector (MW)
/// against a case. Tiny negative sheds from solver round-off are clamped.
inline EquityReport equity_report(const Eigen::VectorXd& p_shed_mw,
                                  const NetworkCase& c) {
  const auto loads = load_bus_ordinals(c);
  if (p_shed_mw.size() != static_cast<Eigen::Index>(loads.size()))
    throw DomainError("shed vector not aligned with the case's load buses");
  Eigen::VectorXd demand(loads.size());
  for (std::size_t k = 0; k < loads.size(); ++k)
    demand[static_cast<Eigen::Index>(k)] = c.buses[loads[k]].p_demand;

  EquityReport rep;
  rep.ori = compute_ori(p_shed_mw.cwiseMax(0.0), demand);
  rep.n_subregions = static_cast<int>(loads.size());
  rep.ori_mean = rep.ori.size() > 0 ? rep.ori.mean() : 0.0;
  rep.ggc = rep.ori.size() >= 2 ? compute_ggc(rep.ori) : 0.0;
  return rep;
}

}  // namespace shedopt
