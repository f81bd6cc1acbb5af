#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shedopt/case.hpp"
#include "shedopt/errors.hpp"
#include "shedopt/ip_solver.hpp"
#include "shedopt/opf_problem.hpp"

namespace shedopt {

/// Study knobs applied on top of a base case before a solve.
struct ScenarioConfig {
  double load_p_scale = 1.0;
  double load_q_scale = 1.0;
  std::vector<int> tripped_gens;  // 1-based positions in the generator list
  double shed_penalty = 500000.0;          // $/MWh
  std::optional<double> beta = 1.0;        // nullopt: no equity constraint
};

/// Applies load scaling and generator trips; the base case is untouched.
inline NetworkCase apply_scenario(const NetworkCase& base,
                                  const ScenarioConfig& cfg) {
  if (!(cfg.load_p_scale > 0.0) || !(cfg.load_q_scale > 0.0))
    throw ScenarioError("load scale factors must be positive");
  if (!(cfg.shed_penalty > 0.0))
    throw ScenarioError("shed penalty must be positive");

  NetworkCase c = base;
  for (auto& b : c.buses) {
    b.p_demand *= cfg.load_p_scale;
    b.q_demand *= cfg.load_q_scale;
  }
  for (int idx : cfg.tripped_gens) {
    if (idx < 1 || idx > static_cast<int>(c.generators.size()))
      throw ScenarioError("tripped generator index " + std::to_string(idx) +
                          " out of range 1.." +
                          std::to_string(c.generators.size()));
    c.generators[static_cast<std::size_t>(idx - 1)].in_service = false;
  }
  const bool any_live =
      std::any_of(c.generators.begin(), c.generators.end(),
                  [](const Generator& g) { return g.in_service; });
  if (!any_live)
    throw ScenarioError("scenario trips every generator in the case");
  return c;
}

/// Deterministic start: flat voltages, mid-bound dispatch, shed spread
/// across load buses in proportion to the capacity deficit, small positive
/// auxiliaries.
inline Eigen::VectorXd default_start(const SheddingProblem& prob) {
  const VariableLayout& lay = prob.layout();
  const NetworkCase& c = prob.network();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.total());

  for (int i = 0; i < lay.n_bus; ++i) x[lay.v_start() + i] = 1.0;

  Eigen::VectorXd lo, hi;
  prob.bounds(lo, hi);
  for (int g = 0; g < lay.n_gen; ++g) {
    const int pc = lay.p_gen_start() + g;
    const int qc = lay.q_gen_start() + g;
    x[pc] = 0.5 * (lo[pc] + hi[pc]);
    x[qc] = 0.5 * (lo[qc] + hi[qc]);
  }

  const double demand = total_p_demand(c);
  const double deficit = std::max(0.0, demand - total_active_capacity(c));
  if (demand > 0.0) {
    const auto& loads = prob.load_ordinals();
    for (std::size_t l = 0; l < loads.size(); ++l) {
      const double share =
          deficit * c.buses[static_cast<std::size_t>(loads[l])].p_demand / demand;
      x[lay.p_shed_start() + static_cast<int>(l)] = to_pu(share, c.base_mva);
    }
  }
  for (int p = 0; p < 2 * lay.n_pairs; ++p)
    x[lay.z_plus_start() + p] = 1e-3;
  return x;
}

/// Applies a scenario, assembles, solves, and reports. Numerical solver
/// breakdown raises ScenarioError with the scenario echoed; an iteration
/// limit returns a solution flagged non-converged.
inline ShedSolution solve_scenario(const NetworkCase& base,
                                   const ScenarioConfig& cfg,
                                   const SolverOptions& opts = {}) {
  auto net = std::make_shared<const NetworkCase>(apply_scenario(base, cfg));
  SheddingProblem prob(net, cfg.beta, cfg.shed_penalty);
  const SolveOutcome out = solve(prob, default_start(prob), opts);
  if (out.status == SolveStatus::numerical_failure) {
    std::string beta_txt = cfg.beta ? std::to_string(*cfg.beta) : "none";
    throw ScenarioError("solver failure on case '" + base.name +
                        "' (beta=" + beta_txt + ", " +
                        std::to_string(cfg.tripped_gens.size()) +
                        " tripped): " + out.message);
  }
  return extract_solution(prob, out);
}

struct SweepRow {
  double beta = 0.0;
  double total_cost = 0.0;
  double generation_cost = 0.0;
  double total_shed_mw = 0.0;
  double ggc = 0.0;
  Eigen::VectorXd ori;
  bool converged = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;       // sorted by beta ascending
  std::vector<int> load_bus_ids;    // row ordering of the ori vectors
};

/// One independent solve per beta on the same scenario; failures are
/// recorded per row and the sweep continues.
inline SweepResult sweep_beta(const NetworkCase& base,
                              const ScenarioConfig& cfg,
                              std::vector<double> beta_grid,
                              const SolverOptions& opts = {}) {
  if (beta_grid.empty()) throw DomainError("beta grid is empty");
  for (double b : beta_grid)
    if (!(b >= 0.0)) throw DomainError("beta grid values must be >= 0");
  std::sort(beta_grid.begin(), beta_grid.end());

  SweepResult result;
  {
    const NetworkCase applied = apply_scenario(base, cfg);
    for (int ord : load_bus_ordinals(applied))
      result.load_bus_ids.push_back(
          applied.buses[static_cast<std::size_t>(ord)].id);
  }

  const int n_loads = static_cast<int>(result.load_bus_ids.size());
  for (double b : beta_grid) {
    ScenarioConfig row_cfg = cfg;
    row_cfg.beta = b;
    SweepRow row;
    row.beta = b;
    row.ori = Eigen::VectorXd::Zero(n_loads);
    try {
      const ShedSolution sol = solve_scenario(base, row_cfg, opts);
      row.converged = sol.converged;
      row.total_cost = sol.total_cost;
      row.generation_cost = sol.generation_cost;
      row.total_shed_mw = sol.p_shed.sum();
      row.ggc = sol.equity.ggc;
      row.ori = sol.equity.ori;
    } catch (const Error&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.total_cost = row.generation_cost = row.total_shed_mw = row.ggc = nan;
      row.converged = false;
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace shedopt
