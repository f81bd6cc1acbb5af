#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "shedopt/case.hpp"
#include "shedopt/nlp.hpp"
#include "shedopt/opf_problem.hpp"
#include "shedopt/scenario.hpp"

namespace shedopt {

namespace detail {
inline std::string num(double v, int precision = 10) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}
}  // namespace detail

/// Human-readable dispatch / shed / equity summary.
inline void print_solution(std::ostream& os, const ShedSolution& sol,
                           const NetworkCase& c) {
  os << "status: " << to_string(sol.status) << " (" << sol.iterations
     << " iterations, max balance residual " << detail::num(sol.max_residual, 3)
     << " pu)\n";
  os << "\ngenerator dispatch\n";
  os << "  gen   bus       P (MW)    Q (MVAr)\n";
  for (std::size_t g = 0; g < c.generators.size(); ++g) {
    const auto& gen = c.generators[g];
    os << "  G" << std::left << std::setw(4) << (g + 1) << std::right
       << std::setw(5) << gen.at_bus;
    if (gen.in_service)
      os << std::setw(13) << detail::num(sol.p_gen[static_cast<Eigen::Index>(g)], 6)
         << std::setw(12) << detail::num(sol.q_gen[static_cast<Eigen::Index>(g)], 6)
         << "\n";
    else
      os << std::setw(13) << "out" << std::setw(12) << "-" << "\n";
  }
  os << "\nload shedding\n";
  os << "  bus    shed (MW)    demand (MW)       ORI\n";
  for (std::size_t l = 0; l < sol.load_bus_ids.size(); ++l) {
    const int bus_id = sol.load_bus_ids[l];
    double demand = 0.0;
    for (const auto& b : c.buses)
      if (b.id == bus_id) demand = b.p_demand;
    os << std::setw(5) << bus_id << std::setw(13)
       << detail::num(sol.p_shed[static_cast<Eigen::Index>(l)], 6)
       << std::setw(15) << detail::num(demand, 6) << std::setw(10)
       << detail::num(sol.equity.ori[static_cast<Eigen::Index>(l)], 4) << "\n";
  }
  os << "\ntotal shed:        " << detail::num(sol.p_shed.sum(), 8) << " MW\n";
  os << "GGC_OEI:           " << detail::num(sol.equity.ggc, 6) << "\n";
  os << "generation cost:   $" << detail::num(sol.generation_cost, 8) << "/h\n";
  os << "shed penalty cost: $" << detail::num(sol.shed_penalty_cost, 8)
     << "/h\n";
  os << "total cost:        $" << detail::num(sol.total_cost, 8) << "/h\n";
}

/// Machine-readable report mirroring ShedSolution plus the scenario and
/// solver configuration that produced it.
inline nlohmann::json solution_to_json(const ShedSolution& sol,
                                       const NetworkCase& c,
                                       const ScenarioConfig& cfg,
                                       const SolverOptions& opts) {
  nlohmann::json j;
  j["case"] = c.name;
  j["scenario"] = {{"load_p_scale", cfg.load_p_scale},
                   {"load_q_scale", cfg.load_q_scale},
                   {"tripped_gens", cfg.tripped_gens},
                   {"shed_penalty", cfg.shed_penalty}};
  if (cfg.beta)
    j["scenario"]["beta"] = *cfg.beta;
  else
    j["scenario"]["beta"] = nullptr;
  j["solver"] = {{"status", to_string(sol.status)},
                 {"iterations", sol.iterations},
                 {"feas_tol", opts.feas_tol},
                 {"opt_tol", opts.opt_tol},
                 {"max_residual_pu", sol.max_residual}};
  j["converged"] = sol.converged;
  j["v"] = std::vector<double>(sol.v.begin(), sol.v.end());
  j["theta"] = std::vector<double>(sol.theta.begin(), sol.theta.end());
  j["p_gen"] = std::vector<double>(sol.p_gen.begin(), sol.p_gen.end());
  j["q_gen"] = std::vector<double>(sol.q_gen.begin(), sol.q_gen.end());
  j["load_bus_ids"] = sol.load_bus_ids;
  j["p_shed"] = std::vector<double>(sol.p_shed.begin(), sol.p_shed.end());
  j["q_shed"] = std::vector<double>(sol.q_shed.begin(), sol.q_shed.end());
  j["generation_cost"] = sol.generation_cost;
  j["shed_penalty_cost"] = sol.shed_penalty_cost;
  j["total_cost"] = sol.total_cost;
  j["equity"] = {
      {"ori", std::vector<double>(sol.equity.ori.begin(), sol.equity.ori.end())},
      {"ori_mean", sol.equity.ori_mean},
      {"ggc", sol.equity.ggc},
      {"n_subregions", sol.equity.n_subregions}};
  return j;
}

/// Sweep summary: one row per beta.
inline void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
  os << "beta,total_cost,generation_cost,total_shed_mw,ggc,converged\n";
  for (const auto& row : sweep.rows) {
    os << detail::num(row.beta, 12) << "," << detail::num(row.total_cost, 12)
       << "," << detail::num(row.generation_cost, 12) << ","
       << detail::num(row.total_shed_mw, 12) << "," << detail::num(row.ggc, 12)
       << "," << (row.converged ? 1 : 0) << "\n";
  }
}

/// Per-bus ORI matrix: rows are load buses, one column per beta.
inline void write_ori_csv(std::ostream& os, const SweepResult& sweep) {
  os << "bus";
  for (const auto& row : sweep.rows) os << ",beta_" << detail::num(row.beta, 6);
  os << "\n";
  for (std::size_t l = 0; l < sweep.load_bus_ids.size(); ++l) {
    os << sweep.load_bus_ids[l];
    for (const auto& row : sweep.rows)
      os << "," << detail::num(row.ori[static_cast<Eigen::Index>(l)], 12);
    os << "\n";
  }
}

}  // namespace shedopt
