#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shedopt/case_json.hpp"
#include "shedopt/matpower.hpp"
#include "shedopt/report.hpp"
#include "shedopt/scenario.hpp"

namespace shedopt {

namespace clid {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NetworkCase load_case(const std::string& path) {
  const std::string text = read_file(path);
  const bool looks_json =
      path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (looks_json) return parse_json_case(text);
  // sniff: JSON content in an unconventional filename
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (ch == '{') return parse_json_case(text);
    break;
  }
  return parse_matpower_case(text);
}

inline std::vector<double> parse_beta_grid(const std::string& spec) {
  // start:step:end, inclusive of the end within rounding slack
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(std::stod(tok));
  if (parts.size() != 3)
    throw Error("--beta-grid expects start:step:end, got '" + spec + "'");
  const double start = parts[0], step = parts[1], end = parts[2];
  if (!(step > 0.0) || end < start)
    throw Error("--beta-grid expects a positive step and end >= start");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double b = start + k * step;
    if (b > end + step * 1e-9) break;
    grid.push_back(b);
  }
  return grid;
}

struct ScenarioFlags {
  double scale_p = 1.0;
  double scale_q = 1.0;
  std::vector<int> trip_gens;
  double beta = 1.0;
  bool no_equity = false;
  double penalty = 500000.0;
  double tol = 1e-6;
  int max_iter = 150;

  void attach(CLI::App* cmd) {
    cmd->add_option("--scale-p", scale_p,
                    "Multiplier on every bus real demand");
    cmd->add_option("--scale-q", scale_q,
                    "Multiplier on every bus reactive demand");
    cmd->add_option("--trip-gen", trip_gens,
                    "1-based generator indices to trip (comma separated)")
        ->delimiter(',');
    auto* beta_opt =
        cmd->add_option("--beta", beta, "Equity limit on GGC_OEI");
    cmd->add_flag("--no-equity", no_equity,
                  "Drop the equity constraint entirely")
        ->excludes(beta_opt);
    cmd->add_option("--penalty", penalty, "Load-shedding penalty, $/MWh");
    cmd->add_option("--tol", tol, "Solver convergence tolerance");
    cmd->add_option("--max-iter", max_iter, "Solver iteration limit");
  }

  ScenarioConfig scenario() const {
    ScenarioConfig cfg;
    cfg.load_p_scale = scale_p;
    cfg.load_q_scale = scale_q;
    cfg.tripped_gens = trip_gens;
    cfg.shed_penalty = penalty;
    if (no_equity)
      cfg.beta = std::nullopt;
    else
      cfg.beta = beta;
    return cfg;
  }

  SolverOptions solver() const {
    SolverOptions opts;
    opts.feas_tol = opts.opt_tol = opts.comp_tol = tol;
    opts.max_iter = max_iter;
    return opts;
  }
};

}  // namespace clid

/// Entry point shared by the binary and the test suite. Returns the process
/// exit code: 0 success, 1 usage/parse errors, 2 solver failure.
inline int run_cli(const std::vector<std::string>& args,
                   std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"equity-aware load-shedding optimization for AC networks"};
  app.require_subcommand(1);

  // solve
  auto* solve_cmd =
      app.add_subcommand("solve", "Solve one shedding scenario");
  std::string solve_case_path, solve_out_path;
  clid::ScenarioFlags solve_flags;
  solve_cmd->add_option("case", solve_case_path, "Case file (.m or .json)")
      ->required();
  solve_flags.attach(solve_cmd);
  solve_cmd->add_option("--out", solve_out_path, "Write a JSON report here");

  // sweep
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Solve across a grid of beta values");
  std::string sweep_case_path, sweep_grid_spec, sweep_csv, sweep_ori_csv;
  std::vector<double> sweep_betas;
  clid::ScenarioFlags sweep_flags;
  sweep_cmd->add_option("case", sweep_case_path, "Case file (.m or .json)")
      ->required();
  auto* grid_opt = sweep_cmd->add_option(
      "--beta-grid", sweep_grid_spec, "Beta grid as start:step:end");
  sweep_cmd
      ->add_option("--betas", sweep_betas,
                   "Explicit beta list (comma separated)")
      ->delimiter(',')
      ->excludes(grid_opt);
  sweep_flags.attach(sweep_cmd);
  sweep_cmd->add_option("--csv", sweep_csv, "Write the summary CSV here");
  sweep_cmd->add_option("--ori-csv", sweep_ori_csv,
                        "Write the per-bus ORI matrix CSV here");

  // convert
  auto* convert_cmd =
      app.add_subcommand("convert", "Convert a Matpower case to JSON");
  std::string convert_in, convert_out;
  convert_cmd->add_option("input", convert_in, "Matpower case file")
      ->required();
  convert_cmd->add_option("output", convert_out, "Output path (.json)")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (solve_cmd->parsed()) {
      const NetworkCase base = clid::load_case(solve_case_path);
      const ScenarioConfig cfg = solve_flags.scenario();
      ShedSolution sol;
      try {
        sol = solve_scenario(base, cfg, solve_flags.solver());
      } catch (const ScenarioError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
      }
      print_solution(out, sol, apply_scenario(base, cfg));
      if (!solve_out_path.empty()) {
        std::ofstream f(solve_out_path);
        if (!f) throw Error("cannot write file: " + solve_out_path);
        f << solution_to_json(sol, base, cfg, solve_flags.solver()).dump(2)
          << "\n";
      }
      return sol.converged ? 0 : 2;
    }

    if (sweep_cmd->parsed()) {
      const NetworkCase base = clid::load_case(sweep_case_path);
      std::vector<double> grid = sweep_betas;
      if (!sweep_grid_spec.empty())
        grid = clid::parse_beta_grid(sweep_grid_spec);
      if (grid.empty())
        throw Error("sweep needs --beta-grid or --betas");
      const SweepResult sweep =
          sweep_beta(base, sweep_flags.scenario(), grid, sweep_flags.solver());

      if (!sweep_csv.empty()) {
        std::ofstream f(sweep_csv);
        if (!f) throw Error("cannot write file: " + sweep_csv);
        write_sweep_csv(f, sweep);
      } else {
        write_sweep_csv(out, sweep);
      }
      std::string ori_path = sweep_ori_csv;
      if (ori_path.empty() && !sweep_csv.empty()) {
        ori_path = sweep_csv;
        const auto dot = ori_path.rfind('.');
        ori_path.insert(dot == std::string::npos ? ori_path.size() : dot,
                        "-ori");
      }
      if (!ori_path.empty()) {
        std::ofstream f(ori_path);
        if (!f) throw Error("cannot write file: " + ori_path);
        write_ori_csv(f, sweep);
      }
      const bool any_converged = std::any_of(
          sweep.rows.begin(), sweep.rows.end(),
          [](const SweepRow& r) { return r.converged; });
      return any_converged ? 0 : 2;
    }

    if (convert_cmd->parsed()) {
      const MatpowerParse parsed =
          parse_matpower_case_details(clid::read_file(convert_in));
      if (!parsed.skipped_blocks.empty()) {
        err << "error: unsupported Matpower features:";
        for (const auto& b : parsed.skipped_blocks) err << " " << b;
        err << "\n";
        return 1;
      }
      std::ofstream f(convert_out);
      if (!f) throw Error("cannot write file: " + convert_out);
      f << serialize_json(parsed.network);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace shedopt
