#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

#include "shedopt/errors.hpp"

namespace shedopt {

/// Smooth NLP in the form
///
///   min f(x)   s.t.  c_E(x) = 0,  c_I(x) <= 0,  lower <= x <= upper
///
/// Dense derivatives throughout; the target scale is a few hundred
/// variables. Evaluations must be pure functions of x so a problem can be
/// shared across concurrent solves.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_vars() const = 0;
  virtual int num_eq() const = 0;
  virtual int num_ineq() const = 0;

  /// Box bounds; +-infinity for absent bounds, lower == upper pins a
  /// variable.
  virtual void bounds(Eigen::VectorXd& lower, Eigen::VectorXd& upper) const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const = 0;

  virtual Eigen::VectorXd eval_eq(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd eq_jacobian(const Eigen::VectorXd& x) const = 0;

  virtual Eigen::VectorXd eval_ineq(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd ineq_jacobian(const Eigen::VectorXd& x) const = 0;

  /// Exact second derivatives. Problems that cannot provide them return
  /// false from has_hessian() and the solver falls back to a damped
  /// quasi-Newton approximation.
  virtual bool has_hessian() const { return false; }

  /// obj_factor * grad^2 f + sum_i y_eq[i] * grad^2 c_E,i
  ///                       + sum_j y_ineq[j] * grad^2 c_I,j
  virtual Eigen::MatrixXd lagrangian_hessian(
      const Eigen::VectorXd& /*x*/, double /*obj_factor*/,
      const Eigen::VectorXd& /*y_eq*/, const Eigen::VectorXd& /*y_ineq*/) const {
    throw DomainError("problem does not provide second derivatives");
  }
};

struct SolverOptions {
  double feas_tol = 1e-6;          // max constraint violation
  double opt_tol = 1e-6;           // max scaled dual residual
  double comp_tol = 1e-6;          // complementarity gap
  int max_iter = 150;
  double barrier_reduction = 0.1;  // centering factor applied to mu
  double step_shrink = 0.995;      // fraction-to-boundary factor
  double regularization = 1e-10;   // minimum pivot magnitude
  double mu_init = 0.1;            // initial barrier parameter
  double bound_push = 1e-4;        // interior nudge as a fraction of range
  int print_level = 0;             // 0 silent, 1 per-iteration line

  /// Observer invoked once per iteration with (iteration, mu).
  std::function<void(int, double)> iteration_callback;
};

enum class SolveStatus { converged, iteration_limit, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::iteration_limit: return "iteration-limit";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

/// Lagrange multipliers for the unscaled problem. z_lower/z_upper are
/// full-length with zeros where a variable has no finite bound.
struct Multipliers {
  Eigen::VectorXd eq;
  Eigen::VectorXd ineq;
  Eigen::VectorXd z_lower;
  Eigen::VectorXd z_upper;
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
};

struct SolveOutcome {
  Eigen::VectorXd x_star;
  Multipliers multipliers;
  SolveStatus status = SolveStatus::numerical_failure;
  int iterations = 0;
  KktResiduals kkt_residuals;
  double objective = 0.0;
  std::string message;
};

}  // namespace shedopt
