#pragma once

// Primal-dual interior-point method for the NlpProblem interface.
//
// Inequalities get slacks (c_I(x) + s = 0, s > 0), bounds get log barriers,
// and each iteration takes a Newton step on the perturbed KKT system reduced
// to the symmetric indefinite form
//
//   [ W + Sigma_x + dx*I   J_E^T        J_I^T      ] [dx]   [ r_x ]
//   [ J_E                  -dc*I        0          ] [dy] = [ r_E ]
//   [ J_I                  0            -diag(s/w) ] [dw]   [ r_I ]
//
// factorized with LAPACK's Bunch-Kaufman routine. The inertia of the factor
// must be (n_free, m_E + m_I, 0); when it is not, the primal block is
// regularized with an increasing diagonal shift. Steps are clipped by the
// fraction-to-boundary rule and accepted through a backtracking line search
// on an l1 exact-penalty merit function. The barrier parameter decreases
// monotonically by the centering factor once the barrier subproblem is
// solved to within 10*mu.

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shedopt/nlp.hpp"

namespace shedopt {

namespace ipd {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }
inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

/// Bunch-Kaufman factorization of a dense symmetric matrix with inertia
/// extraction.
class SymmetricFactor {
 public:
  bool factorize(const Eigen::MatrixXd& m) {
    const lapack_int n = static_cast<lapack_int>(m.rows());
    a_ = m;
    ipiv_.resize(static_cast<std::size_t>(n));
    info_ = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, a_.data(), n,
                           ipiv_.data());
    return info_ >= 0;
  }

  /// Counts eigenvalue signs of the block-diagonal factor. 1x1 pivots with
  /// magnitude below pivot_tol count as zero.
  void inertia(double pivot_tol, int& pos, int& neg, int& zero) const {
    pos = neg = zero = 0;
    const int n = static_cast<int>(a_.rows());
    for (int k = 0; k < n;) {
      if (ipiv_[static_cast<std::size_t>(k)] > 0) {
        const double d = a_(k, k);
        if (d > pivot_tol)
          ++pos;
        else if (d < -pivot_tol)
          ++neg;
        else
          ++zero;
        ++k;
      } else {
        const double d11 = a_(k, k);
        const double d22 = a_(k + 1, k + 1);
        const double d21 = a_(k + 1, k);
        const double det = d11 * d22 - d21 * d21;
        const double tr = d11 + d22;
        if (det < -pivot_tol * pivot_tol) {
          ++pos;
          ++neg;
        } else if (det > pivot_tol * pivot_tol) {
          if (tr > 0.0)
            pos += 2;
          else
            neg += 2;
        } else {
          zero += 2;
        }
        k += 2;
      }
    }
    if (info_ > 0) {
      // dsytrf reported an exactly singular pivot
      if (zero == 0) ++zero;
    }
  }

  bool solve(Eigen::VectorXd& rhs) const {
    if (info_ != 0) return false;
    const lapack_int n = static_cast<lapack_int>(a_.rows());
    lapack_int info = LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n, 1, a_.data(), n,
                                     ipiv_.data(), rhs.data(), n);
    return info == 0;
  }

 private:
  Eigen::MatrixXd a_;
  std::vector<lapack_int> ipiv_;
  lapack_int info_ = -1;
};

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& prob, const SolverOptions& opts)
      : prob_(prob), opts_(opts) {}

  SolveOutcome run(Eigen::VectorXd x0) {
    setup(std::move(x0));

    SolveOutcome out;
    out.multipliers.eq.setZero(me_);
    out.multipliers.ineq.setZero(mi_);
    out.multipliers.z_lower.setZero(n_);
    out.multipliers.z_upper.setZero(n_);

    if (!eval_at(x_, true)) return fail(out, eval_error_);

    // gradient-based objective scaling, IPOPT style
    const double gmax = grad_f_.lpNorm<Eigen::Infinity>();
    sigma_f_ = gmax > 100.0 ? 100.0 / gmax : 1.0;

    init_duals();

    int ls_failures = 0;
    for (int iter = 0; iter < opts_.max_iter; ++iter) {
      out.iterations = iter;
      if (opts_.iteration_callback) opts_.iteration_callback(iter, mu_);
      if (!eval_at(x_, true)) return fail(out, eval_error_);

      const Eigen::VectorXd rd = dual_residual();
      const double dual_inf = free_inf_norm(rd);
      const double primal_inf = primal_infeasibility();
      double comp0 = 0.0, comp_mu = 0.0;
      complementarity(comp0, comp_mu);
      const double sd = dual_scale();
      const double sc = comp_scale();

      if (opts_.print_level > 0) {
        std::clog << "ip iter " << iter << " f=" << f_unscaled_
                  << " pr=" << primal_inf << " du=" << dual_inf / sd
                  << " cmp=" << comp0 / sc << " mu=" << mu_ << "\n";
      }

      if (dual_inf / sd <= opts_.opt_tol && primal_inf <= opts_.feas_tol &&
          comp0 / sc <= opts_.comp_tol) {
        out.status = SolveStatus::converged;
        out.kkt_residuals = {primal_inf, dual_inf / sd, comp0 / sc};
        finalize(out);
        return out;
      }

      // monotone barrier update once the subproblem is solved loosely
      double e_mu = std::max({dual_inf / sd, primal_inf, comp_mu / sc});
      while (e_mu <= 10.0 * mu_ && mu_ > mu_min_) {
        mu_ = std::max(mu_min_, opts_.barrier_reduction * mu_);
        nu_ = 1.0;
        complementarity(comp0, comp_mu);
        e_mu = std::max({dual_inf / sd, primal_inf, comp_mu / sc});
      }

      if (!compute_step(iter, out)) return out;  // out filled by failure path

      if (!line_search()) {
        ++ls_failures;
        if (ls_failures >= 8) {
          out.kkt_residuals = {primal_inf, dual_inf / sd, comp0 / sc};
          return fail(out, "line search failed on 8 consecutive iterations");
        }
      } else {
        ls_failures = 0;
      }
    }

    out.iterations = opts_.max_iter;
    out.status = SolveStatus::iteration_limit;
    // report residuals at the final iterate
    if (eval_at(x_, true)) {
      const Eigen::VectorXd rd = dual_residual();
      double comp0 = 0.0, comp_mu = 0.0;
      complementarity(comp0, comp_mu);
      out.kkt_residuals = {primal_infeasibility(),
                           free_inf_norm(rd) / dual_scale(),
                           comp0 / comp_scale()};
    }
    out.message = "iteration limit reached";
    finalize(out);
    return out;
  }

 private:
  void setup(Eigen::VectorXd x0) {
    n_ = prob_.num_vars();
    me_ = prob_.num_eq();
    mi_ = prob_.num_ineq();
    lo_.resize(n_);
    hi_.resize(n_);
    prob_.bounds(lo_, hi_);

    fixed_.assign(static_cast<std::size_t>(n_), 0);
    has_lo_.assign(static_cast<std::size_t>(n_), 0);
    has_hi_.assign(static_cast<std::size_t>(n_), 0);
    free_idx_.clear();
    for (int i = 0; i < n_; ++i) {
      if (lo_[i] == hi_[i]) {
        fixed_[static_cast<std::size_t>(i)] = 1;
        continue;
      }
      free_idx_.push_back(i);
      if (std::isfinite(lo_[i])) has_lo_[static_cast<std::size_t>(i)] = 1;
      if (std::isfinite(hi_[i])) has_hi_[static_cast<std::size_t>(i)] = 1;
    }
    nf_ = static_cast<int>(free_idx_.size());

    // project the start into the strict interior
    x_ = std::move(x0);
    if (x_.size() != n_) x_.setZero(n_);
    for (int i = 0; i < n_; ++i) {
      if (fixed_[static_cast<std::size_t>(i)]) {
        x_[i] = lo_[i];
        continue;
      }
      const bool bl = has_lo_[static_cast<std::size_t>(i)];
      const bool bh = has_hi_[static_cast<std::size_t>(i)];
      if (bl && bh) {
        const double push = opts_.bound_push * (hi_[i] - lo_[i]);
        x_[i] = std::clamp(x_[i], lo_[i] + push, hi_[i] - push);
      } else if (bl) {
        x_[i] = std::max(x_[i], lo_[i] + opts_.bound_push *
                                            std::max(1.0, std::abs(lo_[i])));
      } else if (bh) {
        x_[i] = std::min(x_[i], hi_[i] - opts_.bound_push *
                                            std::max(1.0, std::abs(hi_[i])));
      }
    }

    mu_ = opts_.mu_init;
    mu_min_ = std::min(opts_.comp_tol, opts_.opt_tol) / 10.0;
    nu_ = 1.0;
    bfgs_ = Eigen::MatrixXd::Identity(nf_, nf_);
  }

  void init_duals() {
    cI_cache_ = mi_ > 0 ? prob_.eval_ineq(x_) : Eigen::VectorXd(0);
    s_.resize(mi_);
    w_.resize(mi_);
    for (int j = 0; j < mi_; ++j) {
      s_[j] = std::max(1e-3, -cI_cache_[j]);
      w_[j] = std::clamp(mu_ / s_[j], 1e-8, 1e8);
    }
    y_.setZero(me_);
    zl_.setZero(n_);
    zu_.setZero(n_);
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[static_cast<std::size_t>(i)])
        zl_[i] = std::clamp(mu_ / (x_[i] - lo_[i]), 1e-8, 1e8);
      if (has_hi_[static_cast<std::size_t>(i)])
        zu_[i] = std::clamp(mu_ / (hi_[i] - x_[i]), 1e-8, 1e8);
    }
  }

  // Evaluates functions and derivatives at x; with_derivs also refreshes
  // Jacobians and the objective gradient. Returns false on non-finite
  // values, recording a description of the offender.
  bool eval_at(const Eigen::VectorXd& x, bool with_derivs) {
    f_unscaled_ = prob_.objective(x);
    if (!std::isfinite(f_unscaled_)) {
      eval_error_ = "NaN or Inf in objective";
      return false;
    }
    cE_cache_ = me_ > 0 ? prob_.eval_eq(x) : Eigen::VectorXd(0);
    cI_cache_ = mi_ > 0 ? prob_.eval_ineq(x) : Eigen::VectorXd(0);
    for (int i = 0; i < me_; ++i)
      if (!std::isfinite(cE_cache_[i])) {
        eval_error_ = "NaN or Inf in equality constraint " + std::to_string(i);
        return false;
      }
    for (int j = 0; j < mi_; ++j)
      if (!std::isfinite(cI_cache_[j])) {
        eval_error_ =
            "NaN or Inf in inequality constraint " + std::to_string(j);
        return false;
      }
    if (with_derivs) {
      grad_f_ = prob_.objective_gradient(x);
      if (!all_finite(grad_f_)) {
        eval_error_ = "NaN or Inf in objective gradient";
        return false;
      }
      jE_ = me_ > 0 ? prob_.eq_jacobian(x) : Eigen::MatrixXd(0, n_);
      jI_ = mi_ > 0 ? prob_.ineq_jacobian(x) : Eigen::MatrixXd(0, n_);
      if (!all_finite(jE_)) {
        eval_error_ = "NaN or Inf in equality Jacobian";
        return false;
      }
      if (!all_finite(jI_)) {
        eval_error_ = "NaN or Inf in inequality Jacobian";
        return false;
      }
    }
    return true;
  }

  Eigen::VectorXd dual_residual() const {
    Eigen::VectorXd rd = sigma_f_ * grad_f_;
    if (me_ > 0) rd += jE_.transpose() * y_;
    if (mi_ > 0) rd += jI_.transpose() * w_;
    rd -= zl_;
    rd += zu_;
    return rd;
  }

  double free_inf_norm(const Eigen::VectorXd& v) const {
    double m = 0.0;
    for (int i : free_idx_) m = std::max(m, std::abs(v[i]));
    return m;
  }

  double primal_infeasibility() const {
    double p = 0.0;
    for (int i = 0; i < me_; ++i) p = std::max(p, std::abs(cE_cache_[i]));
    for (int j = 0; j < mi_; ++j) p = std::max(p, std::abs(cI_cache_[j] + s_[j]));
    return p;
  }

  void complementarity(double& comp0, double& comp_mu) const {
    comp0 = comp_mu = 0.0;
    auto take = [&](double prod) {
      comp0 = std::max(comp0, std::abs(prod));
      comp_mu = std::max(comp_mu, std::abs(prod - mu_));
    };
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) take((x_[i] - lo_[i]) * zl_[i]);
      if (has_hi_[static_cast<std::size_t>(i)]) take((hi_[i] - x_[i]) * zu_[i]);
    }
    for (int j = 0; j < mi_; ++j) take(s_[j] * w_[j]);
  }

  double dual_scale() const {
    double sum = y_.lpNorm<1>() + w_.lpNorm<1>();
    int count = me_ + mi_;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        sum += std::abs(zl_[i]);
        ++count;
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        sum += std::abs(zu_[i]);
        ++count;
      }
    }
    return std::max(100.0, sum / std::max(1, count)) / 100.0;
  }

  double comp_scale() const {
    double sum = w_.lpNorm<1>();
    int count = mi_;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        sum += std::abs(zl_[i]);
        ++count;
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        sum += std::abs(zu_[i]);
        ++count;
      }
    }
    return std::max(100.0, sum / std::max(1, count)) / 100.0;
  }

  // Builds and factorizes the reduced KKT matrix, retrying with diagonal
  // regularization until the inertia is (nf, me+mi, 0). Computes the full
  // search direction. Returns false after filling `out` on breakdown.
  bool compute_step(int iter, SolveOutcome& out) {
    Eigen::MatrixXd w_mat;
    if (prob_.has_hessian()) {
      w_mat = prob_.lagrangian_hessian(x_, sigma_f_, y_, w_);
      if (!all_finite(w_mat)) {
        fail(out, "NaN or Inf in Lagrangian Hessian");
        return false;
      }
    }

    const int dim = nf_ + me_ + mi_;
    Eigen::MatrixXd m0(dim, dim);
    Eigen::VectorXd rhs(dim);

    // primal-dual barrier gradient for the x block
    Eigen::VectorXd rx = sigma_f_ * grad_f_;
    if (me_ > 0) rx += jE_.transpose() * y_;
    if (mi_ > 0) rx += jI_.transpose() * w_;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[static_cast<std::size_t>(i)]) rx[i] -= mu_ / (x_[i] - lo_[i]);
      if (has_hi_[static_cast<std::size_t>(i)]) rx[i] += mu_ / (hi_[i] - x_[i]);
    }

    // constant blocks of the KKT matrix
    Eigen::MatrixXd h_ff =
        prob_.has_hessian() ? Eigen::MatrixXd(w_mat(free_idx_, free_idx_))
                            : bfgs_;
    for (int a = 0; a < nf_; ++a) {
      const int i = free_idx_[static_cast<std::size_t>(a)];
      if (has_lo_[static_cast<std::size_t>(i)])
        h_ff(a, a) += zl_[i] / (x_[i] - lo_[i]);
      if (has_hi_[static_cast<std::size_t>(i)])
        h_ff(a, a) += zu_[i] / (hi_[i] - x_[i]);
    }
    const Eigen::MatrixXd je_f =
        me_ > 0 ? Eigen::MatrixXd(jE_(Eigen::all, free_idx_))
                : Eigen::MatrixXd(0, nf_);
    const Eigen::MatrixXd ji_f =
        mi_ > 0 ? Eigen::MatrixXd(jI_(Eigen::all, free_idx_))
                : Eigen::MatrixXd(0, nf_);

    double delta_x = 0.0, delta_c = 0.0;
    SymmetricFactor factor;
    bool ok = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      m0.setZero();
      m0.topLeftCorner(nf_, nf_) = h_ff;
      for (int a = 0; a < nf_; ++a) m0(a, a) += delta_x;
      if (me_ > 0) {
        m0.block(nf_, 0, me_, nf_) = je_f;
        m0.block(0, nf_, nf_, me_) = je_f.transpose();
        for (int r = 0; r < me_; ++r) m0(nf_ + r, nf_ + r) = -delta_c;
      }
      if (mi_ > 0) {
        m0.block(nf_ + me_, 0, mi_, nf_) = ji_f;
        m0.block(0, nf_ + me_, nf_, mi_) = ji_f.transpose();
        for (int r = 0; r < mi_; ++r)
          m0(nf_ + me_ + r, nf_ + me_ + r) = -s_[r] / w_[r] - delta_c;
      }

      if (!factor.factorize(m0)) {
        fail(out, "symmetric factorization failed");
        return false;
      }
      int pos = 0, neg = 0, zero = 0;
      factor.inertia(opts_.regularization, pos, neg, zero);
      if (pos == nf_ && neg == me_ + mi_ && zero == 0) {
        ok = true;
        break;
      }
      if (zero > 0 && delta_c == 0.0)
        delta_c = 1e-8 * std::sqrt(std::max(mu_, 1e-10));
      if (delta_x == 0.0)
        delta_x = delta_x_last_ == 0.0 ? 1e-4
                                       : std::max(1e-20, delta_x_last_ / 3.0);
      else
        delta_x *= delta_x_last_ == 0.0 ? 100.0 : 8.0;
      if (delta_x > 1e40) break;
    }
    if (!ok) {
      fail(out,
           "KKT system singular or indefinite beyond the regularization "
           "limit at iteration " +
               std::to_string(iter));
      return false;
    }
    if (delta_x > 0.0) delta_x_last_ = delta_x;

    for (int a = 0; a < nf_; ++a)
      rhs[a] = -rx[free_idx_[static_cast<std::size_t>(a)]];
    for (int r = 0; r < me_; ++r) rhs[nf_ + r] = -cE_cache_[r];
    for (int r = 0; r < mi_; ++r)
      rhs[nf_ + me_ + r] = -cI_cache_[r] - mu_ / w_[r];

    Eigen::VectorXd sol = rhs;
    if (!factor.solve(sol)) {
      fail(out, "KKT back-substitution failed");
      return false;
    }
    // one pass of iterative refinement
    Eigen::VectorXd resid = rhs - m0 * sol;
    if (resid.lpNorm<Eigen::Infinity>() >
        1e-12 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
      Eigen::VectorXd corr = resid;
      if (factor.solve(corr)) sol += corr;
    }
    if (!all_finite(sol)) {
      fail(out, "non-finite Newton step");
      return false;
    }

    dx_.setZero(n_);
    for (int a = 0; a < nf_; ++a)
      dx_[free_idx_[static_cast<std::size_t>(a)]] = sol[a];
    dy_ = sol.segment(nf_, me_);
    dw_ = sol.segment(nf_ + me_, mi_);

    ds_.resize(mi_);
    if (mi_ > 0) ds_ = -(cI_cache_ + s_) - jI_ * dx_;

    dzl_.setZero(n_);
    dzu_.setZero(n_);
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        const double gap = x_[i] - lo_[i];
        dzl_[i] = mu_ / gap - zl_[i] - zl_[i] * dx_[i] / gap;
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        const double gap = hi_[i] - x_[i];
        dzu_[i] = mu_ / gap - zu_[i] + zu_[i] * dx_[i] / gap;
      }
    }
    return true;
  }

  double fraction_to_boundary_primal() const {
    const double tau = opts_.step_shrink;
    double alpha = 1.0;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)] && dx_[i] < 0.0)
        alpha = std::min(alpha, -tau * (x_[i] - lo_[i]) / dx_[i]);
      if (has_hi_[static_cast<std::size_t>(i)] && dx_[i] > 0.0)
        alpha = std::min(alpha, tau * (hi_[i] - x_[i]) / dx_[i]);
    }
    for (int j = 0; j < mi_; ++j)
      if (ds_[j] < 0.0) alpha = std::min(alpha, -tau * s_[j] / ds_[j]);
    return alpha;
  }

  double fraction_to_boundary_dual() const {
    const double tau = opts_.step_shrink;
    double alpha = 1.0;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)] && dzl_[i] < 0.0)
        alpha = std::min(alpha, -tau * zl_[i] / dzl_[i]);
      if (has_hi_[static_cast<std::size_t>(i)] && dzu_[i] < 0.0)
        alpha = std::min(alpha, -tau * zu_[i] / dzu_[i]);
    }
    for (int j = 0; j < mi_; ++j)
      if (dw_[j] < 0.0) alpha = std::min(alpha, -tau * w_[j] / dw_[j]);
    return alpha;
  }

  double barrier_value(const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                       double f_scaled) const {
    double phi = f_scaled;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        const double gap = x[i] - lo_[i];
        if (gap <= 0.0) return kInf;
        phi -= mu_ * std::log(gap);
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        const double gap = hi_[i] - x[i];
        if (gap <= 0.0) return kInf;
        phi -= mu_ * std::log(gap);
      }
    }
    for (int j = 0; j < mi_; ++j) {
      if (s[j] <= 0.0) return kInf;
      phi -= mu_ * std::log(s[j]);
    }
    return phi;
  }

  double constraint_l1(const Eigen::VectorXd& cE, const Eigen::VectorXd& cI,
                       const Eigen::VectorXd& s) const {
    double t = 0.0;
    for (int i = 0; i < me_; ++i) t += std::abs(cE[i]);
    for (int j = 0; j < mi_; ++j) t += std::abs(cI[j] + s[j]);
    return t;
  }

  // Backtracking l1-merit line search; updates all iterates on success.
  // Returns false when no trial point was acceptable (a desperate short
  // step is still taken to avoid stalling).
  bool line_search() {
    const double alpha_max = fraction_to_boundary_primal();
    const double alpha_z = fraction_to_boundary_dual();

    const double theta0 = constraint_l1(cE_cache_, cI_cache_, s_);
    const double phi0 = barrier_value(x_, s_, sigma_f_ * f_unscaled_);

    // directional derivative of the barrier part
    double gphi_d = sigma_f_ * grad_f_.dot(dx_);
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)])
        gphi_d -= mu_ * dx_[i] / (x_[i] - lo_[i]);
      if (has_hi_[static_cast<std::size_t>(i)])
        gphi_d += mu_ * dx_[i] / (hi_[i] - x_[i]);
    }
    for (int j = 0; j < mi_; ++j) gphi_d -= mu_ * ds_[j] / s_[j];

    if (theta0 > 1e-14) {
      const double nu_req = gphi_d / (0.9 * theta0);
      if (nu_req > nu_) nu_ = std::min(nu_req * 1.5, 1e14);
    }
    const double dir = gphi_d - nu_ * theta0;
    const double phi0_full = phi0 + nu_ * theta0;

    double alpha = alpha_max;
    Eigen::VectorXd x_t, s_t, best_x, best_s;
    double best_merit = ipd::kInf, best_alpha = -1.0;
    for (int back = 0; back < 60; ++back) {
      x_t = x_ + alpha * dx_;
      s_t = s_ + alpha * ds_;
      const double f_t = prob_.objective(x_t);
      if (std::isfinite(f_t)) {
        const Eigen::VectorXd cE_t =
            me_ > 0 ? prob_.eval_eq(x_t) : Eigen::VectorXd(0);
        const Eigen::VectorXd cI_t =
            mi_ > 0 ? prob_.eval_ineq(x_t) : Eigen::VectorXd(0);
        if (cE_t.allFinite() && cI_t.allFinite()) {
          const double phi_t = barrier_value(x_t, s_t, sigma_f_ * f_t) +
                               nu_ * constraint_l1(cE_t, cI_t, s_t);
          if (phi_t < best_merit) {
            best_merit = phi_t;
            best_alpha = alpha;
            best_x = x_t;
            best_s = s_t;
          }
          const double phi_ref =
              phi0_full + 1e-4 * alpha * std::min(dir, 0.0) +
              1e-14 * std::max(1.0, std::abs(phi0_full));
          if (phi_t <= phi_ref) {
            apply_step(alpha, alpha_z, x_t, s_t);
            return true;
          }
        }
      }
      alpha *= 0.5;
    }

    if (best_alpha < 0.0) return false;  // every trial was non-finite
    // fall back to the lowest-merit trial seen to keep moving
    apply_step(best_alpha, alpha_z, best_x, best_s);
    return false;
  }

  void apply_step(double alpha, double alpha_z, const Eigen::VectorXd& x_t,
                  const Eigen::VectorXd& s_t) {
    const Eigen::VectorXd x_old = x_;
    x_ = x_t;
    s_ = s_t;
    y_ += alpha * dy_;
    w_ += alpha_z * dw_;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) zl_[i] += alpha_z * dzl_[i];
      if (has_hi_[static_cast<std::size_t>(i)]) zu_[i] += alpha_z * dzu_[i];
    }

    // keep bound duals in a kappa-neighborhood of mu/gap
    constexpr double kSigmaGuard = 1e10;
    for (int i : free_idx_) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        const double ref = mu_ / (x_[i] - lo_[i]);
        zl_[i] = std::clamp(zl_[i], ref / kSigmaGuard, ref * kSigmaGuard);
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        const double ref = mu_ / (hi_[i] - x_[i]);
        zu_[i] = std::clamp(zu_[i], ref / kSigmaGuard, ref * kSigmaGuard);
      }
    }
    for (int j = 0; j < mi_; ++j) {
      const double ref = mu_ / s_[j];
      w_[j] = std::clamp(w_[j], ref / kSigmaGuard, ref * kSigmaGuard);
    }

    if (!prob_.has_hessian()) update_bfgs(x_old);
  }

  // Powell-damped BFGS update of the Lagrangian Hessian approximation over
  // the free variables.
  void update_bfgs(const Eigen::VectorXd& x_old) {
    Eigen::VectorXd g_new = sigma_f_ * prob_.objective_gradient(x_);
    Eigen::VectorXd g_old = sigma_f_ * prob_.objective_gradient(x_old);
    if (me_ > 0) {
      g_new += prob_.eq_jacobian(x_).transpose() * y_;
      g_old += prob_.eq_jacobian(x_old).transpose() * y_;
    }
    if (mi_ > 0) {
      g_new += prob_.ineq_jacobian(x_).transpose() * w_;
      g_old += prob_.ineq_jacobian(x_old).transpose() * w_;
    }
    Eigen::VectorXd sk(nf_), yk(nf_);
    for (int a = 0; a < nf_; ++a) {
      const int i = free_idx_[static_cast<std::size_t>(a)];
      sk[a] = x_[i] - x_old[i];
      yk[a] = g_new[i] - g_old[i];
    }
    const double ss = sk.squaredNorm();
    if (ss < 1e-20 || !sk.allFinite() || !yk.allFinite()) return;

    const Eigen::VectorXd bs = bfgs_ * sk;
    const double sbs = sk.dot(bs);
    double sy = sk.dot(yk);
    if (sy < 0.2 * sbs && sbs > 0.0) {
      const double theta = 0.8 * sbs / (sbs - sy);
      yk = theta * yk + (1.0 - theta) * bs;
      sy = sk.dot(yk);
    }
    if (sbs <= 1e-16 || sy <= 1e-16) return;
    bfgs_ += (yk * yk.transpose()) / sy - (bs * bs.transpose()) / sbs;
  }

  SolveOutcome& fail(SolveOutcome& out, const std::string& msg) {
    out.status = SolveStatus::numerical_failure;
    out.message = msg;
    finalize(out);
    return out;
  }

  void finalize(SolveOutcome& out) {
    out.x_star = x_;
    out.objective = prob_.objective(x_);
    // report multipliers for the unscaled objective
    out.multipliers.eq = y_ / sigma_f_;
    out.multipliers.ineq = w_ / sigma_f_;
    out.multipliers.z_lower = zl_ / sigma_f_;
    out.multipliers.z_upper = zu_ / sigma_f_;
  }

  const NlpProblem& prob_;
  SolverOptions opts_;

  int n_ = 0, me_ = 0, mi_ = 0, nf_ = 0;
  Eigen::VectorXd lo_, hi_;
  std::vector<char> fixed_, has_lo_, has_hi_;
  std::vector<int> free_idx_;

  Eigen::VectorXd x_, s_, y_, w_, zl_, zu_;
  Eigen::VectorXd dx_, ds_, dy_, dw_, dzl_, dzu_;
  Eigen::MatrixXd bfgs_;

  double f_unscaled_ = 0.0;
  Eigen::VectorXd grad_f_, cE_cache_, cI_cache_;
  Eigen::MatrixXd jE_, jI_;

  double sigma_f_ = 1.0;
  double mu_ = 0.1, mu_min_ = 1e-8, nu_ = 1.0;
  double delta_x_last_ = 0.0;
  std::string eval_error_;
};

}  // namespace ipd

/// Solves an NLP from a start point. x0 need not be strictly interior or
/// feasible; it is nudged inside the bounds before the first iteration.
inline SolveOutcome solve(const NlpProblem& prob, const Eigen::VectorXd& x0,
                          const SolverOptions& opts = {}) {
  ipd::InteriorPoint ip(prob, opts);
  return ip.run(x0);
}

/// Standalone KKT residual check, using the same objective scaling and
/// residual scaling rules as the solver so a converged outcome's
/// multipliers test below tolerance here.
inline KktResiduals check_kkt(const NlpProblem& prob, const Eigen::VectorXd& x,
                              const Multipliers& m) {
  const int n = prob.num_vars();
  const int me = prob.num_eq();
  const int mi = prob.num_ineq();
  Eigen::VectorXd lo(n), hi(n);
  prob.bounds(lo, hi);

  const Eigen::VectorXd g = prob.objective_gradient(x);
  const double gmax = g.lpNorm<Eigen::Infinity>();
  const double sigma = gmax > 100.0 ? 100.0 / gmax : 1.0;

  const Eigen::VectorXd cE = me > 0 ? prob.eval_eq(x) : Eigen::VectorXd(0);
  const Eigen::VectorXd cI = mi > 0 ? prob.eval_ineq(x) : Eigen::VectorXd(0);

  Eigen::VectorXd rd = sigma * g;
  if (me > 0) rd += prob.eq_jacobian(x).transpose() * (sigma * m.eq);
  if (mi > 0) rd += prob.ineq_jacobian(x).transpose() * (sigma * m.ineq);
  rd -= sigma * m.z_lower;
  rd += sigma * m.z_upper;

  KktResiduals res;
  for (int i = 0; i < me; ++i)
    res.primal = std::max(res.primal, std::abs(cE[i]));
  for (int j = 0; j < mi; ++j)
    res.primal = std::max(res.primal, std::max(0.0, cI[j]));
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(lo[i])) res.primal = std::max(res.primal, lo[i] - x[i]);
    if (std::isfinite(hi[i])) res.primal = std::max(res.primal, x[i] - hi[i]);
  }

  double dual_sum = sigma * (m.eq.lpNorm<1>() + m.ineq.lpNorm<1>());
  int dual_count = me + mi;
  double comp_sum = sigma * m.ineq.lpNorm<1>();
  int comp_count = mi;
  double comp = 0.0;
  for (int j = 0; j < mi; ++j)
    comp = std::max(comp, std::max(0.0, -cI[j]) * sigma * m.ineq[j]);
  double dual = 0.0;
  for (int i = 0; i < n; ++i) {
    if (lo[i] == hi[i]) continue;  // pinned variable: no stationarity row
    dual = std::max(dual, std::abs(rd[i]));
    if (std::isfinite(lo[i])) {
      dual_sum += sigma * std::abs(m.z_lower[i]);
      comp_sum += sigma * std::abs(m.z_lower[i]);
      ++dual_count;
      ++comp_count;
      comp = std::max(comp, (x[i] - lo[i]) * sigma * m.z_lower[i]);
    }
    if (std::isfinite(hi[i])) {
      dual_sum += sigma * std::abs(m.z_upper[i]);
      comp_sum += sigma * std::abs(m.z_upper[i]);
      ++dual_count;
      ++comp_count;
      comp = std::max(comp, (hi[i] - x[i]) * sigma * m.z_upper[i]);
    }
  }
  const double sd =
      std::max(100.0, dual_sum / std::max(1, dual_count)) / 100.0;
  const double sc =
      std::max(100.0, comp_sum / std::max(1, comp_count)) / 100.0;
  res.dual = dual / sd;
  res.complementarity = comp / sc;
  return res;
}

}  // namespace shedopt
