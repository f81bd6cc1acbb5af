#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "shedopt/case.hpp"
#include "shedopt/equity.hpp"
#include "shedopt/errors.hpp"
#include "shedopt/nlp.hpp"
#include "shedopt/ybus.hpp"

namespace shedopt {

/// Variable blocks of the shedding NLP, in order: bus angles, bus voltage
/// magnitudes, generator P, generator Q, per-load-bus shed, then the z+/z-
/// pairs of the equity linearization. Gen blocks cover in-service
/// generators only.
struct VariableLayout {
  int n_bus = 0;
  int n_gen = 0;
  int n_load = 0;
  int n_pairs = 0;

  int theta_start() const { return 0; }
  int v_start() const { return n_bus; }
  int p_gen_start() const { return 2 * n_bus; }
  int q_gen_start() const { return 2 * n_bus + n_gen; }
  int p_shed_start() const { return 2 * n_bus + 2 * n_gen; }
  int z_plus_start() const { return p_shed_start() + n_load; }
  int z_minus_start() const { return z_plus_start() + n_pairs; }
  int total() const { return 2 * n_bus + 2 * n_gen + n_load + 2 * n_pairs; }
};

/// Per-branch two-port admittance for flow evaluation, plus the squared
/// per-unit rating.
struct BranchAdmittance {
  int from = 0, to = 0;  // bus ordinals
  double gff = 0, bff = 0, gft = 0, bft = 0;
  double gtf = 0, btf = 0, gtt = 0, btt = 0;
  double rate_pu2 = 0;
};

inline BranchAdmittance make_branch_admittance(const Branch& br,
                                               const BusIndex& idx,
                                               double base_mva) {
  BranchAdmittance a;
  a.from = idx.ordinal(br.from_bus);
  a.to = idx.ordinal(br.to_bus);
  const double den = br.r * br.r + br.x * br.x;
  const double gs = br.r / den;
  const double bs = -br.x / den;
  const double bc = br.b_charging / 2.0;
  const double tau = br.tap;
  const double cs = std::cos(br.shift);
  const double sn = std::sin(br.shift);
  a.gff = gs / (tau * tau);
  a.bff = (bs + bc) / (tau * tau);
  a.gtt = gs;
  a.btt = bs + bc;
  a.gft = -(gs * cs - bs * sn) / tau;
  a.bft = -(gs * sn + bs * cs) / tau;
  a.gtf = -(gs * cs + bs * sn) / tau;
  a.btf = -(bs * cs - gs * sn) / tau;
  const double rate_pu = br.rate / base_mva;
  a.rate_pu2 = rate_pu * rate_pu;
  return a;
}

/// Polar power-flow mismatch: residual_P_i = p_inj_i - V_i sum_j V_j
/// (G_ij cos th_ij + B_ij sin th_ij) and the reactive analogue with
/// G sin - B cos.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> eval_power_balance(
    const Eigen::VectorXd& theta, const Eigen::VectorXd& v,
    const Eigen::VectorXd& p_inj, const Eigen::VectorXd& q_inj,
    const AdmittanceMatrix& y) {
  const int n = y.n;
  Eigen::VectorXd rp = p_inj, rq = q_inj;
  for (int i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (int j = 0; j < n; ++j) {
      const double g = y.g(i, j), b = y.b(i, j);
      if (g == 0.0 && b == 0.0) continue;
      const double th = theta[i] - theta[j];
      const double ct = std::cos(th), st = std::sin(th);
      pi += v[j] * (g * ct + b * st);
      qi += v[j] * (g * st - b * ct);
    }
    rp[i] -= v[i] * pi;
    rq[i] -= v[i] * qi;
  }
  return {rp, rq};
}

namespace opfd {

// Value, gradient, and Hessian of one end's complex power components over
// the local variables (th_i, th_j, v_i, v_j), where i is the metered end.
struct EndPower {
  double p = 0, q = 0;
  Eigen::Vector4d gp = Eigen::Vector4d::Zero();
  Eigen::Vector4d gq = Eigen::Vector4d::Zero();
  Eigen::Matrix4d hp = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d hq = Eigen::Matrix4d::Zero();
};

// a_self is the self conductance (for P) paired with -b_self (for Q);
// c + jd is the transfer admittance as seen from end i.
inline EndPower end_power(double g_self, double b_self, double c, double d,
                          double vi, double vj, double th) {
  EndPower e;
  const double ct = std::cos(th), st = std::sin(th);
  const double up = c * ct + d * st;    // transfer term of P
  const double dup = -c * st + d * ct;  // d(up)/d(th)
  const double uq = c * st - d * ct;    // transfer term of Q
  const double duq = c * ct + d * st;   // d(uq)/d(th)

  e.p = vi * vi * g_self + vi * vj * up;
  e.q = -vi * vi * b_self + vi * vj * uq;

  // order: th_i, th_j, v_i, v_j
  e.gp << vi * vj * dup, -vi * vj * dup, 2 * vi * g_self + vj * up, vi * up;
  e.gq << vi * vj * duq, -vi * vj * duq, -2 * vi * b_self + vj * uq, vi * uq;

  auto fill = [&](Eigen::Matrix4d& h, double u, double du, double self2) {
    h(0, 0) = -vi * vj * u;
    h(1, 1) = -vi * vj * u;
    h(0, 1) = h(1, 0) = vi * vj * u;
    h(2, 3) = h(3, 2) = u;
    h(2, 0) = h(0, 2) = vj * du;
    h(2, 1) = h(1, 2) = -vj * du;
    h(3, 0) = h(0, 3) = vi * du;
    h(3, 1) = h(1, 3) = -vi * du;
    h(2, 2) = self2;
    h(3, 3) = 0.0;
  };
  fill(e.hp, up, dup, 2 * g_self);
  fill(e.hq, uq, duq, -2 * b_self);
  return e;
}

inline EndPower from_end(const BranchAdmittance& a, const Eigen::VectorXd& th,
                         const Eigen::VectorXd& v) {
  return end_power(a.gff, a.bff, a.gft, a.bft, v[a.from], v[a.to],
                   th[a.from] - th[a.to]);
}

inline EndPower to_end(const BranchAdmittance& a, const Eigen::VectorXd& th,
                       const Eigen::VectorXd& v) {
  return end_power(a.gtt, a.btt, a.gtf, a.btf, v[a.to], v[a.from],
                   th[a.to] - th[a.from]);
}

}  // namespace opfd

/// Squared apparent power (pu^2) measured at both ends of a branch.
inline std::pair<double, double> eval_branch_flow(const Eigen::VectorXd& theta,
                                                  const Eigen::VectorXd& v,
                                                  const Branch& br,
                                                  const BusIndex& idx,
                                                  double base_mva = 100.0) {
  const BranchAdmittance a = make_branch_admittance(br, idx, base_mva);
  const auto f = opfd::from_end(a, theta, v);
  const auto t = opfd::to_end(a, theta, v);
  return {f.p * f.p + f.q * f.q, t.p * t.p + t.q * t.q};
}

struct ShedSolution {
  Eigen::VectorXd v;      // pu, per bus
  Eigen::VectorXd theta;  // rad, per bus
  Eigen::VectorXd p_gen;  // MW, per case generator (0 when out of service)
  Eigen::VectorXd q_gen;  // MVAr
  std::vector<int> load_bus_ids;
  Eigen::VectorXd p_shed;  // MW per load bus
  Eigen::VectorXd q_shed;  // MVAr per load bus, constant power factor
  double generation_cost = 0.0;
  double shed_penalty_cost = 0.0;
  double total_cost = 0.0;
  EquityReport equity;
  bool converged = false;
  int iterations = 0;
  double max_residual = 0.0;  // worst power-balance mismatch, pu
  SolveStatus status = SolveStatus::numerical_failure;
  std::string solver_message;
};

/// The equity-constrained load-shedding NLP over a fixed case, contingency
/// state, and beta. Immutable after assembly; all evaluations are pure.
class SheddingProblem final : public NlpProblem {
 public:
  SheddingProblem(std::shared_ptr<const NetworkCase> net,
                  std::optional<double> beta, double shed_penalty)
      : case_(std::move(net)), beta_(beta), shed_penalty_(shed_penalty) {
    const NetworkCase& c = *case_;
    validate(c);
    if (!is_connected(c))
      throw TopologyError("case '" + c.name + "' is not connected");
    if (beta_ && *beta_ < 0.0) throw DomainError("beta must be nonnegative");
    if (!(shed_penalty_ > 0.0))
      throw DomainError("shed penalty must be positive");

    base_ = c.base_mva;
    BusIndex idx(c);
    ybus_ = build_ybus(c);
    const int nb = static_cast<int>(c.buses.size());

    for (int gi = 0; gi < static_cast<int>(c.generators.size()); ++gi) {
      const Generator& g = c.generators[gi];
      if (!g.in_service) continue;
      gen_case_idx_.push_back(gi);
      gen_bus_ord_.push_back(idx.ordinal(g.at_bus));
      std::array<double, 3> cc{0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < g.cost_coeffs.size(); ++k)
        cc[k] = g.cost_coeffs[k];
      gen_cost_.push_back(cc);
    }
    if (gen_case_idx_.empty())
      throw ScenarioError("no in-service generator in the case");

    load_ord_ = load_bus_ordinals(c);
    bus_load_idx_.assign(static_cast<std::size_t>(nb), -1);
    load_demand_pu_.resize(static_cast<Eigen::Index>(load_ord_.size()));
    q_ratio_.resize(static_cast<Eigen::Index>(load_ord_.size()));
    for (std::size_t k = 0; k < load_ord_.size(); ++k) {
      bus_load_idx_[static_cast<std::size_t>(load_ord_[k])] =
          static_cast<int>(k);
      const Bus& b = c.buses[static_cast<std::size_t>(load_ord_[k])];
      load_demand_pu_[static_cast<Eigen::Index>(k)] = to_pu(b.p_demand, base_);
      q_ratio_[static_cast<Eigen::Index>(k)] = b.q_demand / b.p_demand;
    }
    p_load_full_.setZero(nb);
    q_load_full_.setZero(nb);
    for (int i = 0; i < nb; ++i) {
      p_load_full_[i] = to_pu(c.buses[static_cast<std::size_t>(i)].p_demand, base_);
      q_load_full_[i] = to_pu(c.buses[static_cast<std::size_t>(i)].q_demand, base_);
    }

    for (const Branch& br : c.branches) {
      if (!br.in_service || br.rate <= 0.0) continue;
      flow_branches_.push_back(make_branch_admittance(br, idx, base_));
    }

    layout_.n_bus = nb;
    layout_.n_gen = static_cast<int>(gen_case_idx_.size());
    layout_.n_load = static_cast<int>(load_ord_.size());
    if (beta_ && layout_.n_load >= 2) {
      equity_ = build_equity_linearization(load_demand_pu_, *beta_);
      layout_.n_pairs = equity_->aux_count;
    }

    for (int i = 0; i < nb; ++i)
      if (c.buses[static_cast<std::size_t>(i)].is_reference) ref_ord_ = i;

    build_bounds();
  }

  const VariableLayout& layout() const { return layout_; }
  const NetworkCase& network() const { return *case_; }
  std::shared_ptr<const NetworkCase> network_ptr() const { return case_; }
  const AdmittanceMatrix& ybus() const { return ybus_; }
  const std::vector<int>& load_ordinals() const { return load_ord_; }
  const std::vector<int>& active_generators() const { return gen_case_idx_; }
  std::optional<double> beta() const { return beta_; }
  double shed_penalty() const { return shed_penalty_; }
  double base_mva() const { return base_; }

  int num_vars() const override { return layout_.total(); }
  int num_eq() const override { return 2 * layout_.n_bus + layout_.n_pairs; }
  int num_ineq() const override {
    return 2 * static_cast<int>(flow_branches_.size()) +
           (equity_ ? 1 : 0);
  }

  void bounds(Eigen::VectorXd& lower, Eigen::VectorXd& upper) const override {
    lower = lo_;
    upper = hi_;
  }

  double objective(const Eigen::VectorXd& x) const override {
    double cost = 0.0;
    for (int g = 0; g < layout_.n_gen; ++g) {
      const double p_mw = from_pu(x[layout_.p_gen_start() + g], base_);
      const auto& cc = gen_cost_[static_cast<std::size_t>(g)];
      cost += cc[0] + cc[1] * p_mw + cc[2] * p_mw * p_mw;
    }
    for (int l = 0; l < layout_.n_load; ++l)
      cost += shed_penalty_ * from_pu(x[layout_.p_shed_start() + l], base_);
    return cost;
  }

  Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(num_vars());
    for (int gi = 0; gi < layout_.n_gen; ++gi) {
      const double p_pu = x[layout_.p_gen_start() + gi];
      const auto& cc = gen_cost_[static_cast<std::size_t>(gi)];
      g[layout_.p_gen_start() + gi] =
          cc[1] * base_ + 2.0 * cc[2] * base_ * base_ * p_pu;
    }
    for (int l = 0; l < layout_.n_load; ++l)
      g[layout_.p_shed_start() + l] = shed_penalty_ * base_;
    return g;
  }

  Eigen::VectorXd eval_eq(const Eigen::VectorXd& x) const override {
    const int nb = layout_.n_bus;
    Eigen::VectorXd out(num_eq());
    const auto theta = x.segment(layout_.theta_start(), nb);
    const auto v = x.segment(layout_.v_start(), nb);
    Eigen::VectorXd p_inj, q_inj;
    injections(x, p_inj, q_inj);
    auto [rp, rq] = eval_power_balance(theta, v, p_inj, q_inj, ybus_);
    out.segment(0, nb) = rp;
    out.segment(nb, nb) = rq;
    if (equity_) {
      const Eigen::VectorXd local = equity_local_vector(x);
      for (int p = 0; p < layout_.n_pairs; ++p)
        out[2 * nb + p] =
            equity_->coupling_rows[static_cast<std::size_t>(p)].eval(local);
    }
    return out;
  }

  Eigen::MatrixXd eq_jacobian(const Eigen::VectorXd& x) const override {
    const int nb = layout_.n_bus;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(num_eq(), num_vars());
    balance_jacobian(x, jac);
    if (equity_) {
      for (int p = 0; p < layout_.n_pairs; ++p)
        for (const auto& t :
             equity_->coupling_rows[static_cast<std::size_t>(p)].terms)
          jac(2 * nb + p, map_equity_col(t.col)) += t.coeff;
    }
    return jac;
  }

  Eigen::VectorXd eval_ineq(const Eigen::VectorXd& x) const override {
    Eigen::VectorXd out(num_ineq());
    const auto theta = x.segment(layout_.theta_start(), layout_.n_bus);
    const auto v = x.segment(layout_.v_start(), layout_.n_bus);
    int r = 0;
    for (const auto& a : flow_branches_) {
      const auto f = opfd::from_end(a, theta, v);
      const auto t = opfd::to_end(a, theta, v);
      out[r++] = f.p * f.p + f.q * f.q - a.rate_pu2;
      out[r++] = t.p * t.p + t.q * t.q - a.rate_pu2;
    }
    if (equity_) out[r++] = equity_->budget_row.eval(equity_local_vector(x));
    return out;
  }

  Eigen::MatrixXd ineq_jacobian(const Eigen::VectorXd& x) const override {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(num_ineq(), num_vars());
    const auto theta = x.segment(layout_.theta_start(), layout_.n_bus);
    const auto v = x.segment(layout_.v_start(), layout_.n_bus);
    int r = 0;
    for (const auto& a : flow_branches_) {
      const int cols[4] = {layout_.theta_start() + a.from,
                           layout_.theta_start() + a.to,
                           layout_.v_start() + a.from, layout_.v_start() + a.to};
      const auto f = opfd::from_end(a, theta, v);
      const Eigen::Vector4d gf = 2.0 * (f.p * f.gp + f.q * f.gq);
      for (int k = 0; k < 4; ++k) jac(r, cols[k]) += gf[k];
      ++r;
      // the to-end sees (th_t, th_f, v_t, v_f)
      const int cols_t[4] = {layout_.theta_start() + a.to,
                             layout_.theta_start() + a.from,
                             layout_.v_start() + a.to,
                             layout_.v_start() + a.from};
      const auto t = opfd::to_end(a, theta, v);
      const Eigen::Vector4d gt = 2.0 * (t.p * t.gp + t.q * t.gq);
      for (int k = 0; k < 4; ++k) jac(r, cols_t[k]) += gt[k];
      ++r;
    }
    if (equity_) {
      for (const auto& t : equity_->budget_row.terms)
        jac(r, map_equity_col(t.col)) += t.coeff;
    }
    return jac;
  }

  bool has_hessian() const override { return true; }

  Eigen::MatrixXd lagrangian_hessian(
      const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& y_eq,
      const Eigen::VectorXd& y_ineq) const override {
    const int nb = layout_.n_bus;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(num_vars(), num_vars());

    for (int g = 0; g < layout_.n_gen; ++g)
      h(layout_.p_gen_start() + g, layout_.p_gen_start() + g) =
          obj_factor * 2.0 * gen_cost_[static_cast<std::size_t>(g)][2] * base_ *
          base_;

    const auto theta = x.segment(layout_.theta_start(), nb);
    const auto v = x.segment(layout_.v_start(), nb);

    auto add_sym = [&h](int a, int b, double val) {
      h(a, b) += val;
      if (a != b) h(b, a) += val;
    };

    // residual_P_i = ... - P_calc_i, so weighted blocks enter negated
    for (int i = 0; i < nb; ++i) {
      const double lp = y_eq[i];
      const double lq = y_eq[nb + i];
      if (lp == 0.0 && lq == 0.0) continue;
      const int ti = layout_.theta_start() + i;
      const int vi = layout_.v_start() + i;
      for (int j = 0; j < nb; ++j) {
        const double g = ybus_.g(i, j), b = ybus_.b(i, j);
        if (g == 0.0 && b == 0.0) continue;
        if (j == i) {
          add_sym(vi, vi, -2.0 * (lp * g - lq * b));
          continue;
        }
        const int tj = layout_.theta_start() + j;
        const int vj = layout_.v_start() + j;
        const double th = theta[i] - theta[j];
        const double ct = std::cos(th), st = std::sin(th);
        const double up = g * ct + b * st, dup = -g * st + b * ct;
        const double uq = g * st - b * ct, duq = g * ct + b * st;
        const double wu = lp * up + lq * uq;
        const double wdu = lp * dup + lq * duq;
        const double vij = v[i] * v[j];
        // -lambda * hessian(T), T = v_i v_j (c cos + d sin)
        add_sym(ti, ti, vij * wu);
        add_sym(tj, tj, vij * wu);
        add_sym(ti, tj, -vij * wu);
        add_sym(vi, vj, -wu);
        add_sym(vi, ti, -v[j] * wdu);
        add_sym(vi, tj, v[j] * wdu);
        add_sym(vj, ti, -v[i] * wdu);
        add_sym(vj, tj, v[i] * wdu);
      }
    }

    int r = 0;
    for (const auto& a : flow_branches_) {
      for (int side = 0; side < 2; ++side, ++r) {
        const double wk = y_ineq[r];
        if (wk == 0.0) continue;
        const auto e = side == 0 ? opfd::from_end(a, theta, v)
                                 : opfd::to_end(a, theta, v);
        const int i = side == 0 ? a.from : a.to;
        const int j = side == 0 ? a.to : a.from;
        const int cols[4] = {layout_.theta_start() + i, layout_.theta_start() + j,
                             layout_.v_start() + i, layout_.v_start() + j};
        const Eigen::Matrix4d hf =
            2.0 * (e.gp * e.gp.transpose() + e.p * e.hp +
                   e.gq * e.gq.transpose() + e.q * e.hq);
        for (int ar = 0; ar < 4; ++ar)
          for (int ac = 0; ac < 4; ++ac) h(cols[ar], cols[ac]) += wk * hf(ar, ac);
      }
    }
    return h;
  }

  /// Worst power-balance residual (pu) at a point.
  double max_balance_residual(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd ce = eval_eq(x);
    return ce.segment(0, 2 * layout_.n_bus).lpNorm<Eigen::Infinity>();
  }

 private:
  void build_bounds() {
    const NetworkCase& c = *case_;
    const int n = num_vars();
    lo_.setConstant(n, -std::numeric_limits<double>::infinity());
    hi_.setConstant(n, std::numeric_limits<double>::infinity());
    lo_[layout_.theta_start() + ref_ord_] = 0.0;
    hi_[layout_.theta_start() + ref_ord_] = 0.0;
    for (int i = 0; i < layout_.n_bus; ++i) {
      lo_[layout_.v_start() + i] = c.buses[static_cast<std::size_t>(i)].v_min;
      hi_[layout_.v_start() + i] = c.buses[static_cast<std::size_t>(i)].v_max;
    }
    for (int g = 0; g < layout_.n_gen; ++g) {
      const Generator& gen =
          c.generators[static_cast<std::size_t>(gen_case_idx_[static_cast<std::size_t>(g)])];
      lo_[layout_.p_gen_start() + g] = to_pu(gen.p_min, base_);
      hi_[layout_.p_gen_start() + g] = to_pu(gen.p_max, base_);
      lo_[layout_.q_gen_start() + g] = to_pu(gen.q_min, base_);
      hi_[layout_.q_gen_start() + g] = to_pu(gen.q_max, base_);
    }
    for (int l = 0; l < layout_.n_load; ++l) {
      lo_[layout_.p_shed_start() + l] = 0.0;
      hi_[layout_.p_shed_start() + l] = load_demand_pu_[l];
    }
    for (int p = 0; p < 2 * layout_.n_pairs; ++p)
      lo_[layout_.z_plus_start() + p] = 0.0;
  }

  void injections(const Eigen::VectorXd& x, Eigen::VectorXd& p_inj,
                  Eigen::VectorXd& q_inj) const {
    const int nb = layout_.n_bus;
    p_inj = -p_load_full_;
    q_inj = -q_load_full_;
    for (int g = 0; g < layout_.n_gen; ++g) {
      const int bus = gen_bus_ord_[static_cast<std::size_t>(g)];
      p_inj[bus] += x[layout_.p_gen_start() + g];
      q_inj[bus] += x[layout_.q_gen_start() + g];
    }
    for (int l = 0; l < layout_.n_load; ++l) {
      const int bus = load_ord_[static_cast<std::size_t>(l)];
      p_inj[bus] += x[layout_.p_shed_start() + l];
      q_inj[bus] += q_ratio_[l] * x[layout_.p_shed_start() + l];
    }
    (void)nb;
  }

  // Jacobian of the 2*nb power-balance rows.
  void balance_jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    const int nb = layout_.n_bus;
    const auto theta = x.segment(layout_.theta_start(), nb);
    const auto v = x.segment(layout_.v_start(), nb);

    for (int i = 0; i < nb; ++i) {
      double p_calc = 0.0, q_calc = 0.0;
      for (int j = 0; j < nb; ++j) {
        const double g = ybus_.g(i, j), b = ybus_.b(i, j);
        if (g == 0.0 && b == 0.0) continue;
        const double th = theta[i] - theta[j];
        const double ct = std::cos(th), st = std::sin(th);
        const double up = g * ct + b * st;
        const double uq = g * st - b * ct;
        p_calc += v[i] * v[j] * up;
        q_calc += v[i] * v[j] * uq;
        if (j != i) {
          // residual rows carry -dP_calc and -dQ_calc
          jac(i, layout_.theta_start() + j) = -v[i] * v[j] * uq;
          jac(i, layout_.v_start() + j) = -v[i] * up;
          jac(nb + i, layout_.theta_start() + j) = v[i] * v[j] * up;
          jac(nb + i, layout_.v_start() + j) = -v[i] * uq;
        }
      }
      const double gii = ybus_.g(i, i), bii = ybus_.b(i, i);
      jac(i, layout_.theta_start() + i) = q_calc + bii * v[i] * v[i];
      jac(i, layout_.v_start() + i) = -(p_calc / v[i] + gii * v[i]);
      jac(nb + i, layout_.theta_start() + i) = -(p_calc - gii * v[i] * v[i]);
      jac(nb + i, layout_.v_start() + i) = -(q_calc / v[i] - bii * v[i]);
    }

    for (int g = 0; g < layout_.n_gen; ++g) {
      const int bus = gen_bus_ord_[static_cast<std::size_t>(g)];
      jac(bus, layout_.p_gen_start() + g) = 1.0;
      jac(nb + bus, layout_.q_gen_start() + g) = 1.0;
    }
    for (int l = 0; l < layout_.n_load; ++l) {
      const int bus = load_ord_[static_cast<std::size_t>(l)];
      jac(bus, layout_.p_shed_start() + l) = 1.0;
      jac(nb + bus, layout_.p_shed_start() + l) = q_ratio_[l];
    }
  }

  // Gathers [p_shed | z+ | z-] into the equity module's local column space.
  Eigen::VectorXd equity_local_vector(const Eigen::VectorXd& x) const {
    Eigen::VectorXd local(layout_.n_load + 2 * layout_.n_pairs);
    local.segment(0, layout_.n_load) =
        x.segment(layout_.p_shed_start(), layout_.n_load);
    local.segment(layout_.n_load, 2 * layout_.n_pairs) =
        x.segment(layout_.z_plus_start(), 2 * layout_.n_pairs);
    return local;
  }

  int map_equity_col(int local_col) const {
    if (local_col < layout_.n_load) return layout_.p_shed_start() + local_col;
    return layout_.z_plus_start() + (local_col - layout_.n_load);
  }

  std::shared_ptr<const NetworkCase> case_;
  std::optional<double> beta_;
  double shed_penalty_ = 0.0;
  double base_ = 100.0;

  VariableLayout layout_;
  AdmittanceMatrix ybus_;
  std::vector<int> load_ord_;
  std::vector<int> bus_load_idx_;
  Eigen::VectorXd load_demand_pu_;
  Eigen::VectorXd q_ratio_;
  Eigen::VectorXd p_load_full_, q_load_full_;
  std::vector<int> gen_case_idx_;
  std::vector<int> gen_bus_ord_;
  std::vector<std::array<double, 3>> gen_cost_;
  std::vector<BranchAdmittance> flow_branches_;
  std::optional<EquityLinearization> equity_;
  int ref_ord_ = 0;
  Eigen::VectorXd lo_, hi_;
};

/// Builds the NLP for a case. A disengaged beta omits the equity rows
/// entirely (the "no equity constraint" sentinel).
inline SheddingProblem assemble(std::shared_ptr<const NetworkCase> net,
                                std::optional<double> beta,
                                double shed_penalty) {
  return SheddingProblem(std::move(net), beta, shed_penalty);
}

/// Expands a solver outcome into engineering units and the equity report.
inline ShedSolution extract_solution(const SheddingProblem& prob,
                                     const SolveOutcome& out) {
  const NetworkCase& c = prob.network();
  const VariableLayout& lay = prob.layout();
  const double base = prob.base_mva();
  const Eigen::VectorXd& x = out.x_star;

  ShedSolution sol;
  sol.theta = x.segment(lay.theta_start(), lay.n_bus);
  sol.v = x.segment(lay.v_start(), lay.n_bus);
  sol.p_gen.setZero(static_cast<Eigen::Index>(c.generators.size()));
  sol.q_gen.setZero(static_cast<Eigen::Index>(c.generators.size()));
  const auto& active = prob.active_generators();
  for (std::size_t g = 0; g < active.size(); ++g) {
    sol.p_gen[active[g]] =
        from_pu(x[lay.p_gen_start() + static_cast<int>(g)], base);
    sol.q_gen[active[g]] =
        from_pu(x[lay.q_gen_start() + static_cast<int>(g)], base);
  }

  const auto& loads = prob.load_ordinals();
  sol.load_bus_ids.reserve(loads.size());
  sol.p_shed.resize(static_cast<Eigen::Index>(loads.size()));
  sol.q_shed.resize(static_cast<Eigen::Index>(loads.size()));
  for (std::size_t l = 0; l < loads.size(); ++l) {
    const Bus& b = c.buses[static_cast<std::size_t>(loads[l])];
    sol.load_bus_ids.push_back(b.id);
    const double shed_mw =
        std::max(0.0, from_pu(x[lay.p_shed_start() + static_cast<int>(l)], base));
    sol.p_shed[static_cast<Eigen::Index>(l)] = shed_mw;
    sol.q_shed[static_cast<Eigen::Index>(l)] =
        shed_mw * (b.q_demand / b.p_demand);
  }

  for (std::size_t gi = 0; gi < c.generators.size(); ++gi)
    if (c.generators[gi].in_service)
      sol.generation_cost +=
          generation_cost(c.generators[gi], sol.p_gen[static_cast<Eigen::Index>(gi)]);
  sol.shed_penalty_cost = prob.shed_penalty() * sol.p_shed.sum();
  sol.total_cost = sol.generation_cost + sol.shed_penalty_cost;

  sol.equity = equity_report(sol.p_shed, c);
  sol.converged = out.status == SolveStatus::converged;
  sol.status = out.status;
  sol.solver_message = out.message;
  sol.iterations = out.iterations;
  sol.max_residual = prob.max_balance_residual(x);
  return sol;
}

}  // namespace shedopt
