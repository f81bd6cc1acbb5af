#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <random>

#include "shedopt/ip_solver.hpp"
#include "shedopt/opf_problem.hpp"
#include "shedopt/scenario.hpp"
#include "support/cases.hpp"
#include "support/fd.hpp"
#include "support/newton_pf.hpp"

using namespace shedopt;

namespace {

std::shared_ptr<const NetworkCase> doubled_case14_g1_tripped() {
  NetworkCase c = testcases::case14();
  for (auto& b : c.buses) b.p_demand *= 2.0;
  c.generators[0].in_service = false;
  return std::make_shared<const NetworkCase>(std::move(c));
}

// case14 variant with flow limits and a phase shift so every constraint
// family shows up in the derivative sweep
std::shared_ptr<const NetworkCase> spicy_case14() {
  NetworkCase c = testcases::case14();
  for (auto& b : c.buses) b.p_demand *= 2.0;
  c.branches[0].rate = 120.0;
  c.branches[5].rate = 60.0;
  c.branches[9].shift = 0.04;
  return std::make_shared<const NetworkCase>(std::move(c));
}

Eigen::VectorXd random_interior_point(const NlpProblem& prob,
                                      std::mt19937& rng) {
  const int n = prob.num_vars();
  Eigen::VectorXd lo(n), hi(n);
  prob.bounds(lo, hi);
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  std::uniform_real_distribution<double> open(-0.4, 0.4);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    const bool bl = std::isfinite(lo[i]), bh = std::isfinite(hi[i]);
    if (lo[i] == hi[i])
      x[i] = lo[i];
    else if (bl && bh)
      x[i] = lo[i] + frac(rng) * (hi[i] - lo[i]);
    else if (bl)
      x[i] = lo[i] + frac(rng);
    else if (bh)
      x[i] = hi[i] - frac(rng);
    else
      x[i] = open(rng);
  }
  return x;
}

}  // namespace

TEST_CASE("variable layout matches the study dimensions") {
  SheddingProblem prob(doubled_case14_g1_tripped(), 1.0, 500000.0);
  const VariableLayout& lay = prob.layout();
  CHECK(lay.n_bus == 14);
  CHECK(lay.n_gen == 4);
  CHECK(lay.n_load == 11);
  CHECK(lay.n_pairs == 55);
  CHECK(lay.total() == 157);
  CHECK(prob.num_eq() == 28 + 55);
  CHECK(prob.num_ineq() == 1);

  // the reference angle is pinned by equal bounds at zero
  Eigen::VectorXd lo, hi;
  prob.bounds(lo, hi);
  CHECK(lo[lay.theta_start()] == 0.0);
  CHECK(hi[lay.theta_start()] == 0.0);
}

TEST_CASE("shed bounds equal the scaled demand") {
  NetworkCase c = testcases::case14();
  for (auto& b : c.buses) b.p_demand *= 2.0;
  SheddingProblem prob(std::make_shared<const NetworkCase>(std::move(c)), 1.0,
                       500000.0);
  Eigen::VectorXd lo, hi;
  prob.bounds(lo, hi);
  // bus 3 is the second load bus in ordinal order (bus 2 is first)
  const auto& loads = prob.load_ordinals();
  REQUIRE(loads[1] == 2);
  const int col = prob.layout().p_shed_start() + 1;
  CHECK(lo[col] == 0.0);
  CHECK_THAT(from_pu(hi[col], 100.0), Catch::Matchers::WithinAbs(188.4, 1e-12));
}

TEST_CASE("assembly rejects broken scenarios") {
  SECTION("disconnected network") {
    NetworkCase c = testcases::five_bus();
    for (auto& br : c.branches)
      if (br.from_bus == 5 || br.to_bus == 5) br.in_service = false;
    CHECK_THROWS_AS(SheddingProblem(
                        std::make_shared<const NetworkCase>(std::move(c)), 1.0,
                        500000.0),
                    TopologyError);
  }
  SECTION("no active generator") {
    NetworkCase c = testcases::five_bus();
    for (auto& g : c.generators) g.in_service = false;
    CHECK_THROWS_AS(SheddingProblem(
                        std::make_shared<const NetworkCase>(std::move(c)), 1.0,
                        500000.0),
                    ScenarioError);
  }
  SECTION("negative beta") {
    CHECK_THROWS_AS(
        SheddingProblem(std::make_shared<const NetworkCase>(testcases::five_bus()),
                        -0.5, 500000.0),
        DomainError);
  }
}

TEST_CASE("power balance residuals: trivial cases") {
  SECTION("zero admittance network") {
    AdmittanceMatrix y;
    y.n = 3;
    y.g = Eigen::MatrixXd::Zero(3, 3);
    y.b = Eigen::MatrixXd::Zero(3, 3);
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(3);
    const Eigen::VectorXd inj = Eigen::VectorXd::Zero(3);
    const auto [rp, rq] = eval_power_balance(theta, v, inj, inj, y);
    CHECK(rp.isZero(0.0));
    CHECK(rq.isZero(0.0));
  }
  SECTION("two-bus reactance, known transfer") {
    const NetworkCase c = testcases::two_bus();
    const AdmittanceMatrix y = build_ybus(c);
    Eigen::VectorXd theta(2), v(2);
    theta << 0.0, -0.1;
    v << 1.0, 1.0;
    // lossless line: P1 = sin(0.1)/0.1 / x ... with x = 0.1 pu
    const double p1 = std::sin(0.1) / 0.1;
    Eigen::VectorXd p_inj(2), q_inj(2);
    p_inj << p1, -p1;
    q_inj << (1.0 - std::cos(0.1)) / 0.1, (1.0 - std::cos(0.1)) / 0.1;
    const auto [rp, rq] = eval_power_balance(theta, v, p_inj, q_inj, y);
    CHECK(rp.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(rq.lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("power balance agrees with the Newton power-flow oracle") {
  const NetworkCase c = testcases::case14();
  // arbitrary but feasible dispatch: G1 picks up the slack
  const std::vector<double> setpoints = {0.0, 40.0, 60.0, 40.0, 50.0};
  const oracle::PfResult pf = oracle::newton_power_flow(c, setpoints, 1.02);
  REQUIRE(pf.converged);

  const AdmittanceMatrix y = build_ybus(c);
  const auto [rp, rq] =
      eval_power_balance(pf.theta, pf.v, pf.p_inj, pf.q_inj, y);
  CHECK(rp.lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(rq.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("branch flows: trivial and hand-computed values") {
  SECTION("equal voltages, no charging: zero flow") {
    const NetworkCase c = testcases::two_bus();
    BusIndex idx(c);
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(2);
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(2);
    const auto [sf, st] = eval_branch_flow(theta, v, c.branches[0], idx);
    CHECK(sf < 1e-24);
    CHECK(st < 1e-24);
  }
  SECTION("lossless line at a known angle") {
    const NetworkCase c = testcases::two_bus();
    BusIndex idx(c);
    Eigen::VectorXd theta(2), v(2);
    theta << 0.12, 0.0;
    v << 1.0, 1.0;
    const double p = std::sin(0.12) / 0.1;
    const double q = (1.0 - std::cos(0.12)) / 0.1;
    const auto [sf, st] = eval_branch_flow(theta, v, c.branches[0], idx);
    CHECK_THAT(sf, Catch::Matchers::WithinRel(p * p + q * q, 1e-12));
    CHECK_THAT(st, Catch::Matchers::WithinRel(p * p + q * q, 1e-12));
  }
}

TEST_CASE("branch flows match the complex reference at a solved state") {
  const NetworkCase c = testcases::case14();
  const std::vector<double> setpoints = {0.0, 40.0, 60.0, 40.0, 50.0};
  const oracle::PfResult pf = oracle::newton_power_flow(c, setpoints, 1.02);
  REQUIRE(pf.converged);
  BusIndex idx(c);
  for (const auto& br : c.branches) {
    const auto [sf, st] = eval_branch_flow(pf.theta, pf.v, br, idx);
    const auto [rf, rt] = oracle::branch_flow_reference(c, br, pf.theta, pf.v);
    CHECK_THAT(sf, Catch::Matchers::WithinAbs(rf, 1e-8));
    CHECK_THAT(st, Catch::Matchers::WithinAbs(rt, 1e-8));
  }
}

TEST_CASE("objective: constant, penalty, and derivative structure") {
  SheddingProblem prob(doubled_case14_g1_tripped(), 1.0, 500000.0);
  const VariableLayout& lay = prob.layout();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.total());
  x.segment(lay.v_start(), lay.n_bus).setOnes();

  // all P_g = 0, all shed = 0: only constant cost terms, all zero on case14
  CHECK(prob.objective(x) == 0.0);

  // one MW of shed at the study penalty
  x[lay.p_shed_start()] = to_pu(1.0, 100.0);
  CHECK_THAT(prob.objective(x), Catch::Matchers::WithinRel(500000.0, 1e-12));
}

TEST_CASE("budget row evaluates to zero at zero shed") {
  SheddingProblem prob(doubled_case14_g1_tripped(), 0.3, 500000.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prob.layout().total());
  x.segment(prob.layout().v_start(), prob.layout().n_bus).setOnes();
  const Eigen::VectorXd ci = prob.eval_ineq(x);
  REQUIRE(ci.size() == 1);
  CHECK(ci[0] == 0.0);
}

TEST_CASE("gradients match central finite differences at random points") {
  SheddingProblem prob(spicy_case14(), 0.6, 500000.0);
  std::mt19937 rng(2024);

  double worst_obj = 0.0, worst_eq = 0.0, worst_ineq = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_interior_point(prob, rng);

    const Eigen::VectorXd g = prob.objective_gradient(x);
    const Eigen::VectorXd g_fd = fd::gradient(
        [&](const Eigen::VectorXd& p) { return prob.objective(p); }, x);
    worst_obj = std::max(worst_obj, fd::max_rel_error(g, g_fd));

    const Eigen::MatrixXd je = prob.eq_jacobian(x);
    const Eigen::MatrixXd je_fd = fd::jacobian(
        [&](const Eigen::VectorXd& p) { return prob.eval_eq(p); }, x);
    worst_eq = std::max(worst_eq, fd::max_rel_error(je, je_fd));

    const Eigen::MatrixXd ji = prob.ineq_jacobian(x);
    const Eigen::MatrixXd ji_fd = fd::jacobian(
        [&](const Eigen::VectorXd& p) { return prob.eval_ineq(p); }, x);
    worst_ineq = std::max(worst_ineq, fd::max_rel_error(ji, ji_fd));
  }
  CHECK(worst_obj <= 1e-6);
  CHECK(worst_eq <= 1e-6);
  CHECK(worst_ineq <= 1e-6);
}

TEST_CASE("Lagrangian Hessian matches differentiated gradients") {
  SheddingProblem prob(spicy_case14(), 0.6, 500000.0);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> mult(-2.0, 2.0);

  for (int trial = 0; trial < 3; ++trial) {
    const Eigen::VectorXd x = random_interior_point(prob, rng);
    Eigen::VectorXd y(prob.num_eq()), w(prob.num_ineq());
    for (int i = 0; i < y.size(); ++i) y[i] = mult(rng);
    for (int i = 0; i < w.size(); ++i) w[i] = mult(rng);
    const double of = 0.7;

    const Eigen::MatrixXd h = prob.lagrangian_hessian(x, of, y, w);
    CHECK((h - h.transpose()).lpNorm<Eigen::Infinity>() < 1e-10);

    auto lagr_grad = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
      Eigen::VectorXd g = of * prob.objective_gradient(p);
      g += prob.eq_jacobian(p).transpose() * y;
      g += prob.ineq_jacobian(p).transpose() * w;
      return g;
    };
    const Eigen::MatrixXd h_fd = fd::jacobian(lagr_grad, x);
    CHECK(fd::max_rel_error(h, h_fd) < 5e-6);
  }
}

TEST_CASE("evaluations are finite anywhere within bounds") {
  SheddingProblem prob(spicy_case14(), 0.2, 500000.0);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd x = random_interior_point(prob, rng);
    CHECK(std::isfinite(prob.objective(x)));
    CHECK(prob.eval_eq(x).allFinite());
    CHECK(prob.eval_ineq(x).allFinite());
  }
}

TEST_CASE("jacobian sparsity pattern is constant across evaluations") {
  SheddingProblem prob(spicy_case14(), 0.6, 500000.0);
  std::mt19937 rng(31);
  const Eigen::VectorXd x1 = random_interior_point(prob, rng);
  const Eigen::VectorXd x2 = random_interior_point(prob, rng);
  const auto nonzero_mask = [](const Eigen::MatrixXd& m) -> Eigen::MatrixXi {
    return (m.array() != 0.0).cast<int>().matrix();
  };
  // structural zeros stay zero; numeric coincidences are possible but this
  // checks the fixed pattern superset
  const Eigen::MatrixXi m1 = nonzero_mask(prob.eq_jacobian(x1));
  const Eigen::MatrixXi m2 = nonzero_mask(prob.eq_jacobian(x2));
  CHECK((m1.array() == m2.array()).all());
}
