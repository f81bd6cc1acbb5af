#pragma once

#include <Eigen/Core>

#include "shedopt/case.hpp"

namespace shedopt {

/// Nodal admittance matrix Y = G + jB split into real parts, per-unit,
/// indexed by internal bus ordinal. Dense on purpose: target scale is
/// tens of buses.
struct AdmittanceMatrix {
  int n = 0;
  Eigen::MatrixXd g;
  Eigen::MatrixXd b;
};

/// Standard Ybus construction. Series admittance y = 1/(r + jx), line
/// charging split half per end, off-nominal tap and phase shift applied on
/// the from side, out-of-service branches skipped, bus shunts on the
/// diagonal.
inline AdmittanceMatrix build_ybus(const NetworkCase& c) {
  validate(c);
  BusIndex idx(c);
  const int n = idx.size();
  AdmittanceMatrix y;
  y.n = n;
  y.g = Eigen::MatrixXd::Zero(n, n);
  y.b = Eigen::MatrixXd::Zero(n, n);

  for (const auto& br : c.branches) {
    if (!br.in_service) continue;
    const int f = idx.ordinal(br.from_bus);
    const int t = idx.ordinal(br.to_bus);
    const double den = br.r * br.r + br.x * br.x;
    const double gs = br.r / den;
    const double bs = -br.x / den;
    const double bc = br.b_charging / 2.0;
    const double tau = br.tap;
    const double cs = std::cos(br.shift);
    const double sn = std::sin(br.shift);

    // y_ff = (y + j bc) / tau^2
    y.g(f, f) += gs / (tau * tau);
    y.b(f, f) += (bs + bc) / (tau * tau);
    // y_tt = y + j bc
    y.g(t, t) += gs;
    y.b(t, t) += bs + bc;
    // y_ft = -y / (tau e^{-j shift}) = -(y e^{j shift}) / tau
    y.g(f, t) += -(gs * cs - bs * sn) / tau;
    y.b(f, t) += -(gs * sn + bs * cs) / tau;
    // y_tf = -y / (tau e^{j shift}) = -(y e^{-j shift}) / tau
    y.g(t, f) += -(gs * cs + bs * sn) / tau;
    y.b(t, f) += -(bs * cs - gs * sn) / tau;
  }

  for (int i = 0; i < n; ++i) {
    y.g(i, i) += c.buses[i].shunt_g / c.base_mva;
    y.b(i, i) += c.buses[i].shunt_b / c.base_mva;
  }
  return y;
}

}  // namespace shedopt
