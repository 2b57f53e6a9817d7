#pragma once

// Logical and surface-code physical qubit estimates for QAE-based CVaR
// estimation:
//   n_data     = ceil(log2(d B))
//   n_logical  = n_data + ceil(log2(1 / eps)) + ancilla_budget
//   n_physical = layout_alpha * n_logical * d_code^2

#include <cmath>
#include <cstdint>

#include "qcvar/errors.hpp"

namespace qcvar {

struct ResourceParams {
  std::uint64_t d = 10;
  std::uint64_t bins = 1024;
  double eps = 1e-2;
  std::uint64_t code_distance = 30;
  double layout_alpha = 1.1;
  std::uint64_t ancilla_budget = 10;

  void validate() const {
    detail::require(d >= 1 && bins >= 1, "resources: d and bins must be positive");
    detail::require(eps > 0.0 && eps <= 1.0, "resources: eps must lie in (0, 1]");
    detail::require(code_distance >= 1, "resources: code distance must be positive");
    detail::require(layout_alpha > 0.0, "resources: layout_alpha must be positive");
  }
};

/// Smallest k with 2^k >= x (x >= 1); exact for powers of two.
inline std::uint64_t ceil_log2(std::uint64_t x) {
  std::uint64_t k = 0;
  while (k < 63 && (std::uint64_t{1} << k) < x) ++k;
  return k;
}

inline std::uint64_t ceil_log2_inverse(double eps) {
  const double x = 1.0 / eps;
  std::uint64_t k = 0;
  while (std::ldexp(1.0, static_cast<int>(k)) < x * (1.0 - 1e-12)) ++k;
  return k;
}

inline std::uint64_t data_qubits(const ResourceParams& p) {
  p.validate();
  return ceil_log2(p.d * p.bins);
}

inline std::uint64_t logical_qubit_estimate(const ResourceParams& p) {
  return data_qubits(p) + ceil_log2_inverse(p.eps) + p.ancilla_budget;
}

inline double physical_qubit_estimate(std::uint64_t n_logical, const ResourceParams& p) {
  p.validate();
  const auto dc = static_cast<double>(p.code_distance);
  return p.layout_alpha * static_cast<double>(n_logical) * dc * dc;
}

}  // namespace qcvar
