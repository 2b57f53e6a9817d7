#include <cmath>

#include <gtest/gtest.h>

#include "qcvar/resources.hpp"

using namespace qcvar;

namespace {

ResourceParams params(std::uint64_t d, std::uint64_t bins, double eps, std::uint64_t ancilla) {
  ResourceParams p;
  p.d = d;
  p.bins = bins;
  p.eps = eps;
  p.ancilla_budget = ancilla;
  return p;
}

}  // namespace

TEST(Resources, LogicalExamples) {
  const ResourceParams p = params(10, 1024, 1e-2, 10);
  EXPECT_EQ(data_qubits(p), 14u);
  EXPECT_EQ(logical_qubit_estimate(p), 31u);
  EXPECT_EQ(logical_qubit_estimate(params(1, 2, 0.5, 0)), 2u);
  EXPECT_EQ(logical_qubit_estimate(params(1, 1, 1.0, 0)), 0u);
}

TEST(Resources, CeilLog2ExactAtPowersOfTwo) {
  for (std::uint64_t k = 0; k < 40; ++k) {
    const std::uint64_t x = std::uint64_t{1} << k;
    EXPECT_EQ(ceil_log2(x), k);
    if (k >= 1) {
      EXPECT_EQ(ceil_log2(x + 1), k + 1);
    }
    EXPECT_EQ(ceil_log2_inverse(std::ldexp(1.0, -static_cast<int>(k))), k);
  }
  EXPECT_EQ(ceil_log2_inverse(1e-3), 10u);
  EXPECT_EQ(ceil_log2_inverse(0.1), 4u);
}

TEST(Resources, DoublingBinsAddsOneDataQubit) {
  for (std::uint64_t d : {1u, 3u, 10u})
    for (std::uint64_t b = 1; b <= 4096; b *= 2)
      EXPECT_EQ(data_qubits(params(d, 2 * b, 0.01, 10)), data_qubits(params(d, b, 0.01, 10)) + 1) << d << " " << b;
}

TEST(Resources, PhysicalExamples) {
  ResourceParams p;
  p.code_distance = 30;
  p.layout_alpha = 1.1;
  EXPECT_NEAR(physical_qubit_estimate(25, p), 24750.0, 1e-9);
  p.code_distance = 1;
  EXPECT_DOUBLE_EQ(physical_qubit_estimate(31, p), 1.1 * 31);
}

TEST(Resources, MonotoneInEveryParameter) {
  const ResourceParams base = params(10, 1024, 1e-2, 10);
  auto logical = [](ResourceParams p) { return logical_qubit_estimate(p); };
  auto physical = [](ResourceParams p) { return physical_qubit_estimate(logical_qubit_estimate(p), p); };
  for (int step = 1; step <= 20; ++step) {
    ResourceParams a = base, b = base;
    a.d = base.d * step;
    b.d = base.d * (step + 1);
    EXPECT_LE(logical(a), logical(b));
    a = b = base;
    a.bins = base.bins + 37u * step;
    b.bins = base.bins + 37u * (step + 1);
    EXPECT_LE(logical(a), logical(b));
    a = b = base;
    a.eps = 1.0 / (step + 1);  // smaller eps is a larger parameter 1/eps
    b.eps = 1.0 / (step + 2);
    EXPECT_LE(logical(a), logical(b));
    a = b = base;
    a.ancilla_budget = step;
    b.ancilla_budget = step + 1;
    EXPECT_LT(logical(a), logical(b));
    a = b = base;
    a.code_distance = step;
    b.code_distance = step + 1;
    EXPECT_LT(physical(a), physical(b));
    a = b = base;
    a.layout_alpha = 0.5 * step;
    b.layout_alpha = 0.5 * (step + 1);
    EXPECT_LT(physical(a), physical(b));
  }
}

TEST(Resources, RejectsInvalidParameters) {
  EXPECT_THROW(logical_qubit_estimate(params(0, 1024, 0.01, 10)), InvalidParameter);
  EXPECT_THROW(logical_qubit_estimate(params(10, 1024, 0.0, 10)), InvalidParameter);
  EXPECT_THROW(logical_qubit_estimate(params(10, 1024, 2.0, 10)), InvalidParameter);
  ResourceParams p;
  p.code_distance = 0;
  EXPECT_THROW(physical_qubit_estimate(10, p), InvalidParameter);
}
