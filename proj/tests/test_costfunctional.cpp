#include <gtest/gtest.h>

#include "pdeopt/costfunctional.hpp"
#include "pdeopt/optimize.hpp"

using namespace pdeopt;

namespace {
CostTerm constant_term(std::string name, double v, double w) {
  return {std::move(name), [v](std::span<const double>) { return v; }, nullptr, w};
}
}  // namespace

TEST(Scaling, Definition) {
  const Vector x0{0.0};
  CostFunctional a(1, {constant_term("a", 2.0, 1.0), constant_term("b", 0.5, 1.0)});
  auto r = a.compute_scaling(x0);
  EXPECT_EQ(r.factors, (Vector{0.5, 2.0}));
  EXPECT_TRUE(r.warnings.empty());
  CostFunctional b(1, {constant_term("a", 2.0, 10.0), constant_term("b", 0.5, 1.0)});
  EXPECT_EQ(compute_scaling(b, x0).factors, (Vector{5.0, 2.0}));
}

TEST(Scaling, DegenerateTermWarns) {
  CostFunctional c(1, {constant_term("zero", 0.0, 3.0), constant_term("b", -4.0, 2.0)});
  auto r = c.compute_scaling(Vector{0.0});
  EXPECT_EQ(r.factors[0], 1.0);
  EXPECT_EQ(r.factors[1], 0.5);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("zero"), std::string::npos);
  EXPECT_THROW(c.compute_scaling(Vector{0.0}), Error);
  EXPECT_THROW(CostFunctional(1, {constant_term("bad", 1.0, 0.0)}), InvalidArgument);
}

TEST(Scaling, FrozenAndArgminInvariant) {
  // J(q) = (q - 3)^2 + 1 scaled to weight 7 keeps its minimizer.
  CostTerm t{"quad", [](std::span<const double> q) { return (q[0] - 3) * (q[0] - 3) + 1.0; },
             [](std::span<const double> q) { return Vector{2 * (q[0] - 3)}; }, 7.0};
  CostFunctional c(1, {t});
  const Vector x0{1.0};
  c.compute_scaling(x0);
  EXPECT_NEAR(std::abs(c.factors()[0] * c.term_value(0, x0)), 7.0, 7e-14);
  optimize::Config cfg;
  cfg.rtol = 1e-10;
  auto res = optimize::minimize(c, x0, cfg);
  EXPECT_NEAR(res.q[0], 3.0, 1e-8);
  EXPECT_EQ(c.factors()[0], 7.0 / 5.0);
  EXPECT_EQ(c.gradient(Vector{3.0})[0], 0.0);
}
