#include "aphase/errors.hpp"
#include "aphase/flow.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace aphase;

namespace {
constexpr Tolerance kTight{1e-11, 1e-13};
}

TEST(Flow, ShearMatchesClosedForm) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  for (double r0 : {0.5, 0.9, 1.0, 1.4}) {
    const Vec x0 = polar_point(r0, 0.3);
    for (double t : {0.5, 3.0, 10.0}) {
      EXPECT_LT((flow(sys, x0, t, kTight) - oracle::shear_flow(1.0, 1.0, x0, t)).norm(), 1e-8) << r0 << " " << t;
    }
  }
}

TEST(Flow, BackwardFlowInvertsForward) {
  const auto sys = builtin_torus_product({{1.0, 1.0}, {1.5, 0.5}});
  Vec x0(4);
  x0 << 0.8, 0.1, -0.2, 1.1;
  const Vec x1 = flow(sys, x0, 1.5, kTight);
  EXPECT_LT((flow_to(sys, x1, 1.5, 0.0, kTight) - x0).norm(), 1e-8);
}

TEST(Flow, MatchesIndependentRungeKutta) {
  const auto sys = builtin_counterexample();
  const Vec x0 = polar_point(0.6, 0.2);
  EXPECT_LT((flow(sys, x0, 2.0, kTight) - oracle::rk4(sys.eval, x0, 2.0, 4000)).norm(), 1e-8);
}

TEST(Flow, VariationalMatchesFiniteDifferenceOfExactFlow) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  const Vec x0 = polar_point(0.8, 1.0);
  for (double t : {0.3, 2.0}) {
    const auto step = variational_step(sys, x0, 0.0, t, kTight);
    const Mat fd = oracle::fd_jacobian([&](const Vec& x) { return oracle::shear_flow(1.0, 1.0, x, t); }, x0);
    EXPECT_LT((step.matrix - fd).norm(), 1e-6);
    EXPECT_LT((step.state - oracle::shear_flow(1.0, 1.0, x0, t)).norm(), 1e-8);
  }
}

TEST(Flow, CocyclePropertyOnSamples) {
  const std::vector<SystemSpec> systems{builtin_shear_cycle(1.0, 1.0), builtin_counterexample(),
                                        builtin_torus_product({{1.0, 1.0}, {1.5, 0.5}}),
                                        builtin_linear_block(1.0, 0.5, 1, 1)};
  for (const auto& sys : systems) {
    for (std::size_t k = 1; k <= 50; ++k) {
      const Vec h = halton_point(k, sys.dim + 2);
      const Vec x = sys.manifold.seed + 0.4 * (2.0 * h.head(sys.dim) - Vec::Ones(sys.dim));
      const double s = 2.0 * h(sys.dim), t = 2.0 * h(sys.dim + 1);
      const auto xs = variational_step(sys, x, 0.0, s);
      const auto ts = variational_step(sys, xs.state, 0.0, t);
      const auto full = variational_step(sys, x, 0.0, t + s);
      EXPECT_LT((full.matrix - ts.matrix * xs.matrix).norm(), 1e-6 * std::max(1.0, full.matrix.norm())) << sys.name;
    }
  }
}

TEST(Flow, UniformGrid) {
  const auto g = uniform_grid(1.0, 0.3);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g.front(), 0.0);
  EXPECT_DOUBLE_EQ(g.back(), 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] - g[i - 1], 0.25, 1e-15);
  const auto n = uniform_grid(-2.0, 0.5);
  EXPECT_DOUBLE_EQ(n.back(), -2.0);
  EXPECT_LT(n[1], 0.0);
}

TEST(Flow, CocycleCacheMatchesDirectSolves) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  const Vec x0 = polar_point(1.0, 0.0);
  const auto cache = variational(sys, x0, 4.0, kVariationalTolerance, 0.5);
  const auto& g = cache.segment().grid();
  for (std::size_t i = 0; i < g.size(); i += 3) {
    const auto direct = variational_step(sys, x0, 0.0, g[i]);
    EXPECT_LT((cache.matrices()[i] - direct.matrix).norm(), 1e-7);
    EXPECT_LT((cache.segment().states()[i] - direct.state).norm(), 1e-8);
  }
  const Mat off = cache.matrix_at(1.37);
  EXPECT_LT((off - variational_step(sys, x0, 0.0, 1.37).matrix).norm(), 1e-7);
  const Mat c = compose(cache, 3.0, 1.0);
  const auto mid = variational_step(sys, cache.state_at(1.0), 0.0, 2.0);
  EXPECT_LT((c - mid.matrix).norm(), 1e-7);
  EXPECT_LT((cache.segment().at(2.2) - flow(sys, x0, 2.2, kTight)).norm(), 1e-8);
}

TEST(Flow, NodeFactorsComposeToCumulative) {
  const auto sys = builtin_torus_product({{1.0, 0.5}, {2.0, -0.3}});
  const auto cache = variational(sys, sys.manifold.seed, 2.0, kVariationalTolerance, 0.25);
  Mat acc = Mat::Identity(4, 4);
  for (std::size_t i = 0; i + 1 < cache.segment().size(); ++i) {
    acc = cache.factors()[i] * acc;
    EXPECT_LT((acc - cache.matrices()[i + 1]).norm(), 1e-12);
  }
}

TEST(Flow, BlowUpIsReported) {
  SystemSpec sys;
  sys.name = "blowup";
  sys.dim = 1;
  sys.eval = [](const Vec& x) { return Vec(x.array().square()); };
  sys.jacobian = [](const Vec& x) { return Mat(2.0 * x.asDiagonal()); };
  try {
    flow(sys, Vec::Ones(1), 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::NonFinite || e.kind() == ErrorKind::StepSizeUnderflow) << e.what();
  }
}
