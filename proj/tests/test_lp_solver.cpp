#include "aphase/errors.hpp"
#include "aphase/lp_solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <thread>

using namespace aphase;

namespace {

const SystemSpec& shear() {
  static const SystemSpec sys = builtin_shear_cycle(1.0, 1.0);
  return sys;
}

const HyperbolicConstants& shear_constants() {
  static const HyperbolicConstants k = estimate_constants(shear(), shear().manifold);
  return k;
}

const SystemSpec& linear() {
  static const SystemSpec sys = builtin_linear_block(2.0, 1.5, 1, 1);
  return sys;
}

double phase_of(const Vec& x) { return std::atan2(x(1), x(0)) - std::log(x.norm()); }

Vec stable_direction(const GreenKernel& k) { return k.frame().basis_minus.col(0).normalized(); }

}  // namespace

TEST(Nonlinearity, VanishesAtZeroAndForLinearFields) {
  const Vec p = polar_point(1.0, 0.3);
  EXPECT_EQ(nonlinearity(shear(), p, Vec::Zero(2)).norm(), 0.0);
  Vec x(3), y(3);
  x << 0.1, -0.2, 0.3;
  y << 0.05, 0.02, -0.01;
  EXPECT_LT(nonlinearity(linear(), x, y).norm(), 1e-15);
}

TEST(Nonlinearity, MatchesTaylorRemainderOfPolarField) {
  const auto f = [](const Vec& p) { return oracle::shear_field(1.0, 1.0, p); };
  const Vec p = polar_point(1.0, 0.0);
  Vec y(2);
  y << 0.1, 0.0;
  const Vec ref = f(p + y) - f(p) - oracle::fd_jacobian(f, p) * y;
  EXPECT_LT((nonlinearity(shear(), p, y) - ref).norm(), 1e-8);
}

TEST(Nonlinearity, QuadraticBound) {
  const auto& k = shear_constants();
  for (double theta : {0.0, 1.0, 2.5, 4.0}) {
    const Vec p = polar_point(1.0, theta);
    for (double a : {0.0, 0.7, 1.6, 3.0}) {
      Vec y(2);
      y << std::cos(a), std::sin(a);
      y *= 0.9 * k.R;
      EXPECT_LE(nonlinearity(shear(), p, y).norm(), 0.5 * k.C * y.squaredNorm() * (1.0 + 1e-9)) << theta << " " << a;
    }
  }
}

TEST(TailBound, HorizonIsClampedAndExplicitWins) {
  const auto& k = shear_constants();
  SolverConfig cfg;
  const double t = tail_bound_horizon(k, cfg);
  EXPECT_GE(t, cfg.min_horizon);
  EXPECT_LE(t, cfg.max_horizon);
  EXPECT_LT(k.K * k.C * k.R * k.R * std::exp(-2.0 * k.alpha * t) / (2.0 * k.alpha), cfg.picard_tol);
  cfg.T_trunc = 9.5;
  EXPECT_EQ(tail_bound_horizon(k, cfg), 9.5);
}

TEST(SolveFiber, ZeroEtaGivesZeroSolution) {
  FiberSolver solver(shear(), make_splitting_provider(shear()), shear_constants());
  const auto sol = solver.solve(shear().manifold.seed, Vec::Zero(2));
  EXPECT_EQ(sol.iterations, 1);
  EXPECT_EQ(sol.h.norm(), 0.0);
  for (const Vec& y : sol.y_star) EXPECT_EQ(y.norm(), 0.0);
  EXPECT_EQ(solver.h(shear().manifold.seed, Vec::Zero(2)).norm(), 0.0);
}

TEST(SolveFiber, LinearSystemIsItsOwnLinearization) {
  const auto k = estimate_constants(linear(), linear().manifold);
  Vec xi(3);
  xi << 0.0, 0.0, 0.3;
  FiberSolver solver(linear(), make_splitting_provider(linear()), k);
  const Vec eta = 0.5 * k.R * stable_direction(*solver.kernel(xi));
  const auto sol = solver.solve(xi, eta);
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    // Exact stable motion e^{-a t} eta.
    EXPECT_LT((sol.y_star[i] - std::exp(-2.0 * sol.grid[i]) * eta).norm(), 1e-10);
  }
  EXPECT_LT(solver.h(xi, eta).norm(), 1e-10);
  EXPECT_LT(quadratic_defect(sol), 1e-8);
}

TEST(SolveFiber, ShearFiberIsAnIsochron) {
  const auto& k = shear_constants();
  FiberSolver solver(shear(), make_splitting_provider(shear()), k);
  for (double theta : {0.0, 0.4, 2.0, 5.0}) {
    const Vec xi = polar_point(1.0, theta);
    const Vec eta = 0.05 * stable_direction(*solver.kernel(xi));
    const auto sol = solver.solve(xi, eta);
    EXPECT_FALSE(sol.certified);
    const Vec x0 = xi + sol.y_star.front();
    EXPECT_NEAR(oracle::angle_diff(phase_of(x0), theta), 0.0, 1e-8) << theta;
    // y*(t) against the exact separation of the two orbits; 1e-10 covers the integrated base orbit.
    for (std::size_t i = 0; i < sol.grid.size(); i += 25) {
      const double t = sol.grid[i];
      const Vec sep = oracle::shear_flow(1.0, 1.0, x0, t) - oracle::shear_flow(1.0, 1.0, xi, t);
      EXPECT_LT((sol.y_star[i] - sep).norm(), 1e-8 * std::exp(-1.9 * t) + 1e-10) << theta << " t=" << t;
    }
  }
}

TEST(SolveFiber, CoIntegrationDecaysAtTheNormalRate) {
  FiberSolver solver(shear(), make_splitting_provider(shear()), shear_constants());
  const Vec xi = polar_point(1.0, 1.1);
  const auto sol = solver.solve(xi, 0.05 * stable_direction(*solver.kernel(xi)));
  const Vec x0 = xi + sol.y_star.front();
  const double d1 = (oracle::shear_flow(1.0, 1.0, x0, 1.0) - oracle::shear_flow(1.0, 1.0, xi, 1.0)).norm();
  const double d8 = (oracle::shear_flow(1.0, 1.0, x0, 8.0) - oracle::shear_flow(1.0, 1.0, xi, 8.0)).norm();
  EXPECT_GE(std::log(d1 / d8) / 7.0, 1.9);
}

TEST(SolveFiber, CorrectionIsQuadratic) {
  FiberSolver solver(shear(), make_splitting_provider(shear()), shear_constants());
  const Vec xi = polar_point(1.0, 0.7);
  const Vec dir = stable_direction(*solver.kernel(xi));
  std::vector<double> s{0.04, 0.02, 0.01}, hn;
  for (double a : s) hn.push_back(solver.h(xi, a * dir).norm());
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double slope = std::log(hn[i] / hn[i + 1]) / std::log(s[i] / s[i + 1]);
    EXPECT_GE(slope, 1.9);
    EXPECT_LE(slope, 2.1);
  }
  const double q1 = quadratic_defect(solver.solve(xi, 0.05 * dir));
  const double q2 = quadratic_defect(solver.solve(xi, 0.025 * dir));
  EXPECT_NEAR(q1 / q2, 1.0, 0.25);
}

TEST(SolveFiber, PicardRatioBelowKappa) {
  const auto& k = shear_constants();
  FiberSolver solver(shear(), make_splitting_provider(shear()), k);
  for (double theta : {0.2, 3.3}) {
    const Vec xi = polar_point(1.0, theta);
    const Vec dir = stable_direction(*solver.kernel(xi));
    for (double a : {0.5 * k.r, 0.05}) {
      const auto sol = solver.solve(xi, a * dir);
      EXPECT_LE(sol.max_ratio, k.kappa + 0.05);
      EXPECT_LE(sol.weighted_residual, solver.config().picard_tol);
      EXPECT_EQ(sol.certified, a < k.r);
    }
  }
}

TEST(SolveFiber, CorrectionLivesInCenterUnstableSpace) {
  FiberSolver solver(shear(), make_splitting_provider(shear()), shear_constants());
  const Vec xi = polar_point(1.0, 2.2);
  const auto ker = solver.kernel(xi);
  const Vec eta = 0.05 * stable_direction(*ker);
  const auto sol = solver.solve(xi, eta);
  const Mat& p = ker->frame().proj_minus;
  EXPECT_LT((p * sol.h).norm(), 1e-8);
  EXPECT_LT((p * sol.y_star.front() - eta).norm(), 1e-8);
  EXPECT_GT(sol.h.norm(), 1e-5);
}

TEST(SolveFiber, RespectsWeightedBound) {
  const auto& k = shear_constants();
  FiberSolver solver(shear(), make_splitting_provider(shear()), k);
  const Vec xi = polar_point(1.0, 4.0);
  const auto sol = solver.solve(xi, 0.05 * stable_direction(*solver.kernel(xi)));
  for (std::size_t i = 0; i < sol.grid.size(); ++i)
    EXPECT_LE(sol.y_star[i].norm(), k.R * std::exp(-k.alpha * sol.grid[i]) * (1.0 + 1e-9));
}

TEST(SolveFiber, GridAndHorizonRefinement) {
  const auto& k = shear_constants();
  const Vec xi = polar_point(1.0, 0.9);
  const auto provider = make_splitting_provider(shear());
  FiberSolver base(shear(), provider, k);
  const Vec eta = 0.03 * stable_direction(*base.kernel(xi));
  const Vec h0 = base.h(xi, eta);

  SolverConfig fine;
  fine.dt = 0.005;
  EXPECT_LT((FiberSolver(shear(), provider, k, fine).h(xi, eta) - h0).norm(), 1e-8);

  SolverConfig longer;
  longer.T_trunc = base.horizon() + 2.0;
  EXPECT_LE((FiberSolver(shear(), provider, k, longer).h(xi, eta) - h0).norm(), 10.0 * longer.picard_tol);
}

TEST(SolveFiber, Errors) {
  auto k = shear_constants();
  FiberSolver solver(shear(), make_splitting_provider(shear()), k);
  const Vec xi = shear().manifold.seed;
  const auto ker = solver.kernel(xi);
  const Vec dir = stable_direction(*ker);

  try {
    solve_fiber(shear(), *ker, k, 1.01 * k.R * dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BoundViolated);
  }

  // Demanding decay faster than the normal rate 2 must break the weighted bound.
  HyperbolicConstants fast = k;
  fast.alpha = 3.0;
  try {
    solve_fiber(shear(), *ker, fast, 0.05 * dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BoundViolated);
  }

  SolverConfig one;
  one.max_iter = 1;
  try {
    solve_fiber(shear(), *ker, k, 0.05 * dir, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoContraction);
  }

  SolverConfig coarse;
  coarse.alpha_weight = 20.0;
  EXPECT_THROW(solve_fiber(shear(), *ker, k, 0.01 * dir, coarse), Error);

  auto sol = solve_fiber(shear(), *ker, k, 0.05 * dir);
  EXPECT_NO_THROW(h_map(shear(), *ker, sol));
  sol.h(0) += 1e-6;
  try {
    h_map(shear(), *ker, sol);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InconsistentH);
  }
}

TEST(FiberSolverCache, ConcurrentCallsAgreeWithSerial) {
  FiberSolver solver(shear(), make_splitting_provider(shear()), shear_constants());
  std::vector<Vec> xis;
  for (int i = 0; i < 6; ++i) xis.push_back(polar_point(1.0, 0.9 * i));
  std::vector<Vec> serial;
  for (const Vec& xi : xis) serial.push_back(solver.h(xi, 0.02 * stable_direction(*solver.kernel(xi))));

  FiberSolver fresh(shear(), make_splitting_provider(shear()), shear_constants());
  std::vector<Vec> threaded(xis.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < xis.size(); ++i)
    pool.emplace_back([&, i] { threaded[i] = fresh.h(xis[i], 0.02 * stable_direction(*fresh.kernel(xis[i]))); });
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < xis.size(); ++i) EXPECT_EQ((serial[i] - threaded[i]).norm(), 0.0) << i;
  EXPECT_EQ(solver.kernel(xis[0]).get(), solver.kernel(xis[0]).get());
}
