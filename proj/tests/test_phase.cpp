#include "aphase/errors.hpp"
#include "aphase/phase.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace aphase;

namespace {

const SystemSpec& shear() {
  static const SystemSpec sys = builtin_shear_cycle(1.0, 1.0);
  return sys;
}

const PhaseSolver& shear_solver() {
  static const PhaseSolver solver(shear(), estimate_constants(shear(), shear().manifold));
  return solver;
}

const SystemSpec& torus() {
  static const SystemSpec sys = builtin_torus_product({{1.0, 1.0}, {1.5, 0.5}});
  return sys;
}

const SystemSpec& linear() {
  static const SystemSpec sys = builtin_linear_block(2.0, 1.5, 1, 1);
  return sys;
}

double angle(const Vec& x) { return std::atan2(x(1), x(0)); }

void expect_kind(const std::function<void()>& f, ErrorKind kind) {
  try {
    f();
    ADD_FAILURE() << "no error, expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(PhaseEquation, ZeroMapHasZeroFixedPoint) {
  const HFunction zero = [](const Vec& q, const Vec& p) { return Vec::Zero(q.size() + p.size()); };
  const auto fp = solve_phase_equation(zero, Mat::Identity(2, 2), 0.01, 1);
  EXPECT_EQ(fp.q.norm(), 0.0);
  EXPECT_EQ(fp.p.norm(), 0.0);
  EXPECT_EQ(fp.residual, 0.0);
  EXPECT_FALSE(fp.used_fallback);
}

TEST(PhaseEquation, AffineContraction) {
  Vec b(3);
  b << 1e-3, -2e-3, 5e-4;
  Mat a = Mat::Identity(3, 3);
  a(0, 1) = 0.4;
  const HFunction h = [&](const Vec& q, const Vec& p) {
    Vec v(3);
    v << q, p;
    return Vec(a * (0.3 * v + b));
  };
  const auto fp = solve_phase_equation(h, a, 0.01, 1);
  Vec v(3);
  v << fp.q, fp.p;
  EXPECT_LT((v - b / 0.7).norm(), 1e-9);
}

TEST(PhaseEquation, SelfMapViolation) {
  const HFunction push = [](const Vec& q, const Vec& p) {
    Vec v = Vec::Zero(q.size() + p.size());
    v(0) = 0.02;
    return v;
  };
  expect_kind([&] { solve_phase_equation(push, Mat::Identity(2, 2), 0.01, 1); }, ErrorKind::SelfMapViolated);
}

TEST(PhaseEquation, ExtraSeedsFindNoSecondFixedPoint) {
  const HFunction h = [](const Vec& q, const Vec& p) {
    Vec v(2);
    v << q, p;
    return Vec(0.5 * v);
  };
  PhaseConfig cfg;
  for (double a : {0.0, 1.0, 2.0, 4.0}) cfg.extra_seeds.push_back(0.009 * Vec(Eigen::Vector2d(std::cos(a), std::sin(a))));
  cfg.extra_seeds.push_back(Vec::Ones(2));  // outside the ball, ignored
  const auto fp = solve_phase_equation(h, Mat::Identity(2, 2), 0.01, 1, cfg);
  EXPECT_TRUE(fp.alternates.empty());
}

TEST(BuildH, VanishesAtOriginAndForLinearSystems) {
  const auto& solver = shear_solver();
  const NormalFrame frame = build_normal_frame(build_chart(shear().manifold, polar_point(1.0, 0.3)),
                                               solver.fibers().splitting());
  const double eps = solver.default_eps();
  const HFunction h = build_H(frame, Vec::Zero(1), solver.fibers(), eps);
  EXPECT_EQ(h(Vec::Zero(1), Vec::Zero(1)).norm(), 0.0);
  expect_kind([&] { build_H(frame, Vec::Zero(1), solver.fibers(), 0.6 * frame.chart().radius); },
              ErrorKind::ChartExceeded);

  const auto k = estimate_constants(linear(), linear().manifold);
  const FiberSolver fibers(linear(), make_splitting_provider(linear()), k);
  Vec xi(3);
  xi << 0.0, 0.1, -0.2;
  const NormalFrame lf = build_normal_frame(build_chart(linear().manifold, xi), fibers.splitting());
  const double le = 0.25 * k.r;
  const HFunction hl = build_H(lf, Vec::Constant(1, 0.3 * le), fibers, le);
  for (int j = 0; j < 5; ++j) {
    const Vec q = 0.5 * le * (halton_point(j + 1, 2) - 0.5 * Vec::Ones(2));
    EXPECT_LT(hl(q, Vec::Constant(1, 0.2 * le * (j - 2) / 2.0)).norm(), 1e-12);
  }
}

TEST(BuildH, BoundedByCurvatureAndQuadraticTerms) {
  // |A^-1 H(q, p)| <= |A^-1| (4 C0 eps^2 + 2 mu eps), mu the frame variation over |q| <= 2 eps.
  const auto& solver = shear_solver();
  const NormalFrame frame = build_normal_frame(build_chart(shear().manifold, polar_point(1.0, 1.3)),
                                               solver.fibers().splitting());
  const double eps = solver.default_eps();
  const Vec z0 = Vec::Constant(1, 0.4 * eps);
  const HFunction h = build_H(frame, z0, solver.fibers(), eps);
  const Mat a = frame.frame_matrix();
  const Mat inv = a.inverse();
  const double ainv = inv.jacobiSvd().singularValues()(0);
  double mu = 0.0;
  for (int j = -40; j <= 40; ++j) {
    const Vec q = Vec::Constant(1, 2.0 * eps * j / 40.0);
    const FramePoint fp = frame.at(q);
    mu = std::max({mu, (frame.origin().tangent - fp.tangent).norm(), (frame.nu0() - fp.nu).norm()});
  }
  for (int j = -4; j <= 4; ++j) {
    const double q = 0.7 * eps * j / 4.0, p = 0.7 * eps * (4 - std::abs(j)) / 4.0 - 0.3 * eps;
    const Vec qv = Vec::Constant(1, q), pv = Vec::Constant(1, p);
    const FramePoint fp = frame.at(qv);
    const double c0 = quadratic_defect(solver.fibers().solve(fp.xi, fp.nu * (z0 + pv)));
    const double lhs = a.partialPivLu().solve(h(qv, pv)).norm();
    EXPECT_LE(lhs, ainv * (4.0 * c0 * eps * eps + 2.0 * mu * eps)) << q << " " << p;
  }
}

TEST(Phase, ShearOracleExamples) {
  const auto& solver = shear_solver();
  const auto r1 = solver.solve(polar_point(0.9, 0.0));
  EXPECT_NEAR(oracle::angle_diff(angle(r1.xi_star), -std::log(0.9)), 0.0, 2e-3);
  EXPECT_NEAR(oracle::angle_diff(angle(r1.xi_star), -std::log(0.9)), 0.0, 1e-7);

  const Vec x0 = polar_point(0.8, 1.0);
  const auto r2 = solver.solve(x0);
  EXPECT_NEAR(oracle::angle_diff(angle(r2.xi_star), 1.223144), 0.0, 2e-3);
  EXPECT_NEAR(oracle::angle_diff(angle(r2.xi_star), 1.0 - std::log(0.8)), 0.0, 1e-7);
  const double sep = (oracle::shear_flow(1.0, 1.0, x0, 20.0) - oracle::shear_flow(1.0, 1.0, r2.xi_star, 20.0)).norm();
  EXPECT_LT(sep, 1e-5);
  EXPECT_GE(r2.decay.rate, 1.8);
}

TEST(Phase, InvariantsOnAGrid) {
  const auto& solver = shear_solver();
  const auto& k = solver.constants();
  for (double r0 : {0.7, 0.95, 1.05, 1.3}) {
    for (double phi : {0.0, 2.0, 4.5}) {
      const auto res = solver.solve(polar_point(r0, phi));
      EXPECT_NEAR(oracle::angle_diff(angle(res.xi_star), phi - std::log(r0)), 0.0, 1e-7) << r0 << " " << phi;
      EXPECT_NEAR(res.xi_star.norm(), 1.0, 1e-10);
      EXPECT_LE(res.residual, 1e-8);
      Vec v(res.q_star.size() + res.p_star.size());
      v << res.q_star, res.p_star;
      EXPECT_LE(v.norm(), res.eps * (1.0 + 1e-12));
      EXPECT_GE(res.decay.rate, 0.9 * k.alpha);
      EXPECT_TRUE(res.verified);
      EXPECT_TRUE(res.certificate_ok);
      EXPECT_GE(res.reduction_time, 0.0);
    }
  }
}

TEST(Phase, PointOnManifoldIsItsOwnPhase) {
  const Vec x0 = polar_point(1.0, 0.7);
  const auto res = shear_solver().solve(x0);
  EXPECT_LT((res.xi_star - x0).norm(), 1e-10);
  EXPECT_LT(res.zeta_star.norm(), 1e-10);
  EXPECT_EQ(res.reduction_time, 0.0);
}

TEST(Phase, IdempotentAndEquivariant) {
  const auto& solver = shear_solver();
  const Vec x0 = polar_point(1.2, 2.5);
  const auto res = solver.solve(x0);
  EXPECT_LT((solver.solve(res.xi_star).xi_star - res.xi_star).norm(), 1e-9);
  for (double s : {0.5, 1.0, 2.0}) {
    const Vec moved = oracle::shear_flow(1.0, 1.0, x0, s);
    const Vec expected = oracle::shear_flow(1.0, 1.0, res.xi_star, s);
    EXPECT_LT((solver.solve(moved).xi_star - expected).norm(), 1e-8) << s;
  }
}

TEST(Phase, TorusFactorsHaveIndependentPhases) {
  const auto k = estimate_constants(torus(), torus().manifold);
  const PhaseSolver solver(torus(), k);
  Vec x0(4);
  x0 << polar_point(0.9, 0.2), polar_point(1.1, 1.0);
  const auto res = solver.solve(x0);
  EXPECT_NEAR(oracle::angle_diff(angle(res.xi_star.head(2)), 0.2 - std::log(0.9)), 0.0, 1e-7);
  EXPECT_NEAR(oracle::angle_diff(angle(res.xi_star.tail(2)), 1.0 - 0.5 * std::log(1.1)), 0.0, 1e-7);
  EXPECT_NEAR(res.xi_star.head(2).norm(), 1.0, 1e-10);
  EXPECT_NEAR(res.xi_star.tail(2).norm(), 1.0, 1e-10);
  EXPECT_TRUE(res.verified);
}

TEST(Phase, LinearBlockFootIsTheStableProjection) {
  const auto k = estimate_constants(linear(), linear().manifold);
  const PhaseSolver solver(linear(), k);
  Vec x0(3), foot(3);
  x0 << 0.3, 0.05, 0.2;
  foot << 0.0, 0.05, 0.2;
  const auto res = solver.solve(x0);
  EXPECT_LT((res.xi_star - foot).norm(), 1e-10);
  EXPECT_TRUE(res.verified);
}

TEST(Phase, Errors) {
  expect_kind([] { shear_solver().solve(polar_point(1.6, 0.0)); }, ErrorKind::OutsideTube);
  expect_kind([] { shear_solver().solve(Vec::Zero(3)); }, ErrorKind::InvalidArgument);

  HyperbolicConstants hand;
  hand.c = 1.0;
  hand.alpha = 1.0;
  hand.K = 1.0;
  hand.C = 1.0;
  hand.r = 0.01;
  hand.R = 0.05;
  hand.kappa = 11.0 * hand.K * hand.C * hand.R / (6.0 * hand.alpha);
  const SystemSpec ce = builtin_counterexample();
  const PhaseSolver solver(ce, hand);
  expect_kind([&] { solver.solve(polar_point(0.95, 0.0)); }, ErrorKind::NonHyperbolic);
}

TEST(Phase, BatchKeepsOrderAndMatchesSingleSolves) {
  const auto& solver = shear_solver();
  const std::vector<Vec> pts{polar_point(0.8, 0.1), polar_point(1.7, 0.0), polar_point(1.1, 3.0),
                             polar_point(0.9, -2.0)};
  const auto one = solver.solve_batch(pts, 1);
  const auto two = solver.solve_batch(pts, 2);
  ASSERT_EQ(one.size(), pts.size());
  ASSERT_TRUE(one[1].error.has_value());
  EXPECT_EQ(*one[1].error, ErrorKind::OutsideTube);
  EXPECT_EQ(*two[1].error, ErrorKind::OutsideTube);
  for (std::size_t i : {0u, 2u, 3u}) {
    ASSERT_TRUE(one[i].result && two[i].result) << i;
    const Vec single = solver.solve(pts[i]).xi_star;
    for (Eigen::Index j = 0; j < 2; ++j) {
      EXPECT_EQ(one[i].result->xi_star(j), single(j));
      EXPECT_EQ(two[i].result->xi_star(j), single(j));
    }
  }
}

TEST(FitDecay, RateOfShearSeparation) {
  const Vec xi = polar_point(1.0, 0.0);
  const Vec x = polar_point(1.01, 0.0);
  // Radial separation on the b = 0 cycle decays like e^{-2t}.
  const SystemSpec b0 = builtin_shear_cycle(1.0, 0.0);
  const auto fit = fit_decay(b0, x, xi, 1.0, 8.0, 29, Tolerance{1e-12, 1e-14});
  EXPECT_NEAR(fit.rate, 2.0, 1e-3);
  EXPECT_TRUE(std::isinf(fit_decay(b0, xi, xi, 1.0, 8.0, 29, Tolerance{1e-12, 1e-14}).rate));
}

TEST(Fibers, SampleShapes) {
  const auto& fibers = shear_solver().fibers();
  const Vec xi = polar_point(1.0, 0.6);
  const auto single = sample_fiber(fibers, xi, 0.05, 1);
  ASSERT_EQ(single.points.size(), 1u);
  EXPECT_EQ((single.points[0] - xi).norm(), 0.0);
  expect_kind([&] { sample_fiber(fibers, xi, 0.05, 0); }, ErrorKind::InvalidArgument);

  const auto s = sample_fiber(fibers, xi, 0.05, 9);
  ASSERT_EQ(s.points.size(), 9u);
  EXPECT_NEAR(s.radius, 0.05, 1e-15);
  for (std::size_t j = 0; j < s.points.size(); ++j) {
    EXPECT_NEAR(oracle::angle_diff(angle(s.points[j]) - std::log(s.points[j].norm()), 0.6), 0.0, 1e-7) << j;
    if (!s.eta[j].isZero(0.0)) {
      EXPECT_GE(s.decay_rates[j], 1.9);
    }
  }
}

TEST(Fibers, RadialIsochronsWithoutShear) {
  const SystemSpec b0 = builtin_shear_cycle(1.0, 0.0);
  const FiberSolver fibers(b0, make_splitting_provider(b0), estimate_constants(b0, b0.manifold));
  const auto s = sample_fiber(fibers, polar_point(1.0, 2.0), 0.05, 7);
  for (const Vec& p : s.points) EXPECT_NEAR(oracle::angle_diff(angle(p), 2.0), 0.0, 1e-6);
}

TEST(Fibers, RoundTripThroughPhaseSolver) {
  const auto& solver = shear_solver();
  const Vec xi = polar_point(1.0, 5.0);
  const auto s = sample_fiber(solver.fibers(), xi, 0.05, 5);
  for (const Vec& p : s.points) {
    const auto res = solver.solve(p);
    EXPECT_LT((res.xi_star - xi).norm(), 2e-3);
    EXPECT_LT((res.xi_star - xi).norm(), 1e-7);
  }
}

TEST(Fibers, Invariance) {
  const auto& fibers = shear_solver().fibers();
  const auto s = sample_fiber(fibers, polar_point(1.0, 0.2), 0.05, 9);
  const auto r0 = verify_fiber_invariance(fibers, s, 0.0);
  EXPECT_LT(r0.max_distance, 1e-10);
  const auto r1 = verify_fiber_invariance(fibers, s, 1.0);
  EXPECT_TRUE(r1.pass);
  EXPECT_LE(r1.max_distance, 1e-4);
  EXPECT_EQ(r1.distances.size(), 9u);

  const auto k = estimate_constants(linear(), linear().manifold);
  const FiberSolver lf(linear(), make_splitting_provider(linear()), k);
  Vec xi(3);
  xi << 0.0, 0.02, 0.1;
  const auto ls = sample_fiber(lf, xi, 0.5 * k.R, 5);
  EXPECT_LT(verify_fiber_invariance(lf, ls, 1.0).max_distance, 1e-9);
}

TEST(Fibers, Disjointness) {
  const auto& fibers = shear_solver().fibers();
  const auto rep = verify_disjointness(fibers, polar_point(1.0, 0.0), polar_point(1.0, 0.5), 0.05, 9);
  EXPECT_GT(rep.min_distance, 0.01);
  EXPECT_FALSE(rep.overlap);
  expect_kind([&] { verify_disjointness(fibers, polar_point(1.0, 0.0), polar_point(1.0, 0.0), 0.05, 9); },
              ErrorKind::InvalidArgument);
  // A point on the fiber of xi is rejected as xi'.
  const auto s = sample_fiber(fibers, polar_point(1.0, 0.0), 0.05, 3);
  expect_kind([&] { verify_disjointness(fibers, polar_point(1.0, 0.0), s.points[0], 0.05, 9); },
              ErrorKind::InvalidArgument);

  const FiberSolver tf(torus(), make_splitting_provider(torus()), estimate_constants(torus(), torus().manifold));
  Vec a(4), b(4);
  a << polar_point(1.0, 0.0), polar_point(1.0, 0.0);
  b << polar_point(1.0, 0.0), polar_point(1.0, 0.8);
  const auto trep = verify_disjointness(tf, a, b, 0.04, 5);
  EXPECT_GT(trep.min_distance, 0.01);
  EXPECT_FALSE(trep.overlap);
}
