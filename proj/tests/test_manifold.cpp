#include "aphase/errors.hpp"
#include "aphase/manifold.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace aphase;

namespace {

NormalFrame shear_frame(const SystemSpec& sys, double theta) {
  return build_normal_frame(build_chart(sys.manifold, polar_point(1.0, theta)), make_splitting_provider(sys));
}

}  // namespace

TEST(Chart, RejectsPointsOffManifold) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  try {
    build_chart(sys.manifold, polar_point(1.01, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OffManifold);
  }
}

TEST(Chart, TangentIsOrthonormalAtBase) {
  const auto sys = builtin_torus_product({{1.0, 1.0}, {1.5, 0.5}});
  Vec xi(4);
  xi << polar_point(1.0, 0.3), polar_point(1.0, -1.0);
  const Chart c = build_chart(sys.manifold, xi);
  const Mat t = c.tangent(Vec::Zero(2));
  EXPECT_LT((t.transpose() * t - Mat::Identity(2, 2)).norm(), 1e-14);
  EXPECT_LT((c.map(Vec::Zero(2)) - xi).norm(), 1e-15);
  const Mat fd = oracle::fd_jacobian(c.map, Vec::Zero(2));
  EXPECT_LT((fd - t).norm(), 1e-8);
}

TEST(NormalFrame, ShearNormalAtOrigin) {
  const auto s0 = builtin_shear_cycle(1.0, 0.0);
  Vec radial(2);
  radial << 1.0, 0.0;
  EXPECT_LT((shear_frame(s0, 0.0).nu0().col(0) - radial).norm(), 1e-7);

  const auto s1 = builtin_shear_cycle(1.0, 1.0);
  Vec diag(2);
  diag << 1.0, 1.0;
  EXPECT_LT((shear_frame(s1, 0.0).nu0().col(0) - diag / std::sqrt(2.0)).norm(), 1e-7);
}

TEST(NormalFrame, ContinuousAndOrthonormal) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  const NormalFrame f = shear_frame(sys, 0.7);
  Mat prev = f.nu0();
  for (int k = 1; k <= 10; ++k) {
    Vec q(1);
    q << 0.05 * k;
    const FramePoint p = f.at(q);
    EXPECT_NEAR(p.nu.col(0).norm(), 1.0, 1e-12);
    EXPECT_LT((p.nu - prev).norm(), 0.1);
    // nu(q) spans the stable direction at xi(q)
    EXPECT_LT(max_principal_angle(p.nu, p.splitting.basis_minus), 1e-8);
    prev = p.nu;
  }
}

TEST(Tubular, RoundTrip) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  const NormalFrame f = shear_frame(sys, 1.0);
  for (double qv : {-0.2, 0.0, 0.15}) {
    for (double zv : {-0.1, 0.02, 0.3}) {
      Vec q(1), z(1);
      q << qv;
      z << zv;
      const FramePoint p = f.at(q);
      const Vec x = p.xi + p.nu * z;
      const TubularPoint tp = tubular_decompose(f, x);
      EXPECT_NEAR(tp.q(0), qv, 1e-9);
      EXPECT_NEAR(tp.z(0), zv, 1e-9);
      EXPECT_LT(tp.residual, 1e-11);
    }
  }
}

TEST(Tubular, TorusRoundTrip) {
  const auto sys = builtin_torus_product({{1.0, 1.0}, {1.5, 0.5}});
  const NormalFrame f = build_normal_frame(build_chart(sys.manifold, sys.manifold.seed), make_splitting_provider(sys));
  Vec q(2), z(2);
  q << 0.1, -0.05;
  z << 0.05, -0.02;
  const FramePoint p = f.at(q);
  const TubularPoint tp = tubular_decompose(f, p.xi + p.nu * z);
  EXPECT_LT((tp.q - q).norm(), 1e-9);
  EXPECT_LT((tp.z - z).norm(), 1e-9);
}

TEST(Tubular, OutsideTube) {
  const auto sys = builtin_shear_cycle(1.0, 0.0);
  const NormalFrame f = shear_frame(sys, 0.0);
  try {
    tubular_decompose(f, polar_point(1.6, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutsideTube);
  }
}

TEST(NormalFrame, DegenerateAngleDetected) {
  const auto sys = builtin_shear_cycle(1.0, 0.0);
  const Chart c = build_chart(sys.manifold, sys.manifold.seed);
  auto real = make_splitting_provider(sys);
  // A splitting whose J^- lies along the tangent of M.
  SplittingProvider tilted = [&](const Vec& x) {
    SplittingFrame f = real(x);
    Vec t(2);
    t << -x(1), x(0);
    f.basis_j = t.normalized();
    return f;
  };
  try {
    build_normal_frame(c, tilted, 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateAngle);
  }
}

TEST(NormalFrame, NoHolonomyFlipOnShearCycle) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  EXPECT_FALSE(detect_holonomy_flip(shear_frame(sys, 0.0), sys.manifold, 32));
}

TEST(NumericCycle, MatchesAnalyticCircle) {
  const auto sys = builtin_shear_cycle(1.0, 1.0);
  const ManifoldDescriptor d = make_numeric_cycle(sys, sys.manifold.seed, 2 * M_PI, 256);
  for (double r : {0.9, 1.0, 1.2}) {
    for (double phi : {0.1, 2.0, 5.0}) {
      const Vec x = polar_point(r, phi);
      EXPECT_LT((d.project(x) - polar_point(1.0, phi)).norm(), 1e-8);
    }
  }
  Vec q(1);
  q << 0.5;
  EXPECT_LT((d.chart(sys.manifold.seed, q) - polar_point(1.0, 0.5)).norm(), 1e-8);
  const Chart c = build_chart(d, polar_point(1.0, 0.3));
  EXPECT_LT((c.map(q) - polar_point(1.0, 0.8)).norm(), 1e-8);
  EXPECT_NEAR(d.loop_length, 2 * M_PI, 1e-8);
  EXPECT_FALSE(detect_holonomy_flip(build_normal_frame(c, make_splitting_provider(sys)), d, 16));
}
