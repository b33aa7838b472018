#include "aphase/manifold.hpp"
#include "aphase/errors.hpp"
#include "aphase/flow.hpp"

#include <cmath>
#include <memory>

namespace aphase {

Chart build_chart(const ManifoldDescriptor& desc, const Vec& xi0, double radius, double on_manifold_tol) {
  const double res = desc.residual(xi0);
  if (!(res <= std::max(on_manifold_tol, desc.residual_tol)))
    throw Error(ErrorKind::OffManifold, "base point is " + std::to_string(res) + " away from M");
  const int m = desc.dim;
  const Mat j0 = desc.chart_jacobian(xi0, Vec::Zero(m));
  // Reparametrize q -> L q so the tangent columns at 0 are orthonormal.
  Eigen::HouseholderQR<Mat> qr(j0);
  Mat r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (int i = 0; i < m; ++i)
    if (r(i, i) < 0) r.row(i) *= -1.0;
  const Mat L = r.triangularView<Eigen::Upper>().solve(Mat::Identity(m, m));

  Chart c;
  c.base = xi0;
  c.dim = m;
  c.radius = radius > 0.0 ? radius : desc.chart_radius;
  c.tube_radius = desc.tube_radius;
  auto chart = desc.chart;
  auto jac = desc.chart_jacobian;
  c.map = [chart, xi0, L](const Vec& q) { return chart(xi0, L * q); };
  c.tangent = [jac, xi0, L](const Vec& q) -> Mat { return jac(xi0, L * q) * L; };
  return c;
}

NormalFrame::NormalFrame(Chart chart, SplittingProvider provider, double delta_min)
    : chart_(std::move(chart)), provider_(std::move(provider)), delta_min_(delta_min) {
  const Vec q0 = Vec::Zero(chart_.dim);
  FramePoint p;
  p.q = q0;
  p.xi = chart_.map(q0);
  p.tangent = chart_.tangent(q0);
  p.splitting = provider_(p.xi);
  Mat nu = p.splitting.basis_j;
  if (nu.cols() == 0) throw Error(ErrorKind::DegenerateAngle, "J^- is trivial: M has no normal directions");
  for (Eigen::Index j = 0; j < nu.cols(); ++j) {
    Eigen::Index idx;
    nu.col(j).cwiseAbs().maxCoeff(&idx);
    if (nu(idx, j) < 0) nu.col(j) *= -1.0;
  }
  const double angle = min_principal_angle(nu, p.tangent);
  if (angle < delta_min_)
    throw Error(ErrorKind::DegenerateAngle, "angle between J^- and T M is " + std::to_string(angle));
  p.nu = nu;
  nu0_ = nu;
  origin_ = p;
}

FramePoint NormalFrame::compute(const Vec& q, const Mat& seed) const {
  FramePoint p;
  p.q = q;
  p.xi = chart_.map(q);
  p.tangent = chart_.tangent(q);
  p.splitting = provider_(p.xi);
  const Mat& j = p.splitting.basis_j;
  if (j.cols() != seed.cols())
    throw Error(ErrorKind::DegenerateAngle, "dimension of J^- changed along the chart");
  const Mat projected = j * (j.transpose() * seed);
  p.nu = orthonormalize(projected, 1e-6);
  if (p.nu.cols() != seed.cols())
    throw Error(ErrorKind::DegenerateAngle, "J^- rotated orthogonally to the seed frame");
  const double angle = min_principal_angle(p.nu, p.tangent);
  if (angle < delta_min_)
    throw Error(ErrorKind::DegenerateAngle, "angle between J^- and T M is " + std::to_string(angle));
  return p;
}

FramePoint NormalFrame::at(const Vec& q) const {
  if (q.size() != chart_.dim) throw Error(ErrorKind::InvalidArgument, "chart coordinate has wrong dimension");
  if (q.isZero(0.0)) return origin_;
  {
    std::lock_guard lock(mutex_);
    for (const auto& m : memo_)
      if (m.q == q) return m;
  }
  FramePoint p = compute(q, nu0_);
  std::lock_guard lock(mutex_);
  memo_.push_back(p);
  if (memo_.size() > 16) memo_.erase(memo_.begin());
  return p;
}

FramePoint NormalFrame::at_seeded(const Vec& q, const Mat& seed) const { return compute(q, seed); }

Mat NormalFrame::frame_matrix() const {
  Mat a(chart_.base.size(), chart_.dim + nu0_.cols());
  a << origin_.tangent, nu0_;
  return a;
}

NormalFrame build_normal_frame(const Chart& chart, SplittingProvider provider, double delta_min) {
  return NormalFrame(chart, std::move(provider), delta_min);
}

TubularPoint tubular_decompose(const NormalFrame& frame, const Vec& x, double tol, int max_iter) {
  const Chart& c = frame.chart();
  const int m = c.dim;
  const int k = frame.codim();
  const Eigen::Index n = x.size();
  if (m + k != n) throw Error(ErrorKind::InvalidArgument, "frame dimensions do not match the ambient space");

  const Mat a0 = frame.frame_matrix();
  Vec qz = a0.partialPivLu().solve(x - c.base);
  TubularPoint out;
  for (int it = 0; it <= max_iter; ++it) {
    const Vec q = qz.head(m);
    const Vec z = qz.tail(k);
    if (q.norm() > c.radius) throw Error(ErrorKind::OutsideTube, "Newton left the chart domain");
    if (z.norm() >= c.tube_radius) throw Error(ErrorKind::OutsideTube, "|z| reached the tube radius");
    const FramePoint p = frame.at(q);
    const Vec resid = p.xi + p.nu * z - x;
    out.q = q;
    out.z = z;
    out.xi = p.xi;
    out.zeta = p.nu * z;
    out.residual = resid.norm();
    out.iterations = it;
    if (out.residual <= tol) return out;
    if (it == max_iter) break;
    // d/dq [nu(q) z] by central differences.
    Mat jac(n, m + k);
    jac.leftCols(m) = p.tangent;
    const double h = 1e-6;
    for (int i = 0; i < m; ++i) {
      Vec dq = Vec::Zero(m);
      dq(i) = h;
      const Mat nu_p = frame.at(q + dq).nu;
      const Mat nu_m = frame.at(q - dq).nu;
      jac.col(i) += (nu_p - nu_m) * z / (2 * h);
    }
    jac.rightCols(k) = p.nu;
    const Vec step = jac.partialPivLu().solve(resid);
    qz -= step;
    if (step.norm() < 1e-15 * std::max(1.0, qz.norm()) && out.residual <= 1e3 * tol) return out;
  }
  throw Error(ErrorKind::OutsideTube,
              "tubular decomposition did not converge; residual " + std::to_string(out.residual));
}

bool detect_holonomy_flip(const NormalFrame& frame, const ManifoldDescriptor& desc, int steps) {
  if (desc.kind != ManifoldDescriptor::Kind::LimitCycle)
    throw Error(ErrorKind::InvalidArgument, "holonomy walk is defined for limit cycles");
  const Chart& c = frame.chart();
  const double length = desc.loop_length * desc.chart_jacobian(c.base, Vec::Zero(1)).norm();
  Mat nu = frame.nu0();
  for (int s = 1; s <= steps; ++s) {
    Vec q(1);
    q(0) = length * s / steps;
    nu = frame.at_seeded(q, nu).nu;
  }
  return (frame.nu0().transpose() * nu).determinant() < 0.0;
}

ManifoldDescriptor make_numeric_cycle(const SystemSpec& sys, const Vec& seed, double period, int orbit_samples) {
  auto orbit = std::make_shared<std::vector<Vec>>();
  const auto seg = integrate(sys, seed, period, Tolerance{1e-11, 1e-13}, period / orbit_samples);
  for (std::size_t i = 0; i + 1 < seg.states().size(); ++i) orbit->push_back(seg.states()[i]);
  const double dt = period / orbit_samples;
  const SystemSpec* s = &sys;

  ManifoldDescriptor d;
  d.kind = ManifoldDescriptor::Kind::LimitCycle;
  d.dim = 1;
  d.period = period;
  d.seed = seed;
  d.chart_radius = 0.25 * period * sys.eval(seed).norm();
  d.tube_radius = 0.5;
  d.residual_tol = 1e-9;
  const Tolerance tight{1e-11, 1e-13};
  const double speed = sys.eval(seed).norm();
  d.loop_length = period * speed;
  d.chart = [s, tight, speed](const Vec& base, const Vec& q) { return flow(*s, base, q(0) / speed, tight); };
  d.chart_jacobian = [s, tight, speed](const Vec& base, const Vec& q) -> Mat {
    return s->eval(flow(*s, base, q(0) / speed, tight)) / speed;
  };
  d.project = [s, orbit, dt, tight](const Vec& x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < orbit->size(); ++i)
      if (((*orbit)[i] - x).squaredNorm() < ((*orbit)[best] - x).squaredNorm()) best = i;
    const Vec& anchor = (*orbit)[best];
    auto dist = [&](double t) { return (flow(*s, anchor, t, tight) - x).squaredNorm(); };
    double lo = -dt, hi = dt;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    double fa = dist(a), fb = dist(b);
    for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
      if (fa < fb) {
        hi = b;
        b = a;
        fb = fa;
        a = hi - g * (hi - lo);
        fa = dist(a);
      } else {
        lo = a;
        a = b;
        fa = fb;
        b = lo + g * (hi - lo);
        fb = dist(b);
      }
    }
    return flow(*s, anchor, 0.5 * (lo + hi), tight);
  };
  d.samples = [s, seed, period, tight](int count) {
    std::vector<Vec> pts;
    for (int i = 0; i < count; ++i) pts.push_back(flow(*s, seed, period * i / count, tight));
    return pts;
  };
  return d;
}

}  // namespace aphase
