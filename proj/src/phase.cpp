#include "aphase/phase.hpp"

#include <gsl/gsl_multimin.h>
#include <omp.h>

#include <array>
#include <cmath>
#include <list>
#include <mutex>

namespace aphase {

namespace {

constexpr std::array<double, 5> kGaussNodes{0.046910077030668, 0.230765344947158, 0.5, 0.769234655052842,
                                            0.953089922969332};
constexpr std::array<double, 5> kGaussWeights{0.118463442528095, 0.239314335249683, 0.284444444444444,
                                              0.239314335249683, 0.118463442528095};

// Unit directions for the boundary of the ball in R^n.
std::vector<Vec> sphere_directions(int n, int count) {
  std::vector<Vec> out;
  if (n == 1) {
    Vec a(1), b(1);
    a(0) = 1.0;
    b(0) = -1.0;
    return {a, b};
  }
  if (n == 2) {
    for (int k = 0; k < count; ++k) {
      const double th = 2.0 * std::numbers::pi * k / count;
      Vec u(2);
      u << std::cos(th), std::sin(th);
      out.push_back(u);
    }
    return out;
  }
  for (std::size_t i = 1; static_cast<int>(out.size()) < count; ++i) {
    const Vec u = 2.0 * halton_point(i, n) - Vec::Ones(n);
    if (u.norm() > 1e-3) out.push_back(u.normalized());
  }
  return out;
}

struct NelderMeadContext {
  const std::function<double(const Vec&)>* objective = nullptr;
  bool failed = false;
  std::string message;
};

double nm_callback(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<NelderMeadContext*>(params);
  Vec x(v->size);
  for (std::size_t i = 0; i < v->size; ++i) x(i) = gsl_vector_get(v, i);
  try {
    return (*ctx->objective)(x);
  } catch (const Error& e) {
    ctx->failed = true;
    ctx->message = e.what();
    return 1e300;
  }
}

// Derivative-free minimization of `objective` from `start`; returns the best point.
Vec nelder_mead(const std::function<double(const Vec&)>& objective, const Vec& start, double step, int max_iter) {
  const std::size_t n = start.size();
  NelderMeadContext ctx;
  ctx.objective = &objective;
  gsl_multimin_function fn;
  fn.n = n;
  fn.f = &nm_callback;
  fn.params = &ctx;
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x, i, start(i));
    gsl_vector_set(ss, i, step);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(s)) break;
    if (gsl_multimin_fminimizer_size(s) < 1e-15 || s->fval < 1e-26) break;
  }
  Vec best(n);
  for (std::size_t i = 0; i < n; ++i) best(i) = gsl_vector_get(s->x, i);
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return best;
}

}  // namespace

HFunction build_H(const NormalFrame& frame, const Vec& z0, const FiberSolver& hmap, double eps) {
  const Chart& chart = frame.chart();
  if (2.0 * eps > chart.radius)
    throw Error(ErrorKind::ChartExceeded, "chart radius " + std::to_string(chart.radius) + " does not cover 2 eps");
  if (z0.norm() >= eps) throw Error(ErrorKind::InvalidArgument, "|z0| must be below eps");
  const Mat t0 = frame.origin().tangent;
  const Mat nu0 = frame.nu0();
  return [&frame, &hmap, z0, t0, nu0, radius = chart.radius](const Vec& q, const Vec& p) -> Vec {
    if (q.norm() > radius) throw Error(ErrorKind::ChartExceeded, "q left the chart");
    const FramePoint fp = frame.at(q);
    const Vec zp = z0 + p;
    Vec curvature = Vec::Zero(t0.rows());
    if (!q.isZero(0.0))
      for (std::size_t k = 0; k < kGaussNodes.size(); ++k)
        curvature += kGaussWeights[k] * ((t0 - frame.chart().tangent(kGaussNodes[k] * q)) * q);
    return -hmap.h(fp.xi, fp.nu * zp) + curvature + (nu0 - fp.nu) * zp;
  };
}

FixedPoint solve_phase_equation(const HFunction& H, const Mat& A, double eps, int m, const PhaseConfig& cfg) {
  const Eigen::Index n = A.rows();
  const Eigen::PartialPivLU<Mat> lu(A);
  auto map = [&](const Vec& v) -> Vec { return lu.solve(H(v.head(m), v.tail(n - m))); };

  for (const Vec& u : sphere_directions(static_cast<int>(n), cfg.boundary_samples)) {
    const double image = map(eps * u).norm();
    if (image > eps)
      throw Error(ErrorKind::SelfMapViolated, "|A^-1 H| = " + std::to_string(image) + " exceeds eps = " +
                                                  std::to_string(eps) + " on the boundary");
  }

  auto iterate = [&](Vec v, FixedPoint& out) {
    double lambda = 1.0;
    Vec image = map(v);
    double res = (image - v).norm();
    for (int it = 0; it < cfg.max_iter; ++it) {
      out.iterations = it;
      if (res <= cfg.fixed_point_tol) break;
      const Vec next = v + lambda * (image - v);
      const Vec next_image = map(next);
      const double next_res = (next_image - next).norm();
      if (next_res > res && lambda > 1.0 / 1024.0) {
        lambda *= 0.5;
        continue;
      }
      v = next;
      image = next_image;
      res = next_res;
    }
    out.residual = res;
    return v;
  };

  FixedPoint fp;
  Vec v = iterate(Vec::Zero(n), fp);
  if (fp.residual > cfg.fixed_point_tol) {
    const std::function<double(const Vec&)> objective = [&](const Vec& x) {
      const double excess = std::max(0.0, x.norm() - eps);
      return (map(x) - x).squaredNorm() + 1e6 * excess * excess;
    };
    v = nelder_mead(objective, v, 0.25 * eps, 4000);
    fp.residual = (map(v) - v).norm();
    fp.used_fallback = true;
    if (fp.residual > cfg.fixed_point_tol || v.norm() > eps * (1.0 + 1e-12))
      throw Error(ErrorKind::NonConvergent,
                  "phase equation did not converge; final residual " + std::to_string(fp.residual));
  }
  fp.q = v.head(m);
  fp.p = v.tail(n - m);

  for (const Vec& seed : cfg.extra_seeds) {
    if (seed.size() != n || seed.norm() > eps) continue;
    FixedPoint other;
    const Vec w = iterate(seed, other);
    if (other.residual > cfg.fixed_point_tol || (w - v).norm() <= 1e-8) continue;
    bool known = false;
    for (const Vec& a : fp.alternates) known = known || (a - w).norm() <= 1e-8;
    if (!known) fp.alternates.push_back(w);
  }
  return fp;
}

DecayFit fit_decay(const SystemSpec& sys, const Vec& x, const Vec& xi, double t0, double t1, int samples,
                   Tolerance tol) {
  Vec a = flow(sys, x, t0, tol), b = flow(sys, xi, t0, tol);
  std::vector<double> ts, logs;
  double t = t0, last = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double next = t0 + (t1 - t0) * k / (samples - 1);
    if (next > t) {
      a = flow_to(sys, a, t, next, tol);
      b = flow_to(sys, b, t, next, tol);
      t = next;
    }
    last = (a - b).norm();
    // Separations at the integration noise floor carry no rate information.
    if (last > 1e-13) {
      ts.push_back(t);
      logs.push_back(std::log(last));
    }
  }
  DecayFit fit;
  fit.separation_end = last;
  if (ts.size() < 2) {
    fit.rate = std::numeric_limits<double>::infinity();
    return fit;
  }
  const double nn = static_cast<double>(ts.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += logs[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * logs[i];
  }
  const double slope = (nn * stl - st * sl) / (nn * stt - st * st);
  fit.rate = -slope;
  fit.prefactor = std::exp((sl - slope * st) / nn);
  return fit;
}

SplittingProvider cached_splitting_provider(const SystemSpec& sys, const SplittingOptions& opts, std::size_t capacity) {
  struct Cache {
    std::mutex mutex;
    std::list<std::pair<Vec, SplittingFrame>> entries;
  };
  auto cache = std::make_shared<Cache>();
  return [&sys, opts, capacity, cache](const Vec& x) {
    {
      std::lock_guard lock(cache->mutex);
      for (const auto& [key, frame] : cache->entries)
        if (key.size() == x.size() && key == x) return frame;
    }
    SplittingFrame frame = splitting_at(sys, sys.manifold, x, opts);
    std::lock_guard lock(cache->mutex);
    cache->entries.emplace_back(x, frame);
    if (cache->entries.size() > capacity) cache->entries.pop_front();
    return frame;
  };
}

PhaseSolver::PhaseSolver(const SystemSpec& sys, HyperbolicConstants k, SplittingOptions split, SolverConfig solver,
                         PhaseConfig cfg)
    : sys_(&sys), cfg_(std::move(cfg)), fibers_(sys, cached_splitting_provider(sys, split), std::move(k), solver) {}

double PhaseSolver::default_eps() const {
  return cfg_.eps > 0.0 ? cfg_.eps : std::min(constants().r / 4.0, sys_->manifold.chart_radius / 4.0);
}

PhaseResult PhaseSolver::solve(const Vec& x0) const {
  const SystemSpec& sys = *sys_;
  const ManifoldDescriptor& desc = sys.manifold;
  if (x0.size() != sys.dim) throw Error(ErrorKind::InvalidArgument, "query point has the wrong dimension");
  const double dist0 = desc.residual(x0);
  if (!(dist0 < desc.tube_radius))
    throw Error(ErrorKind::OutsideTube, "distance " + std::to_string(dist0) + " to M exceeds the tube radius");
  const HyperbolicConstants& k = constants();

  double eps = default_eps();
  double tau = 0.0;
  for (int attempt = 0; attempt <= cfg_.max_shrink; ++attempt, eps *= 0.5) {
    // Flow into the eps-tube; the fiber through x0 is carried onto the fiber through chi^tau(x0).
    if (dist0 > eps / 4.0) tau = std::max(tau, cfg_.reduce_step * std::ceil(std::log(dist0 / (eps / 4.0)) / k.alpha / cfg_.reduce_step));
    Vec x;
    std::optional<NormalFrame> frame;
    Vec z0;
    for (;;) {
      if (tau > cfg_.max_reduction_time)
        throw Error(ErrorKind::OutsideTube, "orbit does not enter the eps-tube within the reduction time");
      x = tau > 0.0 ? flow(sys, x0, tau, cfg_.verify_tol) : x0;
      Chart chart = build_chart(desc, desc.project(x));
      NormalFrame first(chart, fibers_.splitting(), cfg_.delta_min);
      const TubularPoint tp = tubular_decompose(first, x);
      frame.emplace(build_chart(desc, tp.xi), fibers_.splitting(), cfg_.delta_min);
      z0 = frame->nu0().transpose() * (x - frame->chart().base);
      if (z0.norm() <= eps / 2.0) break;
      tau += cfg_.reduce_step;
    }

    const HFunction H = build_H(*frame, z0, fibers_, eps);
    FixedPoint fp;
    try {
      fp = solve_phase_equation(H, frame->frame_matrix(), eps, frame->chart().dim, cfg_);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SelfMapViolated && attempt < cfg_.max_shrink) continue;
      throw;
    }

    PhaseResult res;
    res.x0 = x0;
    res.eps = eps;
    res.reduction_time = tau;
    res.reduced_point = x;
    res.q_star = fp.q;
    res.p_star = fp.p;
    res.iterations = fp.iterations;
    res.used_fallback = fp.used_fallback;
    res.alternates = fp.alternates;
    const FramePoint star = frame->at(fp.q);
    res.reduced_xi = star.xi;
    res.zeta_star = star.nu * (z0 + fp.p);
    Vec h = Vec::Zero(x.size());
    if (!res.zeta_star.isZero(0.0)) {
      const FiberSolution sol = fibers_.solve(star.xi, res.zeta_star);
      h = h_map(sys, *fibers_.kernel(star.xi), sol);
      res.C0_measured = quadratic_defect(sol);
    }
    res.residual = (star.xi + res.zeta_star + h - x).norm();
    res.xi_star = tau > 0.0 ? desc.project(flow(sys, star.xi, -tau, cfg_.verify_tol)) : star.xi;

    res.certificate_ok = true;
    Vec a = x, b = star.xi;
    for (int s = 0; s <= 32; ++s) {
      const double t = cfg_.fit_t1 * s / 32.0;
      if (s > 0) {
        const double prev = cfg_.fit_t1 * (s - 1) / 32.0;
        a = flow_to(sys, a, prev, t, cfg_.verify_tol);
        b = flow_to(sys, b, prev, t, cfg_.verify_tol);
      }
      if ((a - b).norm() > k.R * std::exp(-k.alpha * t) + 1e-12) res.certificate_ok = false;
    }
    res.decay = fit_decay(sys, x0, res.xi_star, cfg_.fit_t0, cfg_.fit_t1, cfg_.fit_samples, cfg_.verify_tol);
    res.verified = res.decay.rate >= 0.9 * k.alpha;
    return res;
  }
  throw Error(ErrorKind::SelfMapViolated, "eps shrink limit reached");
}

std::vector<PhaseOutcome> PhaseSolver::solve_batch(const std::vector<Vec>& points, int workers) const {
  std::vector<PhaseOutcome> out(points.size());
  const long count = static_cast<long>(points.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (long i = 0; i < count; ++i) {
    try {
      out[i].result = solve(points[i]);
    } catch (const Error& e) {
      out[i].error = e.kind();
      out[i].message = e.what();
    }
  }
  return out;
}

FiberSample sample_fiber(const FiberSolver& solver, const Vec& xi, double radius, int count) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "fiber sample needs at least one point");
  const SplittingFrame frame = solver.splitting()(xi);
  const int nm = frame.n_minus();
  FiberSample out;
  out.xi = xi;
  for (int j = 0; j < count; ++j) {
    Vec eta = Vec::Zero(xi.size());
    if (count > 1) {
      if (nm == 1) {
        eta = radius * (-1.0 + 2.0 * j / (count - 1)) * frame.basis_minus.col(0).normalized();
      } else {
        const Vec u = 2.0 * halton_point(j + 1, nm) - Vec::Ones(nm);
        const Vec dir = frame.basis_minus * u;
        eta = radius * (j + 1.0) / count * dir.normalized();
      }
    }
    out.radius = std::max(out.radius, eta.norm());
    const Vec point = xi + eta + solver.h(xi, eta);
    out.eta.push_back(eta);
    out.points.push_back(point);
    out.decay_rates.push_back(
        eta.isZero(0.0) ? std::numeric_limits<double>::infinity()
                        : fit_decay(solver.system(), point, xi, 1.0, 8.0, 29, Tolerance{1e-12, 1e-14}).rate);
  }
  return out;
}

InvarianceReport verify_fiber_invariance(const FiberSolver& solver, const FiberSample& sample, double s,
                                         double threshold) {
  const SystemSpec& sys = solver.system();
  const Tolerance tol{1e-12, 1e-14};
  InvarianceReport rep;
  rep.s = s;
  const Vec xis = s == 0.0 ? sample.xi : flow(sys, sample.xi, s, tol);
  const SplittingFrame frame = solver.splitting()(xis);
  for (const Vec& x : sample.points) {
    const Vec d = (s == 0.0 ? x : flow(sys, x, s, tol)) - xis;
    const Vec eta = frame.proj_minus * d;
    const Vec rest = d - eta;
    const double dist = (rest - solver.h(xis, eta)).norm();
    rep.distances.push_back(dist);
    rep.max_distance = std::max(rep.max_distance, dist);
  }
  rep.pass = rep.max_distance <= threshold;
  return rep;
}

DisjointnessReport verify_disjointness(const FiberSolver& solver, const Vec& xi, const Vec& xi_prime, double radius,
                                       int count) {
  const SystemSpec& sys = solver.system();
  const Tolerance tol{1e-12, 1e-14};
  const double start = (xi - xi_prime).norm();
  const double end = (flow(sys, xi, 8.0, tol) - flow(sys, xi_prime, 8.0, tol)).norm();
  if (start == 0.0 || end < start * std::exp(-4.0 * solver.constants().alpha))
    throw Error(ErrorKind::InvalidArgument, "xi' lies on the stable fiber of xi");
  const FiberSample a = sample_fiber(solver, xi, radius, count);
  const FiberSample b = sample_fiber(solver, xi_prime, radius, count);
  DisjointnessReport rep;
  rep.min_distance = std::numeric_limits<double>::infinity();
  for (const Vec& p : a.points)
    for (const Vec& q : b.points) rep.min_distance = std::min(rep.min_distance, (p - q).norm());
  rep.overlap = rep.min_distance < 1e-6;
  return rep;
}

}  // namespace aphase
