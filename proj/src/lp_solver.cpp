#include "aphase/lp_solver.hpp"
#include "aphase/errors.hpp"

#include <algorithm>
#include <cmath>

namespace aphase {

Vec nonlinearity(const SystemSpec& sys, const Vec& chi, const Vec& y) {
  return sys.eval(chi + y) - sys.eval(chi) - sys.jacobian(chi) * y;
}

Vec nonlinearity(const SystemSpec& sys, const TrajectorySegment& xi_traj, double t, const Vec& y) {
  return nonlinearity(sys, xi_traj.at(t), y);
}

double tail_bound_horizon(const HyperbolicConstants& k, const SolverConfig& cfg) {
  if (cfg.T_trunc > 0.0) return cfg.T_trunc;
  const double scale = k.K * k.C * k.R * k.R / (2.0 * k.alpha * cfg.picard_tol);
  const double t = scale > 1.0 ? std::log(scale) / (2.0 * k.alpha) : 0.0;
  return std::clamp(std::ceil(t + 0.5), cfg.min_horizon, cfg.max_horizon);
}

FiberSolution solve_fiber(const SystemSpec& sys, const GreenKernel& kernel, const HyperbolicConstants& k,
                          const Vec& eta, const SolverConfig& cfg) {
  const double alpha = cfg.alpha_weight > 0.0 ? cfg.alpha_weight : k.alpha;
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "weight exponent must be positive");
  if (kernel.dt() > 0.1 / alpha + 1e-12)
    throw Error(ErrorKind::InvalidArgument, "grid step does not resolve the exponential weight");
  if (eta.norm() >= k.R)
    throw Error(ErrorKind::BoundViolated, "|eta| = " + std::to_string(eta.norm()) + " is not below R");

  const auto& t = kernel.nodes();
  const auto& chi = kernel.states();
  const std::size_t count = t.size();
  std::vector<Mat> jac(count);
  std::vector<Vec> f0(count);
  for (std::size_t i = 0; i < count; ++i) {
    jac[i] = sys.jacobian(chi[i]);
    f0[i] = sys.eval(chi[i]);
  }
  std::vector<double> weight(count);
  for (std::size_t i = 0; i < count; ++i) weight[i] = std::exp(alpha * t[i]);

  FiberSolution sol;
  sol.xi = chi.front();
  sol.eta = eta;
  sol.grid = t;
  sol.alpha_weight = alpha;
  sol.picard_tol = cfg.picard_tol;
  sol.certified = eta.norm() < k.r;
  sol.linear = kernel.propagate_stable(eta);

  double floor = 0.0;
  for (std::size_t i = 0; i < count; ++i) floor = std::max(floor, weight[i] * sol.linear[i].norm());
  floor *= 1e-13;

  std::vector<Vec> y = sol.linear, w(count);
  int growing = 0;
  double previous = 0.0;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    for (std::size_t i = 0; i < count; ++i) w[i] = sys.eval(chi[i] + y[i]) - f0[i] - jac[i] * y[i];
    const std::vector<Vec> g = kernel.apply(w);
    double residual = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const Vec next = sol.linear[i] + g[i];
      if (!next.allFinite()) throw Error(ErrorKind::NonFinite, "Picard iterate is not finite");
      if (next.norm() > k.R * (1.0 + 1e-9) / weight[i])
        throw Error(ErrorKind::BoundViolated, "iterate " + std::to_string(it) + " leaves |y| <= R e^{-alpha t} at t = " +
                                                  std::to_string(t[i]));
      residual = std::max(residual, weight[i] * (next - y[i]).norm());
      y[i] = next;
    }
    sol.residual_history.push_back(residual);
    sol.iterations = it;
    sol.weighted_residual = residual;
    if (it >= 2 && previous > floor && residual > floor) {
      const double ratio = residual / previous;
      if (it >= 3) sol.max_ratio = std::max(sol.max_ratio, ratio);
      growing = ratio > 1.0 ? growing + 1 : 0;
      if (growing >= 3)
        throw Error(ErrorKind::NoContraction, "residual grew for 3 consecutive iterations (last ratio " +
                                                  std::to_string(ratio) + ")");
    }
    previous = residual;
    if (residual <= cfg.picard_tol) break;
  }
  if (sol.weighted_residual > cfg.picard_tol)
    throw Error(ErrorKind::NoContraction, "Picard iteration did not reach tolerance in " +
                                              std::to_string(cfg.max_iter) + " iterations; residual " +
                                              std::to_string(sol.weighted_residual));
  sol.y_star = std::move(y);
  sol.h = sol.y_star.front() - eta;
  return sol;
}

Vec h_map(const SystemSpec& sys, const GreenKernel& kernel, const FiberSolution& sol) {
  const auto& chi = kernel.states();
  std::vector<Vec> w(chi.size());
  for (std::size_t i = 0; i < chi.size(); ++i) w[i] = nonlinearity(sys, chi[i], sol.y_star[i]);
  const Vec direct = kernel.tail_integral_direct(w);
  const double gap = (direct - sol.h).norm();
  if (gap > 10.0 * sol.picard_tol)
    throw Error(ErrorKind::InconsistentH, "h from y*(0) - eta and from the integral differ by " + std::to_string(gap));
  return direct;
}

double quadratic_defect(const FiberSolution& sol) {
  const double e2 = sol.eta.squaredNorm();
  if (!(e2 > 0.0)) return 0.0;
  double sup = 0.0;
  for (std::size_t i = 0; i < sol.grid.size(); ++i)
    sup = std::max(sup, std::exp(sol.alpha_weight * sol.grid[i]) * (sol.y_star[i] - sol.linear[i]).norm());
  return sup / e2;
}

FiberSolver::FiberSolver(const SystemSpec& sys, SplittingProvider splitting, HyperbolicConstants k, SolverConfig cfg)
    : sys_(&sys), splitting_(std::move(splitting)), k_(std::move(k)), cfg_(cfg) {
  horizon_ = tail_bound_horizon(k_, cfg_);
}

std::shared_ptr<const GreenKernel> FiberSolver::kernel(const Vec& xi) const {
  {
    std::lock_guard lock(mutex_);
    for (const auto& [key, ker] : cache_)
      if (key.size() == xi.size() && key == xi) return ker;
  }
  auto ker = std::make_shared<const GreenKernel>(*sys_, xi, horizon_, cfg_.dt, splitting_);
  std::lock_guard lock(mutex_);
  cache_.emplace_back(xi, ker);
  if (cache_.size() > 32) cache_.erase(cache_.begin());
  return ker;
}

FiberSolution FiberSolver::solve(const Vec& xi, const Vec& eta) const {
  return solve_fiber(*sys_, *kernel(xi), k_, eta, cfg_);
}

Vec FiberSolver::h(const Vec& xi, const Vec& eta) const {
  if (eta.isZero(0.0)) return Vec::Zero(xi.size());
  const auto ker = kernel(xi);
  const FiberSolution sol = solve_fiber(*sys_, *ker, k_, eta, cfg_);
  return h_map(*sys_, *ker, sol);
}

}  // namespace aphase
