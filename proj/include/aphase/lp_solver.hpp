#pragma once

#include "aphase/flow.hpp"
#include "aphase/green.hpp"
#include "aphase/splitting.hpp"

#include <memory>
#include <mutex>
#include <vector>

namespace aphase {

/// w(t, y, xi) = v(chi^t xi + y) - v(chi^t xi) - v'(chi^t xi) y, with chi^t xi given directly.
Vec nonlinearity(const SystemSpec& sys, const Vec& chi, const Vec& y);
Vec nonlinearity(const SystemSpec& sys, const TrajectorySegment& xi_traj, double t, const Vec& y);

struct SolverConfig {
  double T_trunc = 0.0;  // 0: chosen from the tail bound
  double dt = 0.01;
  double picard_tol = 1e-10;
  int max_iter = 200;
  double alpha_weight = 0.0;  // 0: use the constants' alpha
  double min_horizon = 6.0;
  double max_horizon = 60.0;
};

/// Smallest horizon with K C R^2 e^{-2 alpha T} / (2 alpha) < picard_tol, clamped to [min, max].
double tail_bound_horizon(const HyperbolicConstants& k, const SolverConfig& cfg);

struct FiberSolution {
  Vec xi;
  Vec eta;
  std::vector<double> grid;
  std::vector<Vec> y_star;
  std::vector<Vec> linear;  // X^t eta on the grid
  Vec h;                    // y*(0) - eta
  int iterations = 0;
  double weighted_residual = 0.0;
  double max_ratio = 0.0;  // largest successive residual ratio after iteration 2
  std::vector<double> residual_history;
  double alpha_weight = 0.0;
  double picard_tol = 0.0;
  bool certified = false;  // |eta| < r, inside the ball where contraction is proven
};

/// Picard iteration y_{k+1} = X^t eta + G[w(y_k)] from y_0 = X^t eta.
/// |eta| in [r, R) is attempted but the solution is marked uncertified.
/// Throws NoContraction after three consecutive growing residuals, BoundViolated if an
/// iterate leaves |y(t)| <= R e^{-alpha t}.
FiberSolution solve_fiber(const SystemSpec& sys, const GreenKernel& kernel, const HyperbolicConstants& k,
                          const Vec& eta, const SolverConfig& cfg = {});

/// h(xi, eta) through the explicit integral, cross-checked against y*(0) - eta.
/// Throws InconsistentH if the two differ by more than 10 picard_tol.
Vec h_map(const SystemSpec& sys, const GreenKernel& kernel, const FiberSolution& sol);

/// sup_t e^{alpha t} |y*(t) - X^t eta| / |eta|^2
double quadratic_defect(const FiberSolution& sol);

/// Builds and caches Green kernels per base point and solves fibers on them.
/// Thread-safe; `sys` must outlive the solver.
class FiberSolver {
 public:
  FiberSolver(const SystemSpec& sys, SplittingProvider splitting, HyperbolicConstants k, SolverConfig cfg = {});

  std::shared_ptr<const GreenKernel> kernel(const Vec& xi) const;
  FiberSolution solve(const Vec& xi, const Vec& eta) const;
  /// h(xi, eta), integral form; zero for eta = 0 without building a kernel.
  Vec h(const Vec& xi, const Vec& eta) const;

  const HyperbolicConstants& constants() const { return k_; }
  const SolverConfig& config() const { return cfg_; }
  const SplittingProvider& splitting() const { return splitting_; }
  const SystemSpec& system() const { return *sys_; }
  double horizon() const { return horizon_; }

 private:
  const SystemSpec* sys_;
  SplittingProvider splitting_;
  HyperbolicConstants k_;
  SolverConfig cfg_;
  double horizon_;
  mutable std::mutex mutex_;
  mutable std::vector<std::pair<Vec, std::shared_ptr<const GreenKernel>>> cache_;
};

}  // namespace aphase
