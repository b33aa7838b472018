#pragma once

#include "aphase/errors.hpp"
#include "aphase/lp_solver.hpp"
#include "aphase/manifold.hpp"
#include "aphase/splitting.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace aphase {

struct PhaseConfig {
  double eps = 0.0;  // 0: min(r/4, chart radius/4)
  int max_shrink = 10;
  int boundary_samples = 16;
  double fixed_point_tol = 1e-10;
  int max_iter = 500;
  double fit_t0 = 1.0;
  double fit_t1 = 8.0;
  int fit_samples = 29;
  double reduce_step = 0.25;
  double max_reduction_time = 40.0;
  double delta_min = 1e-3;
  Tolerance verify_tol{1e-12, 1e-14};
  std::vector<Vec> extra_seeds;  // additional starting points (q, p) for the fixed-point iteration
};

/// Separation fit |chi^t(x0) - chi^t(xi*)| ~ prefactor e^{-rate t}.
struct DecayFit {
  double rate = 0.0;
  double prefactor = 0.0;
  double separation_end = 0.0;
};

struct PhaseResult {
  Vec x0;
  Vec xi_star;
  Vec zeta_star;  // in J^- at the reduced base point
  Vec q_star;
  Vec p_star;
  double residual = 0.0;  // |xi + zeta + h(xi, zeta) - x| at the reduced point
  DecayFit decay;
  double eps = 0.0;
  double reduction_time = 0.0;  // x0 was flowed this long into the eps-tube before solving
  Vec reduced_point;
  Vec reduced_xi;
  bool certificate_ok = false;  // |chi^t(x) - chi^t(xi)| <= R e^{-alpha t} on [0, fit_t1]
  bool verified = false;        // decay rate >= 0.9 alpha
  double C0_measured = 0.0;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<Vec> alternates;  // further fixed points (q, p) found from extra seeds
};

/// Outcome of one query in a batch: a result or the error that stopped it.
struct PhaseOutcome {
  std::optional<PhaseResult> result;
  std::optional<ErrorKind> error;
  std::string message;
};

/// H(q, p) = -h(xi(q), nu(q)(z0 + p)) + int_0^1 [xi'(0) - xi'(sq)] q ds + [nu(0) - nu(q)](z0 + p)
using HFunction = std::function<Vec(const Vec& q, const Vec& p)>;

/// Throws ChartExceeded if the chart does not cover the 2 eps ball.
HFunction build_H(const NormalFrame& frame, const Vec& z0, const FiberSolver& hmap, double eps);

struct FixedPoint {
  Vec q;
  Vec p;
  double residual = 0.0;
  int iterations = 0;
  bool used_fallback = false;
  std::vector<Vec> alternates;
};

/// Solves (q, p) = A^{-1} H(q, p) on the closed eps ball. Throws SelfMapViolated if
/// |A^{-1} H| > eps somewhere on the sampled boundary, NonConvergent if neither the damped
/// iteration nor the Nelder-Mead fallback reaches the tolerance.
FixedPoint solve_phase_equation(const HFunction& H, const Mat& A, double eps, int m, const PhaseConfig& cfg = {});

/// Least-squares fit of log |chi^t(x) - chi^t(xi)| over [t0, t1].
DecayFit fit_decay(const SystemSpec& sys, const Vec& x, const Vec& xi, double t0, double t1, int samples,
                   Tolerance tol);

/// Asymptotic phase of points near M.
class PhaseSolver {
 public:
  PhaseSolver(const SystemSpec& sys, HyperbolicConstants k, SplittingOptions split = {}, SolverConfig solver = {},
              PhaseConfig cfg = {});

  /// Throws OutsideTube beyond the tube radius; VerificationFailed is not thrown, see PhaseResult::verified.
  PhaseResult solve(const Vec& x0) const;
  /// Runs queries on `workers` threads; results are in input order.
  std::vector<PhaseOutcome> solve_batch(const std::vector<Vec>& points, int workers) const;

  const FiberSolver& fibers() const { return fibers_; }
  const HyperbolicConstants& constants() const { return fibers_.constants(); }
  const PhaseConfig& config() const { return cfg_; }
  double default_eps() const;

 private:
  const SystemSpec* sys_;
  PhaseConfig cfg_;
  FiberSolver fibers_;
};

/// Splitting provider memoizing the last few points.
SplittingProvider cached_splitting_provider(const SystemSpec& sys, const SplittingOptions& opts, std::size_t capacity = 64);

struct FiberSample {
  Vec xi;
  std::vector<Vec> eta;
  std::vector<Vec> points;  // xi + eta + h(xi, eta)
  std::vector<double> decay_rates;
  double radius = 0.0;
};

/// Points of the stable fiber through xi on rays of L^-_xi up to `radius`.
FiberSample sample_fiber(const FiberSolver& solver, const Vec& xi, double radius, int count);

struct InvarianceReport {
  double s = 0.0;
  std::vector<double> distances;
  double max_distance = 0.0;
  bool pass = false;
};

/// Flows every sample point by s and measures its distance to the fiber through chi^s(xi).
InvarianceReport verify_fiber_invariance(const FiberSolver& solver, const FiberSample& sample, double s,
                                         double threshold = 1e-4);

struct DisjointnessReport {
  double min_distance = 0.0;
  bool overlap = false;
};

/// Minimum distance between the sampled fibers through xi and xi'. Throws InvalidArgument
/// if xi' lies on the fiber of xi (separation decays).
DisjointnessReport verify_disjointness(const FiberSolver& solver, const Vec& xi, const Vec& xi_prime, double radius,
                                       int count);

}  // namespace aphase
