#pragma once

#include "aphase/flow.hpp"
#include "aphase/linalg.hpp"
#include "aphase/systems.hpp"

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace aphase {

/// Hyperbolic splitting R^n = L^- (+) L^+ (+) L^0 at a point of M.
///
/// L^0 holds the neutral directions. On a limit cycle it is exactly span v(x);
/// on a torus product it is the whole tangent plane of the torus (the flow
/// inside the torus is neither contracting nor expanding).
struct SplittingFrame {
  Vec point;
  Mat basis_minus;  // n x n_-
  Mat basis_plus;   // n x n_+
  Mat basis_zero;   // n x n_0; first column is v/|v| when v(x) != 0
  Mat proj_minus;
  Mat proj_plus;
  Mat proj_zero;
  Mat basis_k;  // K^- = T_x M  ∩  L^-
  Mat basis_j;  // J^-: orthonormal complement of K^- inside L^-
  std::vector<std::complex<double>> multipliers;  // Floquet multipliers, periodic case only

  int n_minus() const { return static_cast<int>(basis_minus.cols()); }
  int n_plus() const { return static_cast<int>(basis_plus.cols()); }
  int n_zero() const { return static_cast<int>(basis_zero.cols()); }
  /// Orthonormal basis of L^+ (+) L^0.
  Mat center_unstable() const;
};

struct SplittingOptions {
  double unit_tol = 1e-4;       // | |lambda| - 1 | below this counts as a unit multiplier
  double gap = 0.1;             // finite-time exponent threshold separating neutral from hyperbolic
  double horizon = 12.0;        // forward horizon T_f of the finite-time dichotomy
  double backward_horizon = 5.0;
  double delta_min = 1e-3;      // minimal angle between J^- and T_x M (radians)
  Tolerance tol = kVariationalTolerance;
};

/// Eigen-splitting of the monodromy X^T(xi) over one period of a limit cycle.
/// Throws NonHyperbolic if more than one multiplier lies within unit_tol of the unit circle.
SplittingFrame splitting_periodic(const SystemSpec& sys, const ManifoldDescriptor& cycle, const Vec& xi,
                                  const SplittingOptions& opts = {});

/// Finite-time dichotomy from singular vectors of X^{T_f}(xi) (stable) and X^{-T_b}(xi)
/// (unstable), with the neutral part taken from T_xM when M carries no contracting
/// tangent directions.
SplittingFrame splitting_general(const SystemSpec& sys, const ManifoldDescriptor& desc, const Vec& xi,
                                 const SplittingOptions& opts = {});

/// Picks splitting_periodic for limit cycles, splitting_general otherwise.
SplittingFrame splitting_at(const SystemSpec& sys, const ManifoldDescriptor& desc, const Vec& xi,
                            const SplittingOptions& opts = {});

using SplittingProvider = std::function<SplittingFrame(const Vec&)>;
SplittingProvider make_splitting_provider(const SystemSpec& sys, const SplittingOptions& opts = {});

/// Transports a splitting along the cached orbit: bases by X^t, projections by
/// P_{chi^t x} = X^t P_x [X^t]^{-1}. K^-/J^- are recomputed from `desc` at the new point.
SplittingFrame transport(const SplittingFrame& frame, const CocycleCache& cache, double t,
                         const ManifoldDescriptor& desc);

/// -ln sigma_min(X^T(xi)) / T. For a hyperbolic cycle this tends to the normal
/// exponent; for a degenerate normal rate it tends to 0 as T grows.
double finite_time_decay_rate(const SystemSpec& sys, const Vec& xi, double horizon,
                              Tolerance tol = kVariationalTolerance);

enum class Provenance { Estimated, User, Measured };
std::string to_string(Provenance p);

/// Constants (c, alpha, K, C, C0, r, R, kappa) of the contraction argument.
struct HyperbolicConstants {
  double c = 1.0;
  double alpha = 0.0;
  double K = 1.0;
  double C = 0.0;
  double C0 = 0.0;  // measured a posteriori; NaN until then
  double r = 0.0;
  double R = 0.0;
  double kappa = 0.0;
  std::map<std::string, Provenance> provenance;
  int shrink_steps = 0;

  /// c r + 11/(12 alpha) K C R^2 <= R
  bool invariant_set_ok() const;
  /// c r + 11/(6 alpha) K C R^2 <= R
  bool derivative_set_ok() const;
  /// kappa = 11 K C R / (6 alpha) < 1
  bool contraction_ok() const;
  bool valid() const { return invariant_set_ok() && derivative_set_ok() && contraction_ok(); }
};

struct ConstantOverrides {
  std::map<std::string, double> values;  // keys: c, alpha, K, C, r, R
};

struct ConstantsOptions {
  int samples = 16;
  double sample_horizon = 5.0;   // horizon for (c, alpha)
  double node_dt = 0.25;
  int lipschitz_probes = 64;     // per sample point
  double alpha_margin = 0.05;
  int max_shrink = 20;
  std::uint64_t seed = 0;  // shifts the Halton probe sequence
  SplittingOptions splitting;
};

/// Estimates the constants at sample points of M and shrinks (r, R) by 1/2 until the
/// invariance and contraction conditions hold. Throws ConstantsInfeasible if they never do
/// (including when the splitting itself is degenerate).
HyperbolicConstants estimate_constants(const SystemSpec& sys, const ManifoldDescriptor& desc,
                                       double r_init = 0.0, double R_init = 0.5,
                                       const ConstantOverrides& overrides = {},
                                       const ConstantsOptions& opts = {});

/// Lipschitz constant of v' sampled over the ball of radius R around the sample points.
/// Probe directions are Halton points starting at index `offset`.
double estimate_jacobian_lipschitz(const SystemSpec& sys, const std::vector<Vec>& points, double R, int probes,
                                   std::size_t offset = 0);

}  // namespace aphase
