#pragma once

#include "aphase/linalg.hpp"
#include "aphase/systems.hpp"

#include <vector>

namespace aphase {

struct Tolerance {
  double rtol = 1e-9;
  double atol = 1e-11;
};

/// Variational solves feed the constant estimates; they default tighter.
inline constexpr Tolerance kVariationalTolerance{1e-9, 1e-11};

/// Single adaptive Dormand-Prince 5(4) solve of x' = v(x) from t0 to t1 (t1 < t0 allowed).
/// Throws StepSizeUnderflow if the step size collapses, NonFinite if the state leaves R^n.
Vec flow_to(const SystemSpec& sys, const Vec& x0, double t0, double t1, Tolerance tol = {});

/// Convenience: chi^t(x0).
inline Vec flow(const SystemSpec& sys, const Vec& x0, double t, Tolerance tol = {}) {
  return flow_to(sys, x0, 0.0, t, tol);
}

/// State and fundamental matrix X^{t1-t0}(x0) of the variational system y' = v'(chi^t x0) y.
struct VariationalStep {
  Vec state;
  Mat matrix;
};
VariationalStep variational_step(const SystemSpec& sys, const Vec& x0, double t0, double t1,
                                 Tolerance tol = kVariationalTolerance);

/// Node grid 0 = t_0, ..., t_N = horizon (horizon may be negative) with spacing <= max_dt.
std::vector<double> uniform_grid(double horizon, double max_dt);

/// Trajectory chi^t(x) sampled on a strictly monotone grid starting at t = 0.
class TrajectorySegment {
 public:
  TrajectorySegment() = default;
  TrajectorySegment(const SystemSpec& sys, Vec base, std::vector<double> grid, std::vector<Vec> states,
                    Tolerance tol);

  const Vec& base_point() const { return base_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Vec>& states() const { return states_; }
  std::size_t size() const { return grid_.size(); }

  /// chi^t(x) for any t inside the grid span, re-integrated from the nearest node.
  Vec at(double t) const;

  /// Index of the node nearest to t.
  std::size_t nearest_node(double t) const;

 private:
  const SystemSpec* sys_ = nullptr;
  Vec base_;
  std::vector<double> grid_;
  std::vector<Vec> states_;
  Tolerance tol_;
};

/// Integrates x' = v(x) over [0, horizon] and records the states on a grid of spacing <= max_dt.
TrajectorySegment integrate(const SystemSpec& sys, const Vec& x0, double horizon, Tolerance tol = {},
                            double max_dt = 0.5);

/// Trajectory plus the fundamental matrices X^{t_i}(x) on the same grid.
///
/// Matrices are formed by node-to-node composition: each factor
/// X^{t_{i+1}-t_i}(chi^{t_i} x) is integrated from the identity over one grid cell.
/// Off-grid queries re-integrate from the nearest node; matrices are never interpolated.
class CocycleCache {
 public:
  enum class Direction { Forward, Backward };

  CocycleCache() = default;
  CocycleCache(TrajectorySegment segment, std::vector<Mat> matrices, std::vector<Mat> factors,
               const SystemSpec& sys, Tolerance tol);

  const TrajectorySegment& segment() const { return segment_; }
  const std::vector<Mat>& matrices() const { return matrices_; }
  /// factors()[i] = X^{t_{i+1}-t_i}(chi^{t_i} x)
  const std::vector<Mat>& factors() const { return factors_; }
  Direction direction() const { return direction_; }
  double horizon() const { return segment_.grid().back(); }

  /// X^t(x) for t inside the grid span.
  Mat matrix_at(double t) const;
  Vec state_at(double t) const { return segment_.at(t); }

 private:
  const SystemSpec* sys_ = nullptr;
  TrajectorySegment segment_;
  std::vector<Mat> matrices_;
  std::vector<Mat> factors_;
  Direction direction_ = Direction::Forward;
  Tolerance tol_;
};

CocycleCache variational(const SystemSpec& sys, const Vec& x0, double horizon,
                         Tolerance tol = kVariationalTolerance, double max_dt = 0.5);

/// X^{t-s}(chi^s x) = X^t(x) [X^s(x)]^{-1}, via an LU solve. Throws SingularPropagator if
/// cond(X^s(x)) > 1e12.
Mat compose(const CocycleCache& cache, double t, double s);

}  // namespace aphase
