#pragma once

#include "aphase/flow.hpp"
#include "aphase/linalg.hpp"
#include "aphase/splitting.hpp"
#include "aphase/systems.hpp"

#include <vector>

namespace aphase {

/// Discretized Green operator along the orbit of xi on a uniform grid t_i = i dt, i = 0..N:
///
///   (G f)(t_i) = int_0^{t_i} X^{t_i} P^- X^{-s} f(s) ds - int_{t_i}^{T} X^{t_i} (P^+ + P^0) X^{-s} f(s) ds
///
/// The stable part is carried by bases S_i transported backward from a splitting at
/// chi^T xi, the centre-unstable part by bases transported forward from xi. Only
/// per-step block factors are multiplied, so no ill-conditioned X^{-s} is ever
/// inverted. Quadrature is composite Simpson (3/8 rule on an odd tail, a four-point end
/// rule when a branch spans a single interval).
class GreenKernel {
 public:
  GreenKernel(const SystemSpec& sys, const Vec& xi, double horizon, double dt, const SplittingProvider& splitting,
              Tolerance tol = kVariationalTolerance);

  std::size_t size() const { return t_.size(); }
  const std::vector<double>& nodes() const { return t_; }
  double dt() const { return dt_; }
  const std::vector<Vec>& states() const { return states_; }
  const SplittingFrame& frame() const { return frame0_; }
  int n_minus() const { return n_minus_; }

  /// X^{t_i} eta for every node; eta must lie in L^-_xi.
  std::vector<Vec> propagate_stable(const Vec& eta) const;

  /// Decomposition f = P^- f + (P^+ + P^0) f at node i in the transported splitting.
  Mat projector_minus(std::size_t i) const;

  /// Serial reference implementation of G f.
  std::vector<Vec> apply_serial(const std::vector<Vec>& f) const;
  /// OpenMP implementation; bitwise identical to apply_serial.
  std::vector<Vec> apply_parallel(const std::vector<Vec>& f) const;
  std::vector<Vec> apply(const std::vector<Vec>& f) const { return apply_parallel(f); }

  /// -int_0^T (P^+ + P^0) X^{-s} f(s) ds from the block factors, i.e. (G f)(0).
  Vec tail_integral(const std::vector<Vec>& f) const;
  /// The same integral through LU solves with the cumulative matrices X^{t_j}.
  Vec tail_integral_direct(const std::vector<Vec>& f) const;

  /// Direct kernel matrix X^{t_i} P X^{-t_j} from the cumulative fundamental matrices
  /// (P = P^- for i > j, -(P^+ + P^0) otherwise). Reference only: loses accuracy for large t_j.
  Mat direct_matrix(std::size_t i, std::size_t j) const;
  const std::vector<Mat>& cumulative() const { return x_; }

 private:
  enum class Mode { Serial, Parallel };
  std::vector<Vec> apply_impl(const std::vector<Vec>& f, Mode mode) const;
  void check_input(const std::vector<Vec>& f) const;

  std::vector<double> t_;
  double dt_ = 0.0;
  std::vector<Vec> states_;
  std::vector<Mat> x_;  // X^{t_i}(xi)
  SplittingFrame frame0_;
  int n_ = 0;
  int n_minus_ = 0;
  std::vector<Mat> s_, cu_;        // node bases
  std::vector<Mat> cm_, cc_;       // cumulative block products C_i
  std::vector<Mat> inv_cm_, inv_cc_;
  std::vector<Eigen::PartialPivLU<Mat>> basis_lu_;  // LU of [S_i CU_i]
};

/// Composite Simpson weights on `intervals` equal steps of size h; a single interval
/// uses the trapezoid rule and an odd count >= 3 finishes with the 3/8 rule.
std::vector<double> simpson_weights(std::size_t intervals, double h);

}  // namespace aphase
