#pragma once

#include "aphase/linalg.hpp"
#include "aphase/splitting.hpp"
#include "aphase/systems.hpp"

#include <functional>
#include <mutex>
#include <vector>

namespace aphase {

/// Local parametrization q -> xi(q) of M around xi(0) = base, with an
/// orthonormal tangent frame at q = 0.
struct Chart {
  Vec base;
  int dim = 0;
  double radius = 1.0;
  double tube_radius = 0.5;
  std::function<Vec(const Vec&)> map;
  std::function<Mat(const Vec&)> tangent;  // columns d xi / d q_i
};

/// Throws OffManifold if xi0 is farther than `on_manifold_tol` from M.
Chart build_chart(const ManifoldDescriptor& desc, const Vec& xi0, double radius = 0.0,
                  double on_manifold_tol = 1e-7);

/// Everything the normal frame knows at one chart point.
struct FramePoint {
  Vec q;
  Vec xi;
  Mat tangent;
  Mat nu;  // orthonormal basis of J^- at xi(q)
  SplittingFrame splitting;
};

/// Orthonormal frame nu(q) of J^- along a chart.
///
/// nu(q) is obtained by projecting nu(0) onto J^-_{xi(q)} and re-orthonormalizing,
/// so the frame is continuous in q without sign flips. Thread-safe; recent
/// evaluations are memoized since every one costs a splitting computation.
class NormalFrame {
 public:
  NormalFrame(Chart chart, SplittingProvider provider, double delta_min);

  const Chart& chart() const { return chart_; }
  int codim() const { return static_cast<int>(nu0_.cols()); }
  const Mat& nu0() const { return nu0_; }
  const FramePoint& origin() const { return origin_; }
  double delta_min() const { return delta_min_; }

  /// Frame at chart coordinates q. Throws DegenerateAngle if J^- and T_xi M get closer than delta_min.
  FramePoint at(const Vec& q) const;

  /// Frame at q seeded from an arbitrary previous frame (used to walk along long paths).
  FramePoint at_seeded(const Vec& q, const Mat& seed) const;

  /// A = [xi'_{q_1}(0) ... xi'_{q_m}(0) nu_1(0) ... nu_{n-m}(0)]
  Mat frame_matrix() const;

 private:
  FramePoint compute(const Vec& q, const Mat& seed) const;

  Chart chart_;
  SplittingProvider provider_;
  double delta_min_;
  Mat nu0_;
  FramePoint origin_;
  mutable std::mutex mutex_;
  mutable std::vector<FramePoint> memo_;
};

/// Orientation convention for nu(0): each column's largest-magnitude entry is positive.
NormalFrame build_normal_frame(const Chart& chart, SplittingProvider provider, double delta_min = 1e-3);

/// Point of the tubular neighbourhood xi(q) + nu(q) z.
struct TubularPoint {
  Vec q;
  Vec z;
  Vec xi;
  Vec zeta;
  double residual = 0.0;
  int iterations = 0;
};

/// Solves xi(q) + nu(q) z = x by Newton's method (tol 1e-12, at most 50 iterations).
/// Throws OutsideTube if the iteration leaves the chart or |z| reaches the tube radius.
TubularPoint tubular_decompose(const NormalFrame& frame, const Vec& x, double tol = 1e-12, int max_iter = 50);

/// Walks once around a limit cycle carrying nu along; true if it returns with reversed orientation.
bool detect_holonomy_flip(const NormalFrame& frame, const ManifoldDescriptor& desc, int steps = 32);

/// Limit cycle described numerically from the flow: chart by flow time scaled by the base speed,
/// projection onto a sampled orbit refined by golden-section search. `sys` must outlive the result.
ManifoldDescriptor make_numeric_cycle(const SystemSpec& sys, const Vec& seed, double period,
                                      int orbit_samples = 512);

}  // namespace aphase
