#include "aphase/flow.hpp"
#include "aphase/errors.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>

namespace aphase {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

constexpr std::size_t kMaxSteps = 2'000'000;

bool all_finite(const State& x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// Drives a controlled Dormand-Prince stepper from t0 to t1 landing exactly on t1.
template <class Rhs>
void drive(Rhs&& rhs, State& x, double t0, double t1, Tolerance tol, double& dt) {
  if (t0 == t1) return;
  auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(tol.atol, tol.rtol);
  const double sign = t1 > t0 ? 1.0 : -1.0;
  double t = t0;
  if (dt == 0.0 || std::signbit(dt) != std::signbit(sign)) dt = sign * std::min(0.01, std::abs(t1 - t0));
  std::size_t steps = 0;
  while (sign * (t1 - t) > 0.0) {
    bool last = false;
    const double suggested = dt;
    if (sign * (t + dt - t1) >= 0.0) {
      dt = t1 - t;
      last = true;
    }
    const auto res = stepper.try_step(rhs, x, t, dt);
    if (res == odeint::success) {
      if (!all_finite(x)) throw Error(ErrorKind::NonFinite, "state left R^n at t=" + std::to_string(t));
      if (last) {
        t = t1;
        dt = suggested;
      }
    } else if (std::abs(dt) < 1e-13 * std::max(1.0, std::abs(t))) {
      throw Error(ErrorKind::StepSizeUnderflow, "step size underflow at t=" + std::to_string(t));
    }
    if (++steps > kMaxSteps) throw Error(ErrorKind::StepSizeUnderflow, "step budget exhausted at t=" + std::to_string(t));
  }
}

auto state_rhs(const SystemSpec& sys) {
  return [&sys](const State& x, State& dx, double) {
    if (!all_finite(x)) throw Error(ErrorKind::NonFinite, "non-finite state inside right-hand side");
    const Eigen::Map<const Vec> xm(x.data(), sys.dim);
    const Vec v = sys.eval(xm);
    std::copy(v.data(), v.data() + sys.dim, dx.begin());
  };
}

auto augmented_rhs(const SystemSpec& sys) {
  return [&sys](const State& x, State& dx, double) {
    if (!all_finite(x)) throw Error(ErrorKind::NonFinite, "non-finite state inside right-hand side");
    const int n = sys.dim;
    const Eigen::Map<const Vec> xm(x.data(), n);
    const Eigen::Map<const Mat> phi(x.data() + n, n, n);
    const Vec v = sys.eval(xm);
    std::copy(v.data(), v.data() + n, dx.begin());
    Eigen::Map<Mat> dphi(dx.data() + n, n, n);
    dphi.noalias() = sys.jacobian(xm) * phi;
  };
}

State to_state(const Vec& x) { return State(x.data(), x.data() + x.size()); }

}  // namespace

Vec flow_to(const SystemSpec& sys, const Vec& x0, double t0, double t1, Tolerance tol) {
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw Error(ErrorKind::InvalidArgument, "time span must be finite");
  if (!(tol.rtol > 0) || !(tol.atol > 0)) throw Error(ErrorKind::InvalidArgument, "tolerances must be positive");
  State x = to_state(x0);
  double dt = 0.0;
  drive(state_rhs(sys), x, t0, t1, tol, dt);
  return Eigen::Map<Vec>(x.data(), sys.dim);
}

VariationalStep variational_step(const SystemSpec& sys, const Vec& x0, double t0, double t1, Tolerance tol) {
  const int n = sys.dim;
  State x(static_cast<std::size_t>(n + n * n), 0.0);
  std::copy(x0.data(), x0.data() + n, x.begin());
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(n + i * n + i)] = 1.0;
  double dt = 0.0;
  drive(augmented_rhs(sys), x, t0, t1, tol, dt);
  VariationalStep out;
  out.state = Eigen::Map<Vec>(x.data(), n);
  out.matrix = Eigen::Map<Mat>(x.data() + n, n, n);
  return out;
}

std::vector<double> uniform_grid(double horizon, double max_dt) {
  if (!std::isfinite(horizon)) throw Error(ErrorKind::InvalidArgument, "horizon must be finite");
  if (!(max_dt > 0)) throw Error(ErrorKind::InvalidArgument, "grid spacing must be positive");
  const auto cells = static_cast<std::size_t>(std::max(1.0, std::ceil(std::abs(horizon) / max_dt - 1e-12)));
  std::vector<double> grid(cells + 1);
  if (horizon == 0.0) return {0.0};
  for (std::size_t i = 0; i <= cells; ++i) grid[i] = horizon * static_cast<double>(i) / static_cast<double>(cells);
  grid.back() = horizon;
  return grid;
}

TrajectorySegment::TrajectorySegment(const SystemSpec& sys, Vec base, std::vector<double> grid,
                                     std::vector<Vec> states, Tolerance tol)
    : sys_(&sys), base_(std::move(base)), grid_(std::move(grid)), states_(std::move(states)), tol_(tol) {}

std::size_t TrajectorySegment::nearest_node(double t) const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid_.size(); ++i)
    if (std::abs(grid_[i] - t) < std::abs(grid_[best] - t)) best = i;
  return best;
}

Vec TrajectorySegment::at(double t) const {
  const double lo = std::min(grid_.front(), grid_.back());
  const double hi = std::max(grid_.front(), grid_.back());
  if (t < lo - 1e-12 || t > hi + 1e-12) throw Error(ErrorKind::InvalidArgument, "time outside trajectory span");
  const std::size_t i = nearest_node(t);
  if (grid_[i] == t) return states_[i];
  return flow_to(*sys_, states_[i], grid_[i], t, tol_);
}

TrajectorySegment integrate(const SystemSpec& sys, const Vec& x0, double horizon, Tolerance tol, double max_dt) {
  if (x0.size() != sys.dim) throw Error(ErrorKind::InvalidArgument, "initial point has wrong dimension");
  auto grid = uniform_grid(horizon, max_dt);
  std::vector<Vec> states{x0};
  State x = to_state(x0);
  double dt = 0.0;
  auto rhs = state_rhs(sys);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    drive(rhs, x, grid[i - 1], grid[i], tol, dt);
    states.emplace_back(Eigen::Map<Vec>(x.data(), sys.dim));
  }
  return TrajectorySegment(sys, x0, std::move(grid), std::move(states), tol);
}

CocycleCache::CocycleCache(TrajectorySegment segment, std::vector<Mat> matrices, std::vector<Mat> factors,
                           const SystemSpec& sys, Tolerance tol)
    : sys_(&sys), segment_(std::move(segment)), matrices_(std::move(matrices)), factors_(std::move(factors)),
      tol_(tol) {
  direction_ = segment_.grid().back() < 0.0 ? Direction::Backward : Direction::Forward;
}

Mat CocycleCache::matrix_at(double t) const {
  const auto& g = segment_.grid();
  const double lo = std::min(g.front(), g.back());
  const double hi = std::max(g.front(), g.back());
  if (t < lo - 1e-12 || t > hi + 1e-12) throw Error(ErrorKind::InvalidArgument, "time outside cocycle span");
  const std::size_t i = segment_.nearest_node(t);
  if (g[i] == t) return matrices_[i];
  const auto step = variational_step(*sys_, segment_.states()[i], g[i], t, tol_);
  return step.matrix * matrices_[i];
}

CocycleCache variational(const SystemSpec& sys, const Vec& x0, double horizon, Tolerance tol, double max_dt) {
  if (x0.size() != sys.dim) throw Error(ErrorKind::InvalidArgument, "initial point has wrong dimension");
  auto grid = uniform_grid(horizon, max_dt);
  const int n = sys.dim;
  std::vector<Vec> states{x0};
  std::vector<Mat> matrices{Mat::Identity(n, n)};
  std::vector<Mat> factors;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    auto step = variational_step(sys, states.back(), grid[i - 1], grid[i], tol);
    matrices.push_back(step.matrix * matrices.back());
    factors.push_back(std::move(step.matrix));
    states.push_back(std::move(step.state));
  }
  TrajectorySegment seg(sys, x0, std::move(grid), std::move(states), tol);
  return CocycleCache(std::move(seg), std::move(matrices), std::move(factors), sys, tol);
}

Mat compose(const CocycleCache& cache, double t, double s) {
  const Mat xt = cache.matrix_at(t);
  const Mat xs = cache.matrix_at(s);
  const double cond = condition_number(xs);
  if (!(cond <= 1e12))
    throw Error(ErrorKind::SingularPropagator, "cond(X^s) = " + std::to_string(cond) + " exceeds 1e12");
  // X^t [X^s]^{-1} = (X^{-T}_s X^T_t)^T
  Eigen::PartialPivLU<Mat> lu(xs.transpose());
  return lu.solve(xt.transpose()).transpose();
}

}  // namespace aphase
