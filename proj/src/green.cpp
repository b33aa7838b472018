#include "aphase/green.hpp"
#include "aphase/errors.hpp"

#include <cmath>

namespace aphase {

namespace {

Mat thin_q(const Mat& w) {
  Eigen::HouseholderQR<Mat> qr(w);
  return qr.householderQ() * Mat::Identity(w.rows(), w.cols());
}

// Sums of u_j over j in [a, b] with j of the given parity, from parity prefix sums.
struct ParitySums {
  std::vector<Vec> even, odd;

  explicit ParitySums(const std::vector<Vec>& u) : even(u.size()), odd(u.size()) {
    const Eigen::Index d = u.empty() ? 0 : u.front().size();
    Vec e = Vec::Zero(d), o = Vec::Zero(d);
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (j % 2 == 0)
        e += u[j];
      else
        o += u[j];
      even[j] = e;
      odd[j] = o;
    }
  }

  Vec range(std::size_t a, std::size_t b, std::size_t parity) const {
    const auto& p = parity == 0 ? even : odd;
    return a == 0 ? Vec(p[b]) : Vec(p[b] - p[a - 1]);
  }
};

// Composite rule over nodes [a, b]. Each branch integrand is smooth across the split, so a
// single interval borrows two neighbouring nodes for a cubic end rule instead of the trapezoid.
Vec quadrature(const ParitySums& s, const std::vector<Vec>& u, std::size_t a, std::size_t b, double h) {
  const std::size_t count = b - a;
  if (count == 0) return Vec::Zero(u[a].size());
  if (count == 1) {
    if (b + 2 < u.size()) return (h / 24.0) * (9.0 * u[a] + 19.0 * u[b] - 5.0 * u[b + 1] + u[b + 2]);
    if (a >= 2) return (h / 24.0) * (u[a - 2] - 5.0 * u[a - 1] + 19.0 * u[a] + 9.0 * u[b]);
    return 0.5 * h * (u[a] + u[b]);
  }
  auto simpson = [&](std::size_t lo, std::size_t hi) -> Vec {
    return (h / 3.0) * (2.0 * s.range(lo, hi, lo % 2) + 4.0 * s.range(lo, hi, 1 - lo % 2) - u[lo] - u[hi]);
  };
  if (count % 2 == 0) return simpson(a, b);
  Vec tail = (3.0 * h / 8.0) * (u[b - 3] + 3.0 * u[b - 2] + 3.0 * u[b - 1] + u[b]);
  if (count == 3) return tail;
  return simpson(a, b - 3) + tail;
}

}  // namespace

std::vector<double> simpson_weights(std::size_t intervals, double h) {
  std::vector<double> w(intervals + 1, 0.0);
  if (intervals == 0) return w;
  if (intervals == 1) {
    w[0] = w[1] = 0.5 * h;
    return w;
  }
  const std::size_t simpson_end = intervals % 2 == 0 ? intervals : intervals - 3;
  for (std::size_t k = 0; k + 2 <= simpson_end; k += 2) {
    w[k] += h / 3.0;
    w[k + 1] += 4.0 * h / 3.0;
    w[k + 2] += h / 3.0;
  }
  if (simpson_end != intervals) {
    const std::size_t k = simpson_end;
    w[k] += 3.0 * h / 8.0;
    w[k + 1] += 9.0 * h / 8.0;
    w[k + 2] += 9.0 * h / 8.0;
    w[k + 3] += 3.0 * h / 8.0;
  }
  return w;
}

GreenKernel::GreenKernel(const SystemSpec& sys, const Vec& xi, double horizon, double dt,
                         const SplittingProvider& splitting, Tolerance tol) {
  if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon)
    throw Error(ErrorKind::InvalidArgument, "Green kernel needs 0 < dt <= horizon");
  const CocycleCache cache = variational(sys, xi, horizon, tol, dt);
  t_ = cache.segment().grid();
  states_ = cache.segment().states();
  x_ = cache.matrices();
  const auto& phi = cache.factors();
  const std::size_t last = t_.size() - 1;
  dt_ = t_.back() / static_cast<double>(last);
  n_ = static_cast<int>(xi.size());

  frame0_ = splitting(xi);
  const SplittingFrame frame_end = splitting(states_.back());
  n_minus_ = frame0_.n_minus();
  if (frame_end.n_minus() != n_minus_)
    throw Error(ErrorKind::NonHyperbolic, "stable dimension changes along the orbit");
  const int nc = n_ - n_minus_;

  s_.resize(t_.size());
  cu_.resize(t_.size());
  cm_.resize(t_.size());
  cc_.resize(t_.size());
  inv_cm_.resize(t_.size());
  inv_cc_.resize(t_.size());

  s_[last] = orthonormalize(frame_end.basis_minus);
  for (std::size_t j = last; j-- > 0;) s_[j] = thin_q(phi[j].partialPivLu().solve(s_[j + 1]));
  cu_[0] = frame0_.center_unstable();
  for (std::size_t j = 0; j < last; ++j) cu_[j + 1] = thin_q(phi[j] * cu_[j]);

  cm_[0] = Mat::Identity(n_minus_, n_minus_);
  inv_cm_[0] = cm_[0];
  cc_[0] = Mat::Identity(nc, nc);
  inv_cc_[0] = cc_[0];
  for (std::size_t j = 0; j < last; ++j) {
    const Mat mm = s_[j + 1].transpose() * phi[j] * s_[j];
    const Mat mc = cu_[j + 1].transpose() * phi[j] * cu_[j];
    cm_[j + 1] = mm * cm_[j];
    cc_[j + 1] = mc * cc_[j];
    inv_cm_[j + 1] = inv_cm_[j] * mm.inverse();
    inv_cc_[j + 1] = inv_cc_[j] * mc.inverse();
  }

  basis_lu_.reserve(t_.size());
  for (std::size_t j = 0; j <= last; ++j) {
    Mat b(n_, n_);
    b << s_[j], cu_[j];
    if (condition_number(b) > 1e10)
      throw Error(ErrorKind::SingularPropagator, "stable and centre-unstable bases became parallel");
    basis_lu_.emplace_back(b);
  }
}

std::vector<Vec> GreenKernel::propagate_stable(const Vec& eta) const {
  const Vec c = basis_lu_[0].solve(eta);
  if (c.tail(n_ - n_minus_).norm() > 1e-6 * std::max(eta.norm(), 1e-300))
    throw Error(ErrorKind::InvalidArgument, "eta does not lie in the stable subspace");
  const Vec a = c.head(n_minus_);
  std::vector<Vec> out(t_.size());
  for (std::size_t i = 0; i < t_.size(); ++i) out[i] = s_[i] * (cm_[i] * a);
  return out;
}

Mat GreenKernel::projector_minus(std::size_t i) const {
  Mat b(n_, n_);
  b << s_[i], cu_[i];
  Mat sel = Mat::Zero(n_, n_);
  sel.topLeftCorner(n_minus_, n_minus_).setIdentity();
  return b * sel * basis_lu_[i].inverse();
}

void GreenKernel::check_input(const std::vector<Vec>& f) const {
  if (f.size() != t_.size()) throw Error(ErrorKind::InvalidArgument, "forcing has the wrong number of nodes");
}

std::vector<Vec> GreenKernel::apply_impl(const std::vector<Vec>& f, Mode mode) const {
  check_input(f);
  const long count = static_cast<long>(t_.size());
  const std::size_t last = t_.size() - 1;
  const int nc = n_ - n_minus_;
  std::vector<Vec> um(t_.size()), uc(t_.size());
  auto coords = [&](long j) {
    const Vec c = basis_lu_[j].solve(f[j]);
    um[j] = inv_cm_[j] * c.head(n_minus_);
    uc[j] = inv_cc_[j] * c.tail(nc);
  };
  if (mode == Mode::Parallel) {
#pragma omp parallel for schedule(static)
    for (long j = 0; j < count; ++j) coords(j);
  } else {
    for (long j = 0; j < count; ++j) coords(j);
  }

  const ParitySums sm(um), sc(uc);
  std::vector<Vec> out(t_.size());
  auto node = [&](long i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const Vec left = quadrature(sm, um, 0, k, dt_);
    const Vec right = quadrature(sc, uc, k, last, dt_);
    out[k] = s_[k] * (cm_[k] * left) - cu_[k] * (cc_[k] * right);
  };
  if (mode == Mode::Parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < count; ++i) node(i);
  } else {
    for (long i = 0; i < count; ++i) node(i);
  }
  return out;
}

std::vector<Vec> GreenKernel::apply_serial(const std::vector<Vec>& f) const { return apply_impl(f, Mode::Serial); }

std::vector<Vec> GreenKernel::apply_parallel(const std::vector<Vec>& f) const {
  return apply_impl(f, Mode::Parallel);
}

Vec GreenKernel::tail_integral(const std::vector<Vec>& f) const {
  check_input(f);
  const auto w = simpson_weights(t_.size() - 1, dt_);
  const int nc = n_ - n_minus_;
  Vec acc = Vec::Zero(nc);
  for (std::size_t j = 0; j < t_.size(); ++j) acc += w[j] * (inv_cc_[j] * basis_lu_[j].solve(f[j]).tail(nc));
  return -(cu_[0] * acc);
}

Vec GreenKernel::tail_integral_direct(const std::vector<Vec>& f) const {
  check_input(f);
  const auto w = simpson_weights(t_.size() - 1, dt_);
  const Mat pc = Mat::Identity(n_, n_) - frame0_.proj_minus;
  Vec acc = Vec::Zero(n_);
  for (std::size_t j = 0; j < t_.size(); ++j) acc += w[j] * x_[j].partialPivLu().solve(f[j]);
  return -(pc * acc);
}

Mat GreenKernel::direct_matrix(std::size_t i, std::size_t j) const {
  const Mat inv = x_[j].partialPivLu().inverse();
  if (t_[i] > t_[j]) return x_[i] * frame0_.proj_minus * inv;
  return -(x_[i] * (Mat::Identity(n_, n_) - frame0_.proj_minus) * inv);
}

}  // namespace aphase
