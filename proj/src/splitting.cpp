#include "aphase/splitting.hpp"
#include "aphase/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

namespace aphase {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Estimated: return "estimated";
    case Provenance::User: return "user";
    case Provenance::Measured: return "measured";
  }
  return "unknown";
}

Mat SplittingFrame::center_unstable() const {
  Mat cu(point.size(), basis_plus.cols() + basis_zero.cols());
  cu << basis_zero, basis_plus;
  return orthonormalize(cu);
}

namespace {

Mat hstack(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Fills projections and the K^-/J^- sub-decomposition from the three bases.
void finalize(SplittingFrame& f, const ManifoldDescriptor& desc) {
  const Eigen::Index n = f.point.size();
  if (f.basis_minus.cols() + f.basis_plus.cols() + f.basis_zero.cols() != n)
    throw Error(ErrorKind::NonHyperbolic, "splitting dimensions do not sum to n");
  f.proj_minus = oblique_projector(f.basis_minus, hstack(f.basis_plus, f.basis_zero));
  f.proj_plus = oblique_projector(f.basis_plus, hstack(f.basis_minus, f.basis_zero));
  f.proj_zero = oblique_projector(f.basis_zero, hstack(f.basis_minus, f.basis_plus));
  const Mat tangent = desc.chart_jacobian(f.point, Vec::Zero(desc.dim));
  f.basis_k = f.basis_minus.cols() > 0 ? subspace_intersection(f.basis_minus, tangent, 1e-6) : Mat(n, 0);
  if (f.basis_k.cols() == 0) {
    f.basis_j = orthonormalize(f.basis_minus);
  } else {
    const Mat away = (Mat::Identity(n, n) - f.basis_k * f.basis_k.transpose()) * f.basis_minus;
    f.basis_j = orthonormalize(away, 1e-8);
  }
}

// Puts v/|v| first in the neutral basis when v lies in it.
Mat velocity_first(const Mat& zero_basis, const Vec& v) {
  const double nv = v.norm();
  if (nv < 1e-12 || zero_basis.cols() == 0) return orthonormalize(zero_basis);
  const Mat q = orthonormalize(zero_basis);
  const Vec off = v - q * (q.transpose() * v);
  if (off.norm() > 1e-6 * nv) return q;
  Mat with_v(v.size(), q.cols() + 1);
  with_v << v / nv, q;
  return orthonormalize(with_v, 1e-8).leftCols(q.cols());
}

std::string describe_multipliers(const Eigen::VectorXcd& ev) {
  std::ostringstream os;
  os.precision(12);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (i) os << ", ";
    os << ev(i).real();
    if (ev(i).imag() != 0.0) os << (ev(i).imag() > 0 ? "+" : "") << ev(i).imag() << "i";
  }
  return os.str();
}

}  // namespace

SplittingFrame splitting_periodic(const SystemSpec& sys, const ManifoldDescriptor& cycle, const Vec& xi,
                                  const SplittingOptions& opts) {
  if (cycle.kind != ManifoldDescriptor::Kind::LimitCycle || !(cycle.period > 0.0))
    throw Error(ErrorKind::InvalidArgument, "splitting_periodic needs a limit cycle with a positive period");
  const int n = sys.dim;
  const auto cache = variational(sys, xi, cycle.period, opts.tol, 0.5);
  const Mat& mono = cache.matrices().back();
  Eigen::EigenSolver<Mat> es(mono);
  const Eigen::VectorXcd ev = es.eigenvalues();
  const Eigen::MatrixXcd evec = es.eigenvectors();
  const Vec v = sys.eval(xi);

  std::vector<Eigen::Index> unit;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (std::abs(std::abs(ev(i)) - 1.0) < opts.unit_tol) unit.push_back(i);
  if (unit.size() != 1) {
    std::ostringstream os;
    os.precision(12);
    os << "monodromy at (" << xi.transpose() << ") over T=" << cycle.period << " has " << unit.size()
       << " multipliers within " << opts.unit_tol << " of the unit circle; multipliers: {"
       << describe_multipliers(ev) << "}";
    for (auto i : unit)
      if (std::abs(ev(i) - 1.0) > 0.0)
        os << "; degenerate multiplier " << ev(i).real() << " (|lambda|-1 = " << std::abs(ev(i)) - 1.0 << ")";
    throw Error(ErrorKind::NonHyperbolic, os.str());
  }

  SplittingFrame f;
  f.point = xi;
  for (Eigen::Index i = 0; i < ev.size(); ++i) f.multipliers.push_back(ev(i));
  std::vector<Vec> minus, plus;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (i == unit.front()) continue;
    const double mod = std::abs(ev(i));
    auto& target = mod < 1.0 ? minus : plus;
    if (std::abs(ev(i).imag()) <= 1e-12 * std::max(1.0, mod)) {
      target.push_back(evec.col(i).real());
    } else if (ev(i).imag() > 0.0) {
      target.push_back(evec.col(i).real());
      target.push_back(evec.col(i).imag());
    }
  }
  auto to_mat = [n](const std::vector<Vec>& cols) {
    Mat m(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = cols[k];
    return orthonormalize(m);
  };
  f.basis_minus = to_mat(minus);
  f.basis_plus = to_mat(plus);
  if (v.norm() > 1e-12) {
    f.basis_zero = v / v.norm();
  } else {
    f.basis_zero = evec.col(unit.front()).real().normalized();
  }
  finalize(f, cycle);
  return f;
}

SplittingFrame splitting_general(const SystemSpec& sys, const ManifoldDescriptor& desc, const Vec& xi,
                                 const SplittingOptions& opts) {
  const int n = sys.dim;
  // The horizon doubles (up to 8x) until the stable and neutral singular values separate.
  Mat vf;
  int n_minus = 0;
  for (double tf = opts.horizon;; tf *= 2.0) {
    const auto fwd = variational(sys, xi, tf, opts.tol, 0.5);
    const Mat& xf = fwd.matrices().back();
    const Mat xh = fwd.matrix_at(tf / 2);

    Eigen::JacobiSVD<Mat> svd_f(xf, Eigen::ComputeFullV);
    Eigen::JacobiSVD<Mat> svd_h(xh);
    const Vec sf = svd_f.singularValues();
    const Vec sh = svd_h.singularValues();
    auto count_stable = [&](const Vec& s, double t) {
      int c = 0;
      for (Eigen::Index i = 0; i < s.size(); ++i)
        if (std::log(s(i)) / t < -opts.gap) ++c;
      return c;
    };
    n_minus = count_stable(sf, tf);
    if (n_minus != count_stable(sh, tf / 2)) {
      std::ostringstream os;
      os << "finite-time spectrum not settled: " << n_minus << " stable exponents at T=" << tf << " but "
         << count_stable(sh, tf / 2) << " at T=" << tf / 2;
      throw Error(ErrorKind::NonHyperbolic, os.str());
    }
    if (n_minus > 0) {
      const double lam_full = -std::log(sf(n - n_minus)) / tf;
      const double lam_half = -std::log(sh(n - n_minus)) / (tf / 2);
      if (std::abs(lam_full - lam_half) > 0.25 * std::abs(lam_full)) {
        std::ostringstream os;
        os << "spectral gap test failed: weakest stable exponent " << lam_half << " at T=" << tf / 2 << " vs "
           << lam_full << " at T=" << tf;
        throw Error(ErrorKind::NonHyperbolic, os.str());
      }
      if (n_minus < n && sf(n - n_minus) / sf(n - n_minus - 1) > 1e-6) {
        if (tf < 8.0 * opts.horizon) continue;
        throw Error(ErrorKind::HorizonTooShort,
                    "stable/neutral singular value ratio " + std::to_string(sf(n - n_minus) / sf(n - n_minus - 1)) +
                        " exceeds 1e-6 at T=" + std::to_string(tf));
      }
    }
    vf = svd_f.matrixV();
    break;
  }

  const auto bwd = variational(sys, xi, -opts.backward_horizon, opts.tol, 0.5);
  Eigen::JacobiSVD<Mat> svd_b(bwd.matrices().back(), Eigen::ComputeFullV);
  const Vec sb = svd_b.singularValues();
  int n_plus = 0;
  for (Eigen::Index i = 0; i < sb.size(); ++i)
    if (std::log(sb(i)) / opts.backward_horizon < -opts.gap) ++n_plus;
  const int n_zero = n - n_minus - n_plus;
  if (n_zero < 1) throw Error(ErrorKind::NonHyperbolic, "no neutral direction left after classification");

  SplittingFrame f;
  f.point = xi;
  f.basis_minus = orthonormalize(vf.rightCols(n_minus));
  const Mat vb = svd_b.matrixV();
  f.basis_plus = orthonormalize(vb.rightCols(n_plus));

  const Mat tangent = desc.chart_jacobian(xi, Vec::Zero(desc.dim));
  Mat cu;
  if (n_minus + tangent.cols() == n &&
      (n_minus == 0 || min_principal_angle(f.basis_minus, tangent) > opts.delta_min)) {
    cu = orthonormalize(tangent);
  } else {
    cu = orthonormalize(vb.rightCols(n_plus + n_zero));
  }
  Mat zero;
  if (n_plus == 0) {
    zero = cu;
  } else {
    const Mat cs = vf.rightCols(n_minus + n_zero);
    zero = subspace_intersection(cu, cs, 1e-4);
    if (zero.cols() != n_zero)
      throw Error(ErrorKind::NonHyperbolic, "neutral subspace has dimension " + std::to_string(zero.cols()) +
                                                ", expected " + std::to_string(n_zero));
  }
  f.basis_zero = velocity_first(zero, sys.eval(xi));
  finalize(f, desc);
  return f;
}

SplittingFrame splitting_at(const SystemSpec& sys, const ManifoldDescriptor& desc, const Vec& xi,
                            const SplittingOptions& opts) {
  if (desc.kind == ManifoldDescriptor::Kind::LimitCycle) return splitting_periodic(sys, desc, xi, opts);
  return splitting_general(sys, desc, xi, opts);
}

SplittingProvider make_splitting_provider(const SystemSpec& sys, const SplittingOptions& opts) {
  return [&sys, opts](const Vec& x) { return splitting_at(sys, sys.manifold, x, opts); };
}

SplittingFrame transport(const SplittingFrame& frame, const CocycleCache& cache, double t,
                         const ManifoldDescriptor& desc) {
  const Mat x = cache.matrix_at(t);
  SplittingFrame out;
  out.point = cache.state_at(t);
  out.basis_minus = orthonormalize(x * frame.basis_minus);
  out.basis_plus = orthonormalize(x * frame.basis_plus);
  out.basis_zero = orthonormalize(x * frame.basis_zero);
  const double cond = condition_number(x);
  if (!(cond <= 1e12)) throw Error(ErrorKind::SingularPropagator, "cond(X^t) = " + std::to_string(cond));
  Eigen::PartialPivLU<Mat> lu(x.transpose());
  auto conj = [&](const Mat& p) -> Mat { return lu.solve((x * p).transpose()).transpose(); };
  out.proj_minus = conj(frame.proj_minus);
  out.proj_plus = conj(frame.proj_plus);
  out.proj_zero = conj(frame.proj_zero);
  const Eigen::Index n = out.point.size();
  const Mat tangent = desc.chart_jacobian(out.point, Vec::Zero(desc.dim));
  out.basis_k = out.basis_minus.cols() > 0 ? subspace_intersection(out.basis_minus, tangent, 1e-6) : Mat(n, 0);
  out.basis_j = out.basis_k.cols() == 0
                    ? out.basis_minus
                    : orthonormalize((Mat::Identity(n, n) - out.basis_k * out.basis_k.transpose()) * out.basis_minus,
                                     1e-8);
  return out;
}

double finite_time_decay_rate(const SystemSpec& sys, const Vec& xi, double horizon, Tolerance tol) {
  // QR continuation over the node factors keeps the weakest direction resolved far
  // below the rounding floor of the full product.
  const auto cache = variational(sys, xi, horizon, tol, 0.5);
  const Eigen::Index n = xi.size();
  Mat q = Mat::Identity(n, n);
  Vec logs = Vec::Zero(n);
  for (const Mat& f : cache.factors()) {
    Eigen::HouseholderQR<Mat> qr(f * q);
    const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < n; ++i) logs(i) += std::log(std::abs(r(i, i)));
    q = qr.householderQ();
  }
  return -logs.minCoeff() / horizon;
}

bool HyperbolicConstants::invariant_set_ok() const {
  return c * r + 11.0 / (12.0 * alpha) * K * C * R * R <= R;
}
bool HyperbolicConstants::derivative_set_ok() const {
  return c * r + 11.0 / (6.0 * alpha) * K * C * R * R <= R;
}
bool HyperbolicConstants::contraction_ok() const { return kappa < 1.0; }

double estimate_jacobian_lipschitz(const SystemSpec& sys, const std::vector<Vec>& points, double R, int probes,
                                   std::size_t offset) {
  const int n = sys.dim;
  double best = 0.0;
  for (const auto& x : points) {
    const Mat j0 = sys.jacobian(x);
    for (int k = 0; k < probes; ++k) {
      Vec u = 2.0 * halton_point(offset + static_cast<std::size_t>(k), n).array() - 1.0;
      if (u.norm() == 0.0) continue;
      const double radius = (k % 2 == 0) ? R : 0.5 * R;
      const Vec y = radius * u / u.norm();
      Eigen::JacobiSVD<Mat> svd(sys.jacobian(x + y) - j0);
      best = std::max(best, svd.singularValues()(0) / y.norm());
    }
  }
  return best;
}

namespace {

struct SampleBounds {
  double lambda_minus = std::numeric_limits<double>::infinity();
  double lambda_plus = std::numeric_limits<double>::infinity();
  std::vector<double> times;
  std::vector<double> minus_norm, plus_norm, zero_norm;
  double proj_norm = 0.0;
};

double op_norm(const Mat& m) {
  if (m.cols() == 0) return 0.0;
  return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

SampleBounds sample_bounds(const SystemSpec& sys, const ManifoldDescriptor& desc, const Vec& p,
                           const ConstantsOptions& opts) {
  const auto frame = splitting_at(sys, desc, p, opts.splitting);
  const auto fwd = variational(sys, p, opts.sample_horizon, opts.splitting.tol, opts.node_dt);
  const auto bwd = variational(sys, p, -opts.sample_horizon, opts.splitting.tol, opts.node_dt);
  SampleBounds b;
  const auto& grid = fwd.segment().grid();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    b.times.push_back(grid[k]);
    b.minus_norm.push_back(op_norm(fwd.matrices()[k] * frame.basis_minus));
    b.plus_norm.push_back(op_norm(bwd.matrices()[k] * frame.basis_plus));
    b.zero_norm.push_back(
        std::max(op_norm(fwd.matrices()[k] * frame.basis_zero), op_norm(bwd.matrices()[k] * frame.basis_zero)));
  }
  const double T = opts.sample_horizon;
  if (frame.n_minus() > 0) b.lambda_minus = -std::log(b.minus_norm.back()) / T;
  if (frame.n_plus() > 0) b.lambda_plus = -std::log(b.plus_norm.back()) / T;
  b.proj_norm = std::max({op_norm(frame.proj_minus), op_norm(frame.proj_plus), op_norm(frame.proj_zero)});
  return b;
}

}  // namespace

HyperbolicConstants estimate_constants(const SystemSpec& sys, const ManifoldDescriptor& desc, double r_init,
                                       double R_init, const ConstantOverrides& overrides,
                                       const ConstantsOptions& opts) {
  for (const auto& [key, _] : overrides.values) {
    static const char* allowed[] = {"c", "alpha", "K", "C", "r", "R"};
    if (std::find(std::begin(allowed), std::end(allowed), key) == std::end(allowed))
      throw Error(ErrorKind::ConfigError, "unknown constant override '" + key + "'");
  }
  auto user = [&](const char* key) -> const double* {
    auto it = overrides.values.find(key);
    return it == overrides.values.end() ? nullptr : &it->second;
  };

  const auto points = desc.samples(opts.samples);
  std::vector<SampleBounds> bounds(points.size());
  std::vector<std::exception_ptr> errors(points.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < points.size(); ++i) {
    try {
      bounds[i] = sample_bounds(sys, desc, points[i], opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonHyperbolic && e.kind() != ErrorKind::HorizonTooShort) throw;
      std::ostringstream os;
      os.precision(6);
      os << "no hyperbolic splitting at sample " << i << " (" << e.what() << "); finite-time decay rate";
      const double base = desc.period > 0 ? desc.period : 5.0;
      for (double mult : {1.0, 4.0, 16.0}) {
        const double T = base * mult;
        os << " alpha(T=" << T << ")=" << finite_time_decay_rate(sys, points[i], T, opts.splitting.tol);
      }
      throw Error(ErrorKind::ConstantsInfeasible, os.str());
    }
  }

  HyperbolicConstants k;
  auto set = [&](const char* key, double estimated, double& field) {
    if (const double* u = user(key)) {
      field = *u;
      k.provenance[key] = Provenance::User;
    } else {
      field = estimated;
      k.provenance[key] = Provenance::Estimated;
    }
  };

  double lam = std::numeric_limits<double>::infinity();
  for (const auto& b : bounds) lam = std::min({lam, b.lambda_minus, b.lambda_plus});
  if (!std::isfinite(lam)) lam = 0.0;
  set("alpha", (1.0 - opts.alpha_margin) * lam, k.alpha);
  if (!(k.alpha > 0.0))
    throw Error(ErrorKind::ConstantsInfeasible, "decay rate estimate alpha = " + std::to_string(k.alpha) + " <= 0");

  double c_est = 1.0;
  double proj = 0.0;
  for (const auto& b : bounds) {
    for (std::size_t i = 0; i < b.times.size(); ++i) {
      const double growth = std::exp(k.alpha * b.times[i]);
      c_est = std::max({c_est, b.minus_norm[i] * growth, b.plus_norm[i] * growth, b.zero_norm[i]});
    }
    proj = std::max(proj, b.proj_norm);
  }
  set("c", c_est, k.c);
  set("K", k.c * proj, k.K);

  const double* user_R = user("R");
  const double* user_r = user("r");
  const int attempts = user_R ? 1 : opts.max_shrink + 1;
  for (int step = 0; step < attempts; ++step) {
    const double scale = std::ldexp(1.0, -step);
    k.R = user_R ? *user_R : R_init * scale;
    set("C", estimate_jacobian_lipschitz(sys, points, k.R, opts.lipschitz_probes,
                                          static_cast<std::size_t>(opts.seed % 1000003) * opts.lipschitz_probes), k.C);
    k.kappa = 11.0 * k.K * k.C * k.R / (6.0 * k.alpha);
    if (user_r) {
      k.r = *user_r;
    } else if (r_init > 0.0) {
      k.r = r_init * scale;
    } else {
      k.r = 0.5 * std::max(0.0, (k.R - 11.0 / (6.0 * k.alpha) * k.K * k.C * k.R * k.R) / k.c);
    }
    k.shrink_steps = step;
    if (k.r > 0.0 && k.R < 1.0 && k.valid()) {
      k.provenance["R"] = user_R ? Provenance::User : Provenance::Estimated;
      k.provenance["r"] = user_r ? Provenance::User : Provenance::Estimated;
      k.provenance["kappa"] = Provenance::Estimated;
      k.C0 = std::numeric_limits<double>::quiet_NaN();
      k.provenance["C0"] = Provenance::Measured;
      return k;
    }
  }
  std::ostringstream os;
  os << "conditions on (r, R) fail at every scale: c=" << k.c << " alpha=" << k.alpha << " K=" << k.K
     << " C=" << k.C << " R=" << k.R << " kappa=" << k.kappa;
  throw Error(ErrorKind::ConstantsInfeasible, os.str());
}

}  // namespace aphase
