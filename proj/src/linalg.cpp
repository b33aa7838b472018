#include "aphase/linalg.hpp"
#include "aphase/errors.hpp"

#include <algorithm>
#include <cmath>

namespace aphase {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::SingularPropagator: return "SingularPropagator";
    case ErrorKind::OffManifold: return "OffManifold";
    case ErrorKind::DegenerateAngle: return "DegenerateAngle";
    case ErrorKind::OutsideTube: return "OutsideTube";
    case ErrorKind::NonHyperbolic: return "NonHyperbolic";
    case ErrorKind::HorizonTooShort: return "HorizonTooShort";
    case ErrorKind::ConstantsInfeasible: return "ConstantsInfeasible";
    case ErrorKind::NoContraction: return "NoContraction";
    case ErrorKind::BoundViolated: return "BoundViolated";
    case ErrorKind::InconsistentH: return "InconsistentH";
    case ErrorKind::ChartExceeded: return "ChartExceeded";
    case ErrorKind::SelfMapViolated: return "SelfMapViolated";
    case ErrorKind::NonConvergent: return "NonConvergent";
    case ErrorKind::VerificationFailed: return "VerificationFailed";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Mat orthonormalize(const Mat& columns, double drop_tol) {
  Mat q(columns.rows(), columns.cols());
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Vec v = columns.col(j);
    const double scale = std::max(v.norm(), 1e-300);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < kept; ++k) v -= q.col(k).dot(v) * q.col(k);
    }
    const double nv = v.norm();
    if (nv <= drop_tol * scale || nv == 0.0) continue;
    q.col(kept++) = v / nv;
  }
  return q.leftCols(kept);
}

Mat orthogonal_projector(const Mat& basis) {
  const Mat q = orthonormalize(basis);
  return q * q.transpose();
}

namespace {
Eigen::VectorXd principal_cosines(const Mat& a, const Mat& b) {
  const Mat qa = orthonormalize(a);
  const Mat qb = orthonormalize(b);
  if (qa.cols() == 0 || qb.cols() == 0) return Eigen::VectorXd();
  Eigen::JacobiSVD<Mat> svd(qa.transpose() * qb);
  return svd.singularValues().cwiseMin(1.0);
}
}  // namespace

double max_principal_angle(const Mat& a, const Mat& b) {
  const Vec cs = principal_cosines(a, b);
  if (cs.size() == 0) return 0.0;
  // acos loses accuracy near 1; use the sine of the gap to the projection instead.
  const Mat qa = orthonormalize(a);
  const Mat qb = orthonormalize(b);
  const Mat small = qa.cols() <= qb.cols() ? qa : qb;
  const Mat large = qa.cols() <= qb.cols() ? qb : qa;
  const Mat resid = small - large * (large.transpose() * small);
  const double s = Eigen::JacobiSVD<Mat>(resid).singularValues()(0);
  return std::asin(std::min(1.0, s));
}

double min_principal_angle(const Mat& a, const Mat& b) {
  const Vec cs = principal_cosines(a, b);
  if (cs.size() == 0) return M_PI / 2;
  return std::acos(std::min(1.0, cs.maxCoeff()));
}

Mat subspace_intersection(const Mat& a, const Mat& b, double tol) {
  const Mat qa = orthonormalize(a);
  const Mat qb = orthonormalize(b);
  if (qa.cols() == 0 || qb.cols() == 0) return Mat(a.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(qa.transpose() * qb, Eigen::ComputeFullU);
  Mat out(a.rows(), 0);
  const Vec s = svd.singularValues();
  std::vector<Eigen::Index> picks;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1.0 - tol) picks.push_back(i);
  out.resize(a.rows(), static_cast<Eigen::Index>(picks.size()));
  for (std::size_t k = 0; k < picks.size(); ++k)
    out.col(static_cast<Eigen::Index>(k)) = qa * svd.matrixU().col(picks[k]);
  return orthonormalize(out);
}

Mat oblique_projector(const Mat& range, const Mat& kernel) {
  const Eigen::Index n = range.rows();
  if (range.cols() + kernel.cols() != n)
    throw Error(ErrorKind::InvalidArgument, "oblique_projector: dimensions do not sum to n");
  Mat basis(n, n);
  basis << range, kernel;
  Mat sel = Mat::Zero(n, n);
  sel.topLeftCorner(range.cols(), range.cols()).setIdentity();
  // P = B S B^{-1}  <=>  P^T = B^{-T} (B S)^T
  return basis.transpose().partialPivLu().solve((basis * sel).transpose()).transpose();
}

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec s = svd.singularValues();
  if (s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

Vec halton_point(std::size_t index, int dim) {
  static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  Vec out(dim);
  for (int d = 0; d < dim; ++d) {
    const int base = primes[d % 16];
    double f = 1.0, r = 0.0;
    std::size_t i = index + 1;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    out(d) = r;
  }
  return out;
}

}  // namespace aphase
