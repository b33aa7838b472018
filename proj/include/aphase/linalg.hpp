#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace aphase {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Orthonormal basis of span(columns) via two passes of modified Gram-Schmidt.
/// Columns whose residual norm drops below `drop_tol` are discarded.
Mat orthonormalize(const Mat& columns, double drop_tol = 1e-12);

/// Orthogonal projector onto span(basis); basis need not be orthonormal.
Mat orthogonal_projector(const Mat& basis);

/// Largest principal angle (radians) between span(a) and span(b).
double max_principal_angle(const Mat& a, const Mat& b);

/// Smallest principal angle (radians) between span(a) and span(b).
double min_principal_angle(const Mat& a, const Mat& b);

/// Orthonormal basis of the intersection span(a) ∩ span(b).
Mat subspace_intersection(const Mat& a, const Mat& b, double tol = 1e-6);

/// Oblique projector onto span(range) along span(kernel); [range kernel] must be square and invertible.
Mat oblique_projector(const Mat& range, const Mat& kernel);

/// 2-norm condition number.
double condition_number(const Mat& m);

/// Radical-inverse (Halton) point in [0,1)^dim; deterministic low-discrepancy samples.
Vec halton_point(std::size_t index, int dim);

}  // namespace aphase
