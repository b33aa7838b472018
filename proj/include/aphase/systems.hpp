#pragma once

#include "aphase/linalg.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace aphase {

/// Description of the attracting invariant manifold M carried by a system.
///
/// The callables are all expressed in ambient coordinates. `chart` maps a
/// base point on M and local coordinates q to a point of M; for cycles q is
/// arclength-like (flow time scaled by the base speed), for torus products q
/// holds one angle per factor.
struct ManifoldDescriptor {
  enum class Kind { LimitCycle, TorusProduct, ParametricChart };

  Kind kind = Kind::LimitCycle;
  int dim = 1;                 // m
  double period = 0.0;         // LimitCycle only
  double loop_length = 0.0;    // LimitCycle: chart parameter length of one loop
  std::vector<double> factor_periods;  // TorusProduct only
  Vec seed;                    // a point on M
  double chart_radius = 1.0;   // chart validity radius in q
  double tube_radius = 0.5;    // tubular neighbourhood radius
  double residual_tol = 1e-8;  // on-manifold tolerance for `residual`

  std::function<Vec(const Vec& base, const Vec& q)> chart;
  std::function<Mat(const Vec& base, const Vec& q)> chart_jacobian;
  std::function<Vec(const Vec& x)> project;  // nearest point on M
  std::function<std::vector<Vec>(int count)> samples;

  double residual(const Vec& x) const { return (x - project(x)).norm(); }
};

std::string to_string(ManifoldDescriptor::Kind kind);

/// A smooth vector field with analytic Jacobian and the manifold it carries.
/// Immutable after construction; evaluation is pure.
struct SystemSpec {
  std::string name;
  int dim = 0;
  std::map<std::string, double> params;
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jacobian;
  ManifoldDescriptor manifold;
};

/// The planar system whose limit cycle r=1 attracts every orbit but with a
/// degenerate (cubic) radial rate: phi' = 1 + r^2, r' = r (1 - r^2)^3.
SystemSpec builtin_counterexample();

/// phi' = omega + b (1 - r^2), r' = r (1 - r^2). Hyperbolic unit cycle with
/// normal exponent -2 and asymptotic phase phi0 - b ln r0.
SystemSpec builtin_shear_cycle(double omega, double b);

struct ShearFactor {
  double omega = 1.0;
  double b = 0.0;
};

/// Product of shear cycles; the invariant torus is the product of unit circles.
SystemSpec builtin_torus_product(const std::vector<ShearFactor>& factors);

/// y' = blockdiag(-a I_{n_minus}, mu I_{n_plus}, 0) y.
SystemSpec builtin_linear_block(double a, double mu, int n_minus, int n_plus);

/// Builds a system by name from a parameter map (names: counterexample,
/// shear_cycle, torus_product, linear_block). Unknown names or parameters throw ConfigError.
SystemSpec make_system(const std::string& name, const std::map<std::string, double>& params);

/// Closed-form asymptotic phase angle of a shear cycle point: phi0 - b ln r0.
double shear_phase_oracle(double b, double r0, double phi0);

/// Point (r cos phi, r sin phi).
Vec polar_point(double r, double phi);

}  // namespace aphase
