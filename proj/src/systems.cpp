#include "aphase/systems.hpp"
#include "aphase/errors.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace aphase {

std::string to_string(ManifoldDescriptor::Kind kind) {
  switch (kind) {
    case ManifoldDescriptor::Kind::LimitCycle: return "limit_cycle";
    case ManifoldDescriptor::Kind::TorusProduct: return "torus_product";
    case ManifoldDescriptor::Kind::ParametricChart: return "parametric_chart";
  }
  return "unknown";
}

Vec polar_point(double r, double phi) {
  Vec x(2);
  x << r * std::cos(phi), r * std::sin(phi);
  return x;
}

double shear_phase_oracle(double b, double r0, double phi0) { return phi0 - b * std::log(r0); }

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Unit circles in consecutive coordinate pairs; q_k is the angle offset of factor k.
ManifoldDescriptor unit_circle_product(int factors, std::vector<double> periods) {
  ManifoldDescriptor d;
  d.kind = factors == 1 ? ManifoldDescriptor::Kind::LimitCycle : ManifoldDescriptor::Kind::TorusProduct;
  d.dim = factors;
  if (factors == 1) {
    d.period = periods.front();
    d.loop_length = two_pi;
  } else
    d.factor_periods = std::move(periods);
  d.seed = Vec::Zero(2 * factors);
  for (int k = 0; k < factors; ++k) d.seed(2 * k) = 1.0;
  d.chart_radius = 1.0;
  d.tube_radius = 0.5;
  d.residual_tol = 1e-12;
  d.chart = [factors](const Vec& base, const Vec& q) {
    Vec out(2 * factors);
    for (int k = 0; k < factors; ++k) {
      const double th = std::atan2(base(2 * k + 1), base(2 * k)) + q(k);
      out(2 * k) = std::cos(th);
      out(2 * k + 1) = std::sin(th);
    }
    return out;
  };
  d.chart_jacobian = [factors](const Vec& base, const Vec& q) {
    Mat j = Mat::Zero(2 * factors, factors);
    for (int k = 0; k < factors; ++k) {
      const double th = std::atan2(base(2 * k + 1), base(2 * k)) + q(k);
      j(2 * k, k) = -std::sin(th);
      j(2 * k + 1, k) = std::cos(th);
    }
    return j;
  };
  d.project = [factors](const Vec& x) {
    Vec out(2 * factors);
    for (int k = 0; k < factors; ++k) {
      const double rr = std::hypot(x(2 * k), x(2 * k + 1));
      if (rr == 0.0) throw Error(ErrorKind::OutsideTube, "projection undefined at the origin of a factor");
      out(2 * k) = x(2 * k) / rr;
      out(2 * k + 1) = x(2 * k + 1) / rr;
    }
    return out;
  };
  d.samples = [factors](int count) {
    std::vector<Vec> pts;
    for (int i = 0; i < count; ++i) {
      Vec angles(factors);
      if (factors == 1)
        angles(0) = two_pi * i / count;
      else
        angles = two_pi * halton_point(static_cast<std::size_t>(i), factors);
      Vec p(2 * factors);
      for (int k = 0; k < factors; ++k) {
        p(2 * k) = std::cos(angles(k));
        p(2 * k + 1) = std::sin(angles(k));
      }
      pts.push_back(p);
    }
    return pts;
  };
  return d;
}

void shear_block(double omega, double b, double x, double y, double* v, Mat* j, int off) {
  const double f = 1.0 - x * x - y * y;
  const double g = omega + b * f;
  if (v) {
    v[0] = x * f - y * g;
    v[1] = y * f + x * g;
  }
  if (j) {
    (*j)(off, off) = f - 2 * x * x + 2 * b * x * y;
    (*j)(off, off + 1) = -2 * x * y - g + 2 * b * y * y;
    (*j)(off + 1, off) = -2 * x * y + g - 2 * b * x * x;
    (*j)(off + 1, off + 1) = f - 2 * y * y - 2 * b * x * y;
  }
}

}  // namespace

SystemSpec builtin_counterexample() {
  SystemSpec s;
  s.name = "counterexample";
  s.dim = 2;
  s.eval = [](const Vec& p) {
    const double x = p(0), y = p(1);
    const double q = 1.0 - x * x - y * y;
    const double q3 = q * q * q;
    const double sp = 1.0 + x * x + y * y;
    Vec v(2);
    v << x * q3 - y * sp, x * sp + y * q3;
    return v;
  };
  s.jacobian = [](const Vec& p) {
    const double x = p(0), y = p(1);
    const double q = 1.0 - x * x - y * y;
    const double q2 = q * q, q3 = q2 * q;
    const double sp = 1.0 + x * x + y * y;
    Mat j(2, 2);
    j << q3 - 6 * x * x * q2 - 2 * x * y, -6 * x * y * q2 - sp - 2 * y * y,
        sp + 2 * x * x - 6 * x * y * q2, 2 * x * y + q3 - 6 * y * y * q2;
    return j;
  };
  // phi' = 2 on r = 1.
  s.manifold = unit_circle_product(1, {std::numbers::pi});
  return s;
}

SystemSpec builtin_shear_cycle(double omega, double b) {
  if (!(omega > 0.0)) throw Error(ErrorKind::InvalidArgument, "shear_cycle requires omega > 0");
  SystemSpec s;
  s.name = "shear_cycle";
  s.dim = 2;
  s.params = {{"omega", omega}, {"b", b}};
  s.eval = [omega, b](const Vec& p) {
    Vec v(2);
    shear_block(omega, b, p(0), p(1), v.data(), nullptr, 0);
    return v;
  };
  s.jacobian = [omega, b](const Vec& p) {
    Mat j(2, 2);
    shear_block(omega, b, p(0), p(1), nullptr, &j, 0);
    return j;
  };
  s.manifold = unit_circle_product(1, {two_pi / omega});
  return s;
}

SystemSpec builtin_torus_product(const std::vector<ShearFactor>& factors) {
  if (factors.size() < 2) throw Error(ErrorKind::InvalidArgument, "torus_product requires at least 2 factors");
  std::vector<double> periods;
  SystemSpec s;
  s.name = "torus_product";
  const int k = static_cast<int>(factors.size());
  s.dim = 2 * k;
  for (int i = 0; i < k; ++i) {
    if (!(factors[i].omega > 0.0)) throw Error(ErrorKind::InvalidArgument, "torus_product requires omega > 0");
    s.params["omega_" + std::to_string(i + 1)] = factors[i].omega;
    s.params["b_" + std::to_string(i + 1)] = factors[i].b;
    periods.push_back(two_pi / factors[i].omega);
  }
  s.eval = [factors, k](const Vec& p) {
    Vec v(2 * k);
    for (int i = 0; i < k; ++i)
      shear_block(factors[i].omega, factors[i].b, p(2 * i), p(2 * i + 1), v.data() + 2 * i, nullptr, 0);
    return v;
  };
  s.jacobian = [factors, k](const Vec& p) {
    Mat j = Mat::Zero(2 * k, 2 * k);
    for (int i = 0; i < k; ++i)
      shear_block(factors[i].omega, factors[i].b, p(2 * i), p(2 * i + 1), nullptr, &j, 2 * i);
    return j;
  };
  s.manifold = unit_circle_product(k, periods);
  return s;
}

SystemSpec builtin_linear_block(double a, double mu, int n_minus, int n_plus) {
  if (!(a > 0.0)) throw Error(ErrorKind::InvalidArgument, "linear_block requires a > 0");
  if (n_minus < 1 || n_plus < 0) throw Error(ErrorKind::InvalidArgument, "linear_block requires n_minus >= 1, n_plus >= 0");
  if (n_plus > 0 && !(mu > 0.0))
    throw Error(ErrorKind::InvalidArgument, "linear_block requires mu > 0 when n_plus > 0");
  SystemSpec s;
  s.name = "linear_block";
  const int n = n_minus + n_plus + 1;
  s.dim = n;
  s.params = {{"a", a}, {"mu", mu}, {"n_minus", n_minus}, {"n_plus", n_plus}};
  Vec diag(n);
  diag.head(n_minus).setConstant(-a);
  diag.segment(n_minus, n_plus).setConstant(mu);
  diag(n - 1) = 0.0;
  s.eval = [diag](const Vec& p) -> Vec { return diag.cwiseProduct(p); };
  s.jacobian = [diag](const Vec&) -> Mat { return diag.asDiagonal(); };

  // M = {stable coordinates = 0}: a flat chart over the unstable and neutral axes.
  const int m = n_plus + 1;
  ManifoldDescriptor d;
  d.kind = ManifoldDescriptor::Kind::ParametricChart;
  d.dim = m;
  d.seed = Vec::Zero(n);
  d.chart_radius = 1.0;
  d.tube_radius = 1.0;
  d.residual_tol = 1e-14;
  Mat embed = Mat::Zero(n, m);
  embed.bottomRows(m).setIdentity();
  d.chart = [embed](const Vec& base, const Vec& q) -> Vec { return base + embed * q; };
  d.chart_jacobian = [embed](const Vec&, const Vec&) -> Mat { return embed; };
  d.project = [n_minus](const Vec& x) -> Vec {
    Vec out = x;
    out.head(n_minus).setZero();
    return out;
  };
  d.samples = [n, m, n_minus](int count) {
    std::vector<Vec> pts;
    for (int i = 0; i < count; ++i) {
      Vec p = Vec::Zero(n);
      if (i > 0) p.tail(m) = halton_point(static_cast<std::size_t>(i), m).array() - 0.5;
      (void)n_minus;
      pts.push_back(p);
    }
    return pts;
  };
  s.manifold = d;
  return s;
}

namespace {
double take(std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const double v = it->second;
  params.erase(it);
  return v;
}

void reject_leftovers(const std::string& system, const std::map<std::string, double>& left) {
  if (!left.empty())
    throw Error(ErrorKind::ConfigError, "unknown parameter '" + left.begin()->first + "' for system " + system);
}
}  // namespace

SystemSpec make_system(const std::string& name, const std::map<std::string, double>& params_in) {
  auto params = params_in;
  if (name == "counterexample") {
    reject_leftovers(name, params);
    return builtin_counterexample();
  }
  if (name == "shear_cycle") {
    const double omega = take(params, "omega", 1.0);
    const double b = take(params, "b", 0.0);
    reject_leftovers(name, params);
    return builtin_shear_cycle(omega, b);
  }
  if (name == "torus_product") {
    std::vector<ShearFactor> factors;
    for (int i = 1;; ++i) {
      const std::string ok = "omega_" + std::to_string(i);
      const std::string bk = "b_" + std::to_string(i);
      if (!params.count(ok) && !params.count(bk)) break;
      factors.push_back({take(params, ok, 1.0), take(params, bk, 0.0)});
    }
    reject_leftovers(name, params);
    return builtin_torus_product(factors);
  }
  if (name == "linear_block") {
    const double a = take(params, "a", 1.0);
    const double mu = take(params, "mu", 1.0);
    const double nm = take(params, "n_minus", 1.0);
    const double np = take(params, "n_plus", 0.0);
    reject_leftovers(name, params);
    if (nm != std::floor(nm) || np != std::floor(np))
      throw Error(ErrorKind::ConfigError, "n_minus and n_plus must be integers");
    return builtin_linear_block(a, mu, static_cast<int>(nm), static_cast<int>(np));
  }
  throw Error(ErrorKind::ConfigError, "unknown system '" + name + "'");
}

}  // namespace aphase
