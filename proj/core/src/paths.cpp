#include "geodesy/paths.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "geodesy/distributions.hpp"

namespace geodesy {

std::string family_name(Family f) {
  switch (f) {
    case Family::Wasserstein:
      return "wasserstein";
    case Family::Hellinger:
      return "hellinger";
    case Family::ExpTilt:
      return "exptilt";
    case Family::ReflectedTilt:
      return "reflected";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "w" || s == "wasserstein") return Family::Wasserstein;
  if (s == "h" || s == "hellinger") return Family::Hellinger;
  if (s == "e" || s == "exptilt" || s == "exp-tilt" || s == "exponential") return Family::ExpTilt;
  if (s == "r" || s == "reflected" || s == "reflectedtilt" || s == "reflected-tilt") {
    return Family::ReflectedTilt;
  }
  throw InvalidInput("unknown path family '" + std::string(name) +
                     "' (expected wasserstein, hellinger, exptilt or reflected)");
}

void PathSpec::validate() const {
  if (!(support.lo < support.hi)) throw InvalidInput("path support must satisfy lo < hi");
  if (!std::isfinite(a_star) || !support.contains(a_star)) {
    std::ostringstream msg;
    msg << "a-star=" << a_star << " must lie in the support [" << support.lo << ", " << support.hi
        << "]";
    throw InvalidInput(msg.str());
  }
  if (family == Family::Hellinger && !(epsilon > 0.0)) {
    throw InvalidInput("epsilon must be > 0 for the hellinger path");
  }
  if (family == Family::ReflectedTilt && !(split_point > support.lo && split_point < support.hi)) {
    throw InvalidInput("split-point must lie strictly inside the support for the reflected tilt");
  }
}

std::optional<double> ConditionalDensity::gaussian_affinity(Row, double, double) const {
  return std::nullopt;
}

Curve ConditionalDensity::slice(Row x) const {
  std::vector<double> row(x.begin(), x.end());
  return [this, row = std::move(row)](double a) { return density(a, row); };
}

double tilt_delta(double t) {
  if (!(t < 1.0)) throw InvalidInput("tilt path requires t < 1");
  return t / (1.0 - t);
}

namespace {

void require_t_below_one(double t) {
  if (!(t >= 0.0 && t < 1.0)) throw InvalidInput("path requires 0 <= t < 1");
}

// Width of the narrowest tilt feature resolved by the graded tilt rules.
double tilt_scale(double t) {
  const double base = 1.0 / 99.0;
  if (t <= 0.0) return 0.5 * base;
  return 0.5 * std::min(base, (1.0 - t) / t);
}

}  // namespace

Quadrature path_rule(const PathSpec& spec, double t, int nodes) {
  const Support& s = spec.support;
  const int panel = std::max(8, nodes / 10);
  switch (spec.family) {
    case Family::Wasserstein: {
      require_t_below_one(t);
      const Support img = wasserstein_image(spec, t);
      return Quadrature::composite({s.lo, img.lo, img.hi, s.hi}, std::max(8, nodes / 3 + 1));
    }
    case Family::Hellinger:
      return Quadrature::graded(s.lo, s.hi, spec.a_star, 0.5 * spec.epsilon, panel);
    case Family::ExpTilt:
      return Quadrature::graded(s.lo, s.hi, s.hi, tilt_scale(t), panel);
    case Family::ReflectedTilt:
      return Quadrature::graded(s.lo, s.hi, spec.split_point, tilt_scale(t), panel);
  }
  throw InvalidInput("unknown path family");
}

Support wasserstein_image(const PathSpec& spec, double t) {
  require_t_below_one(t);
  const double lo = (1.0 - t) * spec.support.lo + t * spec.a_star;
  const double hi = (1.0 - t) * spec.support.hi + t * spec.a_star;
  return Support(lo, hi);
}

double wasserstein_density(const Curve& pi, double t, const PathSpec& spec, double a) {
  require_t_below_one(t);
  // Membership is decided on the image so rounding in the pre-image cannot drop the closed endpoints.
  if (!wasserstein_image(spec, t).contains(a)) return 0.0;
  const double pre = std::clamp((a - t * spec.a_star) / (1.0 - t), spec.support.lo, spec.support.hi);
  return pi(pre) / (1.0 - t);
}

ExpTilt::ExpTilt(Curve pi, double delta, const Quadrature& rule)
    : pi_(std::move(pi)), delta_(delta) {
  if (!std::isfinite(delta)) throw InvalidInput("tilt strength must be finite");
  shift_ = std::max(delta_ * rule.lo(), delta_ * rule.hi());
  norm_ = rule.integrate([&](double a) { return factor(a) * pi_(a); });
  if (!(norm_ > 0.0) || !std::isfinite(norm_)) {
    throw NumericalFailure("exponential tilt normalizer is not positive");
  }
}

double ExpTilt::operator()(double a) const {
  if (delta_ == 0.0) return pi_(a);
  return factor(a) * pi_(a) / norm_;
}

double exp_tilt_density(const Curve& pi, double delta, const Support& support, double a) {
  PathSpec spec;
  spec.family = Family::ExpTilt;
  spec.support = support;
  spec.a_star = support.hi;
  const double t = delta >= 0.0 ? delta / (1.0 + delta) : 0.0;
  return ExpTilt(pi, delta, path_rule(spec, t))(a);
}

ReflectedTilt::ReflectedTilt(Curve pi, double delta, double split, const Quadrature& rule)
    : pi_(std::move(pi)), delta_(delta), split_(split) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw InvalidInput("reflected tilt requires a finite delta >= 0");
  }
  double tilted_lo = 0.0, tilted_hi = 0.0;
  const auto nodes = rule.nodes();
  const auto weights = rule.weights();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double a = nodes[k];
    const double p = pi_(a);
    // Exponents are <= 0 on each branch: the branch maximum sits at the split.
    const double f = std::exp(-delta_ * std::abs(a - split_));
    if (a <= split_) {
      mass_lo_ += weights[k] * p;
      tilted_lo += weights[k] * f * p;
    } else {
      mass_hi_ += weights[k] * p;
      tilted_hi += weights[k] * f * p;
    }
  }
  scale_lo_ = tilted_lo > 0.0 ? mass_lo_ / tilted_lo : 0.0;
  scale_hi_ = tilted_hi > 0.0 ? mass_hi_ / tilted_hi : 0.0;
}

double ReflectedTilt::operator()(double a) const {
  if (delta_ == 0.0) return pi_(a);
  const double f = std::exp(-delta_ * std::abs(a - split_));
  return f * pi_(a) * (a <= split_ ? scale_lo_ : scale_hi_);
}

double reflected_tilt_density(const Curve& pi, double delta, const PathSpec& spec, double a) {
  spec.validate();
  const double t = delta / (1.0 + delta);
  PathSpec s = spec;
  s.family = Family::ReflectedTilt;
  return ReflectedTilt(pi, delta, spec.split_point, path_rule(s, t))(a);
}

HellingerCoeffs hellinger_coeffs(double theta, double t) {
  if (theta < kSmallAngle) {
    return {(1.0 - t) * (1.0 - t), t * (1.0 - t), t * t};
  }
  const double s = std::sin(theta);
  const double s1 = std::sin((1.0 - t) * theta) / s;
  const double s2 = std::sin(t * theta) / s;
  return {s1 * s1, s1 * s2, s2 * s2};
}

HellingerCoeffs hellinger_coeff_derivatives(double theta, double t) {
  const double r = 1.0 - t;
  if (theta < kSmallAngle) {
    return {-(2.0 / 3.0) * r * r * (r * r - 1.0) * theta,
            -(1.0 / 3.0) * t * r * (r * r + t * t - 2.0) * theta,
            -(2.0 / 3.0) * t * t * (t * t - 1.0) * theta};
  }
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  const double s1 = std::sin(r * theta);
  const double s2 = std::sin(t * theta);
  // d/dtheta of sin(k theta)/sin(theta).
  const double d1 = (r * std::cos(r * theta) * s - s1 * c) / (s * s);
  const double d2 = (t * std::cos(t * theta) * s - s2 * c) / (s * s);
  return {2.0 * (s1 / s) * d1, d1 * (s2 / s) + (s1 / s) * d2, 2.0 * (s2 / s) * d2};
}

HellingerAngle hellinger_angle(double u, double t) {
  HellingerAngle angle;
  angle.u_affinity = std::clamp(u, 0.0, 1.0);
  angle.theta = std::acos(angle.u_affinity);
  const HellingerCoeffs c = hellinger_coeffs(angle.theta, t);
  angle.alpha_t = c.alpha;
  angle.gamma_t = c.gamma;
  angle.beta_t = c.beta;
  return angle;
}

double hellinger_target_mass(const PathSpec& spec) {
  return TruncatedNormal(spec.a_star, spec.epsilon, spec.support).mass();
}

Curve hellinger_target(const PathSpec& spec) {
  TruncatedNormal q(spec.a_star, spec.epsilon, spec.support);
  return [q](double a) { return q.pdf(a); };
}

double hellinger_affinity_quadrature(const Curve& pi, const PathSpec& spec, int nodes) {
  PathSpec s = spec;
  s.family = Family::Hellinger;
  const double eps = spec.epsilon;
  auto integrand = [&](double a) {
    const double q = normal_pdf((a - spec.a_star) / eps) / eps;
    return std::sqrt(std::max(0.0, pi(a)) * q);
  };
  return std::clamp(integrate_adaptive(path_rule(s, 0.0, nodes), integrand), 0.0, 1.0);
}

double hellinger_affinity_closed_form(double mu_x, const Support& support, double a_star,
                                      double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be > 0");
  const TruncatedNormal pi(mu_x, 1.0, support);
  const double e2 = 1.0 + epsilon * epsilon;
  const double root = std::sqrt(2.0 * e2);
  auto arg = [&](double b) { return (epsilon * (b - mu_x) + (b - a_star) / epsilon) / root; };
  const double sl = arg(support.lo);
  const double su = arg(support.hi);
  const double window = sl > -su ? normal_sf(sl) - normal_sf(su) : normal_cdf(su) - normal_cdf(sl);
  const double d = mu_x - a_star;
  const double value = std::sqrt(2.0 * epsilon / e2) * std::exp(-d * d / (4.0 * e2)) /
                       std::sqrt(pi.mass()) * window;
  return std::clamp(value, 0.0, 1.0);
}

double restricted_affinity(double untruncated, const PathSpec& spec) {
  return std::clamp(untruncated / std::sqrt(hellinger_target_mass(spec)), 0.0, 1.0);
}

HellingerPath::HellingerPath(Curve pi, const PathSpec& spec, double t, double u_restricted)
    : pi_(std::move(pi)), q_(hellinger_target(spec)), angle_(hellinger_angle(u_restricted, t)) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("hellinger path requires 0 <= t <= 1");
}

double HellingerPath::operator()(double a) const {
  const double p = std::max(0.0, pi_(a));
  const double q = q_(a);
  return angle_.alpha_t * p + 2.0 * angle_.gamma_t * std::sqrt(p * q) + angle_.beta_t * q;
}

namespace {

double restricted_affinity_quadrature(const Curve& pi, const PathSpec& spec, int nodes) {
  const Curve q = hellinger_target(spec);
  auto integrand = [&](double a) { return std::sqrt(std::max(0.0, pi(a)) * q(a)); };
  return std::clamp(integrate_adaptive(path_rule(spec, 0.0, nodes), integrand), 0.0, 1.0);
}

}  // namespace

double hellinger_density(const Curve& pi, const PathSpec& spec, double t, double a) {
  PathSpec s = spec;
  s.family = Family::Hellinger;
  s.validate();
  return HellingerPath(pi, s, t, restricted_affinity_quadrature(pi, s, kDefaultNodes))(a);
}

Curve path_density(const PathSpec& spec, double t, Curve pi, std::optional<double> u_restricted,
                   int nodes) {
  switch (spec.family) {
    case Family::Wasserstein: {
      require_t_below_one(t);
      return [pi = std::move(pi), spec, t](double a) { return wasserstein_density(pi, t, spec, a); };
    }
    case Family::Hellinger: {
      const double u = u_restricted ? *u_restricted : restricted_affinity_quadrature(pi, spec, nodes);
      return HellingerPath(std::move(pi), spec, t, u);
    }
    case Family::ExpTilt:
      return ExpTilt(std::move(pi), tilt_delta(t), path_rule(spec, t, nodes));
    case Family::ReflectedTilt:
      return ReflectedTilt(std::move(pi), tilt_delta(t), spec.split_point, path_rule(spec, t, nodes));
  }
  throw InvalidInput("unknown path family");
}

ChiSquare chi_square_divergence(const Curve& rho, const Curve& pi, const Quadrature& rule) {
  ChiSquare out;
  double second_moment = 0.0;
  const auto nodes = rule.nodes();
  const auto weights = rule.weights();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double r = rho(nodes[k]);
    if (r <= 0.0) continue;
    const double p = pi(nodes[k]);
    if (p < kDensityFloor) {
      // Resolved mass of rho where pi vanishes makes the divergence infinite; when both
      // densities are below the floor the node carries no resolvable mass.
      if (r >= kDensityFloor) {
        out.infinite = true;
        out.offending_mass += weights[k] * r;
      }
      continue;
    }
    second_moment += weights[k] * r * (r / p);
  }
  out.value = out.infinite ? INFINITY : std::max(0.0, second_moment - 1.0);
  return out;
}

double chi_square_path_integral(const std::function<double(double)>& expected_chi_sq, double s,
                                double step) {
  if (!(s >= 0.0 && s < 1.0)) throw InvalidInput("path integral requires 0 <= s < 1");
  if (s == 0.0) return 0.0;
  if (!(step > 0.0)) throw InvalidInput("path integral requires a positive step");
  const auto panels = static_cast<std::size_t>(std::ceil(s / step - 1e-9));
  const double h = s / static_cast<double>(panels);
  double total = 0.0;
  double left = 1.0 + expected_chi_sq(0.0);
  for (std::size_t k = 1; k <= panels; ++k) {
    const double right = 1.0 + expected_chi_sq(h * static_cast<double>(k));
    total += 0.5 * h * (left + right);
    left = right;
  }
  return total;
}

RatioBound ratio_error_lower_bound_check(const Slicer& pi, const Slicer& rho, const Slicer& pi_hat,
                                         const Slicer& rho_hat,
                                         const std::vector<std::vector<double>>& xs,
                                         const Quadrature& rule) {
  if (xs.empty()) throw InvalidInput("ratio bound check needs at least one covariate row");
  RatioBound out;
  const auto nodes = rule.nodes();
  const auto weights = rule.weights();
  for (const auto& x : xs) {
    const Curve p = pi(x), r = rho(x), ph = pi_hat(x), rh = rho_hat(x);
    double diff = 0.0, chi = 0.0, chi_hat = 0.0, chi_plugin = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double a = nodes[k];
      const double pk = std::max(p(a), kDensityFloor);
      const double phk = std::max(ph(a), kDensityFloor);
      const double f = r(a) / pk;
      const double fh = rh(a) / phk;
      diff += weights[k] * (fh - f) * (fh - f) * pk;
      chi += weights[k] * (f - 1.0) * (f - 1.0) * pk;
      chi_hat += weights[k] * (fh - 1.0) * (fh - 1.0) * pk;
      chi_plugin += weights[k] * (fh - 1.0) * (fh - 1.0) * phk;
    }
    const double g = std::sqrt(std::max(0.0, chi)) - std::sqrt(std::max(0.0, chi_hat));
    const double gp = std::sqrt(std::max(0.0, chi)) - std::sqrt(std::max(0.0, chi_plugin));
    out.lhs += diff;
    out.rhs += g * g;
    out.rhs_plugin += gp * gp;
  }
  const double n = static_cast<double>(xs.size());
  out.lhs /= n;
  out.rhs /= n;
  out.rhs_plugin /= n;
  return out;
}

}  // namespace geodesy

namespace geodesy {

std::vector<double> path_expectations(const PathSpec& spec, const TGrid& grid, const Curve& g,
                                      const Curve& pi, std::optional<double> u_restricted,
                                      int nodes) {
  std::vector<double> out(grid.size(), 0.0);
  switch (spec.family) {
    case Family::Wasserstein: {
      // Change of variables a = (1 - t) b + t a*: E g(A_t) = integral g(lambda_b) pi(b) db.
      const Quadrature rule = Quadrature::gauss_legendre(spec.support.lo, spec.support.hi, nodes);
      const auto b = rule.nodes();
      const auto w = rule.weights();
      std::vector<double> pw(b.size());
      for (std::size_t k = 0; k < b.size(); ++k) pw[k] = w[k] * pi(b[k]);
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const double t = grid[j];
        require_t_below_one(t);
        double s = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) s += pw[k] * g((1.0 - t) * b[k] + t * spec.a_star);
        out[j] = s;
      }
      return out;
    }
    case Family::Hellinger: {
      const Quadrature rule = path_rule(spec, 0.0, nodes);
      const Curve q = hellinger_target(spec);
      double m1 = 0.0, m2 = 0.0, m3 = 0.0, u = 0.0;
      const auto a = rule.nodes();
      const auto w = rule.weights();
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double p = std::max(0.0, pi(a[k]));
        const double qk = q(a[k]);
        const double gk = g(a[k]);
        const double root = std::sqrt(p * qk);
        m1 += w[k] * gk * p;
        m2 += w[k] * gk * root;
        m3 += w[k] * gk * qk;
        u += w[k] * root;
      }
      if (u_restricted) u = *u_restricted;
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const HellingerAngle ang = hellinger_angle(u, grid[j]);
        out[j] = ang.alpha_t * m1 + 2.0 * ang.gamma_t * m2 + ang.beta_t * m3;
      }
      return out;
    }
    case Family::ExpTilt: {
      std::optional<Quadrature> rule;
      std::vector<double> pk, gk;
      for (std::size_t j = 0; j < grid.size(); ++j) {
        Quadrature r = path_rule(spec, grid[j], nodes);
        if (!rule || rule->breaks() != r.breaks()) {
          rule = r;
          pk.resize(r.size());
          gk.resize(r.size());
          for (std::size_t k = 0; k < r.size(); ++k) {
            pk[k] = std::max(0.0, pi(r.nodes()[k]));
            gk[k] = g(r.nodes()[k]);
          }
        }
        const double delta = tilt_delta(grid[j]);
        const double shift = std::max(delta * spec.support.lo, delta * spec.support.hi);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < rule->size(); ++k) {
          const double f = rule->weights()[k] * std::exp(delta * rule->nodes()[k] - shift) * pk[k];
          num += f * gk[k];
          den += f;
        }
        out[j] = num / den;
      }
      return out;
    }
    case Family::ReflectedTilt: {
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const Curve rho = path_density(spec, grid[j], pi, std::nullopt, nodes);
        out[j] = path_rule(spec, grid[j], nodes).integrate([&](double a) { return g(a) * rho(a); });
      }
      return out;
    }
  }
  return out;
}

std::vector<ChiSquare> chi_square_along_path(const PathSpec& spec, const TGrid& grid,
                                             const Curve& pi, std::optional<double> u_restricted,
                                             int nodes) {
  std::vector<ChiSquare> out(grid.size());
  if (spec.family == Family::Wasserstein) {
    // integral of nu_t^2 / pi = integral of pi(b)^2 / ((1 - t) pi(lambda_b)) db.
    const Quadrature rule = Quadrature::gauss_legendre(spec.support.lo, spec.support.hi, nodes);
    const auto b = rule.nodes();
    const auto w = rule.weights();
    std::vector<double> pb(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) pb[k] = pi(b[k]);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double t = grid[j];
      require_t_below_one(t);
      ChiSquare& c = out[j];
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) {
        if (pb[k] <= 0.0) continue;
        const double p = pi((1.0 - t) * b[k] + t * spec.a_star);
        // Same floor rule as chi_square_divergence with rho = pi(b) / (1 - t) at the image point.
        if (p < kDensityFloor) {
          if (pb[k] >= (1.0 - t) * kDensityFloor) {
            c.infinite = true;
            c.offending_mass += w[k] * pb[k];
          }
          continue;
        }
        s += w[k] * pb[k] * pb[k] / ((1.0 - t) * p);
      }
      c.value = c.infinite ? INFINITY : std::max(0.0, s - 1.0);
    }
    return out;
  }
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Curve rho = path_density(spec, grid[j], pi, u_restricted, nodes);
    out[j] = chi_square_divergence(rho, pi, path_rule(spec, grid[j], nodes));
  }
  return out;
}

}  // namespace geodesy
