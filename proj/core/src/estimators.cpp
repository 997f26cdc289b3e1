#include "geodesy/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "geodesy/parallel.hpp"

namespace geodesy {

namespace {

double floored(double p, bool& clipped) {
  if (p < kDensityFloor) {
    clipped = true;
    return kDensityFloor;
  }
  return p;
}

EifRecord make_record(std::vector<EifComponent> components, bool clipped) {
  EifRecord r;
  r.components = std::move(components);
  for (const auto& c : r.components) r.value += c.value;
  r.clipped = clipped;
  return r;
}

// Row-level state for the Wasserstein geodesic.
class WassersteinRow {
 public:
  WassersteinRow(const PathSpec& spec, const NuisancePair& nuis, Row x)
      : spec_(spec), pi_(nuis.pi->slice(x)), mu_(nuis.mu->slice(x)) {}

  EifRecord eif(double a, double y, double t, double psi_ref) const {
    bool clipped = false;
    const double p = floored(pi_(a), clipped);
    const double ratio = wasserstein_density(pi_, t, spec_, a) / p;
    const double shifted = (1.0 - t) * a + t * spec_.a_star;
    return make_record({{"residual", ratio * (y - mu_(a))},
                        {"shifted_mean", mu_(shifted)},
                        {"centering", -psi_ref}},
                       clipped);
  }

  ChiSquare chi_sq(double t, int nodes) const {
    const Curve rho = [&](double a) { return wasserstein_density(pi_, t, spec_, a); };
    return chi_square_divergence(rho, pi_, path_rule(spec_, t, nodes));
  }

 private:
  const PathSpec& spec_;
  Curve pi_;
  Curve mu_;
};

// Row-level state for the Hellinger geodesic: conditional moments do not depend on t.
class HellingerRow {
 public:
  HellingerRow(const PathSpec& spec, const NuisancePair& nuis, Row x, const EstimateOptions& opt)
      : pi_(nuis.pi->slice(x)), mu_(nuis.mu->slice(x)), q_(hellinger_target(spec)) {
    rule_ = std::make_shared<Quadrature>(path_rule(spec, 0.0, opt.nodes));
    const auto nodes = rule_->nodes();
    const auto w = rule_->weights();
    pk_.resize(nodes.size());
    qk_.resize(nodes.size());
    double u = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double p = std::max(0.0, pi_(nodes[k]));
      const double q = q_(nodes[k]);
      const double m = mu_(nodes[k]);
      pk_[k] = p;
      qk_[k] = q;
      const double root = std::sqrt(p * q);
      m1_ += w[k] * m * p;
      m2_ += w[k] * m * root;
      m3_ += w[k] * m * q;
      u += w[k] * root;
    }
    if (opt.closed_form_affinity) {
      if (auto closed = nuis.pi->gaussian_affinity(x, spec.a_star, spec.epsilon)) {
        u = restricted_affinity(*closed, spec);
      }
    }
    u_ = std::clamp(u, 0.0, 1.0);
  }

  double u() const { return u_; }

  // Conditional mean of mu under nu_t and its theta derivative.
  double conditional_mean(const HellingerAngle& g) const {
    return g.alpha_t * m1_ + 2.0 * g.gamma_t * m2_ + g.beta_t * m3_;
  }

  double dtheta(const HellingerAngle& g, double t) const {
    const HellingerCoeffs d = hellinger_coeff_derivatives(g.theta, t);
    return d.alpha * m1_ + 2.0 * d.gamma * m2_ + d.beta * m3_;
  }

  // dtheta / (2 sin theta), continuous through theta = 0.
  double dtheta_over_two_sin(const HellingerAngle& g, double t) const {
    if (g.theta < kSmallAngle) {
      const double r = 1.0 - t;
      const double da = -(2.0 / 3.0) * r * r * (r * r - 1.0);
      const double dg = -(1.0 / 3.0) * t * r * (r * r + t * t - 2.0);
      const double db = -(2.0 / 3.0) * t * t * (t * t - 1.0);
      return 0.5 * (da * m1_ + 2.0 * dg * m2_ + db * m3_);
    }
    return dtheta(g, t) / (2.0 * std::sin(g.theta));
  }

  EifRecord eif(double a, double y, double t, double psi_ref) const {
    const HellingerAngle g = hellinger_angle(u_, t);
    bool clipped = false;
    const double p = floored(pi_(a), clipped);
    const double q = q_(a);
    const double root = std::sqrt(q / p);
    const double ratio = g.alpha_t + 2.0 * g.gamma_t * root + g.beta_t * q / p;
    const double m = mu_(a);
    return make_record({{"D_Y", ratio * (y - m)},
                        {"D_mu", g.alpha_t * (m - m1_)},
                        {"D_Q", g.gamma_t * (m * root - m2_)},
                        {"D_theta", -(root - u_) * dtheta_over_two_sin(g, t)},
                        {"D_psi", conditional_mean(g) - psi_ref}},
                       clipped);
  }

  ChiSquare chi_sq(double t) const {
    const HellingerAngle g = hellinger_angle(u_, t);
    ChiSquare out;
    double s = 0.0;
    const auto w = rule_->weights();
    for (std::size_t k = 0; k < pk_.size(); ++k) {
      const double nu = g.alpha_t * pk_[k] + 2.0 * g.gamma_t * std::sqrt(pk_[k] * qk_[k]) +
                        g.beta_t * qk_[k];
      if (nu <= 0.0) continue;
      if (pk_[k] < kDensityFloor && nu > pk_[k]) {
        out.infinite = true;
        out.offending_mass += w[k] * nu;
        continue;
      }
      s += w[k] * nu * (nu / pk_[k]);
    }
    out.value = out.infinite ? INFINITY : std::max(0.0, s - 1.0);
    return out;
  }

 private:
  Curve pi_, mu_, q_;
  std::shared_ptr<Quadrature> rule_;
  std::vector<double> pk_, qk_;
  double m1_ = 0.0, m2_ = 0.0, m3_ = 0.0, u_ = 1.0;
};

// Row-level state for a tilt of pi: node values on a fixed rule.
class TiltRow {
 public:
  struct State {
    double norm = 1.0;  // integral of f relative to the integral of pi
    double tilted_mean = 0.0;
    double c_mu = 0.0;
    double c_one = 0.0;
    double chi_second = 0.0;
    bool chi_infinite = false;
    double offending = 0.0;
  };

  TiltRow(const NuisancePair& nuis, Row x, const Quadrature& rule)
      : pi_(nuis.pi->slice(x)), mu_(nuis.mu->slice(x)), rule_(rule) {
    const auto nodes = rule_.nodes();
    pk_.resize(nodes.size());
    mk_.resize(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      pk_[k] = std::max(0.0, pi_(nodes[k]));
      mk_[k] = mu_(nodes[k]);
    }
  }

  const Quadrature& rule() const { return rule_; }

  State state(const TiltFunction& tilt) const {
    const auto nodes = rule_.nodes();
    const auto w = rule_.weights();
    double mass = 0.0, fsum = 0.0, fmu = 0.0, dmu = 0.0, done = 0.0;
    std::vector<double> f(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double fk = tilt.f(pk_[k], nodes[k]);
      const double dk = tilt.f_prime(pk_[k], nodes[k]) * pk_[k];
      f[k] = fk;
      mass += w[k] * pk_[k];
      fsum += w[k] * fk;
      fmu += w[k] * fk * mk_[k];
      dmu += w[k] * dk * mk_[k];
      done += w[k] * dk;
    }
    if (!(fsum > 0.0) || !(mass > 0.0)) throw NumericalFailure("tilt normalizer is not positive");
    State s;
    s.norm = fsum / mass;
    s.tilted_mean = fmu / fsum;
    s.c_mu = dmu / fsum;
    s.c_one = done / fsum;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (f[k] <= 0.0) continue;
      const double qk = f[k] / s.norm;
      if (pk_[k] < kDensityFloor && qk > pk_[k]) {
        s.chi_infinite = true;
        s.offending += w[k] * qk;
        continue;
      }
      s.chi_second += w[k] * qk * (qk / pk_[k]);
    }
    return s;
  }

  EifRecord eif(double a, double y, const TiltFunction& tilt, const State& s,
                double psi_ref) const {
    bool clipped = false;
    const double p_raw = std::max(0.0, pi_(a));
    const double p = floored(p_raw, clipped);
    const double m = mu_(a);
    const double phi_y = tilt.f(p_raw, a) / (s.norm * p) * (y - m);
    const double phi_q = tilt.f_prime(p_raw, a) / s.norm * (m - s.tilted_mean);
    const double phi_c = s.c_mu - s.tilted_mean * s.c_one;
    return make_record({{"phi_y", phi_y},
                        {"phi_q_mu", phi_q},
                        {"minus_phi_c", -phi_c},
                        {"phi_psi", s.tilted_mean - psi_ref}},
                       clipped);
  }

 private:
  Curve pi_, mu_;
  Quadrature rule_;
  std::vector<double> pk_, mk_;
};

ChiSquare tilt_chi(const TiltRow::State& s) {
  ChiSquare c;
  c.infinite = s.chi_infinite;
  c.offending_mass = s.offending;
  c.value = s.chi_infinite ? INFINITY : std::max(0.0, s.chi_second - 1.0);
  return c;
}

// Fills one row of influence values (uncentered) across the grid.
using RowKernel = std::function<void(std::size_t i, const NuisancePair& nuis, double* phi,
                                     char* clipped, double* chi)>;

EstimateResult aggregate(const Dataset& data, const TGrid& grid, const CrossFit& nuisances,
                         const EstimateOptions& options, const RowKernel& kernel) {
  const std::size_t n = data.n(), T = grid.size();
  if (n < 2) throw InvalidInput("one-step estimation needs at least two rows");
  Eigen::MatrixXd phi(n, T);
  std::vector<char> clipped(n * T, 0);
  std::vector<double> chi(n * T, 0.0);
  std::vector<double> row_phi(n * T);
  parallel_for(n, options.threads, [&](std::size_t i) {
    kernel(i, nuisances.for_row(i), &row_phi[i * T], &clipped[i * T], &chi[i * T]);
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < T; ++j) phi(i, j) = row_phi[i * T + j];
  }

  EstimateResult res;
  res.n = n;
  res.folds = nuisances.plan().k;
  std::size_t n_clipped = 0;
  for (char c : clipped) n_clipped += c ? 1 : 0;
  res.clipping_rate = static_cast<double>(n_clipped) / static_cast<double>(n * T);
  for (std::size_t j = 0; j < T; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += phi(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      phi(i, j) -= mean;
      ss += phi(i, j) * phi(i, j);
    }
    EffectPoint pt;
    pt.t = grid[j];
    pt.psi_hat = mean;
    pt.se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    pt.ci_lo = mean - kWaldCritical * pt.se;
    pt.ci_hi = mean + kWaldCritical * pt.se;
    if (options.compute_chi_sq) {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += chi[i * T + j];
      pt.chi_sq = c / static_cast<double>(n);
    }
    res.curve.push_back(pt);
  }
  res.eif = std::move(phi);
  return res;
}

}  // namespace

EifRecord eif_wasserstein(const Observation& z, double t, const PathSpec& spec,
                          const NuisancePair& nuis, double psi_ref) {
  return WassersteinRow(spec, nuis, z.x).eif(z.a, z.y, t, psi_ref);
}

EstimateResult one_step_wasserstein(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                                    const CrossFit& nuisances, const EstimateOptions& options) {
  spec.validate();
  const std::size_t T = grid.size();
  return aggregate(data, grid, nuisances, options,
                   [&](std::size_t i, const NuisancePair& nuis, double* phi, char* clipped,
                       double* chi) {
                     const WassersteinRow row(spec, nuis, data.x(i));
                     for (std::size_t j = 0; j < T; ++j) {
                       const EifRecord r = row.eif(data.a(i), data.y(i), grid[j], 0.0);
                       phi[j] = r.value;
                       clipped[j] = r.clipped;
                       if (options.compute_chi_sq) chi[j] = row.chi_sq(grid[j], options.nodes).value;
                     }
                   });
}

double dtheta_conditional_mean(const Curve& mu, const Curve& pi, const PathSpec& spec, double t,
                               std::optional<double> u_restricted, int nodes) {
  const Quadrature rule = path_rule(spec, 0.0, nodes);
  const Curve q = hellinger_target(spec);
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, u = 0.0;
  const auto a = rule.nodes();
  const auto w = rule.weights();
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double p = std::max(0.0, pi(a[k]));
    const double qk = q(a[k]);
    const double m = mu(a[k]);
    const double root = std::sqrt(p * qk);
    m1 += w[k] * m * p;
    m2 += w[k] * m * root;
    m3 += w[k] * m * qk;
    u += w[k] * root;
  }
  const HellingerAngle g = hellinger_angle(u_restricted ? *u_restricted : u, t);
  const HellingerCoeffs d = hellinger_coeff_derivatives(g.theta, t);
  return d.alpha * m1 + 2.0 * d.gamma * m2 + d.beta * m3;
}

EifRecord eif_hellinger(const Observation& z, double t, const PathSpec& spec,
                        const NuisancePair& nuis, double psi_ref, const EstimateOptions& options) {
  if (!(t >= 0.0 && t < 1.0)) throw InvalidInput("hellinger influence function requires 0 <= t < 1");
  return HellingerRow(spec, nuis, z.x, options).eif(z.a, z.y, t, psi_ref);
}

EstimateResult one_step_hellinger(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                                  const CrossFit& nuisances, const EstimateOptions& options) {
  spec.validate();
  const std::size_t T = grid.size();
  return aggregate(data, grid, nuisances, options,
                   [&](std::size_t i, const NuisancePair& nuis, double* phi, char* clipped,
                       double* chi) {
                     const HellingerRow row(spec, nuis, data.x(i), options);
                     for (std::size_t j = 0; j < T; ++j) {
                       const EifRecord r = row.eif(data.a(i), data.y(i), grid[j], 0.0);
                       phi[j] = r.value;
                       clipped[j] = r.clipped;
                       if (options.compute_chi_sq) chi[j] = row.chi_sq(grid[j]).value;
                     }
                   });
}

std::vector<double> hellinger_rate_factor(const Dataset& data, const PathSpec& spec,
                                          const TGrid& grid, const CrossFit& nuisances,
                                          const EstimateOptions& options) {
  spec.validate();
  std::vector<double> out(grid.size(), 0.0);
  if (data.n() == 0) return out;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const HellingerRow row(spec, nuisances.for_row(i), data.x(i), options);
    for (std::size_t j = 0; j < grid.size(); ++j) out[j] += hellinger_angle(row.u(), grid[j]).beta_t;
  }
  for (double& v : out) v /= static_cast<double>(data.n());
  return out;
}

TiltFunction exponential_tilt(double delta, const Support& support) {
  if (delta == 0.0) {
    return {[](double p, double) { return p; }, [](double, double) { return 1.0; }};
  }
  const double shift = std::max(delta * support.lo, delta * support.hi);
  return {[delta, shift](double p, double a) { return std::exp(delta * a - shift) * p; },
          [delta, shift](double, double a) { return std::exp(delta * a - shift); }};
}

EifRecord eif_general_tilt(const Observation& z, const TiltFunction& tilt, const NuisancePair& nuis,
                           double psi_ref, const Quadrature& rule) {
  const TiltRow row(nuis, z.x, rule);
  return row.eif(z.a, z.y, tilt, row.state(tilt), psi_ref);
}

EstimateResult one_step_exp_tilt(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                                 const CrossFit& nuisances, const EstimateOptions& options) {
  spec.validate();
  const std::size_t T = grid.size();
  return aggregate(data, grid, nuisances, options,
                   [&](std::size_t i, const NuisancePair& nuis, double* phi, char* clipped,
                       double* chi) {
                     std::unique_ptr<TiltRow> row;
                     for (std::size_t j = 0; j < T; ++j) {
                       Quadrature rule = path_rule(spec, grid[j], options.nodes);
                       if (!row || row->rule().breaks() != rule.breaks()) {
                         row = std::make_unique<TiltRow>(nuis, data.x(i), rule);
                       }
                       const TiltFunction tilt = exponential_tilt(tilt_delta(grid[j]), spec.support);
                       const TiltRow::State s = row->state(tilt);
                       const EifRecord r = row->eif(data.a(i), data.y(i), tilt, s, 0.0);
                       phi[j] = r.value;
                       clipped[j] = r.clipped;
                       if (options.compute_chi_sq) chi[j] = tilt_chi(s).value;
                     }
                   });
}

EstimateResult one_step(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                        const CrossFit& nuisances, const EstimateOptions& options) {
  switch (spec.family) {
    case Family::Wasserstein:
      return one_step_wasserstein(data, spec, grid, nuisances, options);
    case Family::Hellinger:
      return one_step_hellinger(data, spec, grid, nuisances, options);
    case Family::ExpTilt:
      return one_step_exp_tilt(data, spec, grid, nuisances, options);
    case Family::ReflectedTilt:
      throw InvalidInput("the reflected tilt has no influence-function estimator; use plug-in");
  }
  throw InvalidInput("unknown path family");
}

namespace {

std::optional<double> oracle_affinity(const PathSpec& spec, const NuisancePair& nuis, Row x,
                                      const EstimateOptions& options) {
  if (spec.family != Family::Hellinger || !options.closed_form_affinity) return std::nullopt;
  if (auto closed = nuis.pi->gaussian_affinity(x, spec.a_star, spec.epsilon)) {
    return restricted_affinity(*closed, spec);
  }
  return std::nullopt;
}

double row_plug_in(const PathSpec& spec, double t, const NuisancePair& nuis, Row x,
                   const EstimateOptions& options) {
  return path_expectations(spec, TGrid{{t}}, nuis.mu->slice(x), nuis.pi->slice(x),
                           oracle_affinity(spec, nuis, x, options), options.nodes)[0];
}

}  // namespace

EffectCurve plug_in(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                    const CrossFit& nuisances, const EstimateOptions& options) {
  spec.validate();
  const std::size_t n = data.n(), T = grid.size();
  std::vector<double> values(n * T);
  parallel_for(n, options.threads, [&](std::size_t i) {
    const NuisancePair& nuis = nuisances.for_row(i);
    const auto row = path_expectations(spec, grid, nuis.mu->slice(data.x(i)),
                                       nuis.pi->slice(data.x(i)),
                                       oracle_affinity(spec, nuis, data.x(i), options), options.nodes);
    std::copy(row.begin(), row.end(), values.begin() + static_cast<std::ptrdiff_t>(i * T));
  });
  EffectCurve curve;
  for (std::size_t j = 0; j < T; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i * T + j];
    EffectPoint pt;
    pt.t = grid[j];
    pt.psi_hat = s / static_cast<double>(n);
    pt.ci_lo = pt.ci_hi = pt.psi_hat;
    curve.push_back(pt);
  }
  return curve;
}

double remainder_diagnostic(const NuisancePair& truth, const NuisancePair& perturbed,
                            const PathSpec& spec, double t,
                            const std::vector<std::vector<double>>& xs, int nodes) {
  spec.validate();
  if (spec.family == Family::ReflectedTilt) {
    throw InvalidInput("the reflected tilt has no influence function");
  }
  if (xs.empty()) throw InvalidInput("remainder diagnostic needs covariate rows");
  EstimateOptions options;
  options.nodes = nodes;
  options.closed_form_affinity = false;
  const Quadrature rule = path_rule(spec, t, nodes);
  const auto a = rule.nodes();
  const auto w = rule.weights();
  double total = 0.0;
  for (const auto& x : xs) {
    const Curve pi = truth.pi->slice(x);
    const Curve mu = truth.mu->slice(x);
    // E_P[phi(Z; P_hat) | x] with Y replaced by mu(x, a): phi is linear in Y.
    double expected = 0.0;
    switch (spec.family) {
      case Family::Wasserstein: {
        const WassersteinRow row(spec, perturbed, x);
        for (std::size_t k = 0; k < a.size(); ++k) {
          expected += w[k] * pi(a[k]) * row.eif(a[k], mu(a[k]), t, 0.0).value;
        }
        break;
      }
      case Family::Hellinger: {
        const HellingerRow row(spec, perturbed, x, options);
        for (std::size_t k = 0; k < a.size(); ++k) {
          expected += w[k] * pi(a[k]) * row.eif(a[k], mu(a[k]), t, 0.0).value;
        }
        break;
      }
      case Family::ExpTilt: {
        const TiltRow row(perturbed, x, rule);
        const TiltFunction tilt = exponential_tilt(tilt_delta(t), spec.support);
        const TiltRow::State s = row.state(tilt);
        for (std::size_t k = 0; k < a.size(); ++k) {
          expected += w[k] * pi(a[k]) * row.eif(a[k], mu(a[k]), tilt, s, 0.0).value;
        }
        break;
      }
      case Family::ReflectedTilt:
        break;
    }
    total += expected - row_plug_in(spec, t, truth, x, options);
  }
  return total / static_cast<double>(xs.size());
}

double wasserstein_remainder_product(const NuisancePair& truth, const NuisancePair& perturbed,
                                     const PathSpec& spec, double t,
                                     const std::vector<std::vector<double>>& xs, int nodes) {
  PathSpec s = spec;
  s.family = Family::Wasserstein;
  s.validate();
  const Quadrature rule = path_rule(s, t, nodes);
  double total = 0.0;
  for (const auto& x : xs) {
    const Curve pi = truth.pi->slice(x), mu = truth.mu->slice(x);
    const Curve pih = perturbed.pi->slice(x), muh = perturbed.mu->slice(x);
    total += rule.integrate([&](double a) {
      const double p = pi(a);
      if (p <= 0.0) return 0.0;
      const double r = wasserstein_density(pi, t, s, a) / p;
      const double rh = wasserstein_density(pih, t, s, a) / std::max(pih(a), kDensityFloor);
      return (mu(a) - muh(a)) * (rh - r) * p;
    });
  }
  return total / static_cast<double>(xs.size());
}

}  // namespace geodesy
