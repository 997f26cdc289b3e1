#include "geodesy/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geodesy/distributions.hpp"
#include "geodesy/parallel.hpp"

namespace geodesy {

Curve OutcomeModel::slice(Row x) const {
  std::vector<double> row(x.begin(), x.end());
  return [this, row = std::move(row)](double a) { return mean(row, a); };
}

namespace {

constexpr int kMaxOrder = 8;

std::vector<double> column(const Dataset& data, std::size_t j) {
  std::vector<double> v(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) v[i] = data.x(i)[j];
  return v;
}

// Block-diagonal placement of a square penalty.
void place(Eigen::MatrixXd& P, const Eigen::MatrixXd& block, Eigen::Index at) {
  P.block(at, at, block.rows(), block.cols()) += block;
}

std::vector<BSplineBasis> covariate_splines(const Dataset& train, int knots) {
  std::vector<BSplineBasis> bases;
  for (std::size_t j = 0; j < train.d(); ++j) {
    auto v = column(train, j);
    bases.push_back(BSplineBasis::at_quantiles(v, knots));
  }
  return bases;
}

}  // namespace

SplineOutcomeModel::SplineOutcomeModel(const Dataset& train, const NuisanceConfig& config)
    : exposure_basis_(train.support().lo, train.support().hi, config.knots) {
  const std::size_t n = train.n(), d = train.d();
  covariate_bases_ = covariate_splines(train, config.covariate_knots);
  x_mean_.assign(d, 0.0);
  x_scale_.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    auto v = column(train, j);
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double e : v) ss += (e - m) * (e - m);
    x_mean_[j] = m;
    x_scale_[j] = ss > 0.0 ? std::sqrt(ss / n) : 1.0;
  }

  const int ma = exposure_basis_.size();
  Eigen::Index p = ma * static_cast<Eigen::Index>(1 + d);
  for (const auto& b : covariate_bases_) p += b.size();
  if (static_cast<Eigen::Index>(n) <= p + 1) {
    throw InvalidInput("outcome regression needs more than " + std::to_string(p + 1) +
                       " training rows, got " + std::to_string(n));
  }

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n);
  double va[kMaxOrder], vx[kMaxOrder];
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = train.x(i);
    const int first = exposure_basis_.evaluate(train.a(i), va);
    for (int r = 0; r <= exposure_basis_.degree(); ++r) {
      X(i, first + r) = va[r];
      for (std::size_t j = 0; j < d; ++j) {
        const double z = (xi[j] - x_mean_[j]) / x_scale_[j];
        X(i, ma * static_cast<Eigen::Index>(1 + j) + first + r) = z * va[r];
      }
    }
    Eigen::Index at = ma * static_cast<Eigen::Index>(1 + d);
    for (std::size_t j = 0; j < d; ++j) {
      const int fx = covariate_bases_[j].evaluate(xi[j], vx);
      for (int r = 0; r <= covariate_bases_[j].degree(); ++r) X(i, at + fx + r) = vx[r];
      at += covariate_bases_[j].size();
    }
    y(i) = train.y(i);
  }

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, p);
  const Eigen::MatrixXd pa = exposure_basis_.second_difference_penalty();
  for (std::size_t j = 0; j <= d; ++j) place(P, pa, ma * static_cast<Eigen::Index>(j));
  Eigen::Index at = ma * static_cast<Eigen::Index>(1 + d);
  for (const auto& b : covariate_bases_) {
    place(P, b.second_difference_penalty(), at);
    at += b.size();
  }
  fit_ = fit_penalized(X, y, P, config.ridge_grid);
}

SplineOutcomeModel::RowTerms SplineOutcomeModel::row_terms(Row x) const {
  const std::size_t d = x_mean_.size();
  const int ma = exposure_basis_.size();
  RowTerms terms;
  terms.exposure_weights.assign(ma, 0.0);
  for (int k = 0; k < ma; ++k) {
    double w = fit_.coef(k);
    for (std::size_t j = 0; j < d; ++j) {
      const double z = (x[j] - x_mean_[j]) / x_scale_[j];
      w += z * fit_.coef(ma * static_cast<Eigen::Index>(1 + j) + k);
    }
    terms.exposure_weights[k] = w;
  }
  terms.offset = fit_.intercept;
  double vx[kMaxOrder];
  Eigen::Index at = ma * static_cast<Eigen::Index>(1 + d);
  for (std::size_t j = 0; j < d; ++j) {
    const int fx = covariate_bases_[j].evaluate(x[j], vx);
    for (int r = 0; r <= covariate_bases_[j].degree(); ++r) terms.offset += vx[r] * fit_.coef(at + fx + r);
    at += covariate_bases_[j].size();
  }
  return terms;
}

double SplineOutcomeModel::combine(const RowTerms& terms, double a) const {
  double va[kMaxOrder];
  const int first = exposure_basis_.evaluate(a, va);
  double s = terms.offset;
  for (int r = 0; r <= exposure_basis_.degree(); ++r) s += va[r] * terms.exposure_weights[first + r];
  return s;
}

double SplineOutcomeModel::mean(Row x, double a) const { return combine(row_terms(x), a); }

Curve SplineOutcomeModel::slice(Row x) const {
  return [this, terms = row_terms(x)](double a) { return combine(terms, a); };
}

LocationScaleDensity::LocationScaleDensity(const Dataset& train, const NuisanceConfig& config)
    : support_(train.support()) {
  if (config.heteroscedastic) {
    throw InvalidInput("heteroscedastic treatment densities are not supported");
  }
  const std::size_t n = train.n();
  if (n < 50) throw InvalidInput("treatment density needs at least 50 training rows");
  covariate_bases_ = covariate_splines(train, config.covariate_knots);
  Eigen::Index p = 0;
  for (const auto& b : covariate_bases_) p += b.size();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n);
  double vx[kMaxOrder];
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index at = 0;
    for (std::size_t j = 0; j < train.d(); ++j) {
      const int fx = covariate_bases_[j].evaluate(train.x(i)[j], vx);
      for (int r = 0; r <= covariate_bases_[j].degree(); ++r) X(i, at + fx + r) = vx[r];
      at += covariate_bases_[j].size();
    }
    y(i) = train.a(i);
  }
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, p);
  Eigen::Index at = 0;
  for (const auto& b : covariate_bases_) {
    place(P, b.second_difference_penalty(), at);
    at += b.size();
  }
  fit_ = fit_penalized(X, y, P, config.ridge_grid);

  residuals_.resize(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    residuals_[i] = train.a(i) - location(train.x(i));
    ss += residuals_[i] * residuals_[i];
  }
  sigma_ = std::sqrt(ss / n);
  if (!(sigma_ > 1e-8 * support_.width())) {
    throw NumericalFailure("degenerate treatment: residual scale is zero");
  }
  for (double& e : residuals_) e /= sigma_;
  std::sort(residuals_.begin(), residuals_.end());

  if (config.kde_bandwidth.empty() || config.kde_bandwidth == "silverman") {
    double m = 0.0, s2 = 0.0;
    for (double e : residuals_) m += e;
    m /= n;
    for (double e : residuals_) s2 += (e - m) * (e - m);
    const double sd = std::sqrt(s2 / (n - 1));
    auto q = [&](double prob) {
      const double pos = prob * (n - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double f = pos - i;
      return i + 1 < n ? residuals_[i] * (1 - f) + residuals_[i + 1] * f : residuals_[i];
    };
    const double iqr = q(0.75) - q(0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = sd;
    bandwidth_ = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  } else {
    try {
      bandwidth_ = std::stod(config.kde_bandwidth);
    } catch (const std::exception&) {
      throw InvalidInput("kde_bandwidth must be 'silverman' or a positive number");
    }
    if (!(bandwidth_ > 0.0)) throw InvalidInput("kde_bandwidth must be positive");
  }
}

double LocationScaleDensity::location(Row x) const {
  double g = fit_.intercept;
  double vx[kMaxOrder];
  Eigen::Index at = 0;
  for (std::size_t j = 0; j < covariate_bases_.size(); ++j) {
    const int fx = covariate_bases_[j].evaluate(x[j], vx);
    for (int r = 0; r <= covariate_bases_[j].degree(); ++r) g += vx[r] * fit_.coef(at + fx + r);
    at += covariate_bases_[j].size();
  }
  return g;
}

double LocationScaleDensity::residual_pdf(double e) const {
  const double h = bandwidth_;
  // Kernel contributions beyond 40 bandwidths are below double precision.
  const auto lo = std::lower_bound(residuals_.begin(), residuals_.end(), e - 40.0 * h);
  const auto hi = std::upper_bound(residuals_.begin(), residuals_.end(), e + 40.0 * h);
  double s = 0.0;
  for (auto it = lo; it != hi; ++it) s += normal_pdf((e - *it) / h);
  return s / (residuals_.size() * h);
}

double LocationScaleDensity::residual_cdf(double e) const {
  double s = 0.0;
  for (double r : residuals_) s += normal_cdf((e - r) / bandwidth_);
  return s / residuals_.size();
}

Curve LocationScaleDensity::slice(Row x) const {
  const double g = location(x);
  const double mass =
      residual_cdf((support_.hi - g) / sigma_) - residual_cdf((support_.lo - g) / sigma_);
  const double norm = mass > 0.0 ? 1.0 / (sigma_ * mass) : 0.0;
  return [this, g, norm](double a) {
    if (!support_.contains(a)) return 0.0;
    return residual_pdf((a - g) / sigma_) * norm;
  };
}

double LocationScaleDensity::density(double a, Row x) const { return slice(x)(a); }

std::shared_ptr<const OutcomeModel> fit_outcome_regression(const Dataset& train,
                                                           const NuisanceConfig& config) {
  return std::make_shared<SplineOutcomeModel>(train, config);
}

std::shared_ptr<const ConditionalDensity> fit_conditional_density(const Dataset& train,
                                                                  const NuisanceConfig& config) {
  return std::make_shared<LocationScaleDensity>(train, config);
}

std::vector<std::size_t> FoldPlan::rows_in(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::rows_outside(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldPlan make_fold_plan(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidInput("folds must be >= 2");
  if (static_cast<std::size_t>(k) > n) throw InvalidInput("folds must not exceed the number of rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  FoldPlan plan;
  plan.k = k;
  plan.assignment.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) plan.assignment[order[pos]] = static_cast<int>(pos % k);
  return plan;
}

NuisanceFitters spline_fitters(const NuisanceConfig& config) {
  NuisanceFitters f;
  f.fit_mu = [config](const Dataset& d) { return fit_outcome_regression(d, config); };
  f.fit_pi = [config](const Dataset& d) { return fit_conditional_density(d, config); };
  return f;
}

NuisanceFitters oracle_fitters(std::shared_ptr<const OutcomeModel> mu,
                               std::shared_ptr<const ConditionalDensity> pi) {
  NuisanceFitters f;
  f.fit_mu = [mu](const Dataset&) { return mu; };
  f.fit_pi = [pi](const Dataset&) { return pi; };
  f.mu_provenance = Provenance::Oracle;
  f.pi_provenance = Provenance::Oracle;
  return f;
}

CrossFit::CrossFit(FoldPlan plan, std::vector<NuisancePair> pairs,
                   std::vector<std::vector<bool>> trained_on)
    : plan_(std::move(plan)), pairs_(std::move(pairs)), trained_on_(std::move(trained_on)) {}

const NuisancePair& CrossFit::for_row(std::size_t i) const {
  const int fold = plan_.assignment.at(i);
  if (trained_on_[fold][i]) {
    throw std::logic_error("cross-fitting violated: row " + std::to_string(i) +
                           " was in the training set of its own fold");
  }
  return pairs_[fold];
}

CrossFit crossfit(const Dataset& data, const FoldPlan& plan, const NuisanceFitters& fitters,
                  unsigned threads) {
  if (plan.assignment.size() != data.n()) throw InvalidInput("fold plan does not match the data");
  std::vector<NuisancePair> pairs(plan.k);
  std::vector<std::vector<bool>> trained(plan.k, std::vector<bool>(data.n(), false));
  parallel_for(static_cast<std::size_t>(plan.k), threads, [&](std::size_t f) {
    const int fold = static_cast<int>(f);
    const auto rows = plan.rows_outside(fold);
    try {
      const Dataset train = data.subset(rows);
      pairs[f].mu = fitters.fit_mu(train);
      pairs[f].pi = fitters.fit_pi(train);
    } catch (const InvalidInput& e) {
      throw InvalidInput("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("fold " + std::to_string(fold) + ": " + e.what());
    }
    pairs[f].mu_provenance = fitters.mu_provenance;
    pairs[f].pi_provenance = fitters.pi_provenance;
    for (std::size_t i : rows) trained[f][i] = true;
  });
  return CrossFit(plan, std::move(pairs), std::move(trained));
}

CrossFit single_pair(std::size_t n, NuisancePair pair) {
  FoldPlan plan;
  plan.k = 1;
  plan.assignment.assign(n, 0);
  return CrossFit(std::move(plan), {std::move(pair)}, {std::vector<bool>(n, false)});
}

NuisancePair oracle_nuisances(std::shared_ptr<const OutcomeModel> mu,
                              std::shared_ptr<const ConditionalDensity> pi) {
  NuisancePair p{std::move(mu), std::move(pi), Provenance::Oracle, Provenance::Oracle};
  return p;
}

}  // namespace geodesy
