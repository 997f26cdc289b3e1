#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "geodesy/core.hpp"
#include "geodesy/paths.hpp"
#include "geodesy/spline.hpp"

namespace geodesy {

/// mu(x, a) = E[Y | X = x, A = a]. Implementations are immutable and shareable across threads.
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual double mean(Row x, double a) const = 0;
  virtual Curve slice(Row x) const;
};

enum class Provenance { Fitted, Oracle };

struct NuisancePair {
  std::shared_ptr<const OutcomeModel> mu;
  std::shared_ptr<const ConditionalDensity> pi;
  Provenance mu_provenance = Provenance::Fitted;
  Provenance pi_provenance = Provenance::Fitted;
};

struct NuisanceConfig {
  /// Interior knots of the exposure spline.
  int knots = 8;
  /// Interior knots of each covariate spline.
  int covariate_knots = 5;
  std::vector<double> ridge_grid = default_penalty_grid();
  /// Empty or "silverman" selects the rule of thumb; otherwise a positive number.
  std::string kde_bandwidth = "silverman";
  bool heteroscedastic = false;
};

/// Penalized spline regression with exposure-by-covariate interactions.
class SplineOutcomeModel final : public OutcomeModel {
 public:
  SplineOutcomeModel(const Dataset& train, const NuisanceConfig& config);
  double mean(Row x, double a) const override;
  Curve slice(Row x) const override;
  double lambda() const { return fit_.lambda; }
  const std::vector<double>& skipped_lambdas() const { return fit_.skipped_lambdas; }

 private:
  struct RowTerms {
    std::vector<double> exposure_weights;
    double offset = 0.0;
  };
  RowTerms row_terms(Row x) const;
  double combine(const RowTerms& terms, double a) const;

  BSplineBasis exposure_basis_;
  std::vector<BSplineBasis> covariate_bases_;
  std::vector<double> x_mean_, x_scale_;
  PenalizedFit fit_;
};

/// A = g(X) + sigma e with a kernel density for e, truncated and renormalized to the support.
class LocationScaleDensity final : public ConditionalDensity {
 public:
  LocationScaleDensity(const Dataset& train, const NuisanceConfig& config);
  double density(double a, Row x) const override;
  Curve slice(Row x) const override;
  double location(Row x) const;
  double sigma() const { return sigma_; }
  double bandwidth() const { return bandwidth_; }

 private:
  double residual_pdf(double e) const;
  double residual_cdf(double e) const;

  Support support_;
  std::vector<BSplineBasis> covariate_bases_;
  PenalizedFit fit_;
  double sigma_ = 1.0;
  double bandwidth_ = 1.0;
  std::vector<double> residuals_;
};

std::shared_ptr<const OutcomeModel> fit_outcome_regression(const Dataset& train,
                                                           const NuisanceConfig& config);
std::shared_ptr<const ConditionalDensity> fit_conditional_density(const Dataset& train,
                                                                  const NuisanceConfig& config);

struct FoldPlan {
  int k = 0;
  std::vector<int> assignment;

  std::vector<std::size_t> rows_in(int fold) const;
  std::vector<std::size_t> rows_outside(int fold) const;
};

FoldPlan make_fold_plan(std::size_t n, int k, std::uint64_t seed);

/// Produces one nuisance model from a training set.
struct NuisanceFitters {
  std::function<std::shared_ptr<const OutcomeModel>(const Dataset&)> fit_mu;
  std::function<std::shared_ptr<const ConditionalDensity>(const Dataset&)> fit_pi;
  Provenance mu_provenance = Provenance::Fitted;
  Provenance pi_provenance = Provenance::Fitted;
};

NuisanceFitters spline_fitters(const NuisanceConfig& config);
/// Fitters that ignore the data and return the given models.
NuisanceFitters oracle_fitters(std::shared_ptr<const OutcomeModel> mu,
                               std::shared_ptr<const ConditionalDensity> pi);

class CrossFit {
 public:
  CrossFit(FoldPlan plan, std::vector<NuisancePair> pairs,
           std::vector<std::vector<bool>> trained_on);

  /// The pair whose training set excluded row i. Throws if bookkeeping says otherwise.
  const NuisancePair& for_row(std::size_t i) const;
  const FoldPlan& plan() const { return plan_; }
  const std::vector<NuisancePair>& pairs() const { return pairs_; }

 private:
  FoldPlan plan_;
  std::vector<NuisancePair> pairs_;
  std::vector<std::vector<bool>> trained_on_;
};

CrossFit crossfit(const Dataset& data, const FoldPlan& plan, const NuisanceFitters& fitters,
                  unsigned threads = 1);

/// A single pair used for every row (no sample splitting).
CrossFit single_pair(std::size_t n, NuisancePair pair);

NuisancePair oracle_nuisances(std::shared_ptr<const OutcomeModel> mu,
                              std::shared_ptr<const ConditionalDensity> pi);

}  // namespace geodesy
