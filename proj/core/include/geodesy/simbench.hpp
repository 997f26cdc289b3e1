#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geodesy/core.hpp"
#include "geodesy/distributions.hpp"
#include "geodesy/estimators.hpp"
#include "geodesy/nuisance.hpp"
#include "geodesy/paths.hpp"

namespace geodesy {

/// Outcome model given by a closed-form function of (x, a).
class FormulaOutcome final : public OutcomeModel {
 public:
  explicit FormulaOutcome(std::function<double(Row, double)> f) : f_(std::move(f)) {}
  double mean(Row x, double a) const override { return f_(x, a); }

 private:
  std::function<double(Row, double)> f_;
};

/// N(m(x), sd^2) truncated to the support.
class TruncatedNormalDensity final : public ConditionalDensity {
 public:
  TruncatedNormalDensity(std::function<double(Row)> location, double sd, Support support);
  double density(double a, Row x) const override;
  Curve slice(Row x) const override;
  /// Closed form for unit scale; nullopt otherwise.
  std::optional<double> gaussian_affinity(Row x, double a_star, double epsilon) const override;
  TruncatedNormal at(Row x) const { return TruncatedNormal(location_(x), sd_, support_); }

 private:
  std::function<double(Row)> location_;
  double sd_;
  Support support_;
};

/// A simulation design with closed-form nuisances.
class Dgp {
 public:
  virtual ~Dgp() = default;
  virtual std::string name() const = 0;
  virtual Support support() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double default_a_star() const = 0;
  virtual void sample_x(Rng& rng, double* x) const = 0;
  virtual double outcome_noise(Rng& rng) const = 0;
  /// E[Y(a)] when known in closed form.
  virtual std::optional<double> dose_response(double) const { return std::nullopt; }

  const std::shared_ptr<const OutcomeModel>& outcome() const { return mu_; }
  const std::shared_ptr<const TruncatedNormalDensity>& density() const { return pi_; }

  /// Rows are drawn in order: covariates, exposure by inverse CDF, then outcome noise.
  Dataset sample(std::size_t n, std::uint64_t seed) const;

 protected:
  std::shared_ptr<const OutcomeModel> mu_;
  std::shared_ptr<const TruncatedNormalDensity> pi_;
};

/// X1, X2 ~ Exp(1); A | X ~ N(X1 + X2, 1) on [-1, 5]; Y = A + S exp(-A S) + N(0, 1), S = X1 + X2.
std::shared_ptr<const Dgp> make_sim7();
/// X ~ U[-3, 3]; A | X ~ N(X, 1) on [-7, 7]; Y = X + A + N(0, 1).
std::shared_ptr<const Dgp> make_msm6();
/// X ~ U[0, 1]; A | X ~ N(X, 1) on [-2, 3]; Y = 1.
std::shared_ptr<const Dgp> make_constant_dgp();
/// Accepts sim7, msm6 and constant.
std::shared_ptr<const Dgp> make_dgp(const std::string& name);

Dataset sample_sim7(std::size_t n, std::uint64_t seed);
/// a + 2 / (1 + a)^3.
double true_dose_response_sim7(double a);

struct TrueCurve {
  std::vector<double> t;
  std::vector<double> psi;
  std::vector<double> mc_se;
};

struct MonteCarloOptions {
  std::size_t mc_n = 1000000;
  std::uint64_t seed = 20240101;
  unsigned threads = 0;
  int nodes = kDefaultNodes;
  /// Directory for cached curves; empty disables caching.
  std::string cache_dir;
};

/// psi(t) = E_X integral mu(X, a) rho_t(a | X) da, Monte Carlo over X and quadrature over a.
TrueCurve true_effect_curve(const Dgp& dgp, const PathSpec& spec, const TGrid& grid,
                            const MonteCarloOptions& options);

struct ChiSqProfile {
  std::vector<double> t;
  std::vector<double> mean_chi_sq;
  /// Fraction of draws whose divergence was infinite at each t.
  std::vector<double> infinite_fraction;
};

ChiSqProfile chi_sq_profile(const Dgp& dgp, const PathSpec& spec, const TGrid& grid,
                            const MonteCarloOptions& options);

enum class NuisanceMode { OraclePiFittedMu, AllFitted, AllOracle };
NuisanceMode parse_nuisance_mode(const std::string& s);
std::string nuisance_mode_name(NuisanceMode m);

struct CoverageOptions {
  std::size_t n = 250;
  std::size_t reps = 300;
  int folds = 5;
  NuisanceMode mode = NuisanceMode::OraclePiFittedMu;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  double a_star = 5.0;
  double epsilon = 0.05;
  int nodes = kDefaultNodes;
  NuisanceConfig nuisance;
  MonteCarloOptions truth;
};

struct FamilyCoverage {
  Family family;
  std::vector<double> truth;
  std::vector<double> psi_mean;
  std::vector<double> coverage;
  std::vector<double> width;
};

struct CoverageTable {
  std::vector<double> t;
  std::vector<FamilyCoverage> families;
  std::size_t reps = 0;
  std::size_t failed = 0;
  std::vector<std::string> failure_messages;
};

CoverageTable run_coverage(const Dgp& dgp, const std::vector<Family>& families,
                           const TGrid& grid, const CoverageOptions& options);

/// CSV with one row per t and psi, coverage and width columns for W, E and H.
void write_coverage_csv(std::ostream& out, const CoverageTable& table);

}  // namespace geodesy
