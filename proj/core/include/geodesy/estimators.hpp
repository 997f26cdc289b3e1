#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "geodesy/core.hpp"
#include "geodesy/nuisance.hpp"
#include "geodesy/paths.hpp"

namespace geodesy {

struct Observation {
  Row x;
  double a = 0.0;
  double y = 0.0;
};

struct EifComponent {
  std::string name;
  double value = 0.0;
};

struct EifRecord {
  double value = 0.0;
  std::vector<EifComponent> components;
  /// A density at the observed exposure was raised to the floor.
  bool clipped = false;
};

struct EstimateResult {
  EffectCurve curve;
  std::size_t n = 0;
  int folds = 0;
  /// Fraction of (row, t) pairs whose density ratio used a floored denominator.
  double clipping_rate = 0.0;
  /// Centered influence values, one row per observation and one column per t.
  Eigen::MatrixXd eif;
};

struct EstimateOptions {
  int nodes = kDefaultNodes;
  bool compute_chi_sq = true;
  /// Use a closed-form Hellinger affinity when the density provides one.
  bool closed_form_affinity = true;
  unsigned threads = 1;
};

inline constexpr double kWaldCritical = 1.96;

// Wasserstein geodesic.
EifRecord eif_wasserstein(const Observation& z, double t, const PathSpec& spec,
                          const NuisancePair& nuis, double psi_ref);
EstimateResult one_step_wasserstein(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                                    const CrossFit& nuisances, const EstimateOptions& options = {});

// Hellinger geodesic.
/// d/dtheta of E_{nu_t}[mu | x] with pi and q held fixed.
double dtheta_conditional_mean(const Curve& mu, const Curve& pi, const PathSpec& spec, double t,
                               std::optional<double> u_restricted = std::nullopt,
                               int nodes = kDefaultNodes);
EifRecord eif_hellinger(const Observation& z, double t, const PathSpec& spec,
                        const NuisancePair& nuis, double psi_ref,
                        const EstimateOptions& options = {});
EstimateResult one_step_hellinger(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                                  const CrossFit& nuisances, const EstimateOptions& options = {});
/// Mean over rows of (sin(t theta_x) / sin theta_x)^2 at each t, the factor governing the
/// Hellinger variance growth. theta_x is the angle of the fitted pi with the target.
std::vector<double> hellinger_rate_factor(const Dataset& data, const PathSpec& spec,
                                          const TGrid& grid, const CrossFit& nuisances,
                                          const EstimateOptions& options = {});

// General tilt q = f(pi) / integral f(pi).
struct TiltFunction {
  /// f(p, a) >= 0.
  std::function<double(double, double)> f;
  /// Partial derivative of f in p.
  std::function<double(double, double)> f_prime;
};
/// f(p, a) = exp(delta a - shift) p. The shift cancels in every ratio.
TiltFunction exponential_tilt(double delta, const Support& support);

EifRecord eif_general_tilt(const Observation& z, const TiltFunction& tilt, const NuisancePair& nuis,
                           double psi_ref, const Quadrature& rule);
EstimateResult one_step_exp_tilt(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                                 const CrossFit& nuisances, const EstimateOptions& options = {});

/// Dispatches to the one-step estimator of the family. The reflected tilt has none.
EstimateResult one_step(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                        const CrossFit& nuisances, const EstimateOptions& options = {});

/// Mean over rows of the integral of mu_hat rho_t. No correction, no standard errors.
EffectCurve plug_in(const Dataset& data, const PathSpec& spec, const TGrid& grid,
                    const CrossFit& nuisances, const EstimateOptions& options = {});

/// psi(P_hat) - psi(P) + E_P[phi(Z; P_hat)], with the outer expectation over the given rows.
double remainder_diagnostic(const NuisancePair& truth, const NuisancePair& perturbed,
                            const PathSpec& spec, double t,
                            const std::vector<std::vector<double>>& xs,
                            int nodes = kDefaultNodes);

/// The same remainder written as E integral of (mu - mu_hat)(rho_hat/pi_hat - rho/pi) pi.
double wasserstein_remainder_product(const NuisancePair& truth, const NuisancePair& perturbed,
                                     const PathSpec& spec, double t,
                                     const std::vector<std::vector<double>>& xs,
                                     int nodes = kDefaultNodes);

}  // namespace geodesy
