#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geodesy/core.hpp"
#include "geodesy/quadrature.hpp"

namespace geodesy {

enum class Family { Wasserstein, Hellinger, ExpTilt, ReflectedTilt };

std::string family_name(Family f);
/// Accepts full names (case-insensitive) and the one-letter forms w, h, e, r.
Family parse_family(std::string_view name);

struct PathSpec {
  Family family = Family::Wasserstein;
  double a_star = 0.0;
  double epsilon = 0.05;
  double split_point = std::numeric_limits<double>::quiet_NaN();
  Support support;

  void validate() const;
};

inline constexpr double kDensityFloor = 1e-12;
inline constexpr int kDefaultNodes = 201;
inline constexpr double kSmallAngle = 1e-4;

/// A function of the exposure for one fixed covariate row.
using Curve = std::function<double(double)>;

/// pi(a | x). Implementations are immutable and shareable across threads.
class ConditionalDensity {
 public:
  virtual ~ConditionalDensity() = default;
  virtual double density(double a, Row x) const = 0;
  /// The density for one row; overrides may precompute row-level state.
  virtual Curve slice(Row x) const;
  /// Closed-form affinity with the untruncated N(a_star, epsilon^2) when known.
  virtual std::optional<double> gaussian_affinity(Row x, double a_star, double epsilon) const;
};

/// Tilt strength on the common path grid.
double tilt_delta(double t);

/// Quadrature adapted to the features of rho_t for the family: kinks, narrow peaks, support edges.
Quadrature path_rule(const PathSpec& spec, double t, int nodes = kDefaultNodes);

// Wasserstein geodesic toward the point mass at a*.
double wasserstein_density(const Curve& pi, double t, const PathSpec& spec, double a);
/// Image of the support under a -> (1 - t) a + t a*.
Support wasserstein_image(const PathSpec& spec, double t);

// Exponential tilt q_delta proportional to exp(delta a) pi(a).
class ExpTilt {
 public:
  ExpTilt(Curve pi, double delta, const Quadrature& rule);
  double operator()(double a) const;
  double delta() const { return delta_; }
  /// exp(delta a - shift), the unnormalized tilt factor.
  double factor(double a) const { return std::exp(delta_ * a - shift_); }
  double normalizer() const { return norm_; }

 private:
  Curve pi_;
  double delta_;
  double shift_;
  double norm_;
};
double exp_tilt_density(const Curve& pi, double delta, const Support& support, double a);

// Reflected tilt: positive tilt below the split, negative above, each branch keeps its mass.
class ReflectedTilt {
 public:
  ReflectedTilt(Curve pi, double delta, double split, const Quadrature& rule);
  double operator()(double a) const;
  double lower_mass() const { return mass_lo_; }
  double upper_mass() const { return mass_hi_; }

 private:
  Curve pi_;
  double delta_;
  double split_;
  double mass_lo_ = 0.0;
  double mass_hi_ = 0.0;
  double scale_lo_ = 0.0;
  double scale_hi_ = 0.0;
};
double reflected_tilt_density(const Curve& pi, double delta, const PathSpec& spec, double a);

// Hellinger geodesic toward q = N(a*, eps^2) restricted and renormalized to the support.
struct HellingerCoeffs {
  double alpha = 1.0;
  double gamma = 0.0;
  double beta = 0.0;
};
HellingerCoeffs hellinger_coeffs(double theta, double t);

/// d/dtheta of (alpha, gamma, beta) at fixed t.
HellingerCoeffs hellinger_coeff_derivatives(double theta, double t);

struct HellingerAngle {
  double theta = 0.0;
  double u_affinity = 1.0;
  double alpha_t = 1.0;
  double gamma_t = 0.0;
  double beta_t = 0.0;
};
/// u is the affinity with the support-restricted target.
HellingerAngle hellinger_angle(double u, double t);

/// Support-restricted target density q_S.
Curve hellinger_target(const PathSpec& spec);
/// Mass of N(a*, eps^2) inside the support.
double hellinger_target_mass(const PathSpec& spec);

/// Integral over the support of sqrt(pi q) with the untruncated q = N(a*, eps^2).
double hellinger_affinity_quadrature(const Curve& pi, const PathSpec& spec,
                                     int nodes = kDefaultNodes);
/// Same integral for pi = N(mu_x, 1) truncated to the support.
double hellinger_affinity_closed_form(double mu_x, const Support& support, double a_star,
                                      double epsilon);
/// Converts an untruncated-target affinity into the affinity with q_S.
double restricted_affinity(double untruncated, const PathSpec& spec);

class HellingerPath {
 public:
  /// u_restricted: affinity of pi with q_S.
  HellingerPath(Curve pi, const PathSpec& spec, double t, double u_restricted);
  double operator()(double a) const;
  const HellingerAngle& angle() const { return angle_; }
  double target(double a) const { return q_(a); }

 private:
  Curve pi_;
  Curve q_;
  HellingerAngle angle_;
};
double hellinger_density(const Curve& pi, const PathSpec& spec, double t, double a);

/// rho_t for any family. The affinity is computed by quadrature unless supplied (restricted form).
Curve path_density(const PathSpec& spec, double t, Curve pi,
                   std::optional<double> u_restricted = std::nullopt, int nodes = kDefaultNodes);

struct ChiSquare {
  double value = 0.0;
  bool infinite = false;
  /// Mass of rho_t on nodes where pi fell below the density floor and rho_t did not.
  double offending_mass = 0.0;
};
ChiSquare chi_square_divergence(const Curve& rho, const Curve& pi, const Quadrature& rule);

/// F(s) = integral over [0, s] of (1 + E chi^2(rho_t || pi)) dt by the trapezoid rule on steps of `step`.
double chi_square_path_integral(const std::function<double(double)>& expected_chi_sq, double s,
                                double step);

using Slicer = std::function<Curve(Row)>;

struct RatioBound {
  /// Mean over rows of the integral of (rho_hat/pi_hat - rho/pi)^2 pi.
  double lhs = 0.0;
  /// Mean over rows of (sqrt chi^2 - sqrt chi_hat^2)^2 with chi_hat^2 taken in L2(pi).
  double rhs = 0.0;
  /// Same with chi_hat^2 = chi^2(rho_hat || pi_hat); not a guaranteed lower bound.
  double rhs_plugin = 0.0;
};
RatioBound ratio_error_lower_bound_check(const Slicer& pi, const Slicer& rho, const Slicer& pi_hat,
                                         const Slicer& rho_hat,
                                         const std::vector<std::vector<double>>& xs,
                                         const Quadrature& rule);

}  // namespace geodesy

namespace geodesy {

/// E_{rho_t}[g | x] for every t on the grid, sharing node evaluations across t.
/// u_restricted optionally supplies the Hellinger affinity with q_S.
std::vector<double> path_expectations(const PathSpec& spec, const TGrid& grid, const Curve& g,
                                      const Curve& pi, std::optional<double> u_restricted = std::nullopt,
                                      int nodes = kDefaultNodes);

/// chi^2(rho_t || pi) for every t on the grid.
std::vector<ChiSquare> chi_square_along_path(const PathSpec& spec, const TGrid& grid,
                                             const Curve& pi,
                                             std::optional<double> u_restricted = std::nullopt,
                                             int nodes = kDefaultNodes);

}  // namespace geodesy
