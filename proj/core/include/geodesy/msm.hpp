#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "geodesy/core.hpp"
#include "geodesy/estimators.hpp"
#include "geodesy/nuisance.hpp"

namespace geodesy {

/// m(a, t, beta) = mu + t sum_j beta_j phi_j(a), with the basis evaluated on the
/// exposure mapped affinely from the support onto [0, 1].
struct MsmModel {
  std::vector<std::function<double(double)>> basis;
  std::vector<std::string> names;
  std::function<double(double)> weight = [](double) { return 1.0; };
  double mu_hat = 0.0;
  Support support;

  /// {1, s, ..., s^degree} in the standardized exposure s.
  static MsmModel polynomial(int degree, const Support& support, double mu_hat);
  double standardize(double a) const { return (a - support.lo) / support.width(); }
  std::size_t k() const { return basis.size(); }
};

/// Parses a basis name such as "poly2".
MsmModel make_msm_model(const std::string& basis, const Support& support, double mu_hat);

/// psi_hat(a, s) with a in exposure units.
using Surface = std::function<double(double, double)>;

struct MsmFit {
  Eigen::VectorXd beta_t;
  double t_cut = 0.0;
  Eigen::MatrixXd v_t;
  double mu_hat = 0.0;
};

Eigen::MatrixXd msm_gram(const MsmModel& model, int nodes = 64);

/// Closed-form least squares over s in [0, t_cut] and the standardized support.
Eigen::VectorXd fit_beta(const Surface& surface, const MsmModel& model, double t_cut,
                         int nodes = 64);

/// m(a_star, 1, beta).
double extrapolate(const MsmModel& model, const Eigen::VectorXd& beta, double a_star);

/// Cov(psi_hat_s(a), psi_hat_s'(a')) as a function of (s, a, s', a'), a in exposure units.
using CovarianceFn = std::function<double(double, double, double, double)>;

/// Tensor-product trapezoid rule on s_points x a_points over [0, t_cut] x support.
Eigen::MatrixXd variance_vt(const MsmModel& model, double t_cut, const CovarianceFn& cov,
                            int s_points = 11, int a_points = 11);

/// One-step Wasserstein estimates and centered influence values over (target, s) pairs.
struct EffectSurface {
  std::vector<double> targets;
  std::vector<double> s_values;
  /// psi(target i, s j) at psi(i * S + j) with S = s_values.size().
  std::vector<double> psi;
  /// Columns follow the same (target, s) order.
  Eigen::MatrixXd eif;

  double at(std::size_t target, std::size_t s) const { return psi[target * s_values.size() + s]; }
  /// Bilinear interpolation; a in exposure units.
  double interpolate(double a, double s) const;
};

EffectSurface estimate_surface(const Dataset& data, const std::vector<double>& targets,
                               const std::vector<double>& s_values, const CrossFit& nuisances,
                               const EstimateOptions& options = {});

/// Vt from the empirical influence covariance, trapezoid on the grid points with s <= t_cut.
Eigen::MatrixXd variance_vt_empirical(const MsmModel& model, double t_cut,
                                      const EffectSurface& surface);

struct TSelection {
  double t_star = 0.0;
  std::vector<double> t_values;
  std::vector<double> traces;
};

/// argmin of trace(Vt) over the positive grid points; ties go to the smaller t.
TSelection select_t(const std::vector<double>& t_values,
                    const std::function<Eigen::MatrixXd(double)>& vt);

}  // namespace geodesy
