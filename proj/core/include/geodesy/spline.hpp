#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace geodesy {

/// Cubic (by default) B-spline basis with clamped boundary knots.
class BSplineBasis {
 public:
  /// Equally spaced interior knots on [lo, hi].
  BSplineBasis(double lo, double hi, int interior_knots, int degree = 3);
  /// Interior knots at empirical quantiles; collapses duplicates.
  static BSplineBasis at_quantiles(std::span<const double> values, int interior_knots,
                                   int degree = 3);

  int size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  int degree() const { return degree_; }
  double lo() const { return knots_.front(); }
  double hi() const { return knots_.back(); }

  /// Writes the degree+1 possibly nonzero values at x (clamped to [lo, hi]); returns the first index.
  int evaluate(double x, double* values) const;
  Eigen::MatrixXd second_difference_penalty() const;

 private:
  explicit BSplineBasis(std::vector<double> knots, int degree);
  std::vector<double> knots_;
  int degree_;
};

/// Log-spaced default grid of penalty weights.
std::vector<double> default_penalty_grid();

struct PenalizedFit {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  double lambda = 0.0;
  double edf = 0.0;
  double rss = 0.0;
  /// Grid values skipped because the normal equations were not numerically positive definite.
  std::vector<double> skipped_lambdas;
};

/// Minimizes |y - b0 - X b|^2 + lambda b'Pb over the grid by generalized cross-validation.
/// The intercept is unpenalized; a tiny ridge keeps unpenalized collinear directions identifiable.
PenalizedFit fit_penalized(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& penalty, const std::vector<double>& grid);

}  // namespace geodesy
