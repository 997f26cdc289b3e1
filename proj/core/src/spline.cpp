#include "geodesy/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geodesy/core.hpp"

namespace geodesy {

BSplineBasis::BSplineBasis(std::vector<double> knots, int degree)
    : knots_(std::move(knots)), degree_(degree) {}

namespace {

std::vector<double> clamped_knots(double lo, double hi, const std::vector<double>& interior,
                                  int degree) {
  std::vector<double> knots(degree + 1, lo);
  knots.insert(knots.end(), interior.begin(), interior.end());
  knots.insert(knots.end(), degree + 1, hi);
  return knots;
}

}  // namespace

BSplineBasis::BSplineBasis(double lo, double hi, int interior_knots, int degree)
    : degree_(degree) {
  if (!(lo < hi)) throw InvalidInput("spline range must satisfy lo < hi");
  if (interior_knots < 0 || degree < 1) throw InvalidInput("invalid spline configuration");
  std::vector<double> interior;
  for (int k = 1; k <= interior_knots; ++k) {
    interior.push_back(lo + (hi - lo) * k / (interior_knots + 1.0));
  }
  knots_ = clamped_knots(lo, hi, interior, degree);
}

BSplineBasis BSplineBasis::at_quantiles(std::span<const double> values, int interior_knots,
                                        int degree) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double lo = v.front(), hi = v.back();
  if (!(lo < hi)) throw InvalidInput("spline covariate is constant");
  std::vector<double> interior;
  const double min_gap = 1e-6 * (hi - lo);
  for (int k = 1; k <= interior_knots; ++k) {
    const double pos = (v.size() - 1) * (k / (interior_knots + 1.0));
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    const double q = i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
    const double prev = interior.empty() ? lo : interior.back();
    if (q - prev > min_gap && hi - q > min_gap) interior.push_back(q);
  }
  return BSplineBasis(clamped_knots(lo, hi, interior, degree), degree);
}

int BSplineBasis::evaluate(double x, double* values) const {
  const int p = degree_;
  x = std::clamp(x, lo(), hi());
  // Knot span index s with knots[s] <= x < knots[s+1], using the last nonempty span at hi.
  const int n_basis = size();
  int s;
  if (x >= knots_[n_basis]) {
    s = n_basis - 1;
  } else {
    s = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin()) - 1;
  }
  // de Boor's triangular recursion.
  double left[8], right[8];
  values[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[s + 1 - j];
    right[j] = knots_[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom > 0.0 ? values[r] / denom : 0.0;
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return s - p;
}

Eigen::MatrixXd BSplineBasis::second_difference_penalty() const {
  const int m = size();
  if (m < 3) return Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m - 2, m);
  for (int i = 0; i < m - 2; ++i) {
    D(i, i) = 1.0;
    D(i, i + 1) = -2.0;
    D(i, i + 2) = 1.0;
  }
  return D.transpose() * D;
}

std::vector<double> default_penalty_grid() {
  std::vector<double> grid;
  for (int k = -3; k <= 6; ++k) grid.push_back(std::pow(10.0, k));
  return grid;
}

PenalizedFit fit_penalized(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& penalty, const std::vector<double>& grid) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (grid.empty()) throw InvalidInput("penalty grid is empty");
  if (n <= p + 1) {
    throw InvalidInput("training set has " + std::to_string(n) +
                       " rows but the spline basis needs more than " + std::to_string(p + 1));
  }
  const Eigen::RowVectorXd xbar = X.colwise().mean();
  const double ybar = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - xbar;
  const Eigen::VectorXd yc = y.array() - ybar;
  const Eigen::MatrixXd gram = Xc.transpose() * Xc;
  const Eigen::VectorXd xty = Xc.transpose() * yc;
  const double scale = std::max(gram.diagonal().mean(), std::numeric_limits<double>::min());
  const double ridge = 1e-9 * scale;

  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  PenalizedFit best;
  double best_gcv = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double lambda : sorted) {
    Eigen::MatrixXd A = gram + lambda * penalty;
    A.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
      best.skipped_lambdas.push_back(lambda);
      continue;
    }
    const Eigen::VectorXd beta = llt.solve(xty);
    const double rss = (yc - Xc * beta).squaredNorm();
    const double edf = llt.solve(gram).trace() + 1.0;
    const double denom = static_cast<double>(n) - edf;
    const double gcv = denom > 0.0 ? static_cast<double>(n) * rss / (denom * denom)
                                   : std::numeric_limits<double>::infinity();
    if (!any || gcv < best_gcv) {
      best_gcv = gcv;
      best.coef = beta;
      best.lambda = lambda;
      best.edf = edf;
      best.rss = rss;
      any = true;
    }
  }
  if (!any) throw NumericalFailure("penalized normal equations are singular for every grid value");
  best.intercept = ybar - xbar.dot(best.coef);
  return best;
}

}  // namespace geodesy
