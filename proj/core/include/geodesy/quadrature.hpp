#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "geodesy/core.hpp"

namespace geodesy {

/// Composite Gauss-Legendre rule: a set of panels, each with the same number of nodes.
class Quadrature {
 public:
  static Quadrature gauss_legendre(double lo, double hi, int nodes);
  /// One panel per consecutive pair of (sorted, deduplicated) breaks.
  static Quadrature composite(std::vector<double> breaks, int nodes_per_panel);
  /// Panels whose widths double away from `focus`, starting at `scale`.
  static Quadrature graded(double lo, double hi, double focus, double scale, int nodes_per_panel);

  /// Same panels with twice the nodes per panel.
  Quadrature refined() const;

  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return nodes_.size(); }
  double lo() const { return breaks_.front(); }
  double hi() const { return breaks_.back(); }
  const std::vector<double>& breaks() const { return breaks_; }
  int nodes_per_panel() const { return per_panel_; }

  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) s += weights_[k] * f(nodes_[k]);
    return s;
  }

  /// Weighted sum of precomputed node values.
  double sum(std::span<const double> values) const;

 private:
  Quadrature(std::vector<double> breaks, int per_panel);

  std::vector<double> breaks_;
  int per_panel_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
struct LegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const LegendreRule& legendre_rule(int n);

inline constexpr double kAdaptiveRelTol = 1e-8;

/// Integrates with `rule`; if the refined rule disagrees by more than rel_tol, returns the refined value.
template <class F>
double integrate_adaptive(const Quadrature& rule, F&& f, double rel_tol = kAdaptiveRelTol) {
  const double coarse = rule.integrate(f);
  const double fine = rule.refined().integrate(f);
  if (std::abs(fine - coarse) > rel_tol * std::max(1.0, std::abs(fine))) return fine;
  return coarse;
}

}  // namespace geodesy
