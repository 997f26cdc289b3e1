#include "geodesy/quadrature.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace geodesy {

namespace {

LegendreRule compute_legendre(int n) {
  LegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) {
        // One more pass for the derivative at the converged node.
        p0 = 1.0;
        p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        break;
      }
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace

const LegendreRule& legendre_rule(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<LegendreRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<LegendreRule>(compute_legendre(n));
  return *slot;
}

Quadrature::Quadrature(std::vector<double> breaks, int per_panel)
    : breaks_(std::move(breaks)), per_panel_(per_panel) {
  if (per_panel_ < 1) throw InvalidInput("quadrature needs at least one node per panel");
  if (breaks_.size() < 2) throw InvalidInput("quadrature needs a nonempty interval");
  const LegendreRule& ref = legendre_rule(per_panel_);
  nodes_.reserve((breaks_.size() - 1) * per_panel_);
  weights_.reserve(nodes_.capacity());
  for (std::size_t p = 0; p + 1 < breaks_.size(); ++p) {
    const double half = 0.5 * (breaks_[p + 1] - breaks_[p]);
    const double mid = 0.5 * (breaks_[p + 1] + breaks_[p]);
    for (int k = 0; k < per_panel_; ++k) {
      nodes_.push_back(mid + half * ref.nodes[k]);
      weights_.push_back(half * ref.weights[k]);
    }
  }
}

Quadrature Quadrature::gauss_legendre(double lo, double hi, int nodes) {
  if (!(lo < hi)) throw InvalidInput("quadrature interval must satisfy lo < hi");
  return Quadrature({lo, hi}, nodes);
}

Quadrature Quadrature::composite(std::vector<double> breaks, int nodes_per_panel) {
  std::sort(breaks.begin(), breaks.end());
  const double span = breaks.back() - breaks.front();
  if (!(span > 0.0)) throw InvalidInput("quadrature interval must satisfy lo < hi");
  std::vector<double> kept;
  for (double b : breaks) {
    if (kept.empty() || b - kept.back() > 1e-12 * span) kept.push_back(b);
  }
  kept.back() = breaks.back();
  return Quadrature(std::move(kept), nodes_per_panel);
}

Quadrature Quadrature::graded(double lo, double hi, double focus, double scale,
                              int nodes_per_panel) {
  if (!(scale > 0.0)) throw InvalidInput("graded quadrature needs scale > 0");
  std::vector<double> breaks{lo, hi};
  auto add = [&](double b) {
    if (b > lo && b < hi) breaks.push_back(b);
  };
  add(focus);
  for (double h = scale; h < 2.0 * (hi - lo); h *= 2.0) {
    add(focus - h);
    add(focus + h);
  }
  return composite(std::move(breaks), nodes_per_panel);
}

Quadrature Quadrature::refined() const { return Quadrature(breaks_, 2 * per_panel_); }

double Quadrature::sum(std::span<const double> values) const {
  double s = 0.0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) s += weights_[k] * values[k];
  return s;
}

}  // namespace geodesy
