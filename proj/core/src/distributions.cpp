#include "geodesy/distributions.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>

namespace geodesy {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (p <= 0.0) return -INFINITY;
  if (p >= 1.0) return INFINITY;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

TruncatedNormal::TruncatedNormal(double mean, double sd, Support support)
    : mean_(mean), sd_(sd), support_(support) {
  if (!(sd > 0.0)) throw InvalidInput("truncated normal needs sd > 0");
  alpha_ = (support.lo - mean) / sd;
  beta_ = (support.hi - mean) / sd;
  // Work in whichever tail keeps the mass difference well conditioned.
  upper_tail_ = alpha_ > -beta_;
  mass_ = upper_tail_ ? normal_sf(alpha_) - normal_sf(beta_) : normal_cdf(beta_) - normal_cdf(alpha_);
  if (!(mass_ > 0.0)) throw NumericalFailure("truncated normal has no mass on the support");
}

double TruncatedNormal::pdf(double a) const {
  if (!support_.contains(a)) return 0.0;
  return normal_pdf((a - mean_) / sd_) / (sd_ * mass_);
}

double TruncatedNormal::cdf(double a) const {
  if (a <= support_.lo) return 0.0;
  if (a >= support_.hi) return 1.0;
  const double z = (a - mean_) / sd_;
  const double c = upper_tail_ ? normal_sf(alpha_) - normal_sf(z) : normal_cdf(z) - normal_cdf(alpha_);
  return std::clamp(c / mass_, 0.0, 1.0);
}

double TruncatedNormal::mean() const {
  return mean_ + sd_ * (normal_pdf(alpha_) - normal_pdf(beta_)) / mass_;
}

double TruncatedNormal::quantile(double u) const {
  double z;
  if (upper_tail_) {
    const double sa = normal_sf(alpha_);
    const double s = sa - u * mass_;
    z = -normal_quantile(s);
  } else {
    const double ca = normal_cdf(alpha_);
    z = normal_quantile(ca + u * mass_);
  }
  return std::clamp(mean_ + sd_ * z, support_.lo, support_.hi);
}

double Rng::uniform() {
  // (k + 0.5) / 2^53 never hits 0 or 1.
  const std::uint64_t k = engine_() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

}  // namespace geodesy
