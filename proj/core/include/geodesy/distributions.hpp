#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "geodesy/core.hpp"

namespace geodesy {

double normal_pdf(double z);
double normal_cdf(double z);
/// Upper tail 1 - Phi(z), accurate for large z.
double normal_sf(double z);
double normal_quantile(double p);

/// N(mean, sd^2) restricted to [lo, hi] and renormalized.
class TruncatedNormal {
 public:
  TruncatedNormal(double mean, double sd, Support support);

  double pdf(double a) const;
  double cdf(double a) const;
  double mean() const;
  /// Inverse-CDF draw from a uniform u in (0, 1).
  double quantile(double u) const;
  /// Probability mass of the untruncated normal inside the support.
  double mass() const { return mass_; }

 private:
  double mean_;
  double sd_;
  Support support_;
  double alpha_;
  double beta_;
  bool upper_tail_;
  double mass_;
};

/// Seeded 64-bit generator with portable variate transforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1) from 53 random bits.
  double uniform();
  double normal() { return normal_quantile(uniform()); }
  double exponential() { return -std::log(uniform()); }
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace geodesy
