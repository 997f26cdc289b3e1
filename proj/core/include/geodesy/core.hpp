#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geodesy {

/// Raised for invalid user input: bad arguments, malformed files, violated preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot produce a finite, well-posed result.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Row = std::span<const double>;

struct Support {
  double lo = 0.0;
  double hi = 1.0;

  Support() = default;
  Support(double lo_, double hi_);

  double width() const { return hi - lo; }
  bool contains(double a) const { return a >= lo && a <= hi; }
};

/// n observations of (x in R^d, a in support, y). Immutable after construction.
class Dataset {
 public:
  /// x is row-major n*d. Throws InvalidInput naming the first offending row.
  Dataset(std::vector<double> x, std::size_t d, std::vector<double> a, std::vector<double> y,
          Support support);

  std::size_t n() const { return a_.size(); }
  std::size_t d() const { return d_; }
  Row x(std::size_t i) const { return {x_.data() + i * d_, d_}; }
  double a(std::size_t i) const { return a_[i]; }
  double y(std::size_t i) const { return y_[i]; }
  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& y() const { return y_; }
  const std::vector<double>& x_data() const { return x_; }
  const Support& support() const { return support_; }

  Dataset subset(std::span<const std::size_t> rows) const;
  double mean_y() const;

 private:
  std::vector<double> x_;
  std::size_t d_;
  std::vector<double> a_;
  std::vector<double> y_;
  Support support_;
};

/// Reads a CSV with header x1,...,xd,a,y; leading lines starting with # are skipped.
Dataset read_dataset_csv(std::istream& in, const Support& support);
Dataset load_dataset_csv(const std::string& path, const Support& support);
void write_dataset_csv(std::ostream& out, const Dataset& data);

struct TGrid {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  auto begin() const { return values.begin(); }
  auto end() const { return values.end(); }
};

inline constexpr double kDefaultTMax = 0.99;

/// {0, step, 2 step, ...} up to t_max, with t_max appended when the steps miss it.
TGrid make_tgrid(double t_max, double step);

struct EffectPoint {
  double t = 0.0;
  double psi_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double chi_sq = 0.0;
};

using EffectCurve = std::vector<EffectPoint>;

/// Mixes (master, stream) into an independent 64-bit seed. Injective in stream for fixed master.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace geodesy
