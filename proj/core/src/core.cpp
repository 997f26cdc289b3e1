#include "geodesy/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace geodesy {

Support::Support(double lo_, double hi_) : lo(lo_), hi(hi_) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    std::ostringstream msg;
    msg << "support must be a finite interval with lo < hi, got [" << lo << ", " << hi << "]";
    throw InvalidInput(msg.str());
  }
}

Dataset::Dataset(std::vector<double> x, std::size_t d, std::vector<double> a,
                 std::vector<double> y, Support support)
    : x_(std::move(x)), d_(d), a_(std::move(a)), y_(std::move(y)), support_(support) {
  if (d_ == 0) throw InvalidInput("dataset needs at least one covariate column");
  if (a_.empty()) throw InvalidInput("dataset needs at least one row");
  if (y_.size() != a_.size() || x_.size() != a_.size() * d_) {
    throw InvalidInput("dataset columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < a_.size(); ++i) {
    bool finite = std::isfinite(a_[i]) && std::isfinite(y_[i]);
    for (std::size_t j = 0; j < d_; ++j) finite = finite && std::isfinite(x_[i * d_ + j]);
    if (!finite) {
      throw InvalidInput("row " + std::to_string(i + 1) + ": non-finite value");
    }
    if (!support_.contains(a_[i])) {
      std::ostringstream msg;
      msg << "row " << i + 1 << ": exposure a=" << a_[i] << " outside declared support ["
          << support_.lo << ", " << support_.hi << "]";
      throw InvalidInput(msg.str());
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> x, a, y;
  x.reserve(rows.size() * d_);
  a.reserve(rows.size());
  y.reserve(rows.size());
  for (std::size_t i : rows) {
    auto xi = this->x(i);
    x.insert(x.end(), xi.begin(), xi.end());
    a.push_back(a_[i]);
    y.push_back(y_[i]);
  }
  return Dataset(std::move(x), d_, std::move(a), std::move(y), support_);
}

double Dataset::mean_y() const {
  double s = 0.0;
  for (double v : y_) s += v;
  return s / static_cast<double>(y_.size());
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& field, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    if (field == "nan" || field == "NaN" || field == "inf" || field == "-inf" || field == "Inf") {
      throw InvalidInput("row " + std::to_string(line_no) + ": non-finite value");
    }
    throw InvalidInput("row " + std::to_string(line_no) + ": cannot parse '" + field + "'");
  }
  return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, const Support& support) {
  std::string line;
  do {
    if (!std::getline(in, line)) throw InvalidInput("dataset is empty");
  } while (line.starts_with('#'));
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[header.size() - 2] != "a" || header.back() != "y") {
    throw InvalidInput("dataset header must be x1,...,xd,a,y");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j + 1)) {
      throw InvalidInput("dataset header column " + std::to_string(j + 1) + " must be x" +
                         std::to_string(j + 1) + ", got '" + header[j] + "'");
    }
  }
  std::vector<double> x, a, y;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split_csv_line(line);
    if (fields.size() != d + 2) {
      throw InvalidInput("row " + std::to_string(row) + ": expected " + std::to_string(d + 2) +
                         " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) x.push_back(parse_number(fields[j], row));
    a.push_back(parse_number(fields[d], row));
    y.push_back(parse_number(fields[d + 1], row));
  }
  return Dataset(std::move(x), d, std::move(a), std::move(y), support);
}

Dataset load_dataset_csv(const std::string& path, const Support& support) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset '" + path + "'");
  return read_dataset_csv(in, support);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.d(); ++j) out << 'x' << j + 1 << ',';
  out << "a,y\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (double v : data.x(i)) out << v << ',';
    out << data.a(i) << ',' << data.y(i) << '\n';
  }
}

TGrid make_tgrid(double t_max, double step) {
  if (!(t_max < 1.0)) {
    throw InvalidInput("t-max must be < 1: the path endpoint t = 1 is a point mass");
  }
  if (!(step > 0.0) || !(step <= t_max)) {
    throw InvalidInput("t grid requires 0 < t-step <= t-max");
  }
  constexpr double kSlack = 1e-9;
  TGrid grid;
  for (std::size_t k = 0;; ++k) {
    double t = static_cast<double>(k) * step;
    if (t > t_max + kSlack) break;
    if (std::abs(t - t_max) <= kSlack) t = t_max;
    grid.values.push_back(t);
  }
  if (grid.values.back() < t_max) grid.values.push_back(t_max);
  return grid;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) {
  // Odd multiplier keeps the pre-image injective in stream_id; splitmix64 is a bijection.
  return splitmix64(splitmix64(master_seed) + 0xD1B54A32D192ED03ULL * (stream_id + 1));
}

}  // namespace geodesy
