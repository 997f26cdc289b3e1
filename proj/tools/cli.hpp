#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geodesy::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

/// Every setting of every subcommand. Unused fields are ignored by the other subcommands.
struct RunConfig {
  std::string command;
  std::string data;
  std::string out;
  std::string beta_out;
  std::string oracle;
  std::string dgp = "sim7";
  std::string family = "wasserstein";
  std::string families = "w,h,e";
  std::string support;
  std::optional<double> a_star;
  double epsilon = 0.05;
  std::optional<double> split;
  double t_max = 0.99;
  double t_step = 0.05;
  int folds = 5;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  int nodes = 201;
  int knots = 8;
  int covariate_knots = 5;
  std::string ridge_grid;
  std::string kde_bandwidth = "silverman";
  std::size_t n = 250;
  std::size_t reps = 300;
  std::string nuisance = "oracle-pi";
  std::string t_cut = "0.3";
  std::string basis = "poly2";
  int s_points = 21;
  int a_points = 11;
  std::size_t mc_n = 100000;
  std::uint64_t mc_seed = 20240101;
  std::string cache_dir;
  std::string x;
  int grid_points = 201;
};

/// Fills command-dependent defaults and checks ranges. Throws InvalidInput listing every
/// violation, one per line.
RunConfig validate_config(const RunConfig& config);

/// Returns the resolved settings as command-line arguments, excluding output paths and the
/// thread count, neither of which changes results.
std::vector<std::string> replay_arguments(const RunConfig& config);

/// The first line of every output file.
std::string header_line(const RunConfig& config);

/// Inverse of header_line: the argument vector that reproduces the run.
std::vector<std::string> parse_header_line(const std::string& line);

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geodesy::cli
