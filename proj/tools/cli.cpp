#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "geodesy/core.hpp"
#include "geodesy/estimators.hpp"
#include "geodesy/msm.hpp"
#include "geodesy/nuisance.hpp"
#include "geodesy/paths.hpp"
#include "geodesy/simbench.hpp"
#include "geodesy/version.hpp"

namespace geodesy::cli {
namespace {

const std::vector<std::string> kCommands = {"paths", "estimate", "msm", "simulate", "truecurve",
                                            "sample"};

/// Shortest decimal form that parses back to the same double.
std::string num(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string cell(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::optional<std::string> text(const std::string& v) {
  if (v.empty()) return std::nullopt;
  return v;
}
std::optional<std::string> text(double v) { return num(v); }
std::optional<std::string> text(const std::optional<double>& v) {
  if (!v) return std::nullopt;
  return num(*v);
}
template <class T>
  requires std::is_integral_v<T>
std::optional<std::string> text(T v) {
  return std::to_string(v);
}

/// A setting that changes results, with the subcommands that read it.
struct Field {
  std::string name;
  std::vector<std::string> commands;
  std::function<std::optional<std::string>(const RunConfig&)> value;
  std::function<void(CLI::App&, RunConfig&)> bind;
};

template <class T>
Field field(std::string name, std::vector<std::string> commands, T RunConfig::*member,
            std::string help) {
  Field f;
  f.name = name;
  f.commands = std::move(commands);
  f.value = [member](const RunConfig& c) { return text(c.*member); };
  f.bind = [name, member, help](CLI::App& app, RunConfig& c) {
    std::string alias = name;
    std::replace(alias.begin(), alias.end(), '-', '_');
    std::string names = "--" + name;
    if (alias != name) names += ",--" + alias;
    app.add_option(names, c.*member, help);
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    const std::vector<std::string> fitting = {"paths", "estimate", "msm", "simulate"};
    std::vector<Field> f;
    f.push_back(field("data", {"paths", "estimate", "msm"}, &RunConfig::data,
                      "Dataset CSV with header x1,...,xd,a,y"));
    f.push_back(field("support", {"paths", "estimate", "msm"}, &RunConfig::support,
                      "Exposure support as lo,hi (default: the oracle or observed range)"));
    f.push_back(field("oracle", {"estimate", "msm"}, &RunConfig::oracle,
                      "Use the closed-form nuisances of a simulation design"));
    f.push_back(field("dgp", {"paths", "simulate", "truecurve", "sample"}, &RunConfig::dgp,
                      "Simulation design: sim7, msm6 or constant"));
    f.push_back(field("family", {"paths", "estimate", "truecurve"}, &RunConfig::family,
                      "Path family: wasserstein, hellinger, exptilt or reflected"));
    f.push_back(field("families", {"simulate"}, &RunConfig::families,
                      "Comma-separated families among w, h, e"));
    f.push_back(field("a-star", {"paths", "estimate", "msm", "simulate", "truecurve"},
                      &RunConfig::a_star, "Target exposure"));
    f.push_back(field("epsilon", {"paths", "estimate", "simulate", "truecurve"},
                      &RunConfig::epsilon, "Width of the Gaussian point-mass stand-in"));
    f.push_back(field("split", {"paths", "estimate", "truecurve"}, &RunConfig::split,
                      "Split point of the reflected tilt (default: a-star)"));
    f.push_back(field("t-max", {"paths", "estimate", "msm", "simulate", "truecurve"},
                      &RunConfig::t_max, "Largest t, strictly below 1"));
    f.push_back(field("t-step", {"paths", "estimate", "simulate", "truecurve"},
                      &RunConfig::t_step, "Spacing of the t grid"));
    f.push_back(field("folds", {"estimate", "msm", "simulate"}, &RunConfig::folds,
                      "Cross-fitting folds"));
    f.push_back(field("seed", {"estimate", "msm", "simulate", "sample"}, &RunConfig::seed,
                      "Master seed"));
    f.push_back(field("nodes", {"paths", "estimate", "msm", "simulate", "truecurve"},
                      &RunConfig::nodes, "Quadrature nodes per conditional integral"));
    f.push_back(field("knots", fitting, &RunConfig::knots, "Interior knots of the exposure spline"));
    f.push_back(field("covariate-knots", fitting, &RunConfig::covariate_knots,
                      "Interior knots of each covariate spline"));
    f.push_back(field("ridge-grid", fitting, &RunConfig::ridge_grid,
                      "Comma-separated penalty candidates (default 1e-3,...,1e6)"));
    f.push_back(field("kde-bandwidth", fitting, &RunConfig::kde_bandwidth,
                      "Residual kernel bandwidth: silverman or a positive number"));
    f.push_back(field("n", {"simulate", "sample"}, &RunConfig::n, "Sample size"));
    f.push_back(field("reps", {"simulate"}, &RunConfig::reps, "Replications"));
    f.push_back(field("nuisance", {"simulate"}, &RunConfig::nuisance,
                      "Nuisances: oracle-pi, all-fitted or all-oracle"));
    f.push_back(field("t-cut", {"msm"}, &RunConfig::t_cut,
                      "Upper end of the fitting window, or auto to minimize trace(Vt)"));
    f.push_back(field("basis", {"msm"}, &RunConfig::basis, "MSM basis: polyK"));
    f.push_back(field("s-points", {"msm"}, &RunConfig::s_points, "Path points of the effect surface"));
    f.push_back(field("a-points", {"msm"}, &RunConfig::a_points,
                      "Targets across the support for the effect surface"));
    f.push_back(field("mc-n", {"simulate", "truecurve"}, &RunConfig::mc_n,
                      "Monte Carlo draws for the true curve"));
    f.push_back(field("mc-seed", {"simulate", "truecurve"}, &RunConfig::mc_seed,
                      "Seed of the true-curve Monte Carlo"));
    f.push_back(field("x", {"paths"}, &RunConfig::x, "Covariate row as comma-separated values"));
    f.push_back(field("grid-points", {"paths"}, &RunConfig::grid_points,
                      "Exposure points per curve"));
    return f;
  }();
  return table;
}

bool reads(const Field& f, const std::string& command) {
  return std::find(f.commands.begin(), f.commands.end(), command) != f.commands.end();
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw InvalidInput(what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

Support parse_support(const std::string& s) {
  const auto v = parse_list(s, "support");
  if (v.size() != 2) throw InvalidInput("support must be given as lo,hi");
  return Support(v[0], v[1]);
}

std::vector<Family> parse_families(const std::string& s) {
  std::vector<Family> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_family(item));
  if (out.empty()) throw InvalidInput("families must not be empty");
  return out;
}

NuisanceConfig nuisance_config(const RunConfig& c) {
  NuisanceConfig n;
  n.knots = c.knots;
  n.covariate_knots = c.covariate_knots;
  if (!c.ridge_grid.empty()) n.ridge_grid = parse_list(c.ridge_grid, "ridge-grid");
  n.kde_bandwidth = c.kde_bandwidth;
  return n;
}

bool uses_dgp(const RunConfig& c) {
  return c.command == "simulate" || c.command == "truecurve" || c.command == "sample" ||
         (c.command == "paths" && c.data.empty());
}

std::shared_ptr<const Dgp> design(const RunConfig& c) {
  if (uses_dgp(c)) return make_dgp(c.dgp);
  if (!c.oracle.empty()) return make_dgp(c.oracle);
  return nullptr;
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw InvalidInput("cannot open output file '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

Dataset load(RunConfig& c) {
  std::optional<Support> support;
  if (!c.support.empty()) support = parse_support(c.support);
  if (!support) {
    if (auto d = design(c)) support = d->support();
  }
  if (!support) {
    std::ifstream in(c.data);
    if (!in) throw InvalidInput("cannot open data file '" + c.data + "'");
    // Provisional wide support to read the exposures; the observed range becomes the support.
    const Dataset raw = read_dataset_csv(in, Support(-1e300, 1e300));
    const auto [lo, hi] = std::minmax_element(raw.a().begin(), raw.a().end());
    if (!(*lo < *hi)) throw InvalidInput("observed exposures are constant; pass --support");
    support = Support(*lo, *hi);
  }
  c.support = num(support->lo) + "," + num(support->hi);
  return load_dataset_csv(c.data, *support);
}

CrossFit nuisances_for(const Dataset& data, const RunConfig& c) {
  if (!c.oracle.empty()) {
    const auto d = make_dgp(c.oracle);
    if (d->dim() != data.d()) {
      throw InvalidInput("oracle '" + c.oracle + "' expects " + std::to_string(d->dim()) +
                         " covariates, the data has " + std::to_string(data.d()));
    }
    return single_pair(data.n(), oracle_nuisances(d->outcome(), d->density()));
  }
  const FoldPlan plan = make_fold_plan(data.n(), c.folds, derive_seed(c.seed, 1));
  return crossfit(data, plan, spline_fitters(nuisance_config(c)), c.threads);
}

PathSpec path_spec(const RunConfig& c, Family family, const Support& support) {
  PathSpec s;
  s.family = family;
  s.a_star = *c.a_star;
  s.epsilon = c.epsilon;
  s.support = support;
  if (family == Family::ReflectedTilt) s.split_point = c.split.value_or(*c.a_star);
  s.validate();
  return s;
}

int run_paths(RunConfig& c, std::ostream& stdout_) {
  std::shared_ptr<const ConditionalDensity> pi;
  Support support;
  std::vector<double> x;
  if (!c.data.empty()) {
    const Dataset data = load(c);
    support = data.support();
    pi = fit_conditional_density(data, nuisance_config(c));
    if (c.x.empty()) {
      x.assign(data.d(), 0.0);
      for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t j = 0; j < data.d(); ++j) x[j] += data.x(i)[j] / double(data.n());
      }
    }
  } else {
    const auto d = make_dgp(c.dgp);
    support = d->support();
    pi = d->density();
    if (c.x.empty()) x.assign(d->dim(), 1.0);
  }
  if (!c.x.empty()) x = parse_list(c.x, "x");
  c.x.clear();
  for (double v : x) c.x += (c.x.empty() ? "" : ",") + num(v);

  const Family family = parse_family(c.family);
  const PathSpec spec = path_spec(c, family, support);
  const TGrid grid = make_tgrid(c.t_max, c.t_step);
  const Curve slice = pi->slice(x);
  std::optional<double> u;
  if (family == Family::Hellinger) {
    if (auto g = pi->gaussian_affinity(x, spec.a_star, spec.epsilon)) {
      u = restricted_affinity(*g, spec);
    }
  }
  Output out(c.out, stdout_);
  *out << header_line(c) << "\n" << "a,t,density,family\n";
  const std::string name = family_name(family);
  for (double t : grid) {
    const Curve rho = path_density(spec, t, slice, u, c.nodes);
    for (int k = 0; k < c.grid_points; ++k) {
      const double a = support.lo + support.width() * k / (c.grid_points - 1);
      *out << cell(a) << ',' << cell(t) << ',' << cell(rho(a)) << ',' << name << '\n';
    }
  }
  return kExitOk;
}

int run_estimate(RunConfig& c, std::ostream& stdout_, std::ostream& err) {
  const Dataset data = load(c);
  const Family family = parse_family(c.family);
  const PathSpec spec = path_spec(c, family, data.support());
  const TGrid grid = make_tgrid(c.t_max, c.t_step);
  const CrossFit cf = nuisances_for(data, c);
  EstimateOptions opt;
  opt.nodes = c.nodes;
  opt.threads = c.threads;
  EffectCurve curve;
  double clipping = 0.0;
  if (family == Family::ReflectedTilt) {
    curve = plug_in(data, spec, grid, cf, opt);
    for (auto& p : curve) p.se = p.ci_lo = p.ci_hi = NAN;
  } else {
    const EstimateResult r = one_step(data, spec, grid, cf, opt);
    curve = r.curve;
    clipping = r.clipping_rate;
    if (family == Family::Hellinger) {
      const double factor = hellinger_rate_factor(data, spec, TGrid{{grid.values.back()}}, cf, opt)[0];
      err << "note: hellinger rate factor mean (sin(t theta)/sin theta)^2 = " << cell(factor)
          << " at t=" << cell(grid.values.back()) << "\n";
    }
  }
  for (const auto& p : curve) {
    if (!std::isfinite(p.psi_hat)) {
      throw NumericalFailure("non-finite estimate at t=" + cell(p.t));
    }
  }
  Output out(c.out, stdout_);
  *out << header_line(c) << "\n" << "t,psi_hat,se,ci_lo,ci_hi,chi_sq,clipping_rate\n";
  for (const auto& p : curve) {
    *out << cell(p.t) << ',' << cell(p.psi_hat) << ',' << cell(p.se) << ',' << cell(p.ci_lo)
         << ',' << cell(p.ci_hi) << ',' << cell(p.chi_sq) << ',' << cell(clipping) << '\n';
  }
  return kExitOk;
}

int run_msm(RunConfig& c, std::ostream& stdout_) {
  const Dataset data = load(c);
  const Support support = data.support();
  if (!support.contains(*c.a_star)) throw InvalidInput("a-star must lie in the support");
  const bool automatic = c.t_cut == "auto";
  const double s_max = automatic ? c.t_max : std::stod(c.t_cut);
  TGrid s_grid;
  for (int k = 0; k < c.s_points; ++k) s_grid.values.push_back(s_max * k / (c.s_points - 1));
  std::vector<double> targets;
  for (int k = 0; k < c.a_points; ++k) {
    targets.push_back(support.lo + support.width() * k / (c.a_points - 1));
  }
  const CrossFit cf = nuisances_for(data, c);
  EstimateOptions opt;
  opt.nodes = c.nodes;
  opt.threads = c.threads;
  const EffectSurface surface = estimate_surface(data, targets, s_grid.values, cf, opt);
  const MsmModel model = make_msm_model(c.basis, support, data.mean_y());
  const auto vt = [&](double t) { return variance_vt_empirical(model, t, surface); };
  double t_cut = s_max;
  if (automatic) {
    std::vector<double> candidates;
    for (double s : s_grid) {
      if (s > 0.0) candidates.push_back(s);
    }
    t_cut = select_t(candidates, vt).t_star;
  }
  const Surface fn = [&](double a, double s) { return surface.interpolate(a, s); };
  const Eigen::VectorXd beta = fit_beta(fn, model, t_cut);
  const double psi_star = extrapolate(model, beta, *c.a_star);
  const double trace = vt(t_cut).trace();
  if (!std::isfinite(psi_star) || !beta.allFinite()) {
    throw NumericalFailure("non-finite MSM coefficients");
  }

  std::string beta_path = c.beta_out;
  if (beta_path.empty()) {
    beta_path = c.out.empty()
                    ? std::string("beta.csv")
                    : (std::filesystem::path(c.out).parent_path() / "beta.csv").string();
  }
  Output out(c.out, stdout_);
  *out << header_line(c) << "\n" << "t_cut,psi_star,trace_vt\n"
       << cell(t_cut) << ',' << cell(psi_star) << ',' << cell(trace) << '\n';
  std::ofstream bout(beta_path);
  if (!bout) throw InvalidInput("cannot open '" + beta_path + "'");
  bout << header_line(c) << "\n" << "term,beta\n";
  for (std::size_t j = 0; j < model.k(); ++j) {
    bout << model.names[j] << ',' << cell(beta[static_cast<Eigen::Index>(j)]) << '\n';
  }
  return kExitOk;
}

MonteCarloOptions truth_options(const RunConfig& c) {
  MonteCarloOptions m;
  m.mc_n = c.mc_n;
  m.seed = c.mc_seed;
  m.threads = c.threads;
  m.nodes = c.nodes;
  m.cache_dir = c.cache_dir;
  return m;
}

int run_simulate(RunConfig& c, std::ostream& stdout_, std::ostream& err) {
  const auto dgp = make_dgp(c.dgp);
  CoverageOptions o;
  o.n = c.n;
  o.reps = c.reps;
  o.folds = c.folds;
  o.mode = parse_nuisance_mode(c.nuisance);
  o.seed = c.seed;
  o.threads = c.threads;
  o.a_star = *c.a_star;
  o.epsilon = c.epsilon;
  o.nodes = c.nodes;
  o.nuisance = nuisance_config(c);
  o.truth = truth_options(c);
  const CoverageTable table =
      run_coverage(*dgp, parse_families(c.families), make_tgrid(c.t_max, c.t_step), o);
  for (const auto& m : table.failure_messages) err << "warning: " << m << "\n";
  if (table.failed == table.reps) throw NumericalFailure("every replication failed");
  Output out(c.out, stdout_);
  *out << header_line(c) << "\n";
  write_coverage_csv(*out, table);
  return kExitOk;
}

int run_truecurve(RunConfig& c, std::ostream& stdout_) {
  const auto dgp = make_dgp(c.dgp);
  const PathSpec spec = path_spec(c, parse_family(c.family), dgp->support());
  const TrueCurve curve =
      true_effect_curve(*dgp, spec, make_tgrid(c.t_max, c.t_step), truth_options(c));
  Output out(c.out, stdout_);
  *out << header_line(c) << "\n" << "t,psi,mc_se\n";
  for (std::size_t j = 0; j < curve.t.size(); ++j) {
    *out << cell(curve.t[j]) << ',' << cell(curve.psi[j]) << ',' << cell(curve.mc_se[j]) << '\n';
  }
  return kExitOk;
}

int run_sample(RunConfig& c, std::ostream& stdout_) {
  const Dataset data = make_dgp(c.dgp)->sample(c.n, c.seed);
  Output out(c.out, stdout_);
  *out << header_line(c) << "\n";
  write_dataset_csv(*out, data);
  return kExitOk;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(" \t\"\\") == std::string::npos && !s.empty()) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') q += '\\';
    q += ch;
  }
  return q + "\"";
}

}  // namespace

RunConfig validate_config(const RunConfig& config) {
  RunConfig c = config;
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };
  auto attempt = [&](const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      errors.emplace_back(e.what());
    }
  };
  const bool known = std::find(kCommands.begin(), kCommands.end(), c.command) != kCommands.end();
  check(known, "unknown command '" + c.command + "'");
  if (c.command == "estimate" || c.command == "msm") {
    check(!c.data.empty(), "--data is required for " + c.command);
  }
  check(c.t_max < 1.0, "t-max must be < 1 (got " + cell(c.t_max) +
                           "): the path endpoint t = 1 is a point mass");
  check(c.t_max > 0.0, "t-max must be > 0");
  check(c.t_step > 0.0, "t-step must be > 0");
  check(c.t_step <= c.t_max, "t-step must not exceed t-max");
  check(c.folds >= 2, "folds must be >= 2 (got " + std::to_string(c.folds) + ")");
  check(c.epsilon > 0.0, "epsilon must be > 0 (got " + cell(c.epsilon) + ")");
  check(c.nodes >= 8, "nodes must be >= 8");
  check(c.knots >= 1, "knots must be >= 1");
  check(c.covariate_knots >= 1, "covariate-knots must be >= 1");
  check(c.n >= 1, "n must be >= 1");
  check(c.reps >= 1, "reps must be >= 1");
  check(c.mc_n >= 2, "mc-n must be >= 2");
  check(c.a_points >= 2, "a-points must be >= 2");
  check(c.grid_points >= 2, "grid-points must be >= 2");
  check(c.s_points >= 3, "s-points must be >= 3");
  attempt([&] { parse_family(c.family); });
  attempt([&] { parse_families(c.families); });
  attempt([&] { parse_nuisance_mode(c.nuisance); });
  if (!c.support.empty()) attempt([&] { parse_support(c.support); });
  if (!c.ridge_grid.empty()) {
    attempt([&] {
      for (double v : parse_list(c.ridge_grid, "ridge-grid")) {
        if (!(v > 0.0)) throw InvalidInput("ridge-grid values must be > 0");
      }
    });
  }
  if (!c.x.empty()) attempt([&] { parse_list(c.x, "x"); });
  if (c.kde_bandwidth != "silverman") {
    attempt([&] {
      const auto v = parse_list(c.kde_bandwidth, "kde-bandwidth");
      if (v.size() != 1 || !(v[0] > 0.0)) {
        throw InvalidInput("kde-bandwidth must be silverman or a positive number");
      }
    });
  }
  if (c.t_cut != "auto") {
    attempt([&] {
      const auto v = parse_list(c.t_cut, "t-cut");
      if (v.size() != 1 || !(v[0] > 0.0 && v[0] < 1.0)) {
        throw InvalidInput("t-cut must be auto or lie in (0, 1)");
      }
      c.t_cut = num(v[0]);
    });
  }
  attempt([&] { make_msm_model(c.basis, Support(0.0, 1.0), 0.0); });
  std::shared_ptr<const Dgp> d;
  if (known) {
    attempt([&] { d = design(c); });
    if (!c.oracle.empty() && uses_dgp(c)) attempt([&] { make_dgp(c.oracle); });
  }
  if (!c.a_star) {
    if (d) {
      c.a_star = d->default_a_star();
    } else if (known && c.command != "sample") {
      errors.emplace_back("--a-star is required when no simulation design is given");
    }
  }
  if (!errors.empty()) {
    std::string all;
    for (const auto& e : errors) all += (all.empty() ? "" : "\n") + e;
    throw InvalidInput(all);
  }
  return c;
}

std::vector<std::string> replay_arguments(const RunConfig& config) {
  std::vector<std::string> args{config.command};
  for (const Field& f : fields()) {
    if (!reads(f, config.command)) continue;
    if (auto v = f.value(config)) args.push_back("--" + f.name + "=" + *v);
  }
  return args;
}

std::string header_line(const RunConfig& config) {
  std::string line = std::string("# geodesy ") + kVersion + " |";
  for (const auto& a : replay_arguments(config)) line += " " + quote(a);
  return line;
}

std::vector<std::string> parse_header_line(const std::string& line) {
  const auto bar = line.find(" | ");
  if (line.rfind("# geodesy ", 0) != 0 || bar == std::string::npos) {
    throw InvalidInput("not a geodesy header line");
  }
  std::vector<std::string> args;
  std::string cur;
  bool in_quotes = false, have = false;
  for (std::size_t i = bar + 3; i < line.size(); ++i) {
    const char ch = line[i];
    if (in_quotes) {
      if (ch == '\\' && i + 1 < line.size()) {
        cur += line[++i];
      } else if (ch == '"') {
        in_quotes = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      in_quotes = have = true;
    } else if (ch == ' ') {
      if (have) args.push_back(cur);
      cur.clear();
      have = false;
    } else {
      cur += ch;
      have = true;
    }
  }
  if (have) args.push_back(cur);
  return args;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig config;
  CLI::App app{"Effect curves along paths toward a point-mass intervention", "geodesy"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  for (const Field& f : fields()) f.bind(app, config);
  app.add_option("--out", config.out, "Output CSV (default: standard output)");
  app.add_option("--beta-out,--beta_out", config.beta_out,
                 "Coefficient CSV of msm (default: beta.csv next to --out)");
  app.add_option("--threads", config.threads, "Worker threads, 0 = all cores");
  app.add_option("--cache-dir,--cache_dir", config.cache_dir,
                 "Directory caching true curves between runs");
  const std::map<std::string, std::string> help = {
      {"paths", "Evaluate path densities on an exposure grid"},
      {"estimate", "Cross-fitted one-step effect curve with confidence intervals"},
      {"msm", "Extrapolate the curve to t = 1 with a marginal structural model"},
      {"simulate", "Coverage experiment on a simulation design"},
      {"truecurve", "Monte Carlo ground-truth effect curve of a simulation design"},
      {"sample", "Draw a dataset from a simulation design"}};
  for (const auto& name : kCommands) {
    app.add_subcommand(name, help.at(name))->fallthrough();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  config.command = app.get_subcommands().front()->get_name();

  try {
    RunConfig c = validate_config(config);
    if (c.command == "paths") return run_paths(c, out);
    if (c.command == "estimate") return run_estimate(c, out, err);
    if (c.command == "msm") return run_msm(c, out);
    if (c.command == "simulate") return run_simulate(c, out, err);
    if (c.command == "truecurve") return run_truecurve(c, out);
    return run_sample(c, out);
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace geodesy::cli
