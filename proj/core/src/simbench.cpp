#include "geodesy/simbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "geodesy/parallel.hpp"
#include "geodesy/version.hpp"

namespace geodesy {

TruncatedNormalDensity::TruncatedNormalDensity(std::function<double(Row)> location, double sd,
                                               Support support)
    : location_(std::move(location)), sd_(sd), support_(support) {}

double TruncatedNormalDensity::density(double a, Row x) const { return at(x).pdf(a); }

Curve TruncatedNormalDensity::slice(Row x) const {
  return [tn = at(x)](double a) { return tn.pdf(a); };
}

std::optional<double> TruncatedNormalDensity::gaussian_affinity(Row x, double a_star,
                                                                double epsilon) const {
  if (sd_ != 1.0) return std::nullopt;
  return hellinger_affinity_closed_form(location_(x), support_, a_star, epsilon);
}

Dataset Dgp::sample(std::size_t n, std::uint64_t seed) const {
  if (n < 1) throw InvalidInput("sample size must be >= 1");
  Rng rng(seed);
  const std::size_t d = dim();
  std::vector<double> x(n * d), a(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = x.data() + i * d;
    sample_x(rng, xi);
    const Row row(xi, d);
    a[i] = pi_->at(row).quantile(rng.uniform());
    y[i] = mu_->mean(row, a[i]) + outcome_noise(rng);
  }
  return Dataset(std::move(x), d, std::move(a), std::move(y), support());
}

namespace {

class Sim7 final : public Dgp {
 public:
  Sim7() {
    mu_ = std::make_shared<FormulaOutcome>([](Row x, double a) {
      const double s = x[0] + x[1];
      return a + s * std::exp(-a * s);
    });
    pi_ = std::make_shared<TruncatedNormalDensity>([](Row x) { return x[0] + x[1]; }, 1.0,
                                                   Support(-1.0, 5.0));
  }
  std::string name() const override { return "sim7"; }
  Support support() const override { return {-1.0, 5.0}; }
  std::size_t dim() const override { return 2; }
  double default_a_star() const override { return 5.0; }
  void sample_x(Rng& rng, double* x) const override {
    x[0] = rng.exponential();
    x[1] = rng.exponential();
  }
  double outcome_noise(Rng& rng) const override { return rng.normal(); }
  std::optional<double> dose_response(double a) const override {
    return true_dose_response_sim7(a);
  }
};

class Msm6 final : public Dgp {
 public:
  Msm6() {
    mu_ = std::make_shared<FormulaOutcome>([](Row x, double a) { return x[0] + a; });
    pi_ = std::make_shared<TruncatedNormalDensity>([](Row x) { return x[0]; }, 1.0,
                                                   Support(-7.0, 7.0));
  }
  std::string name() const override { return "msm6"; }
  Support support() const override { return {-7.0, 7.0}; }
  std::size_t dim() const override { return 1; }
  double default_a_star() const override { return 2.0; }
  void sample_x(Rng& rng, double* x) const override { x[0] = -3.0 + 6.0 * rng.uniform(); }
  double outcome_noise(Rng& rng) const override { return rng.normal(); }
  // Symmetric truncation keeps E[A] = E[X] = 0.
  std::optional<double> dose_response(double a) const override { return a; }
};

class ConstantDgp final : public Dgp {
 public:
  ConstantDgp() {
    mu_ = std::make_shared<FormulaOutcome>([](Row, double) { return 1.0; });
    pi_ = std::make_shared<TruncatedNormalDensity>([](Row x) { return x[0]; }, 1.0,
                                                   Support(-2.0, 3.0));
  }
  std::string name() const override { return "constant"; }
  Support support() const override { return {-2.0, 3.0}; }
  std::size_t dim() const override { return 1; }
  double default_a_star() const override { return 2.0; }
  void sample_x(Rng& rng, double* x) const override { x[0] = rng.uniform(); }
  double outcome_noise(Rng&) const override { return 0.0; }
  std::optional<double> dose_response(double) const override { return 1.0; }
};

}  // namespace

std::shared_ptr<const Dgp> make_sim7() { return std::make_shared<Sim7>(); }
std::shared_ptr<const Dgp> make_msm6() { return std::make_shared<Msm6>(); }
std::shared_ptr<const Dgp> make_constant_dgp() { return std::make_shared<ConstantDgp>(); }

std::shared_ptr<const Dgp> make_dgp(const std::string& name) {
  if (name == "sim7") return make_sim7();
  if (name == "msm6") return make_msm6();
  if (name == "constant") return make_constant_dgp();
  throw InvalidInput("unknown dgp '" + name + "' (expected sim7, msm6 or constant)");
}

Dataset sample_sim7(std::size_t n, std::uint64_t seed) { return make_sim7()->sample(n, seed); }

double true_dose_response_sim7(double a) {
  if (!(a > -1.0)) throw InvalidInput("the dose response is defined for a > -1");
  return a + 2.0 / std::pow(1.0 + a, 3);
}

namespace {

constexpr std::size_t kChunk = 4096;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string curve_key(const Dgp& dgp, const PathSpec& spec, const TGrid& grid,
                      const MonteCarloOptions& o) {
  std::ostringstream k;
  k << "geodesy " << kVersion << " dgp=" << dgp.name() << " family=" << family_name(spec.family)
    << " a_star=" << fmt(spec.a_star) << " epsilon=" << fmt(spec.epsilon)
    << " split=" << fmt(spec.split_point) << " support=" << fmt(spec.support.lo) << ","
    << fmt(spec.support.hi) << " mc_n=" << o.mc_n << " seed=" << o.seed << " nodes=" << o.nodes
    << " t=";
  for (double t : grid) k << fmt(t) << ";";
  return k.str();
}

// Per-chunk sums of a vector-valued function of the covariates; reduced in chunk order.
struct ChunkSums {
  std::vector<double> sum, sumsq, flagged;
};

std::vector<ChunkSums> monte_carlo(const Dgp& dgp, std::size_t T, const MonteCarloOptions& o,
                                   const std::function<void(Row, double*, char*)>& eval) {
  if (o.mc_n < 2) throw InvalidInput("Monte Carlo size must be >= 2");
  const std::size_t chunks = (o.mc_n + kChunk - 1) / kChunk;
  std::vector<ChunkSums> out(chunks);
  parallel_for(chunks, o.threads, [&](std::size_t c) {
    Rng rng(derive_seed(o.seed, c));
    const std::size_t count = std::min(kChunk, o.mc_n - c * kChunk);
    std::vector<double> x(dgp.dim()), v(T);
    std::vector<char> flag(T);
    ChunkSums& s = out[c];
    s.sum.assign(T, 0.0);
    s.sumsq.assign(T, 0.0);
    s.flagged.assign(T, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      dgp.sample_x(rng, x.data());
      std::fill(flag.begin(), flag.end(), 0);
      eval(x, v.data(), flag.data());
      for (std::size_t j = 0; j < T; ++j) {
        if (flag[j]) {
          s.flagged[j] += 1.0;
          continue;
        }
        s.sum[j] += v[j];
        s.sumsq[j] += v[j] * v[j];
      }
    }
  });
  return out;
}

std::optional<double> restricted_closed_form(const Dgp& dgp, const PathSpec& spec, Row x) {
  if (spec.family != Family::Hellinger) return std::nullopt;
  if (auto u = dgp.density()->gaussian_affinity(x, spec.a_star, spec.epsilon)) {
    return restricted_affinity(*u, spec);
  }
  return std::nullopt;
}

std::optional<TrueCurve> read_cached(const std::string& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != "# " + key) return std::nullopt;
  std::getline(in, line);
  TrueCurve c;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string a, b, e;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, e)) {
      return std::nullopt;
    }
    c.t.push_back(std::stod(a));
    c.psi.push_back(std::stod(b));
    c.mc_se.push_back(std::stod(e));
  }
  return c;
}

void write_cached(const std::string& path, const std::string& key, const TrueCurve& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) return;
    out << "# " << key << "\n" << "t,psi,mc_se\n";
    for (std::size_t j = 0; j < c.t.size(); ++j) {
      out << fmt(c.t[j]) << ',' << fmt(c.psi[j]) << ',' << fmt(c.mc_se[j]) << '\n';
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
}

}  // namespace

TrueCurve true_effect_curve(const Dgp& dgp, const PathSpec& spec, const TGrid& grid,
                            const MonteCarloOptions& options) {
  spec.validate();
  const std::string key = curve_key(dgp, spec, grid, options);
  std::string cache_path;
  if (!options.cache_dir.empty()) {
    std::filesystem::create_directories(options.cache_dir);
    char name[64];
    std::snprintf(name, sizeof name, "truecurve-%016llx.csv",
                  static_cast<unsigned long long>(fnv1a(key)));
    cache_path = (std::filesystem::path(options.cache_dir) / name).string();
    if (auto cached = read_cached(cache_path, key)) return *cached;
  }

  const std::size_t T = grid.size();
  const auto chunks = monte_carlo(dgp, T, options, [&](Row x, double* v, char*) {
    const auto e = path_expectations(spec, grid, dgp.outcome()->slice(x), dgp.density()->slice(x),
                                     restricted_closed_form(dgp, spec, x), options.nodes);
    std::copy(e.begin(), e.end(), v);
  });
  TrueCurve c;
  c.t = grid.values;
  c.psi.assign(T, 0.0);
  c.mc_se.assign(T, 0.0);
  std::vector<double> sq(T, 0.0);
  for (const auto& ch : chunks) {
    for (std::size_t j = 0; j < T; ++j) {
      c.psi[j] += ch.sum[j];
      sq[j] += ch.sumsq[j];
    }
  }
  const auto n = static_cast<double>(options.mc_n);
  for (std::size_t j = 0; j < T; ++j) {
    c.psi[j] /= n;
    const double var = std::max(0.0, (sq[j] / n - c.psi[j] * c.psi[j]) * n / (n - 1.0));
    c.mc_se[j] = std::sqrt(var / n);
  }
  if (!cache_path.empty()) write_cached(cache_path, key, c);
  return c;
}

ChiSqProfile chi_sq_profile(const Dgp& dgp, const PathSpec& spec, const TGrid& grid,
                            const MonteCarloOptions& options) {
  spec.validate();
  const std::size_t T = grid.size();
  const auto chunks = monte_carlo(dgp, T, options, [&](Row x, double* v, char* flag) {
    const auto chi = chi_square_along_path(spec, grid, dgp.density()->slice(x),
                                           restricted_closed_form(dgp, spec, x), options.nodes);
    for (std::size_t j = 0; j < T; ++j) {
      v[j] = chi[j].value;
      flag[j] = chi[j].infinite;
    }
  });
  ChiSqProfile p;
  p.t = grid.values;
  p.mean_chi_sq.assign(T, 0.0);
  p.infinite_fraction.assign(T, 0.0);
  for (const auto& ch : chunks) {
    for (std::size_t j = 0; j < T; ++j) {
      p.mean_chi_sq[j] += ch.sum[j];
      p.infinite_fraction[j] += ch.flagged[j];
    }
  }
  const auto n = static_cast<double>(options.mc_n);
  for (std::size_t j = 0; j < T; ++j) {
    p.infinite_fraction[j] /= n;
    p.mean_chi_sq[j] = p.infinite_fraction[j] > 0.0 ? INFINITY : p.mean_chi_sq[j] / n;
  }
  return p;
}

NuisanceMode parse_nuisance_mode(const std::string& s) {
  if (s == "oracle-pi" || s == "oracle-pi+fitted-mu") return NuisanceMode::OraclePiFittedMu;
  if (s == "all-fitted" || s == "fitted") return NuisanceMode::AllFitted;
  if (s == "all-oracle" || s == "oracle") return NuisanceMode::AllOracle;
  throw InvalidInput("unknown nuisance mode '" + s +
                     "' (expected oracle-pi, all-fitted or all-oracle)");
}

std::string nuisance_mode_name(NuisanceMode m) {
  switch (m) {
    case NuisanceMode::OraclePiFittedMu:
      return "oracle-pi";
    case NuisanceMode::AllFitted:
      return "all-fitted";
    case NuisanceMode::AllOracle:
      return "all-oracle";
  }
  return "unknown";
}

CoverageTable run_coverage(const Dgp& dgp, const std::vector<Family>& families,
                           const TGrid& grid, const CoverageOptions& options) {
  if (options.reps < 1) throw InvalidInput("reps must be >= 1");
  if (families.empty()) throw InvalidInput("at least one family is required");
  const std::size_t T = grid.size(), F = families.size();
  std::vector<PathSpec> specs;
  for (Family f : families) {
    if (f == Family::ReflectedTilt) {
      throw InvalidInput("the reflected tilt has no interval estimator and cannot be simulated");
    }
    PathSpec s;
    s.family = f;
    s.a_star = options.a_star;
    s.epsilon = options.epsilon;
    s.support = dgp.support();
    s.validate();
    specs.push_back(s);
  }

  CoverageTable table;
  table.t = grid.values;
  table.reps = options.reps;
  for (std::size_t f = 0; f < F; ++f) {
    FamilyCoverage fc;
    fc.family = families[f];
    fc.truth = true_effect_curve(dgp, specs[f], grid, options.truth).psi;
    table.families.push_back(std::move(fc));
  }

  NuisanceFitters fitters;
  const auto oracle = oracle_fitters(dgp.outcome(), dgp.density());
  const auto fitted = spline_fitters(options.nuisance);
  switch (options.mode) {
    case NuisanceMode::AllOracle:
      fitters = oracle;
      break;
    case NuisanceMode::AllFitted:
      fitters = fitted;
      break;
    case NuisanceMode::OraclePiFittedMu:
      fitters = fitted;
      fitters.fit_pi = oracle.fit_pi;
      fitters.pi_provenance = Provenance::Oracle;
      break;
  }

  EstimateOptions est;
  est.compute_chi_sq = false;
  est.threads = 1;
  est.nodes = options.nodes;

  // Per replication: psi, lo, hi for each (family, t).
  std::vector<std::vector<double>> results(options.reps);
  std::vector<std::string> errors(options.reps);
  parallel_for(options.reps, options.threads, [&](std::size_t r) {
    try {
      const std::uint64_t seed = derive_seed(options.seed, r);
      const Dataset data = dgp.sample(options.n, seed);
      const FoldPlan plan = make_fold_plan(options.n, options.folds, derive_seed(seed, 1));
      const CrossFit cf = crossfit(data, plan, fitters, 1);
      std::vector<double> out(F * T * 3);
      for (std::size_t f = 0; f < F; ++f) {
        const EstimateResult res = one_step(data, specs[f], grid, cf, est);
        for (std::size_t j = 0; j < T; ++j) {
          const auto& p = res.curve[j];
          if (!std::isfinite(p.psi_hat) || !std::isfinite(p.se)) {
            throw NumericalFailure("non-finite estimate");
          }
          out[(f * T + j) * 3 + 0] = p.psi_hat;
          out[(f * T + j) * 3 + 1] = p.ci_lo;
          out[(f * T + j) * 3 + 2] = p.ci_hi;
        }
      }
      results[r] = std::move(out);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  for (std::size_t r = 0; r < options.reps; ++r) {
    if (!errors[r].empty()) {
      ++table.failed;
      table.failure_messages.push_back("replication " + std::to_string(r) + ": " + errors[r]);
    }
  }
  const double ok = static_cast<double>(options.reps - table.failed);
  for (std::size_t f = 0; f < F; ++f) {
    FamilyCoverage& fc = table.families[f];
    fc.psi_mean.assign(T, 0.0);
    fc.coverage.assign(T, 0.0);
    fc.width.assign(T, 0.0);
    for (std::size_t r = 0; r < options.reps; ++r) {
      if (!errors[r].empty()) continue;
      for (std::size_t j = 0; j < T; ++j) {
        const double psi = results[r][(f * T + j) * 3 + 0];
        const double lo = results[r][(f * T + j) * 3 + 1];
        const double hi = results[r][(f * T + j) * 3 + 2];
        fc.psi_mean[j] += psi;
        fc.coverage[j] += (lo <= fc.truth[j] && fc.truth[j] <= hi) ? 1.0 : 0.0;
        fc.width[j] += hi - lo;
      }
    }
    for (std::size_t j = 0; j < T; ++j) {
      const double denom = ok > 0 ? ok : NAN;
      fc.psi_mean[j] /= denom;
      fc.coverage[j] /= denom;
      fc.width[j] /= denom;
    }
  }
  return table;
}

void write_coverage_csv(std::ostream& out, const CoverageTable& table) {
  out << "t,Wasserstein_psi,ExpTilt_psi,Hellinger_psi,Wasserstein_coverage,ExpTilt_coverage,"
         "Hellinger_coverage,Wasserstein_width,ExpTilt_width,Hellinger_width\n";
  const Family order[3] = {Family::Wasserstein, Family::ExpTilt, Family::Hellinger};
  auto find = [&](Family f) -> const FamilyCoverage* {
    for (const auto& fc : table.families) {
      if (fc.family == f) return &fc;
    }
    return nullptr;
  };
  auto cell = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (std::size_t j = 0; j < table.t.size(); ++j) {
    out << cell(table.t[j]);
    for (int col = 0; col < 3; ++col) {
      for (Family f : order) {
        const FamilyCoverage* fc = find(f);
        out << ',';
        if (!fc) {
          out << "NA";
          continue;
        }
        const std::vector<double>& v = col == 0 ? fc->psi_mean : col == 1 ? fc->coverage : fc->width;
        out << cell(v[j]);
      }
    }
    out << '\n';
  }
}

}  // namespace geodesy
