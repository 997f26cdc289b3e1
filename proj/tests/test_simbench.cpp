#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "geodesy/simbench.hpp"
#include "oracles.hpp"

namespace geodesy {
namespace {

using testing::gauss_cdf;
using testing::gauss_pdf;
using testing::simpson;

PathSpec spec_for(const Dgp& dgp, Family f, double a_star) {
  PathSpec p;
  p.family = f;
  p.a_star = a_star;
  p.support = dgp.support();
  return p;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

TEST(Designs, NamesAndSupports) {
  EXPECT_EQ(make_dgp("sim7")->support().lo, -1.0);
  EXPECT_EQ(make_dgp("sim7")->support().hi, 5.0);
  EXPECT_EQ(make_dgp("msm6")->dim(), 1u);
  EXPECT_EQ(make_dgp("constant")->default_a_star(), make_constant_dgp()->default_a_star());
  EXPECT_THROW(make_dgp("sim8"), InvalidInput);
}

TEST(Sim7, SamplesRespectTheDesign) {
  const std::size_t n = 100000;
  const Dataset d = sample_sim7(n, 42);
  std::vector<double> a(d.a().begin(), d.a().end()), eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    ASSERT_GE(a[i], -1.0);
    ASSERT_LE(a[i], 5.0);
    const double s = d.x(i)[0] + d.x(i)[1];
    eps[i] = d.y(i) - a[i] - s * std::exp(-a[i] * s);
  }
  // E[A] = E_S[m(S)] with S ~ Gamma(2, 1) and m the truncated-normal mean.
  const double expected_a = simpson(
      [](double s) {
        const double z = gauss_cdf(5.0, s, 1.0) - gauss_cdf(-1.0, s, 1.0);
        const double m = s + (gauss_pdf(-1.0, s, 1.0) - gauss_pdf(5.0, s, 1.0)) / z;
        return s * std::exp(-s) * m;
      },
      0.0, 30.0, 30000);
  EXPECT_NEAR(mean_of(a), expected_a, 3.0 * sd_of(a) / std::sqrt(double(n)));
  EXPECT_NEAR(mean_of(eps), 0.0, 3.0 * sd_of(eps) / std::sqrt(double(n)));
}

TEST(Sim7, DoseResponse) {
  EXPECT_NEAR(true_dose_response_sim7(5.0), 5.0 + 2.0 / 216.0, 1e-15);
  EXPECT_NEAR(true_dose_response_sim7(5.0), 5.009259259, 1e-9);
  EXPECT_DOUBLE_EQ(true_dose_response_sim7(0.0), 2.0);
  EXPECT_THROW(true_dose_response_sim7(-1.0), InvalidInput);
  const auto dgp = make_sim7();
  Rng rng(9);
  std::vector<double> x(2);
  for (double a : {0.0, 1.5, 4.0}) {
    std::vector<double> v(200000);
    for (double& m : v) {
      dgp->sample_x(rng, x.data());
      m = dgp->outcome()->mean(x, a);
    }
    EXPECT_NEAR(mean_of(v), true_dose_response_sim7(a), 3.0 * sd_of(v) / std::sqrt(double(v.size())));
  }
}

TEST(TrueCurve, AllFamiliesStartAtTheOutcomeMean) {
  const auto dgp = make_sim7();
  const TGrid grid{{0.0}};
  MonteCarloOptions mc;
  mc.mc_n = 20000;
  std::vector<double> starts;
  for (Family f : {Family::Wasserstein, Family::Hellinger, Family::ExpTilt}) {
    starts.push_back(true_effect_curve(*dgp, spec_for(*dgp, f, 5.0), grid, mc).psi[0]);
  }
  EXPECT_NEAR(starts[1], starts[0], 1e-12);
  EXPECT_NEAR(starts[2], starts[0], 1e-12);
  const Dataset d = dgp->sample(200000, 3);
  std::vector<double> y(d.y().begin(), d.y().end());
  const TrueCurve c = true_effect_curve(*dgp, spec_for(*dgp, Family::Wasserstein, 5.0), grid, mc);
  EXPECT_NEAR(c.psi[0], mean_of(y), 4.0 * std::hypot(c.mc_se[0], sd_of(y) / std::sqrt(2e5)));
}

TEST(TrueCurve, LinearDesignGivesLinearCurve) {
  const auto dgp = make_msm6();
  const TGrid grid = make_tgrid(0.9, 0.3);
  MonteCarloOptions mc;
  mc.mc_n = 20000;
  const TrueCurve c = true_effect_curve(*dgp, spec_for(*dgp, Family::Wasserstein, 2.0), grid, mc);
  // Monte Carlo noise in E[X] is shared by every t, so compare increments.
  for (std::size_t j = 0; j < grid.size(); ++j) {
    EXPECT_NEAR(c.psi[j] - c.psi[0], 2.0 * grid[j], 4.0 * c.mc_se[j] + 1e-9);
    EXPECT_NEAR(c.psi[j], 2.0 * grid[j], 4.0 * c.mc_se[j]);
  }
}

TEST(TrueCurve, EndpointsApproachTheDoseResponse) {
  const auto dgp = make_sim7();
  const TGrid grid{{0.5, 0.99}};
  MonteCarloOptions mc;
  mc.mc_n = 8000;
  for (Family f : {Family::Wasserstein, Family::Hellinger, Family::ExpTilt}) {
    const TrueCurve c = true_effect_curve(*dgp, spec_for(*dgp, f, 5.0), grid, mc);
    EXPECT_NEAR(c.psi[1], 5.0093, 0.05) << family_name(f);
    EXPECT_LT(c.psi[0], c.psi[1]);
  }
}

TEST(TrueCurve, TiltCurveIncreases) {
  const auto dgp = make_sim7();
  MonteCarloOptions mc;
  mc.mc_n = 4000;
  const TrueCurve c = true_effect_curve(*dgp, spec_for(*dgp, Family::ExpTilt, 5.0), make_tgrid(0.9, 0.1), mc);
  for (std::size_t j = 1; j < c.psi.size(); ++j) EXPECT_GT(c.psi[j], c.psi[j - 1]);
}

TEST(TrueCurve, CacheIsReusedAndKeyed) {
  const auto dir = std::filesystem::temp_directory_path() / "geodesy-test-cache";
  std::filesystem::remove_all(dir);
  const auto dgp = make_msm6();
  MonteCarloOptions mc;
  mc.mc_n = 500;
  mc.cache_dir = dir.string();
  const PathSpec spec = spec_for(*dgp, Family::Wasserstein, 2.0);
  const TGrid grid{{0.0, 0.5}};
  const TrueCurve first = true_effect_curve(*dgp, spec, grid, mc);
  ASSERT_EQ(std::distance(std::filesystem::directory_iterator(dir), {}), 1);
  const auto file = std::filesystem::directory_iterator(dir)->path();
  const TrueCurve second = true_effect_curve(*dgp, spec, grid, mc);
  EXPECT_EQ(first.psi, second.psi);
  // Edit the cached value; a reader that honours the cache returns the edit.
  std::ifstream in(file);
  std::stringstream body;
  body << in.rdbuf();
  in.close();
  std::string text = body.str();
  const auto last = text.rfind('\n', text.size() - 2);
  text = text.substr(0, last + 1) + "0.5,123,0\n";
  std::ofstream(file) << text;
  EXPECT_EQ(true_effect_curve(*dgp, spec, grid, mc).psi[1], 123.0);
  mc.seed += 1;
  EXPECT_NE(true_effect_curve(*dgp, spec, grid, mc).psi[1], 123.0);
  std::filesystem::remove_all(dir);
}

TEST(ChiSqProfile, StartsAtZeroAndExplodesNearTheEnd) {
  const auto dgp = make_msm6();
  MonteCarloOptions mc;
  mc.mc_n = 2000;
  const ChiSqProfile p = chi_sq_profile(*dgp, spec_for(*dgp, Family::Wasserstein, 2.0), TGrid{{0.0, 0.5, 0.99}}, mc);
  EXPECT_NEAR(p.mean_chi_sq[0], 0.0, 1e-10);
  EXPECT_GT(p.mean_chi_sq[2], 100.0 * p.mean_chi_sq[1]);
  EXPECT_EQ(p.infinite_fraction[1], 0.0);
}

TEST(ChiSqProfile, StableUnderQuadratureRefinement) {
  const auto dgp = make_sim7();
  MonteCarloOptions mc;
  mc.mc_n = 500;
  for (Family f : {Family::Wasserstein, Family::Hellinger, Family::ExpTilt}) {
    const PathSpec spec = spec_for(*dgp, f, 5.0);
    const double coarse = chi_sq_profile(*dgp, spec, TGrid{{0.5}}, mc).mean_chi_sq[0];
    mc.nodes = 801;
    const double fine = chi_sq_profile(*dgp, spec, TGrid{{0.5}}, mc).mean_chi_sq[0];
    mc.nodes = kDefaultNodes;
    EXPECT_NEAR(coarse, fine, 0.02 * fine) << family_name(f);
  }
}

TEST(Coverage, CsvLayout) {
  CoverageTable t;
  t.t = {0.0, 0.5};
  t.families.push_back({Family::Wasserstein, {1, 2}, {1.1, 2.1}, {0.9, 1.0}, {0.5, 0.6}});
  std::ostringstream out;
  write_coverage_csv(out, t);
  std::istringstream lines(out.str());
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header,
            "t,Wasserstein_psi,ExpTilt_psi,Hellinger_psi,Wasserstein_coverage,ExpTilt_coverage,"
            "Hellinger_coverage,Wasserstein_width,ExpTilt_width,Hellinger_width");
  std::getline(lines, row);
  EXPECT_EQ(row, "0,1.1,NA,NA,0.9,NA,NA,0.5,NA,NA");
}

CoverageOptions small_run(unsigned threads) {
  CoverageOptions o;
  o.n = 120;
  o.reps = 6;
  o.folds = 3;
  o.threads = threads;
  o.seed = 77;
  o.truth.mc_n = 2000;
  return o;
}

TEST(Coverage, IdenticalAcrossThreadCounts) {
  const auto dgp = make_sim7();
  const TGrid grid{{0.0, 0.5}};
  const std::vector<Family> fams{Family::Wasserstein, Family::ExpTilt};
  std::ostringstream one, three;
  write_coverage_csv(one, run_coverage(*dgp, fams, grid, small_run(1)));
  write_coverage_csv(three, run_coverage(*dgp, fams, grid, small_run(3)));
  EXPECT_EQ(one.str(), three.str());
}

TEST(Coverage, OracleCoverageAtTheStartIsNominal) {
  const auto dgp = make_sim7();
  CoverageOptions o;
  o.n = 250;
  o.reps = 300;
  o.mode = NuisanceMode::AllOracle;
  o.truth.mc_n = 100000;
  const CoverageTable t = run_coverage(*dgp, {Family::Wasserstein}, TGrid{{0.0}}, o);
  EXPECT_EQ(t.failed, 0u);
  const double half = 2.576 * std::sqrt(0.95 * 0.05 / 300.0);
  EXPECT_NEAR(t.families[0].coverage[0], 0.95, half);
  EXPECT_GT(t.families[0].width[0], 0.0);
}

TEST(Coverage, ModeNames) {
  EXPECT_EQ(parse_nuisance_mode("oracle-pi"), NuisanceMode::OraclePiFittedMu);
  EXPECT_EQ(parse_nuisance_mode("all-fitted"), NuisanceMode::AllFitted);
  EXPECT_EQ(parse_nuisance_mode(nuisance_mode_name(NuisanceMode::AllOracle)), NuisanceMode::AllOracle);
  EXPECT_THROW(parse_nuisance_mode("some"), InvalidInput);
}

}  // namespace
}  // namespace geodesy
