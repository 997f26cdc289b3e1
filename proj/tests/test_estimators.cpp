#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "geodesy/estimators.hpp"
#include "geodesy/simbench.hpp"
#include "oracles.hpp"

namespace geodesy {
namespace {

using testing::FunctionDensity;
using testing::FunctionOutcome;
using testing::PerturbedDensity;
using testing::simpson;

PathSpec sim7_spec(Family f, double eps = 0.05) {
  PathSpec p;
  p.family = f;
  p.a_star = 5.0;
  p.epsilon = eps;
  p.support = Support(-1.0, 5.0);
  return p;
}

const Family kOneStepFamilies[] = {Family::Wasserstein, Family::Hellinger, Family::ExpTilt};

NuisancePair sim7_oracle() {
  static const auto dgp = make_sim7();
  return oracle_nuisances(dgp->outcome(), dgp->density());
}

EifRecord eif_any(Family f, const Observation& z, double t, const NuisancePair& nuis,
                  double psi_ref) {
  const PathSpec spec = sim7_spec(f);
  switch (f) {
    case Family::Wasserstein:
      return eif_wasserstein(z, t, spec, nuis, psi_ref);
    case Family::Hellinger:
      return eif_hellinger(z, t, spec, nuis, psi_ref);
    default:
      return eif_general_tilt(z, exponential_tilt(tilt_delta(t), spec.support), nuis, psi_ref,
                              path_rule(spec, t));
  }
}

TEST(WassersteinEif, DirectSubstitution) {
  PathSpec spec;
  spec.a_star = 1.0;
  spec.support = Support(0.0, 1.0);
  auto pi = std::make_shared<FunctionDensity>([](double a) { return (a >= 0.0 && a <= 1.0) ? 1.0 : 0.0; });
  auto mu = std::make_shared<FunctionOutcome>([](Row, double a) { return 0.5 + (a - 0.6); });
  const std::vector<double> x{0.0};
  // nu / pi = 2 at a = 0.6, t = 0.5, and lambda_A = 0.8.
  const EifRecord r = eif_wasserstein({x, 0.6, 1.0}, 0.5, spec, oracle_nuisances(mu, pi), 0.6);
  EXPECT_NEAR(r.value, 1.1, 1e-12);
  EXPECT_FALSE(r.clipped);
}

TEST(Eif, CollapsesToCenteredOutcomeAtStart) {
  const NuisancePair nuis = sim7_oracle();
  Rng rng(5);
  for (Family f : kOneStepFamilies) {
    for (int i = 0; i < 10; ++i) {
      const std::vector<double> x{rng.exponential(), rng.exponential()};
      const double a = -1.0 + 6.0 * rng.uniform(), y = rng.normal();
      const EifRecord r = eif_any(f, {x, a, y}, 0.0, nuis, 0.3);
      EXPECT_NEAR(r.value, y - 0.3, 1e-10) << family_name(f);
    }
  }
}

TEST(Eif, ComponentsSumToValue) {
  const NuisancePair nuis = sim7_oracle();
  Rng rng(6);
  for (Family f : kOneStepFamilies) {
    for (int i = 0; i < 20; ++i) {
      const std::vector<double> x{rng.exponential(), rng.exponential()};
      const double a = -1.0 + 6.0 * rng.uniform(), y = 3.0 * rng.normal();
      const EifRecord r = eif_any(f, {x, a, y}, 0.95 * rng.uniform(), nuis, rng.normal());
      double sum = 0.0;
      for (const auto& c : r.components) sum += c.value;
      EXPECT_NEAR(sum, r.value, 1e-12);
    }
  }
  const std::vector<double> x{0.5, 0.5};
  EXPECT_EQ(eif_any(Family::Hellinger, {x, 1.0, 1.0}, 0.5, nuis, 0.0).components.size(), 5u);
  EXPECT_EQ(eif_any(Family::ExpTilt, {x, 1.0, 1.0}, 0.5, nuis, 0.0).components.size(), 4u);
}

TEST(TiltEif, NormalizerTermVanishesForExponentialTilt) {
  const NuisancePair nuis = sim7_oracle();
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x{rng.exponential(), rng.exponential()};
    const EifRecord r = eif_any(Family::ExpTilt, {x, 4.0 * rng.uniform(), 1.0}, 0.9 * rng.uniform(), nuis, 0.0);
    for (const auto& c : r.components) {
      if (c.name == "minus_phi_c") {
        EXPECT_NEAR(c.value, 0.0, 1e-12);
      }
    }
  }
}

// theta -> integral of mu (s1 sqrt(pi) + s2 sqrt(q))^2 with the coefficients frozen at theta.
double mean_at_theta(const Curve& mu, const Curve& pi, const Curve& q, double t, double theta,
                     const Support& s) {
  const double s1 = std::sin((1.0 - t) * theta) / std::sin(theta);
  const double s2 = std::sin(t * theta) / std::sin(theta);
  return simpson(
      [&](double a) {
        const double r = s1 * std::sqrt(pi(a)) + s2 * std::sqrt(q(a));
        return mu(a) * r * r;
      },
      s.lo, s.hi, 60000);
}

TEST(HellingerDerivative, MatchesFiniteDifference) {
  const auto dgp = make_sim7();
  Rng rng(13);
  for (int i = 0; i < 8; ++i) {
    PathSpec spec = sim7_spec(Family::Hellinger, 0.1 + 0.3 * rng.uniform());
    spec.a_star = 1.0 + 4.0 * rng.uniform();
    const std::vector<double> x{rng.exponential(), rng.exponential()};
    const double t = 0.05 + 0.9 * rng.uniform();
    const Curve pi = dgp->density()->slice(x), mu = dgp->outcome()->slice(x);
    const Curve q = hellinger_target(spec);
    const double u = simpson([&](double a) { return std::sqrt(pi(a) * q(a)); }, -1.0, 5.0, 60000);
    const double theta = std::acos(u);
    const double h = 1e-5;
    const double fd = (mean_at_theta(mu, pi, q, t, theta + h, spec.support) -
                       mean_at_theta(mu, pi, q, t, theta - h, spec.support)) / (2.0 * h);
    const double d = dtheta_conditional_mean(mu, pi, spec, t, u, 401);
    EXPECT_NEAR(d, fd, 1e-5 * std::max(1.0, std::abs(fd))) << "probe " << i;
  }
}

TEST(HellingerDerivative, VanishesForConstantOutcomeAndAtStart) {
  const auto dgp = make_sim7();
  const std::vector<double> x{0.4, 1.2};
  const Curve pi = dgp->density()->slice(x);
  const PathSpec spec = sim7_spec(Family::Hellinger, 0.3);
  // With the cross moment held fixed the derivative of a constant is 2 c s1 s2 sin(theta);
  // it cancels against the cross moment's own dependence on cos(theta).
  const double u = hellinger_affinity_quadrature(pi, spec, 401) / std::sqrt(hellinger_target_mass(spec));
  const HellingerAngle g = hellinger_angle(u, 0.6);
  EXPECT_NEAR(dtheta_conditional_mean([](double) { return 2.0; }, pi, spec, 0.6, u, 401),
              2.0 * 2.0 * g.gamma_t * std::sin(g.theta), 1e-9);
  EXPECT_NEAR(dtheta_conditional_mean(dgp->outcome()->slice(x), pi, spec, 0.0), 0.0, 1e-12);
}

TEST(OneStep, StartsAtTheSampleMeanForEveryFamily) {
  const Dataset d = sample_sim7(300, 3);
  const double ybar = std::accumulate(d.y().begin(), d.y().end(), 0.0) / 300.0;
  const CrossFit cf = crossfit(d, make_fold_plan(300, 3, 1), spline_fitters({}));
  const TGrid grid = make_tgrid(0.5, 0.25);
  for (Family f : kOneStepFamilies) {
    const EstimateResult r = one_step(d, sim7_spec(f), grid, cf);
    EXPECT_NEAR(r.curve.front().psi_hat, ybar, 1e-10) << family_name(f);
    EXPECT_EQ(r.n, 300u);
    EXPECT_EQ(r.folds, 3);
  }
}

TEST(OneStep, InfluenceValuesAreCenteredAndIntervalsAreWald) {
  const Dataset d = sample_sim7(250, 4);
  const CrossFit cf = crossfit(d, make_fold_plan(250, 5, 2), spline_fitters({}));
  const TGrid grid = make_tgrid(0.9, 0.3);
  for (Family f : kOneStepFamilies) {
    const EstimateResult r = one_step(d, sim7_spec(f), grid, cf);
    ASSERT_EQ(r.eif.cols(), static_cast<Eigen::Index>(grid.size()));
    for (Eigen::Index j = 0; j < r.eif.cols(); ++j) {
      const auto col = r.eif.col(j);
      EXPECT_NEAR(col.mean(), 0.0, 1e-10);
      const double sd = std::sqrt((col.array() - col.mean()).square().sum() / (col.size() - 1));
      const EffectPoint& p = r.curve[j];
      EXPECT_TRUE(std::isfinite(p.psi_hat));
      EXPECT_NEAR(p.se, sd / std::sqrt(250.0), 1e-12);
      EXPECT_NEAR(p.ci_hi - p.psi_hat, 1.96 * p.se, 1e-12);
      EXPECT_NEAR(p.psi_hat - p.ci_lo, 1.96 * p.se, 1e-12);
    }
  }
}

TEST(OneStep, StandardErrorsGrowTowardTheIntervention) {
  const Dataset d = sample_sim7(2000, 9);
  const CrossFit cf = single_pair(2000, sim7_oracle());
  const TGrid grid{{0.1, 0.5, 0.99}};
  for (Family f : kOneStepFamilies) {
    EstimateOptions o;
    o.compute_chi_sq = false;
    const EstimateResult r = one_step(d, sim7_spec(f), grid, cf, o);
    EXPECT_LT(r.curve[0].se, r.curve[1].se) << family_name(f);
    EXPECT_LT(r.curve[1].se, r.curve[2].se) << family_name(f);
  }
}

TEST(HellingerRateFactor, MatchesIndependentAngles) {
  const Dataset d = sample_sim7(30, 4);
  const NuisancePair nuis = sim7_oracle();
  const CrossFit cf = single_pair(30, nuis);
  const PathSpec spec = sim7_spec(Family::Hellinger);
  const TGrid grid{{0.0, 0.5, 0.9}};
  const auto factor = hellinger_rate_factor(d, spec, grid, cf);
  const double q_mass = testing::gauss_cdf(5.0, 5.0, 0.05) - testing::gauss_cdf(-1.0, 5.0, 0.05);
  std::vector<double> expected(grid.size(), 0.0);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const Curve pi = nuis.pi->slice(d.x(i));
    const double u = simpson([&](double a) { return std::sqrt(pi(a) * testing::gauss_pdf(a, 5.0, 0.05) / q_mass); },
                             -1.0, 5.0, 60000);
    const double theta = std::acos(std::min(1.0, u));
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double s = std::sin(grid[j] * theta) / std::sin(theta);
      expected[j] += s * s / static_cast<double>(d.n());
    }
  }
  for (std::size_t j = 0; j < grid.size(); ++j) EXPECT_NEAR(factor[j], expected[j], 1e-6) << grid[j];
  EXPECT_DOUBLE_EQ(factor[0], 0.0);
}

TEST(OneStep, ReflectedTiltOnlyHasAPlugIn) {
  const Dataset d = sample_sim7(60, 1);
  PathSpec spec = sim7_spec(Family::ReflectedTilt);
  spec.a_star = 3.0;
  spec.split_point = 2.0;
  const CrossFit cf = single_pair(60, sim7_oracle());
  EXPECT_THROW(one_step(d, spec, make_tgrid(0.5, 0.5), cf), InvalidInput);
  const EffectCurve c = plug_in(d, spec, make_tgrid(0.5, 0.5), cf);
  for (const auto& p : c) EXPECT_TRUE(std::isfinite(p.psi_hat));
}

TEST(PlugIn, OracleNuisancesReproduceTheTrueCurve) {
  const auto dgp = make_sim7();
  const Dataset d = dgp->sample(2000, 17);
  const TGrid grid{{0.0, 0.5, 0.9}};
  MonteCarloOptions mc;
  mc.mc_n = 20000;
  for (Family f : kOneStepFamilies) {
    const PathSpec spec = sim7_spec(f);
    const EffectCurve plug = plug_in(d, spec, grid, single_pair(2000, sim7_oracle()));
    const TrueCurve truth = true_effect_curve(*dgp, spec, grid, mc);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      // The truth's MC error rescaled to n = 2000 bounds the plug-in's sampling error.
      const double tol = 4.0 * truth.mc_se[j] * std::sqrt(20000.0 / 2000.0 + 1.0);
      EXPECT_NEAR(plug[j].psi_hat, truth.psi[j], tol) << family_name(f) << " t=" << grid[j];
    }
  }
}

class Remainder : public ::testing::Test {
 protected:
  void SetUp() override {
    dgp_ = make_sim7();
    Rng rng(31);
    for (int i = 0; i < 40; ++i) {
      std::vector<double> x(2);
      dgp_->sample_x(rng, x.data());
      xs_.push_back(x);
    }
  }

  NuisancePair perturbed(double c_mu, double c_pi) const {
    auto mu_base = dgp_->outcome();
    auto mu = std::make_shared<FunctionOutcome>(
        [mu_base, c_mu](Row x, double a) { return mu_base->mean(x, a) + c_mu * std::cos(a); });
    auto pi = std::make_shared<PerturbedDensity>(
        dgp_->density(), [](double a) { return std::cos(a); }, c_pi, Support(-1.0, 5.0));
    return oracle_nuisances(mu, pi);
  }

  double r2(double c_mu, double c_pi) const {
    return remainder_diagnostic(sim7_oracle(), perturbed(c_mu, c_pi), sim7_spec(Family::Wasserstein),
                                0.5, xs_);
  }

  std::shared_ptr<const Dgp> dgp_;
  std::vector<std::vector<double>> xs_;
};

TEST_F(Remainder, VanishesWhenEitherNuisanceIsExact) {
  EXPECT_NEAR(r2(0.0, 0.0), 0.0, 1e-6);
  EXPECT_NEAR(r2(0.2, 0.0), 0.0, 1e-6);
  EXPECT_NEAR(r2(0.0, 0.2), 0.0, 1e-6);
}

TEST_F(Remainder, ScalesQuadraticallyAndMatchesTheProductForm) {
  const double a = r2(0.2, 0.2), b = r2(0.1, 0.1), c = r2(0.05, 0.05);
  EXPECT_GT(a / b, 2.5);
  EXPECT_LT(a / b, 6.0);
  EXPECT_GT(b / c, 2.5);
  EXPECT_LT(b / c, 6.0);
  const double product = wasserstein_remainder_product(sim7_oracle(), perturbed(0.1, 0.1),
                                                       sim7_spec(Family::Wasserstein), 0.5, xs_);
  EXPECT_NEAR(b, product, 1e-6 + 1e-3 * std::abs(product));
}

}  // namespace
}  // namespace geodesy
