#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "geodesy/msm.hpp"
#include "geodesy/simbench.hpp"
#include "oracles.hpp"

namespace geodesy {
namespace {

using testing::simpson;

MsmModel identity_model(double mu_hat = 0.0) {
  MsmModel m;
  m.basis = {[](double s) { return s; }};
  m.names = {"a"};
  m.mu_hat = mu_hat;
  m.support = Support(0.0, 1.0);
  return m;
}

MsmModel constant_model(double mu_hat) {
  MsmModel m = identity_model(mu_hat);
  m.basis = {[](double) { return 1.0; }};
  m.names = {"1"};
  return m;
}

// Least-squares loss over [0, t] x support, by nested Simpson.
double loss(const Surface& psi, const MsmModel& m, const Eigen::VectorXd& beta, double t) {
  return simpson(
      [&](double s) {
        return simpson(
            [&](double a) {
              double fit = m.mu_hat;
              for (std::size_t j = 0; j < m.k(); ++j) fit += s * beta(j) * m.basis[j](m.standardize(a));
              const double r = psi(a, s) - fit;
              return r * r * m.weight(a);
            },
            m.support.lo, m.support.hi, 200);
      },
      0.0, t, 200);
}

TEST(FitBeta, ProductSurfaceGivesUnitCoefficient) {
  const MsmModel m = identity_model();
  for (double t : {0.1, 0.3, 0.7, 0.95}) {
    const Eigen::VectorXd b = fit_beta([](double a, double s) { return a * s; }, m, t);
    ASSERT_EQ(b.size(), 1);
    EXPECT_NEAR(b(0), 1.0, 1e-12);
  }
}

TEST(FitBeta, FlatSurfaceGivesZero) {
  const MsmModel m = MsmModel::polynomial(2, Support(-1.0, 5.0), 1.7);
  const Eigen::VectorXd b = fit_beta([](double, double) { return 1.7; }, m, 0.4);
  EXPECT_LT(b.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FitBeta, ScalarBasisMatchesRatioForm) {
  const Surface psi = [](double a, double s) { return 1.0 + s * std::sin(3.0 * a) + s * s * a; };
  const MsmModel m = constant_model(1.0);
  for (double t : {0.2, 0.6}) {
    const double num = simpson(
        [&](double s) { return simpson([&](double a) { return s * (psi(a, s) - 1.0); }, 0.0, 1.0, 400); },
        0.0, t, 400);
    EXPECT_NEAR(fit_beta(psi, m, t)(0), 3.0 / (t * t * t) * num, 1e-10);
  }
}

TEST(FitBeta, MinimizesTheLoss) {
  Rng rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    const double c1 = rng.normal(), c2 = rng.normal(), c3 = rng.normal();
    const Surface psi = [=](double a, double s) {
      return 0.5 + s * (c1 * std::cos(a) + c2 * a * a) + c3 * s * s * std::exp(-a);
    };
    const MsmModel m = MsmModel::polynomial(2, Support(-1.0, 2.0), 0.5);
    const double t = 0.3 + 0.5 * rng.uniform();
    const Eigen::VectorXd b = fit_beta(psi, m, t);
    const double h = 1e-4;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      Eigen::VectorXd up = b, down = b;
      up(j) += h;
      down(j) -= h;
      EXPECT_NEAR((loss(psi, m, up, t) - loss(psi, m, down, t)) / (2.0 * h), 0.0, 1e-6);
    }
  }
}

TEST(FitBeta, RecoversExactLinearSurfaces) {
  const MsmModel m = MsmModel::polynomial(2, Support(-7.0, 7.0), 0.3);
  const Eigen::Vector3d c(0.4, -1.2, 2.5);
  const Surface psi = [&](double a, double s) {
    const double z = m.standardize(a);
    return 0.3 + s * (c(0) + c(1) * z + c(2) * z * z);
  };
  for (double t : {0.05, 0.3, 0.8}) {
    EXPECT_LT((fit_beta(psi, m, t) - c).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(FitBeta, ShiftedExposureSurfaceExtrapolatesToTheTarget) {
  // Moving A toward a in a model linear in (X, A) with centered X and A gives psi_s(a) = a s.
  const MsmModel m = MsmModel::polynomial(2, Support(-7.0, 7.0), 0.0);
  for (double t : {0.1, 0.3, 0.9}) {
    const Eigen::VectorXd b = fit_beta([](double a, double s) { return a * s; }, m, t);
    EXPECT_NEAR(extrapolate(m, b, 2.0), 2.0, 1e-10);
  }
}

TEST(FitBeta, RejectsBadInputs) {
  MsmModel m = identity_model();
  m.basis.push_back([](double s) { return 2.0 * s; });
  m.names.push_back("2a");
  EXPECT_THROW(fit_beta([](double, double) { return 0.0; }, m, 0.5), NumericalFailure);
  EXPECT_THROW(fit_beta([](double, double) { return 0.0; }, identity_model(), 1.0), InvalidInput);
  EXPECT_THROW(make_msm_model("spline3", Support(0.0, 1.0), 0.0), InvalidInput);
  EXPECT_EQ(make_msm_model("poly3", Support(0.0, 1.0), 0.0).k(), 4u);
}

TEST(Extrapolate, ZeroCoefficientsGiveTheMean) {
  const MsmModel m = MsmModel::polynomial(2, Support(-1.0, 5.0), 2.2);
  EXPECT_DOUBLE_EQ(extrapolate(m, Eigen::Vector3d::Zero(), 4.0), 2.2);
  EXPECT_THROW(extrapolate(m, Eigen::Vector3d::Zero(), 6.0), InvalidInput);
  EXPECT_THROW(extrapolate(m, Eigen::Vector2d::Zero(), 4.0), InvalidInput);
}

TEST(VarianceVt, ConstantCovarianceHasClosedForm) {
  const MsmModel m = constant_model(0.0);
  const double sigma2 = 1.7;
  for (double t : {0.2, 0.5, 0.9}) {
    const Eigen::MatrixXd v = variance_vt(m, t, [&](double, double, double, double) { return sigma2; });
    EXPECT_NEAR(v(0, 0), 9.0 * sigma2 / (4.0 * t * t), 1e-10);
  }
  const Eigen::MatrixXd zero = variance_vt(m, 0.5, [](double, double, double, double) { return 0.0; });
  EXPECT_EQ(zero(0, 0), 0.0);
}

TEST(VarianceVt, SymmetricPositiveSemidefinite) {
  const MsmModel m = MsmModel::polynomial(2, Support(-1.0, 5.0), 0.0);
  const CovarianceFn cov = [](double s, double a, double s2, double a2) {
    return std::min(s, s2) * std::exp(-0.5 * (a - a2) * (a - a2));
  };
  const Eigen::MatrixXd v = variance_vt(m, 0.6, cov);
  EXPECT_LT((v - v.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().maxCoeff());
}

TEST(SelectT, DecreasingTraceChoosesTheLargestPoint) {
  const std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  const TSelection sel = select_t(grid, [](double t) {
    return Eigen::MatrixXd::Constant(1, 1, 9.0 / (4.0 * t * t));
  });
  EXPECT_DOUBLE_EQ(sel.t_star, 0.5);
  EXPECT_EQ(sel.t_values.size(), 5u);
  EXPECT_EQ(sel.traces.size(), 5u);
}

TEST(SelectT, TiesGoToTheSmallestPositivePoint) {
  const std::vector<double> grid{0.0, 0.1, 0.2, 0.3};
  EXPECT_DOUBLE_EQ(select_t(grid, [](double) { return Eigen::MatrixXd::Identity(2, 2); }).t_star, 0.1);
  EXPECT_THROW(select_t({0.0}, [](double) { return Eigen::MatrixXd::Identity(1, 1); }), InvalidInput);
}

TEST(EffectSurface, StartsAtTheSampleMeanAndGivesPsdVariance) {
  const auto dgp = make_msm6();
  const Dataset d = dgp->sample(300, 2);
  const double ybar = std::accumulate(d.y().begin(), d.y().end(), 0.0) / 300.0;
  const CrossFit cf = single_pair(300, oracle_nuisances(dgp->outcome(), dgp->density()));
  const std::vector<double> targets{-2.0, 0.0, 2.0}, s{0.0, 0.1, 0.2, 0.3};
  EstimateOptions o;
  o.compute_chi_sq = false;
  const EffectSurface surf = estimate_surface(d, targets, s, cf, o);
  ASSERT_EQ(surf.psi.size(), 12u);
  ASSERT_EQ(surf.eif.cols(), 12);
  for (std::size_t i = 0; i < targets.size(); ++i) EXPECT_NEAR(surf.at(i, 0), ybar, 1e-10);
  EXPECT_NEAR(surf.interpolate(-1.0, 0.05), 0.25 * (surf.at(0, 0) + surf.at(1, 0) + surf.at(0, 1) + surf.at(1, 1)),
              1e-12);
  const MsmModel m = MsmModel::polynomial(1, Support(-7.0, 7.0), ybar);
  const Eigen::MatrixXd v = variance_vt_empirical(m, 0.3, surf);
  EXPECT_LT((v - v.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(v).eigenvalues().minCoeff(), -1e-12);
  EXPECT_THROW(variance_vt_empirical(m, 0.25, surf), InvalidInput);
}

}  // namespace
}  // namespace geodesy
