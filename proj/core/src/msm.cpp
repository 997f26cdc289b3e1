#include "geodesy/msm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "geodesy/quadrature.hpp"

namespace geodesy {

MsmModel MsmModel::polynomial(int degree, const Support& support, double mu_hat) {
  if (degree < 0) throw InvalidInput("polynomial basis degree must be >= 0");
  MsmModel m;
  m.support = support;
  m.mu_hat = mu_hat;
  for (int p = 0; p <= degree; ++p) {
    m.basis.emplace_back([p](double s) { return std::pow(s, p); });
    m.names.push_back(p == 0 ? "1" : (p == 1 ? "a" : "a^" + std::to_string(p)));
  }
  return m;
}

MsmModel make_msm_model(const std::string& basis, const Support& support, double mu_hat) {
  if (basis.size() > 4 && basis.rfind("poly", 0) == 0) {
    try {
      return MsmModel::polynomial(std::stoi(basis.substr(4)), support, mu_hat);
    } catch (const std::logic_error&) {
    }
  }
  throw InvalidInput("unknown basis '" + basis + "' (expected polyK, e.g. poly2)");
}

Eigen::MatrixXd msm_gram(const MsmModel& model, int nodes) {
  const std::size_t k = model.k();
  if (k == 0) throw InvalidInput("marginal structural model needs at least one basis function");
  const Quadrature rule = Quadrature::gauss_legendre(0.0, 1.0, nodes);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(k, k);
  const auto s = rule.nodes();
  const auto w = rule.weights();
  for (std::size_t q = 0; q < s.size(); ++q) {
    Eigen::VectorXd phi(k);
    for (std::size_t j = 0; j < k; ++j) phi(j) = model.basis[j](s[q]);
    G += w[q] * model.weight(s[q]) * phi * phi.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
  const auto sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
  if (!(cond <= 1e10)) {
    std::ostringstream msg;
    msg << "basis Gram matrix is ill-conditioned (condition number " << cond
        << "); the basis functions are nearly collinear under the weight h";
    throw NumericalFailure(msg.str());
  }
  return G;
}

Eigen::VectorXd fit_beta(const Surface& surface, const MsmModel& model, double t_cut, int nodes) {
  if (!(t_cut > 0.0 && t_cut < 1.0)) throw InvalidInput("t-cut must lie in (0, 1)");
  const Eigen::MatrixXd G = msm_gram(model, nodes);
  const std::size_t k = model.k();
  const Quadrature a_rule = Quadrature::gauss_legendre(0.0, 1.0, nodes);
  const Quadrature s_rule = Quadrature::gauss_legendre(0.0, t_cut, nodes);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(k);
  const auto as = a_rule.nodes();
  const auto aw = a_rule.weights();
  for (std::size_t q = 0; q < as.size(); ++q) {
    const double a = model.support.lo + model.support.width() * as[q];
    const double inner =
        s_rule.integrate([&](double s) { return s * (surface(a, s) - model.mu_hat); });
    const double h = model.weight(as[q]);
    for (std::size_t j = 0; j < k; ++j) nu(j) += aw[q] * inner * h * model.basis[j](as[q]);
  }
  return (3.0 / std::pow(t_cut, 3)) * G.ldlt().solve(nu);
}

double extrapolate(const MsmModel& model, const Eigen::VectorXd& beta, double a_star) {
  if (!model.support.contains(a_star)) throw InvalidInput("a-star lies outside the support");
  if (static_cast<std::size_t>(beta.size()) != model.k()) {
    throw InvalidInput("coefficient vector does not match the basis");
  }
  const double s = model.standardize(a_star);
  double v = model.mu_hat;
  for (std::size_t j = 0; j < model.k(); ++j) v += beta(j) * model.basis[j](s);
  return v;
}

namespace {

std::vector<double> trapezoid_weights(const std::vector<double>& x) {
  std::vector<double> w(x.size(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double h = 0.5 * (x[i + 1] - x[i]);
    w[i] += h;
    w[i + 1] += h;
  }
  return w;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1.0);
  return v;
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& G, const Eigen::MatrixXd& C, double t_cut) {
  const Eigen::MatrixXd Gi = G.inverse();
  Eigen::MatrixXd V = (9.0 / std::pow(t_cut, 6)) * Gi * C * Gi;
  V = 0.5 * (V + V.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(V);
  const double top = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-8 * top) {
    throw NumericalFailure("Vt is not positive semidefinite; the covariance grid is too coarse");
  }
  return V;
}

}  // namespace

Eigen::MatrixXd variance_vt(const MsmModel& model, double t_cut, const CovarianceFn& cov,
                            int s_points, int a_points) {
  if (!(t_cut > 0.0 && t_cut < 1.0)) throw InvalidInput("t-cut must lie in (0, 1)");
  if (s_points < 2 || a_points < 2) throw InvalidInput("covariance grid needs >= 2 points per axis");
  const Eigen::MatrixXd G = msm_gram(model);
  const auto s = linspace(0.0, t_cut, s_points);
  const auto a = linspace(0.0, 1.0, a_points);
  const auto ws = trapezoid_weights(s);
  const auto wa = trapezoid_weights(a);
  const std::size_t k = model.k();
  const std::size_t m = s.size() * a.size();
  // Row g of W carries w_s w_a s h phi(a) for grid point g.
  Eigen::MatrixXd W(m, k);
  std::vector<double> gs(m), ga(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      const std::size_t g = i * s.size() + j;
      gs[g] = s[j];
      ga[g] = model.support.lo + model.support.width() * a[i];
      for (std::size_t c = 0; c < k; ++c) {
        W(g, c) = ws[j] * wa[i] * s[j] * model.weight(a[i]) * model.basis[c](a[i]);
      }
    }
  }
  Eigen::MatrixXd K(m, m);
  for (std::size_t g = 0; g < m; ++g) {
    for (std::size_t h = 0; h < m; ++h) K(g, h) = cov(gs[g], ga[g], gs[h], ga[h]);
  }
  return sandwich(G, W.transpose() * K * W, t_cut);
}

double EffectSurface::interpolate(double a, double s) const {
  auto bracket = [](const std::vector<double>& v, double x, std::size_t& lo, double& f) {
    if (v.size() == 1 || x <= v.front()) {
      lo = 0;
      f = 0.0;
      return;
    }
    if (x >= v.back()) {
      lo = v.size() - 2;
      f = 1.0;
      return;
    }
    lo = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) - 1;
    f = (x - v[lo]) / (v[lo + 1] - v[lo]);
  };
  std::size_t ia, is;
  double fa, fs;
  bracket(targets, a, ia, fa);
  bracket(s_values, s, is, fs);
  const std::size_t ia1 = std::min(ia + 1, targets.size() - 1);
  const std::size_t is1 = std::min(is + 1, s_values.size() - 1);
  const double lo = (1.0 - fs) * at(ia, is) + fs * at(ia, is1);
  const double hi = (1.0 - fs) * at(ia1, is) + fs * at(ia1, is1);
  return (1.0 - fa) * lo + fa * hi;
}

EffectSurface estimate_surface(const Dataset& data, const std::vector<double>& targets,
                               const std::vector<double>& s_values, const CrossFit& nuisances,
                               const EstimateOptions& options) {
  if (targets.empty() || s_values.empty()) throw InvalidInput("surface grid is empty");
  if (!std::is_sorted(targets.begin(), targets.end()) ||
      !std::is_sorted(s_values.begin(), s_values.end())) {
    throw InvalidInput("surface grids must be ascending");
  }
  EffectSurface surf;
  surf.targets = targets;
  surf.s_values = s_values;
  const std::size_t S = s_values.size();
  surf.psi.resize(targets.size() * S);
  surf.eif.resize(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(targets.size() * S));
  EstimateOptions opt = options;
  opt.compute_chi_sq = false;
  TGrid grid{s_values};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    PathSpec spec;
    spec.family = Family::Wasserstein;
    spec.a_star = targets[i];
    spec.support = data.support();
    const EstimateResult r = one_step_wasserstein(data, spec, grid, nuisances, opt);
    for (std::size_t j = 0; j < S; ++j) surf.psi[i * S + j] = r.curve[j].psi_hat;
    surf.eif.middleCols(static_cast<Eigen::Index>(i * S), static_cast<Eigen::Index>(S)) = r.eif;
  }
  return surf;
}

Eigen::MatrixXd variance_vt_empirical(const MsmModel& model, double t_cut,
                                      const EffectSurface& surface) {
  if (!(t_cut > 0.0 && t_cut < 1.0)) throw InvalidInput("t-cut must lie in (0, 1)");
  std::vector<double> s;
  for (double v : surface.s_values) {
    if (v <= t_cut + 1e-12) s.push_back(v);
  }
  if (s.size() < 2 || std::abs(s.back() - t_cut) > 1e-9) {
    throw InvalidInput("t-cut must be a grid point of the effect surface");
  }
  std::vector<double> a_std;
  for (double a : surface.targets) a_std.push_back(model.standardize(a));
  const auto ws = trapezoid_weights(s);
  const auto wa = trapezoid_weights(a_std);
  const std::size_t k = model.k();
  const std::size_t S = surface.s_values.size();
  const auto n = static_cast<double>(surface.eif.rows());
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(surface.eif.cols(), k);
  for (std::size_t i = 0; i < a_std.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      for (std::size_t c = 0; c < k; ++c) {
        W(i * S + j, c) =
            ws[j] * wa[i] * s[j] * model.weight(a_std[i]) * model.basis[c](a_std[i]);
      }
    }
  }
  const Eigen::MatrixXd PW = surface.eif * W;
  const Eigen::MatrixXd C = PW.transpose() * PW / (n * n);
  return sandwich(msm_gram(model), C, t_cut);
}

TSelection select_t(const std::vector<double>& t_values,
                    const std::function<Eigen::MatrixXd(double)>& vt) {
  TSelection sel;
  double best = INFINITY;
  for (double t : t_values) {
    if (!(t > 0.0)) continue;
    const double tr = vt(t).trace();
    sel.t_values.push_back(t);
    sel.traces.push_back(tr);
    // Strict improvement beyond rounding keeps ties at the smaller t.
    if (sel.t_values.size() == 1 || tr < best - 1e-12 * std::abs(best)) {
      best = tr;
      sel.t_star = t;
    }
  }
  if (sel.t_values.empty()) throw InvalidInput("t selection needs a positive grid point");
  return sel;
}

}  // namespace geodesy
