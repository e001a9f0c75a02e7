#pragma once

// Nuisance estimation.
//
// Both regression problems reduce to a penalized quadratic in the sieve
// coefficients,
//
//   minimize  theta' A theta / 2 + g' theta + lambda * pen(theta_{1..p-1}),
//
// with the constant coefficient left unpenalized:
//   conditional mean:  A = Phi'Phi / n,            g = -Phi'y / n
//   Riesz loss:        A = sigma P_n[S_ab phi phi'], g = sigma P_n[m(O, phi)]
// The l2 penalty (lambda/2 |theta|^2) is solved in closed form; l1 uses
// proximal gradient with backtracking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixbias/errors.hpp"
#include "mixbias/finite_law.hpp"
#include "mixbias/functional.hpp"
#include "mixbias/nuisance.hpp"
#include "mixbias/oracle.hpp"
#include "mixbias/sieve.hpp"

namespace mixbias {

struct QuadraticFit {
  std::vector<double> theta;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<double> history;  // objective after each proximal-gradient step
};

struct L1Options {
  double tolerance = 1e-8;
  std::size_t max_iterations = 10000;
};

enum class SystemKind { least_squares, riesz_loss };

namespace detail {

inline double quadratic_objective(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, double lambda,
                                  Penalty penalty, const Eigen::VectorXd& theta) {
  double pen = 0.0;
  for (Eigen::Index j = 1; j < theta.size(); ++j) {
    pen += penalty == Penalty::l1 ? std::abs(theta[j]) : 0.5 * theta[j] * theta[j];
  }
  return 0.5 * theta.dot(A * theta) + g.dot(theta) + lambda * pen;
}

inline void require_well_posed(const Eigen::MatrixXd& M, SystemKind kind, bool strict) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double top = std::max(std::abs(ev.maxCoeff()), std::abs(ev.minCoeff()));
  const double floor = 1e-12 * std::max(top, 1e-300);
  const bool ok = strict ? ev.minCoeff() > floor : ev.minCoeff() > -floor;
  if (ok) return;
  if (kind == SystemKind::least_squares) {
    throw RankError("least-squares system is rank deficient; reduce the basis or set lambda > 0");
  }
  throw ConditioningError(
      "Riesz-loss Hessian sigma P_n[S_ab phi phi'] is not positive definite; set lambda > 0 or reduce the basis");
}

}  // namespace detail

inline QuadraticFit solve_ridge(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, double lambda, SystemKind kind) {
  Eigen::MatrixXd M = A;
  for (Eigen::Index j = 1; j < M.rows(); ++j) M(j, j) += lambda;
  detail::require_well_posed(M, kind, true);
  const Eigen::VectorXd theta = M.ldlt().solve(-g);
  QuadraticFit out;
  out.theta.assign(theta.data(), theta.data() + theta.size());
  out.objective = detail::quadratic_objective(A, g, lambda, Penalty::l2, theta);
  return out;
}

inline QuadraticFit solve_lasso(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, double lambda, SystemKind kind,
                                const L1Options& opt = {}) {
  detail::require_well_posed(A, kind, false);
  const Eigen::Index p = g.size();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  auto smooth = [&](const Eigen::VectorXd& t) { return 0.5 * t.dot(A * t) + g.dot(t); };
  auto total = [&](const Eigen::VectorXd& t) { return detail::quadratic_objective(A, g, lambda, Penalty::l1, t); };
  double step = 1.0;
  double f_old = total(theta);
  QuadraticFit out;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd grad = A * theta + g;
    const double s_theta = smooth(theta);
    Eigen::VectorXd next;
    while (true) {
      next = theta - step * grad;
      for (Eigen::Index j = 1; j < p; ++j) {
        const double v = next[j];
        next[j] = v > step * lambda ? v - step * lambda : (v < -step * lambda ? v + step * lambda : 0.0);
      }
      const Eigen::VectorXd d = next - theta;
      if (smooth(next) <= s_theta + grad.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-15 * std::abs(s_theta)) break;
      step *= 0.5;
      if (step < 1e-300) throw ConditioningError("l1 solver: line search failed");
    }
    theta = next;
    const double f_new = total(theta);
    out.history.push_back(f_new);
    out.iterations = it + 1;
    const bool done = std::abs(f_new - f_old) < opt.tolerance * std::max(1.0, std::abs(f_old));
    f_old = f_new;
    if (done) break;
    step *= 2.0;
  }
  out.theta.assign(theta.data(), theta.data() + p);
  out.objective = f_old;
  return out;
}

inline QuadraticFit solve_penalized(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, const Sieve& sieve,
                                    SystemKind kind) {
  return sieve.penalty == Penalty::l2 ? solve_ridge(A, g, sieve.lambda, kind)
                                      : solve_lasso(A, g, sieve.lambda, kind);
}

struct FittedNuisance {
  NuisanceFn fn;
  std::vector<double> coefficients;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::size_t trimmed = 0;  // training rows whose denominator was trimmed
  std::vector<double> history;
  // Where evaluation hits the trimming floor; empty if no trimming applies.
  std::function<bool(Covariates)> trimmed_at;
};

namespace detail {

inline void require_enough_rows(std::size_t n, std::size_t p, const Sieve& sieve) {
  if (n == 0) throw ConfigError("cannot fit a nuisance on an empty sample");
  if (n < p && sieve.lambda == 0.0) {
    throw ConfigError("sample of " + std::to_string(n) + " rows is too small for a sieve with " +
                      std::to_string(p) + " features at lambda = 0");
  }
}

}  // namespace detail

// Penalized least squares of target(O) on phi(Z).
inline FittedNuisance fit_conditional_mean(const BoundSample& sample, const Statistic& target, const Sieve& sieve,
                                           std::size_t z_dim) {
  const auto fmap = build_feature_map(sieve, sample, z_dim);
  const std::size_t p = fmap->size();
  const std::size_t n = sample.size();
  detail::require_enough_rows(n, p, sieve);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd phi(p);
  double yy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fmap->features(sample.z(i), std::span<double>(phi.data(), p));
    const double y = target(sample.row(i));
    if (!std::isfinite(y)) throw NumericError("row " + std::to_string(i) + ": non-finite regression target");
    A.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    g -= y * phi;
    yy += y * y;
  }
  A = A.selfadjointView<Eigen::Lower>();
  A /= static_cast<double>(n);
  g /= static_cast<double>(n);
  QuadraticFit q = solve_penalized(A, g, sieve, SystemKind::least_squares);
  FittedNuisance out;
  out.coefficients = q.theta;
  out.objective = q.objective + yy / (2.0 * static_cast<double>(n));
  out.iterations = q.iterations;
  for (double& h : q.history) h += yy / (2.0 * static_cast<double>(n));
  out.history = std::move(q.history);
  out.fn = sieve_function(fmap, q.theta);
  return out;
}

inline FittedNuisance fit_conditional_mean(const BoundSample& sample, const ProblemSpec& spec,
                                           const Statistic& target, const Sieve& sieve) {
  return fit_conditional_mean(sample, target, sieve, spec.z_dim());
}

// a(z) = -E(q | z) / E(S_ab | z) with both conditional means regressed on
// their own sieves. Denominators below `trim` in magnitude are floored at
// sign * trim.
inline FittedNuisance fit_ratio_nuisance(const BoundSample& sample, const ProblemSpec& spec, const Sieve& sieve_num,
                                         const Sieve& sieve_den, double trim) {
  if (!spec.q) throw ConfigError("ratio learner needs a spec with a q statistic");
  if (!(trim > 0.0)) throw ConfigError("trim must be > 0");
  const FittedNuisance num = fit_conditional_mean(sample, spec, *spec.q, sieve_num);
  const FittedNuisance den = fit_conditional_mean(sample, spec, spec.s_ab, sieve_den);
  const int fallback_sign = spec.sab_sign;
  auto floored = [trim, fallback_sign](double d) {
    if (std::abs(d) >= trim) return d;
    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : static_cast<double>(fallback_sign));
    return s * trim;
  };
  FittedNuisance out;
  NuisanceFn nf = num.fn, df = den.fn;
  out.fn = NuisanceFn::analytic([nf, df, floored](Covariates z) { return -nf(z) / floored(df(z)); }, "ratio");
  out.trimmed_at = [df, trim](Covariates z) { return std::abs(df(z)) < trim; };
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (out.trimmed_at(sample.z(i))) ++out.trimmed;
  }
  out.objective = num.objective + den.objective;
  out.iterations = num.iterations + den.iterations;
  out.coefficients = num.coefficients;
  out.coefficients.insert(out.coefficients.end(), den.coefficients.begin(), den.coefficients.end());
  return out;
}

// Empirical version of sigma E[S_ab h^2 / 2 + m(O, h)] minimized over the
// sieve; m = m2 for side a and m1 for side b.
inline FittedNuisance fit_riesz_loss(const BoundSample& sample, const ProblemSpec& spec, Side side,
                                     const Sieve& sieve) {
  if (spec.nuisance_free) throw ConfigError("spec '" + spec.name + "' has no nuisance functions to fit");
  if (spec.sab_sign != 1 && spec.sab_sign != -1) throw ConfigError("spec must declare sab_sign = +1 or -1");
  const LinearMap& m = side == Side::a ? spec.m2 : spec.m1;
  const auto fmap = build_feature_map(sieve, sample, spec.z_dim());
  const std::size_t p = fmap->size();
  const std::size_t n = sample.size();
  detail::require_enough_rows(n, p, sieve);
  std::vector<NuisanceFn> basis;
  basis.reserve(p);
  for (std::size_t j = 0; j < p; ++j) basis.push_back(basis_function(fmap, j));
  const double sigma = spec.sab_sign;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd phi(p);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation o = sample.row(i);
    fmap->features(sample.z(i), std::span<double>(phi.data(), p));
    const double s = spec.s_ab(o);
    if (s != 0.0) A.selfadjointView<Eigen::Lower>().rankUpdate(phi, sigma * s);
    for (std::size_t j = 0; j < p; ++j) g[j] += sigma * m(o, basis[j]);
  }
  A = A.selfadjointView<Eigen::Lower>();
  A /= static_cast<double>(n);
  g /= static_cast<double>(n);
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    if (!std::isfinite(g[j])) throw NumericError("Riesz loss: non-finite m(O, phi) average");
  }
  QuadraticFit q = solve_penalized(A, g, sieve, SystemKind::riesz_loss);
  FittedNuisance out;
  out.coefficients = q.theta;
  out.objective = q.objective;
  out.iterations = q.iterations;
  out.history = std::move(q.history);
  out.fn = sieve_function(fmap, q.theta);
  return out;
}

// L2(P_Z) distance between two nuisance functions under a finite law.
inline double evaluate_nuisance_l2_error(const NuisanceFn& fitted, const NuisanceFn& truth, const FiniteLaw& law,
                                         const ProblemSpec& spec) {
  const BoundLaw bl = bind_law(law, spec);
  double acc = 0.0;
  for (std::size_t i = 0; i < bl.size(); ++i) {
    if (bl.probs[i] == 0.0) continue;
    const Covariates z = bl.sample.z(i);
    const double d = fitted(z) - truth(z);
    acc += bl.probs[i] * d * d;
  }
  return std::sqrt(acc);
}

}  // namespace mixbias
