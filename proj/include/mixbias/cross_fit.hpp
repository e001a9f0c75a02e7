#pragma once

// K-fold cross-fitted one-step estimation.
//
// For every fold k the nuisances are fitted on the other folds only and the
// uncentered influence function is evaluated on fold k. The point estimate
// is the mean over all rows; the standard error is the plug-in standard
// deviation of those per-row values over sqrt(n).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "mixbias/dataset.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/estimand.hpp"
#include "mixbias/fit.hpp"
#include "mixbias/functional.hpp"
#include "mixbias/nuisance.hpp"
#include "mixbias/random.hpp"
#include "mixbias/sieve.hpp"

namespace mixbias {

// Fold id for each of n rows; sizes differ by at most one.
inline std::vector<std::size_t> split_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw ConfigError("fold count K = " + std::to_string(k) + " must satisfy 2 <= K <= n = " + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "folds"));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  std::vector<std::size_t> folds(n);
  for (std::size_t pos = 0; pos < n; ++pos) folds[perm[pos]] = pos % k;
  return folds;
}

using Learner = std::function<FittedNuisance(const BoundSample& train, const ProblemSpec& spec)>;

enum class LearnerMethod { ratio, riesz_loss };

struct LearnerConfig {
  LearnerMethod method = LearnerMethod::riesz_loss;
  Sieve sieve;      // numerator sieve for the ratio method
  Sieve sieve_den;  // denominator sieve for the ratio method
  double trim = 0.01;
};

inline LearnerConfig learner_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("learner config must be a JSON object");
  LearnerConfig c;
  bool den_given = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "method") {
      const auto m = v.get<std::string>();
      if (m == "ratio") {
        c.method = LearnerMethod::ratio;
      } else if (m == "riesz_loss") {
        c.method = LearnerMethod::riesz_loss;
      } else {
        throw ConfigError("unknown learner method '" + m + "'");
      }
    } else if (key == "sieve") {
      c.sieve = sieve_from_json(v);
    } else if (key == "sieve_den") {
      c.sieve_den = sieve_from_json(v);
      den_given = true;
    } else if (key == "trim") {
      c.trim = v.get<double>();
    } else {
      throw ConfigError("unknown learner field '" + key + "'");
    }
  }
  if (!den_given) c.sieve_den = c.sieve;
  if (!(c.trim > 0.0)) throw ConfigError("trim must be > 0");
  return c;
}

inline nlohmann::json learner_to_json(const LearnerConfig& c) {
  nlohmann::json j = {{"method", c.method == LearnerMethod::ratio ? "ratio" : "riesz_loss"},
                      {"sieve", sieve_to_json(c.sieve)}};
  if (c.method == LearnerMethod::ratio) {
    j["sieve_den"] = sieve_to_json(c.sieve_den);
    j["trim"] = c.trim;
  }
  return j;
}

// Side a may use either method; side b only the Riesz loss.
inline Learner make_learner(const LearnerConfig& config, Side side) {
  if (config.method == LearnerMethod::ratio) {
    if (side == Side::b) throw ConfigError("the ratio learner applies to side a only");
    return [config](const BoundSample& train, const ProblemSpec& spec) {
      return fit_ratio_nuisance(train, spec, config.sieve, config.sieve_den, config.trim);
    };
  }
  return [config, side](const BoundSample& train, const ProblemSpec& spec) {
    return fit_riesz_loss(train, spec, side, config.sieve);
  };
}

// Learner that ignores the data.
inline Learner fixed_learner(NuisanceFn fn) {
  return [fn = std::move(fn)](const BoundSample&, const ProblemSpec&) {
    FittedNuisance f;
    f.fn = fn;
    return f;
  };
}

struct FitDiagnostics {
  std::size_t trimmed_a = 0;  // evaluation rows where a's denominator was floored
  std::size_t trimmed_b = 0;
  std::size_t l1_iters = 0;
  std::vector<double> objective_a;  // per fold (and component)
  std::vector<double> objective_b;
};

struct EstimateReport {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  std::vector<double> per_fold;
  std::vector<std::size_t> fold_sizes;
  std::size_t n = 0;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  FitDiagnostics diagnostics;
  // Per-row uncentered influence values (chi-hat + IF-hat), row order.
  std::vector<double> if_values;
  std::vector<std::size_t> fold_ids;
  // Nuisances fitted for each fold, [component][fold].
  std::vector<std::vector<NuisanceFn>> a_hat;
  std::vector<std::vector<NuisanceFn>> b_hat;
};

inline double normal_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - level) / 2.0);
}

namespace detail {

// Fills everything derivable from the per-row values (point, se, ci, fold means).
inline void finish_report(EstimateReport& r) {
  const std::size_t n = r.if_values.size();
  double sum = 0.0;
  for (double v : r.if_values) sum += v;
  r.estimate = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : r.if_values) ss += (v - r.estimate) * (v - r.estimate);
  r.se = std::sqrt(ss / static_cast<double>(n) / static_cast<double>(n));
  const double zq = normal_quantile(r.level);
  r.ci_low = r.estimate - zq * r.se;
  r.ci_high = r.estimate + zq * r.se;
  r.n = n;
  if (!r.fold_ids.empty()) {
    r.per_fold.assign(r.folds, 0.0);
    r.fold_sizes.assign(r.folds, 0);
    for (std::size_t i = 0; i < n; ++i) {
      r.per_fold[r.fold_ids[i]] += r.if_values[i];
      ++r.fold_sizes[r.fold_ids[i]];
    }
    for (std::size_t k = 0; k < r.folds; ++k) r.per_fold[k] /= static_cast<double>(r.fold_sizes[k]);
  }
}

}  // namespace detail

// Cross-fitted estimate of a (possibly composite) estimand.
inline EstimateReport cross_fit_estimate(const Dataset& data, const Estimand& estimand, const Learner& learner_a,
                                         const Learner& learner_b, std::size_t k, std::uint64_t seed,
                                         double level = 0.95) {
  if (data.empty()) throw InputError("cannot estimate from an empty dataset");
  const std::size_t n = data.rows();
  EstimateReport r;
  r.folds = k;
  r.seed = seed;
  r.level = level;
  normal_quantile(level);
  r.fold_ids = split_folds(n, k, seed);
  std::vector<std::vector<std::size_t>> members(k), complement(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < k; ++f) (r.fold_ids[i] == f ? members[f] : complement[f]).push_back(i);
  }

  const std::size_t J = estimand.components.size();
  std::vector<std::vector<double>> phi(J, std::vector<double>(n));
  r.a_hat.assign(J, {});
  r.b_hat.assign(J, {});
  for (std::size_t j = 0; j < J; ++j) {
    const ProblemSpec& spec = estimand.components[j];
    const BoundSample all = bind(data, spec);
    for (std::size_t f = 0; f < k; ++f) {
      NuisanceFn a = NuisanceFn::constant(0.0), b = NuisanceFn::constant(0.0);
      std::function<bool(Covariates)> trim_a, trim_b;
      if (!spec.nuisance_free) {
        const BoundSample train = all.subset(complement[f]);
        FittedNuisance fa = learner_a(train, spec);
        FittedNuisance fb = learner_b(train, spec);
        r.diagnostics.l1_iters += fa.iterations + fb.iterations;
        r.diagnostics.objective_a.push_back(fa.objective);
        r.diagnostics.objective_b.push_back(fb.objective);
        a = std::move(fa.fn);
        b = std::move(fb.fn);
        trim_a = std::move(fa.trimmed_at);
        trim_b = std::move(fb.trimmed_at);
      }
      for (std::size_t i : members[f]) {
        const Observation o = all.row(i);
        phi[j][i] = detail::with_row_context(i, [&] { return uncentered_if(spec, a, b, o); });
        if (trim_a && trim_a(all.z(i))) ++r.diagnostics.trimmed_a;
        if (trim_b && trim_b(all.z(i))) ++r.diagnostics.trimmed_b;
      }
      r.a_hat[j].push_back(a);
      r.b_hat[j].push_back(b);
    }
  }

  if (estimand.is_single()) {
    r.if_values = std::move(phi.front());
  } else {
    std::vector<double> theta(J, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      for (double v : phi[j]) theta[j] += v;
      theta[j] /= static_cast<double>(n);
    }
    const double point = estimand.combine(theta);
    const std::vector<double> grad = estimand.gradient(theta);
    r.if_values.assign(n, point);
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t i = 0; i < n; ++i) r.if_values[i] += grad[j] * (phi[j][i] - theta[j]);
    }
    detail::finish_report(r);
    r.estimate = point;  // exact g(theta) rather than the mean of linearized values
    const double zq = normal_quantile(level);
    r.ci_low = point - zq * r.se;
    r.ci_high = point + zq * r.se;
    return r;
  }
  detail::finish_report(r);
  return r;
}

inline EstimateReport cross_fit_estimate(const Dataset& data, const ProblemSpec& spec, const Learner& learner_a,
                                         const Learner& learner_b, std::size_t k, std::uint64_t seed,
                                         double level = 0.95) {
  return cross_fit_estimate(data, Estimand::single(spec), learner_a, learner_b, k, seed, level);
}

// psi = g(chi) with se |g'(chi)| se(chi).
inline EstimateReport delta_transform(const EstimateReport& report, const std::function<double(double)>& g,
                                      const std::function<double(double)>& g_prime) {
  EstimateReport out = report;
  const double slope = g_prime(report.estimate);
  out.estimate = g(report.estimate);
  out.se = std::abs(slope) * report.se;
  const double zq = normal_quantile(report.level);
  out.ci_low = out.estimate - zq * out.se;
  out.ci_high = out.estimate + zq * out.se;
  for (double& v : out.per_fold) v = out.estimate + slope * (v - report.estimate);
  for (double& v : out.if_values) v = out.estimate + slope * (v - report.estimate);
  return out;
}

// Difference of two estimates computed on the same rows and folds; the
// standard error comes from the per-row difference of influence values.
inline EstimateReport difference_estimate(const EstimateReport& r1, const EstimateReport& r2,
                                          std::span<const double> if1, std::span<const double> if2) {
  if (if1.size() != if2.size() || if1.empty()) throw InputError("difference_estimate: influence vectors differ in length");
  if (r1.fold_ids != r2.fold_ids) throw InputError("difference_estimate: reports use different folds");
  EstimateReport out = r1;
  out.diagnostics = {};
  out.a_hat.clear();
  out.b_hat.clear();
  out.if_values.resize(if1.size());
  for (std::size_t i = 0; i < if1.size(); ++i) out.if_values[i] = if1[i] - if2[i];
  detail::finish_report(out);
  out.estimate = r1.estimate - r2.estimate;
  const double zq = normal_quantile(out.level);
  out.ci_low = out.estimate - zq * out.se;
  out.ci_high = out.estimate + zq * out.se;
  return out;
}

inline nlohmann::json report_to_json(const EstimateReport& r, const std::string& spec,
                                     const nlohmann::json& params) {
  return {{"spec", spec},
          {"params", params},
          {"n", r.n},
          {"folds", r.folds},
          {"seed", r.seed},
          {"level", r.level},
          {"estimate", r.estimate},
          {"se", r.se},
          {"ci", {r.ci_low, r.ci_high}},
          {"per_fold", r.per_fold},
          {"fold_sizes", r.fold_sizes},
          {"diagnostics",
           {{"trimmed_a", r.diagnostics.trimmed_a},
            {"trimmed_b", r.diagnostics.trimmed_b},
            {"l1_iters", r.diagnostics.l1_iters},
            {"objective_a", r.diagnostics.objective_a},
            {"objective_b", r.diagnostics.objective_b}}}};
}

}  // namespace mixbias
