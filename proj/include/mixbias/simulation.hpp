#pragma once

// Monte Carlo scenarios: draw samples from a finite law, estimate with a
// chosen nuisance treatment per side, and summarize bias, coverage and the
// bias-vs-n slope.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixbias/catalog.hpp"
#include "mixbias/cross_fit.hpp"
#include "mixbias/dataset.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/estimand.hpp"
#include "mixbias/finite_law.hpp"
#include "mixbias/oracle.hpp"
#include "mixbias/random.hpp"

namespace mixbias {

// Direction u(Z) = c0 + c1 z_0 + c2 z_0^2 + ... in the first covariate.
struct Direction {
  std::vector<double> coef{1.0};

  double operator()(Covariates z) const {
    double acc = 0.0, pw = 1.0;
    const double x = z.empty() ? 0.0 : z[0];
    for (double c : coef) {
      acc += c * pw;
      pw *= x;
    }
    return acc;
  }
  NuisanceFn function() const {
    auto self = *this;
    return NuisanceFn::analytic([self](Covariates z) { return self(z); }, "direction");
  }
};

enum class TreatmentKind { oracle, perturbed, learned, fixed_wrong };

struct NuisanceTreatment {
  TreatmentKind kind = TreatmentKind::oracle;
  // perturbed: truth + scale * n^-rate * u
  double rate = 0.0;
  double scale = 0.0;
  Direction direction;
  // learned
  std::optional<LearnerConfig> learner;
  // fixed_wrong: the constant function `constant`, or truth + shift * u
  std::optional<double> constant;
  double shift = 0.0;
};

struct Scenario {
  std::string spec;
  Params params;
  std::optional<FiniteLaw> law;  // canned law of the entry when absent
  NuisanceTreatment a;
  NuisanceTreatment b;
  std::vector<std::size_t> sizes;
  std::size_t reps = 1;
  double level = 0.95;
  std::uint64_t seed = 1;
  std::size_t folds = 2;
  std::size_t threads = 1;
};

struct ResultRow {
  std::size_t n = 0;
  std::size_t rep = 0;
  double estimate = 0.0;
  double se = 0.0;
  bool covered = false;
  double l2_a = 0.0;
  double l2_b = 0.0;
};

struct SizeSummary {
  std::size_t n = 0;
  std::size_t reps = 0;
  double mean_estimate = 0.0;
  double mean_bias = 0.0;
  double mc_se = 0.0;  // Monte Carlo SE of the mean bias
  double sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  double rmse = 0.0;
  double standardized_bias = 0.0;  // |mean bias| / sd
  std::optional<double> predicted_bias;
  std::optional<bool> bias_matches_prediction;  // within 3 MC-SEs
};

struct Summary {
  std::string spec;
  double truth = 0.0;
  double level = 0.95;
  std::vector<SizeSummary> sizes;
  std::optional<double> slope;  // log |mean bias| vs log n
  std::size_t slope_points = 0;
};

// ---------------------------------------------------------------------------
// JSON

namespace sim_detail {

inline Direction direction_from_json(const nlohmann::json& j) {
  Direction d;
  if (j.is_number()) {
    d.coef = {j.get<double>()};
  } else if (j.is_array() && !j.empty()) {
    d.coef = j.get<std::vector<double>>();
  } else {
    throw ConfigError("direction must be a number or a non-empty array of polynomial coefficients");
  }
  return d;
}

inline NuisanceTreatment treatment_from_json(const nlohmann::json& j, const std::string& side) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("nuisance_" + side + " needs a 'kind'");
  NuisanceTreatment t;
  const std::string kind = j.at("kind").get<std::string>();
  auto allow = [&](std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : j.items()) {
      bool ok = k == "kind";
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) throw ConfigError("nuisance_" + side + " (" + kind + "): unknown field '" + k + "'");
    }
  };
  if (kind == "oracle") {
    allow({});
    t.kind = TreatmentKind::oracle;
  } else if (kind == "perturbed") {
    allow({"rate", "scale", "direction"});
    t.kind = TreatmentKind::perturbed;
    t.rate = j.value("rate", 0.0);
    t.scale = j.value("scale", 1.0);
    if (!(t.rate >= 0.0) || !std::isfinite(t.rate)) throw ConfigError("nuisance_" + side + ": rate exponent must be >= 0");
    if (!std::isfinite(t.scale)) throw ConfigError("nuisance_" + side + ": scale must be finite");
    if (j.contains("direction")) t.direction = direction_from_json(j.at("direction"));
  } else if (kind == "learned") {
    allow({"learner"});
    t.kind = TreatmentKind::learned;
    if (j.contains("learner")) t.learner = learner_from_json(j.at("learner"));
  } else if (kind == "fixed_wrong") {
    allow({"constant", "shift", "direction"});
    t.kind = TreatmentKind::fixed_wrong;
    if (j.contains("constant") == j.contains("shift")) {
      throw ConfigError("nuisance_" + side + " (fixed_wrong): give exactly one of 'constant' or 'shift'");
    }
    if (j.contains("constant")) t.constant = j.at("constant").get<double>();
    if (j.contains("shift")) t.shift = j.at("shift").get<double>();
    if (j.contains("direction")) t.direction = direction_from_json(j.at("direction"));
  } else {
    throw ConfigError("unknown nuisance kind '" + kind + "'");
  }
  return t;
}

inline nlohmann::json treatment_to_json(const NuisanceTreatment& t) {
  switch (t.kind) {
    case TreatmentKind::oracle:
      return {{"kind", "oracle"}};
    case TreatmentKind::perturbed:
      return {{"kind", "perturbed"}, {"rate", t.rate}, {"scale", t.scale}, {"direction", t.direction.coef}};
    case TreatmentKind::learned: {
      nlohmann::json j = {{"kind", "learned"}};
      if (t.learner) j["learner"] = learner_to_json(*t.learner);
      return j;
    }
    case TreatmentKind::fixed_wrong: {
      nlohmann::json j = {{"kind", "fixed_wrong"}, {"direction", t.direction.coef}};
      if (t.constant) {
        j["constant"] = *t.constant;
      } else {
        j["shift"] = t.shift;
      }
      return j;
    }
  }
  return {};
}

inline Params params_from_json(const nlohmann::json& j) {
  Params p;
  if (j.is_null()) return p;
  if (!j.is_object()) throw ConfigError("params must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) {
      p[k] = v.get<std::string>();
    } else if (v.is_number()) {
      p[k] = v.is_number_integer() ? std::to_string(v.get<long long>()) : format_double(v.get<double>());
    } else if (v.is_array()) {
      std::string s;
      for (const auto& x : v) {
        if (!s.empty()) s += ",";
        s += x.is_string() ? x.get<std::string>() : format_double(x.get<double>());
      }
      p[k] = s;
    } else {
      throw ConfigError("parameter '" + k + "' must be a string, number or array");
    }
  }
  return p;
}

}  // namespace sim_detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using namespace sim_detail;
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  static const std::vector<std::string> known = {"spec",       "params", "law",  "nuisance_a", "nuisance_b", "sizes",
                                                 "replications", "level", "seed", "folds",      "threads"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown scenario field '" + k + "'");
  }
  Scenario s;
  try {
    s.spec = j.at("spec").get<std::string>();
    find_entry(s.spec);
    if (j.contains("params")) s.params = params_from_json(j.at("params"));
    if (j.contains("law") && !(j.at("law").is_string() && j.at("law").get<std::string>() == "canned")) {
      s.law = j.at("law").is_string() ? read_law_file(j.at("law").get<std::string>()) : law_from_json(j.at("law"));
    }
    s.a = treatment_from_json(j.value("nuisance_a", nlohmann::json{{"kind", "oracle"}}), "a");
    s.b = treatment_from_json(j.value("nuisance_b", nlohmann::json{{"kind", "oracle"}}), "b");
    for (const auto& v : j.at("sizes")) {
      const long long n = v.get<long long>();
      if (n < 2) throw ConfigError("sample sizes must be at least 2");
      s.sizes.push_back(static_cast<std::size_t>(n));
    }
    if (s.sizes.empty()) throw ConfigError("scenario needs at least one sample size");
    const long long reps = j.value("replications", 1LL);
    if (reps < 1) throw ConfigError("replications must be >= 1");
    s.reps = static_cast<std::size_t>(reps);
    s.level = j.value("level", 0.95);
    normal_quantile(s.level);
    s.seed = j.value("seed", std::uint64_t{1});
    const long long folds = j.value("folds", 2LL);
    if (folds < 2) throw ConfigError("folds must be >= 2");
    s.folds = static_cast<std::size_t>(folds);
    const long long threads = j.value("threads", 1LL);
    if (threads < 1) throw ConfigError("threads must be >= 1");
    s.threads = static_cast<std::size_t>(threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : s.params) params[k] = v;
  nlohmann::json j = {{"spec", s.spec},
                      {"params", params},
                      {"nuisance_a", sim_detail::treatment_to_json(s.a)},
                      {"nuisance_b", sim_detail::treatment_to_json(s.b)},
                      {"sizes", s.sizes},
                      {"replications", s.reps},
                      {"level", s.level},
                      {"seed", s.seed},
                      {"folds", s.folds}};
  if (s.law) j["law"] = law_to_json(*s.law);
  return j;
}

// ---------------------------------------------------------------------------
// Running

// Runs body(i) for i in [0, count) on up to `threads` threads. Each index is
// handled exactly once, so results written by index are schedule-independent.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Exact E[S_ab (a_hat - a)(b_hat - b)] on the law.
inline double predicted_bias(const FiniteLaw& law, const ProblemSpec& spec, const NuisanceFn& a_hat,
                             const NuisanceFn& b_hat) {
  const BoundLaw bl = bind_law(law, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  return mixed_bias_term(bl, spec, nu.a, nu.b, a_hat, b_hat);
}

inline LearnerConfig default_learner(const ProblemSpec& spec, Side side) {
  LearnerConfig c;
  c.method = side == Side::a && spec.q ? LearnerMethod::ratio : LearnerMethod::riesz_loss;
  c.sieve.basis = Basis::indicator;
  c.sieve_den = c.sieve;
  return c;
}

inline LearnerConfig default_learner(const Estimand& est, Side side) {
  for (const auto& c : est.components) {
    if (!c.nuisance_free) return default_learner(c, side);
  }
  return default_learner(est.components.front(), side);
}

class ScenarioRunner {
 public:
  explicit ScenarioRunner(Scenario s)
      : s_(std::move(s)),
        entry_(find_entry(s_.spec)),
        estimand_(entry_.build(s_.params)),
        law_(s_.law ? *s_.law : entry_.canned_law(s_.params)) {
    for (const auto& c : estimand_.components) {
      for (const auto& col : c.columns) {
        if (!law_.support().find(col)) {
          throw ConfigError("law lacks column '" + col + "' required by spec '" + s_.spec + "'");
        }
      }
    }
    std::vector<double> theta;
    for (const auto& c : estimand_.components) {
      const BoundLaw bl = bind_law(law_, c);
      truth_nu_.push_back(true_nuisances(bl, c));
      theta.push_back(chi_exact(bl, c, truth_nu_.back()).value);
    }
    theta_ = theta;
    truth_ = estimand_.combine(theta);
    for (std::size_t j = 0; j < estimand_.components.size(); ++j) {
      if (!estimand_.components[j].nuisance_free) {
        primary_ = j;
        break;
      }
    }
  }

  const Scenario& scenario() const { return s_; }
  const FiniteLaw& law() const { return law_; }
  const Estimand& estimand() const { return estimand_; }
  double truth() const { return truth_; }

  // The injected nuisance for a non-learned side at sample size n.
  NuisanceFn injected(const NuisanceTreatment& t, std::size_t component, Side side, std::size_t n) const {
    const NuisanceFn& truth = side == Side::a ? truth_nu_[component].a : truth_nu_[component].b;
    switch (t.kind) {
      case TreatmentKind::oracle:
        return truth;
      case TreatmentKind::perturbed:
        return NuisanceFn::perturbed(truth, t.direction.function(),
                                     t.scale * std::pow(static_cast<double>(n), -t.rate));
      case TreatmentKind::fixed_wrong:
        if (t.constant) return NuisanceFn::constant(*t.constant);
        return NuisanceFn::perturbed(truth, t.direction.function(), t.shift);
      case TreatmentKind::learned:
        break;
    }
    throw ConfigError("learned nuisances are not injected");
  }

  // Bias predicted by the mixed-bias term at n, when both sides are injected.
  std::optional<double> predicted(std::size_t n) const {
    if (s_.a.kind == TreatmentKind::learned || s_.b.kind == TreatmentKind::learned) return std::nullopt;
    std::vector<double> shifted = theta_;
    for (std::size_t j = 0; j < estimand_.components.size(); ++j) {
      const ProblemSpec& c = estimand_.components[j];
      if (c.nuisance_free) continue;
      shifted[j] += predicted_bias(law_, c, injected(s_.a, j, Side::a, n), injected(s_.b, j, Side::b, n));
    }
    if (estimand_.is_single()) return shifted[0] - theta_[0];
    // first-order approximation for composite targets
    const auto grad = estimand_.gradient(theta_);
    double acc = 0.0;
    for (std::size_t j = 0; j < grad.size(); ++j) acc += grad[j] * (shifted[j] - theta_[j]);
    return acc;
  }

  ResultRow run_one(std::size_t n_index, std::size_t rep) const {
    const std::size_t n = s_.sizes[n_index];
    const Dataset data = sample_law(law_, n, derive_seed(s_.seed, "sample", n_index, rep));
    const Learner la = learner_for(s_.a, Side::a, n);
    const Learner lb = learner_for(s_.b, Side::b, n);
    const EstimateReport r =
        cross_fit_estimate(data, estimand_, la, lb, s_.folds, derive_seed(s_.seed, "folds", n_index, rep), s_.level);
    ResultRow row;
    row.n = n;
    row.rep = rep;
    row.estimate = r.estimate;
    row.se = r.se;
    row.covered = r.ci_low <= truth_ && truth_ <= r.ci_high;
    if (primary_) {
      row.l2_a = rms_l2(r.a_hat[*primary_], truth_nu_[*primary_].a, estimand_.components[*primary_]);
      row.l2_b = rms_l2(r.b_hat[*primary_], truth_nu_[*primary_].b, estimand_.components[*primary_]);
    }
    return row;
  }

  std::vector<ResultRow> run() const {
    const std::size_t per = s_.reps;
    std::vector<ResultRow> rows(s_.sizes.size() * per);
    parallel_for(rows.size(), s_.threads, [&](std::size_t i) { rows[i] = run_one(i / per, i % per); });
    return rows;
  }

 private:
  Learner learner_for(const NuisanceTreatment& t, Side side, std::size_t n) const {
    if (t.kind == TreatmentKind::learned) {
      return make_learner(t.learner ? *t.learner : default_learner(estimand_, side), side);
    }
    std::vector<NuisanceFn> fns;
    for (std::size_t j = 0; j < estimand_.components.size(); ++j) {
      fns.push_back(estimand_.components[j].nuisance_free ? NuisanceFn::constant(0.0) : injected(t, j, side, n));
    }
    // Components are fitted in order; match by spec name.
    std::vector<std::string> names;
    for (const auto& c : estimand_.components) names.push_back(c.name);
    return [fns, names](const BoundSample&, const ProblemSpec& spec) {
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == spec.name) {
          FittedNuisance f;
          f.fn = fns[j];
          return f;
        }
      }
      throw ConfigError("no injected nuisance for component '" + spec.name + "'");
    };
  }

  double rms_l2(const std::vector<NuisanceFn>& fits, const NuisanceFn& truth, const ProblemSpec& spec) const {
    double acc = 0.0;
    for (const auto& f : fits) {
      const double e = evaluate_nuisance_l2_error(f, truth, law_, spec);
      acc += e * e;
    }
    return fits.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(fits.size()));
  }

  Scenario s_;
  const CatalogEntry& entry_;
  Estimand estimand_;
  FiniteLaw law_;
  std::vector<TrueNuisances> truth_nu_;
  std::vector<double> theta_;
  double truth_ = 0.0;
  std::optional<std::size_t> primary_;
};

inline std::vector<ResultRow> run_scenario(const Scenario& s) { return ScenarioRunner(s).run(); }

// ---------------------------------------------------------------------------
// Summaries

// Least-squares slope of log|bias| on log n, over points whose |bias|
// exceeds twice its Monte Carlo SE.
inline std::optional<double> bias_slope(const std::vector<SizeSummary>& sizes, std::size_t* used = nullptr) {
  std::vector<double> x, y;
  for (const auto& s : sizes) {
    if (std::abs(s.mean_bias) > 2.0 * s.mc_se && s.mean_bias != 0.0) {
      x.push_back(std::log(static_cast<double>(s.n)));
      y.push_back(std::log(std::abs(s.mean_bias)));
    }
  }
  if (used) *used = x.size();
  if (x.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

inline SizeSummary summarize_size(std::size_t n, std::span<const ResultRow> rows, double truth,
                                  std::optional<double> predicted) {
  SizeSummary s;
  s.n = n;
  s.reps = rows.size();
  const double m = static_cast<double>(rows.size());
  double se_sum = 0.0, cov = 0.0, sq = 0.0;
  for (const auto& r : rows) {
    s.mean_estimate += r.estimate;
    se_sum += r.se;
    cov += r.covered ? 1.0 : 0.0;
    sq += (r.estimate - truth) * (r.estimate - truth);
  }
  s.mean_estimate /= m;
  s.mean_bias = s.mean_estimate - truth;
  double ss = 0.0;
  for (const auto& r : rows) ss += (r.estimate - s.mean_estimate) * (r.estimate - s.mean_estimate);
  s.sd = rows.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
  s.mc_se = s.sd / std::sqrt(m);
  s.mean_se = se_sum / m;
  s.coverage = cov / m;
  s.rmse = std::sqrt(sq / m);
  s.standardized_bias = s.sd > 0.0 ? std::abs(s.mean_bias) / s.sd : std::numeric_limits<double>::infinity();
  s.predicted_bias = predicted;
  if (predicted) s.bias_matches_prediction = std::abs(s.mean_bias - *predicted) <= 3.0 * s.mc_se;
  return s;
}

// Rows must be grouped by n (as run_scenario returns them).
inline Summary summarize(const std::vector<ResultRow>& rows, double truth,
                         const std::function<std::optional<double>(std::size_t)>& predicted = {}) {
  Summary out;
  out.truth = truth;
  std::size_t start = 0;
  while (start < rows.size()) {
    std::size_t end = start;
    while (end < rows.size() && rows[end].n == rows[start].n) ++end;
    const std::size_t n = rows[start].n;
    out.sizes.push_back(summarize_size(n, std::span<const ResultRow>(rows).subspan(start, end - start), truth,
                                       predicted ? predicted(n) : std::nullopt));
    start = end;
  }
  out.slope = bias_slope(out.sizes, &out.slope_points);
  return out;
}

inline Summary summarize(const ScenarioRunner& runner, const std::vector<ResultRow>& rows) {
  Summary s = summarize(rows, runner.truth(), [&](std::size_t n) { return runner.predicted(n); });
  s.spec = runner.scenario().spec;
  s.level = runner.scenario().level;
  return s;
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "n,rep,estimate,se,covered,l2_a,l2_b\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.rep << ',' << format_double(r.estimate) << ',' << format_double(r.se) << ','
        << (r.covered ? 1 : 0) << ',' << format_double(r.l2_a) << ',' << format_double(r.l2_b) << '\n';
  }
}

inline nlohmann::json summary_to_json(const Summary& s) {
  auto opt = [](const auto& v) -> nlohmann::json {
    if (v) return *v;
    return nullptr;
  };
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& z : s.sizes) {
    sizes.push_back({{"n", z.n},
                     {"reps", z.reps},
                     {"mean_estimate", z.mean_estimate},
                     {"mean_bias", z.mean_bias},
                     {"mc_se", z.mc_se},
                     {"sd", z.sd},
                     {"mean_se", z.mean_se},
                     {"coverage", z.coverage},
                     {"rmse", z.rmse},
                     {"standardized_bias", std::isfinite(z.standardized_bias) ? nlohmann::json(z.standardized_bias)
                                                                               : nlohmann::json(nullptr)},
                     {"predicted_bias", opt(z.predicted_bias)},
                     {"bias_matches_prediction", opt(z.bias_matches_prediction)}});
  }
  return {{"spec", s.spec},          {"truth", s.truth}, {"level", s.level}, {"sizes", sizes},
          {"slope", opt(s.slope)}, {"slope_points", s.slope_points}};
}

}  // namespace mixbias
