#pragma once

// Exact computations on finite-support laws.
//
// Expectations are sums over the support; conditional means given Z are
// ratios of stratum sums; Riesz representers of h -> E[m(O, h)] are read off
// the indicators of the distinct covariate levels, which span every function
// of Z on a finite support. On top of these the verify_* functions check the
// mixed-bias identities to machine precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixbias/dataset.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/finite_law.hpp"
#include "mixbias/functional.hpp"
#include "mixbias/nuisance.hpp"
#include "mixbias/random.hpp"

namespace mixbias {

// A law projected onto a spec's columns, with its distinct covariate levels.
struct BoundLaw {
  BoundSample sample;
  std::vector<double> probs;
  std::vector<std::vector<double>> levels;  // sorted, distinct
  std::vector<std::size_t> level_of;        // support point -> level index
  std::vector<double> level_prob;

  std::size_t size() const { return probs.size(); }

  std::size_t level_index(Covariates z) const {
    auto it = std::lower_bound(levels.begin(), levels.end(), z, [](const std::vector<double>& l, Covariates v) {
      return std::lexicographical_compare(l.begin(), l.end(), v.begin(), v.end());
    });
    if (it == levels.end() || !std::equal(it->begin(), it->end(), z.begin(), z.end())) {
      throw StratumError("covariate level not in the law's support");
    }
    return static_cast<std::size_t>(it - levels.begin());
  }
};

inline BoundLaw bind_law(const FiniteLaw& law, const ProblemSpec& spec) {
  BoundLaw out;
  out.sample = bind(law.support(), spec);
  out.probs.assign(law.probs().begin(), law.probs().end());
  std::map<std::vector<double>, double> mass;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto z = out.sample.z(i);
    mass[std::vector<double>(z.begin(), z.end())] += out.probs[i];
  }
  for (const auto& [lvl, p] : mass) {
    out.levels.push_back(lvl);
    out.level_prob.push_back(p);
  }
  out.level_of.resize(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) out.level_of[i] = out.level_index(out.sample.z(i));
  return out;
}

// Sum_i p_i f(o_i), with observations in the law's own column order.
inline double expectation(const FiniteLaw& law, const Statistic& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < law.size(); ++i) {
    const double v = f(law.support().row(i));
    if (!std::isfinite(v)) throw NumericError("expectation: non-finite integrand at support point " + std::to_string(i));
    acc += law.probs()[i] * v;
  }
  return acc;
}

inline double expectation(const BoundLaw& law, const Statistic& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < law.size(); ++i) {
    const double v = f(law.sample.row(i));
    if (!std::isfinite(v)) throw NumericError("expectation: non-finite integrand at support point " + std::to_string(i));
    acc += law.probs[i] * v;
  }
  return acc;
}

// E[f(O) | O_coords = value], observations in the law's column order.
inline double cond_mean(const FiniteLaw& law, const Statistic& f, std::span<const std::string> coords,
                        std::span<const double> value) {
  if (coords.size() != value.size()) throw InputError("cond_mean: coordinate/value size mismatch");
  std::vector<std::size_t> idx;
  for (const auto& c : coords) idx.push_back(law.support().index_of(c));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < law.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < idx.size() && match; ++k) match = law.support().at(i, idx[k]) == value[k];
    if (!match) continue;
    den += law.probs()[i];
    if (law.probs()[i] > 0.0) num += law.probs()[i] * f(law.support().row(i));
  }
  if (den <= 0.0) throw StratumError("cond_mean: conditioning stratum has zero probability");
  return num / den;
}

// Conditional means given Z for every level of a bound law.
inline std::vector<double> cond_means_by_level(const BoundLaw& law, const Statistic& f) {
  std::vector<double> num(law.levels.size(), 0.0);
  for (std::size_t i = 0; i < law.size(); ++i) {
    if (law.probs[i] > 0.0) num[law.level_of[i]] += law.probs[i] * f(law.sample.row(i));
  }
  for (std::size_t k = 0; k < num.size(); ++k) {
    if (law.level_prob[k] <= 0.0) throw StratumError("conditioning stratum has zero probability");
    num[k] /= law.level_prob[k];
  }
  return num;
}

inline LevelTable level_table(const BoundLaw& law, std::vector<double> values) {
  const std::size_t dim = law.levels.empty() ? 0 : law.levels.front().size();
  return LevelTable(dim, law.levels, std::move(values));
}

// Representer R with E[m(O, h)] = sum_z P(Z = z) R(z) h(z).
struct RieszRepresenter {
  LevelTable table;
  NuisanceFn function() const { return table_function(table, "riesz"); }
  double operator()(Covariates z) const { return table(z); }
};

inline RieszRepresenter riesz(const BoundLaw& law, const LinearMap& m) {
  std::vector<double> values(law.levels.size());
  for (std::size_t k = 0; k < law.levels.size(); ++k) {
    if (law.level_prob[k] <= 0.0) throw StratumError("riesz: covariate level with zero probability");
    const NuisanceFn ind = NuisanceFn::indicator(law.levels[k]);
    values[k] = expectation(law, [&](const Observation& o) { return m(o, ind); }) / law.level_prob[k];
  }
  return RieszRepresenter{level_table(law, std::move(values))};
}

inline RieszRepresenter riesz(const FiniteLaw& law, const ProblemSpec& spec, const LinearMap& m) {
  return riesz(bind_law(law, spec), m);
}

struct TrueNuisances {
  NuisanceFn a;
  NuisanceFn b;
  LevelTable a_table;
  LevelTable b_table;
  LevelTable sab_given_z;  // E(S_ab | Z)
  // max |a_riesz - a_q| when the spec carries q; the ratio route
  // a = -E(q | Z) / E(S_ab | Z).
  std::optional<double> q_route_residual;
};

// a = -R2 / E(S_ab | Z), b = -R1 / E(S_ab | Z).
inline TrueNuisances true_nuisances(const BoundLaw& law, const ProblemSpec& spec) {
  if (spec.nuisance_free) {
    const std::vector<double> zeros(law.levels.size(), 0.0);
    return {NuisanceFn::constant(0.0), NuisanceFn::constant(0.0), level_table(law, zeros),
            level_table(law, zeros), level_table(law, zeros), std::nullopt};
  }
  const std::vector<double> sab = cond_means_by_level(law, spec.s_ab);
  for (std::size_t k = 0; k < sab.size(); ++k) {
    if (sab[k] == 0.0) throw DegeneracyError("true_nuisances: E(S_ab | Z) = 0 at a support level");
  }
  const RieszRepresenter r1 = riesz(law, spec.m1);
  const RieszRepresenter r2 = riesz(law, spec.m2);
  std::vector<double> a(sab.size()), b(sab.size());
  for (std::size_t k = 0; k < sab.size(); ++k) {
    a[k] = -r2.table.value(k) / sab[k];
    b[k] = -r1.table.value(k) / sab[k];
  }
  std::optional<double> q_res;
  if (spec.q) {
    const std::vector<double> eq = cond_means_by_level(law, *spec.q);
    double worst = 0.0;
    for (std::size_t k = 0; k < sab.size(); ++k) worst = std::max(worst, std::abs(a[k] + eq[k] / sab[k]));
    q_res = worst;
  }
  TrueNuisances out;
  out.a_table = level_table(law, a);
  out.b_table = level_table(law, b);
  out.sab_given_z = level_table(law, sab);
  out.a = table_function(out.a_table, "oracle a");
  out.b = table_function(out.b_table, "oracle b");
  out.q_route_residual = q_res;
  return out;
}

inline TrueNuisances true_nuisances(const FiniteLaw& law, const ProblemSpec& spec) {
  return true_nuisances(bind_law(law, spec), spec);
}

struct ChiExact {
  double value = 0.0;     // m1 route
  double residual = 0.0;  // max pairwise discrepancy of the three routes
  double m1_route = 0.0;
  double m2_route = 0.0;
  double product_route = 0.0;
};

// chi = E m1(O, a) + E S0 = E m2(O, b) + E S0 = -E[S_ab a b] + E S0.
inline ChiExact chi_exact(const BoundLaw& law, const ProblemSpec& spec, const TrueNuisances& nu) {
  const double es0 = expectation(law, spec.s0);
  ChiExact c;
  c.m1_route = expectation(law, [&](const Observation& o) { return spec.m1(o, nu.a); }) + es0;
  c.m2_route = expectation(law, [&](const Observation& o) { return spec.m2(o, nu.b); }) + es0;
  c.product_route = -expectation(law, [&](const Observation& o) {
    const Covariates z = spec.z(o);
    return spec.s_ab(o) * nu.a(z) * nu.b(z);
  }) + es0;
  c.value = c.m1_route;
  c.residual = std::max({std::abs(c.m1_route - c.m2_route), std::abs(c.m1_route - c.product_route),
                         std::abs(c.m2_route - c.product_route)});
  return c;
}

inline ChiExact chi_exact(const FiniteLaw& law, const ProblemSpec& spec) {
  const BoundLaw bl = bind_law(law, spec);
  return chi_exact(bl, spec, true_nuisances(bl, spec));
}

inline double expected_if(const BoundLaw& law, const ProblemSpec& spec, const NuisanceFn& a,
                          const NuisanceFn& b) {
  return expectation(law, [&](const Observation& o) { return uncentered_if(spec, a, b, o); });
}

// E_eta[S_ab (a' - a)(b' - b)].
inline double mixed_bias_term(const BoundLaw& law, const ProblemSpec& spec, const NuisanceFn& a,
                              const NuisanceFn& b, const NuisanceFn& a_prime, const NuisanceFn& b_prime) {
  return expectation(law, [&](const Observation& o) {
    const Covariates z = spec.z(o);
    return spec.s_ab(o) * (a_prime(z) - a(z)) * (b_prime(z) - b(z));
  });
}

// |E_eta[uncentered IF at (a', b')] - chi - E_eta[S_ab (a' - a)(b' - b)]|
// where (a, b) are the law's own nuisances.
inline double verify_mixed_bias(const FiniteLaw& law, const ProblemSpec& spec, const NuisanceFn& a,
                                const NuisanceFn& b, const NuisanceFn& a_prime, const NuisanceFn& b_prime) {
  const BoundLaw bl = bind_law(law, spec);
  const double chi = chi_exact(bl, spec, true_nuisances(bl, spec)).value;
  const double lhs = expected_if(bl, spec, a_prime, b_prime) - chi;
  const double rhs = mixed_bias_term(bl, spec, a, b, a_prime, b_prime);
  return std::abs(lhs - rhs);
}

struct MomentResidual {
  std::vector<double> level;
  double m1_equation = 0.0;  // E[S_ab h b + m1(O, h)]
  double m2_equation = 0.0;  // E[S_ab h a + m2(O, h)]
};

inline std::vector<MomentResidual> moment_residuals(const BoundLaw& law, const ProblemSpec& spec,
                                                    const NuisanceFn& a, const NuisanceFn& b) {
  std::vector<MomentResidual> out;
  for (const auto& lvl : law.levels) {
    const NuisanceFn h = NuisanceFn::indicator(lvl);
    MomentResidual r;
    r.level = lvl;
    r.m1_equation = expectation(law, [&](const Observation& o) {
      const Covariates z = spec.z(o);
      return spec.s_ab(o) * h(z) * b(z) + spec.m1(o, h);
    });
    r.m2_equation = expectation(law, [&](const Observation& o) {
      const Covariates z = spec.z(o);
      return spec.s_ab(o) * h(z) * a(z) + spec.m2(o, h);
    });
    out.push_back(std::move(r));
  }
  return out;
}

inline double verify_moments(const FiniteLaw& law, const ProblemSpec& spec, const NuisanceFn& a,
                             const NuisanceFn& b) {
  double worst = 0.0;
  for (const auto& r : moment_residuals(bind_law(law, spec), spec, a, b)) {
    worst = std::max({worst, std::abs(r.m1_equation), std::abs(r.m2_equation)});
  }
  return worst;
}

inline double verify_moments(const FiniteLaw& law, const ProblemSpec& spec) {
  const auto nu = true_nuisances(law, spec);
  return verify_moments(law, spec, nu.a, nu.b);
}

enum class Side { a, b };

inline const char* side_name(Side s) { return s == Side::a ? "a" : "b"; }

// sigma E[S_ab h^2 / 2 + m(O, h)] with m = m2 for side a and m1 for side b.
inline double population_loss(const BoundLaw& law, const ProblemSpec& spec, Side side, const NuisanceFn& h) {
  const LinearMap& m = side == Side::a ? spec.m2 : spec.m1;
  const double sigma = spec.sab_sign;
  return sigma * expectation(law, [&](const Observation& o) {
    const double hz = h(spec.z(o));
    return spec.s_ab(o) * hz * hz / 2.0 + m(o, h);
  });
}

inline void require_declared_sign(const BoundLaw& law, const ProblemSpec& spec) {
  if (spec.sab_sign != 1 && spec.sab_sign != -1) throw SignError("sab_sign must be +1 or -1");
  const auto sab = cond_means_by_level(law, spec.s_ab);
  for (double v : sab) {
    if (!(v * spec.sab_sign > 0.0)) {
      throw SignError("E(S_ab | Z) is not single-signed with the declared sign " + std::to_string(spec.sab_sign));
    }
  }
}

struct LossCheck {
  double gradient_residual = 0.0;   // max |L(g + eps u) - L(g - eps u)| / (2 eps)
  double expansion_residual = 0.0;  // max |L(g + u) - L(g) - E[sigma S_ab u^2 / 2]|
  bool minimum = true;              // L(g) <= L(g + u) for every direction
};

inline LossCheck verify_loss_stationarity(const FiniteLaw& law, const ProblemSpec& spec,
                                          std::span<const NuisanceFn> directions, double eps) {
  const BoundLaw bl = bind_law(law, spec);
  require_declared_sign(bl, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  LossCheck out;
  for (Side side : {Side::a, Side::b}) {
    const NuisanceFn& g = side == Side::a ? nu.a : nu.b;
    const double base = population_loss(bl, spec, side, g);
    for (const NuisanceFn& u : directions) {
      const double up = population_loss(bl, spec, side, NuisanceFn::perturbed(g, u, eps));
      const double down = population_loss(bl, spec, side, NuisanceFn::perturbed(g, u, -eps));
      out.gradient_residual = std::max(out.gradient_residual, std::abs(up - down) / (2.0 * eps));
      const double moved = population_loss(bl, spec, side, NuisanceFn::perturbed(g, u, 1.0));
      const double quad = spec.sab_sign * expectation(bl, [&](const Observation& o) {
        const double uz = u(spec.z(o));
        return spec.s_ab(o) * uz * uz / 2.0;
      });
      out.expansion_residual = std::max(out.expansion_residual, std::abs(moved - base - quad));
      if (moved < base) out.minimum = false;
    }
  }
  return out;
}

// Indicator functions of every covariate level of the law.
inline std::vector<NuisanceFn> level_indicators(const FiniteLaw& law, const ProblemSpec& spec) {
  const BoundLaw bl = bind_law(law, spec);
  std::vector<NuisanceFn> out;
  for (const auto& lvl : bl.levels) out.push_back(NuisanceFn::indicator(lvl));
  return out;
}

inline double verify_if_mean_zero(const FiniteLaw& law, const ProblemSpec& spec, const NuisanceFn& a,
                                  const NuisanceFn& b) {
  const BoundLaw bl = bind_law(law, spec);
  const double chi = chi_exact(bl, spec, true_nuisances(bl, spec)).value;
  return std::abs(expected_if(bl, spec, a, b) - chi);
}

inline double verify_if_mean_zero(const FiniteLaw& law, const ProblemSpec& spec) {
  const BoundLaw bl = bind_law(law, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  return std::abs(expected_if(bl, spec, nu.a, nu.b) - chi_exact(bl, spec, nu).value);
}

// Max pointwise difference of the uncentered IF evaluated with law1's and
// law2's nuisances over both supports. Requires the two laws to induce the
// same (a, b) on a common set of covariate levels.
inline double verify_invariance(const FiniteLaw& law1, const FiniteLaw& law2, const ProblemSpec& spec,
                                double nuisance_tolerance = 1e-12) {
  const BoundLaw b1 = bind_law(law1, spec);
  const BoundLaw b2 = bind_law(law2, spec);
  if (b1.levels != b2.levels) throw InputError("verify_invariance: laws have different covariate supports");
  const TrueNuisances n1 = true_nuisances(b1, spec);
  const TrueNuisances n2 = true_nuisances(b2, spec);
  for (std::size_t k = 0; k < b1.levels.size(); ++k) {
    if (std::abs(n1.a_table.value(k) - n2.a_table.value(k)) > nuisance_tolerance ||
        std::abs(n1.b_table.value(k) - n2.b_table.value(k)) > nuisance_tolerance) {
      throw InputError("verify_invariance: laws induce different nuisance functions");
    }
  }
  double worst = 0.0;
  for (const BoundLaw* bl : {&b1, &b2}) {
    for (std::size_t i = 0; i < bl->size(); ++i) {
      const Observation o = bl->sample.row(i);
      worst = std::max(worst, std::abs(uncentered_if(spec, n1.a, n1.b, o) - uncentered_if(spec, n2.a, n2.b, o)));
    }
  }
  return worst;
}

// Mean under the law of g'(chi) (IF) for psi = g(chi).
inline double verify_delta_mean_zero(const FiniteLaw& law, const ProblemSpec& spec,
                                     const std::function<double(double)>& g_prime) {
  const BoundLaw bl = bind_law(law, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  const double chi = chi_exact(bl, spec, nu).value;
  const double slope = g_prime(chi);
  return std::abs(expectation(bl, [&](const Observation& o) {
    return slope * (uncentered_if(spec, nu.a, nu.b, o) - chi);
  }));
}

// Random function on the law's covariate levels with values uniform in
// [-scale, scale].
inline NuisanceFn random_level_function(const BoundLaw& law, Rng& rng, double scale = 1.0) {
  std::vector<double> v(law.levels.size());
  for (double& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
  return table_function(level_table(law, std::move(v)), "random");
}

// Pathwise-derivative check of an influence function. For random bounded
// score directions g (centered under the law) compares the central
// difference of `functional` along P_t = P (1 + t g) with E[IF g]. `influence`
// holds the centered influence function at each support point.
inline double verify_pathwise_derivative(const FiniteLaw& law, std::span<const double> influence,
                                         const std::function<double(const FiniteLaw&)>& functional,
                                         std::size_t directions, double step, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < directions; ++k) {
    std::vector<double> g(law.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = 2.0 * uniform01(rng) - 1.0;
      mean += law.probs()[i] * g[i];
    }
    for (double& x : g) x -= mean;
    double inner = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) inner += law.probs()[i] * influence[i] * g[i];
    const double fd = (functional(tilt_law(law, g, step)) - functional(tilt_law(law, g, -step))) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - inner));
  }
  return worst;
}

}  // namespace mixbias
