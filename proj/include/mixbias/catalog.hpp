#pragma once

// Registry of concrete parameters with the mixed bias property.
//
// Each entry builds an Estimand from string parameters, ships a validation
// law, and carries independent "recipes": the target value and the nuisance
// pair computed straight from conditional means of the law, without going
// through the spec's components. validate_entry pits the two against each
// other.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixbias/dataset.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/estimand.hpp"
#include "mixbias/finite_law.hpp"
#include "mixbias/functional.hpp"
#include "mixbias/nuisance.hpp"
#include "mixbias/oracle.hpp"
#include "mixbias/quadrature.hpp"
#include "mixbias/random.hpp"

namespace mixbias {

using Params = std::map<std::string, std::string>;

struct ParamInfo {
  std::string name;
  std::string default_value;
  std::string doc;
};

struct NuisancePair {
  NuisanceFn a;
  NuisanceFn b;
};

struct CatalogEntry {
  std::string name;
  std::string title;
  std::vector<ParamInfo> params;
  bool robins_class = false;
  bool newey_chernozhukov_class = false;

  std::function<Estimand(const Params&)> build;
  std::function<FiniteLaw(const Params&)> canned_law;
  // A second law inducing the same nuisances (for the invariance check).
  std::function<FiniteLaw(const Params&)> invariance_law;
  // Target value of the estimand computed directly from the law.
  std::function<double(const FiniteLaw&, const Params&)> target;
  // Closed-form nuisances per component (constant zero for sample means).
  std::function<std::vector<NuisancePair>(const FiniteLaw&, const Params&)> recipes;
};

// ---------------------------------------------------------------------------
// Parameter parsing

class ParamReader {
 public:
  ParamReader(const std::string& entry, const std::vector<ParamInfo>& info, const Params& given) : entry_(entry) {
    for (const auto& p : info) values_[p.name] = p.default_value;
    for (const auto& [k, v] : given) {
      if (!values_.count(k)) throw ParameterError("entry '" + entry + "' has no parameter '" + k + "'");
      values_[k] = v;
    }
  }

  const std::string& raw(const std::string& name) const { return values_.at(name); }

  double number(const std::string& name) const {
    try {
      const double v = detail::parse_double(detail::trim(raw(name)));
      if (!std::isfinite(v)) throw InputError("non-finite");
      return v;
    } catch (const InputError&) {
      throw ParameterError(entry_ + ": parameter '" + name + "' must be a finite number, got '" + raw(name) + "'");
    }
  }

  long integer(const std::string& name) const {
    const double v = number(name);
    if (v != std::floor(v)) throw ParameterError(entry_ + ": parameter '" + name + "' must be an integer");
    return static_cast<long>(v);
  }

  std::vector<std::string> list(const std::string& name) const {
    std::vector<std::string> out;
    for (auto part : detail::split_commas(raw(name))) {
      if (part.empty()) throw ParameterError(entry_ + ": empty item in parameter '" + name + "'");
      out.emplace_back(part);
    }
    return out;
  }

  std::vector<double> numbers(const std::string& name) const {
    std::vector<double> out;
    for (const auto& s : list(name)) {
      try {
        out.push_back(detail::parse_double(s));
      } catch (const InputError&) {
        throw ParameterError(entry_ + ": parameter '" + name + "' must be a comma-separated list of numbers");
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  std::string entry_;
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Spec builders

namespace catalog_detail {

inline std::vector<std::string> concat(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

inline RowCheck binary_indicator_check(std::size_t d_pos) {
  return [d_pos](const Observation& o) {
    if (o[d_pos] != 0.0 && o[d_pos] != 1.0) throw InputError("indicator column must be 0 or 1");
  };
}

// d in {0,1} and d = 0 implies dy = 0.
inline RowCheck observed_product_check(std::size_t dy_pos, std::size_t d_pos) {
  return [dy_pos, d_pos](const Observation& o) {
    if (o[d_pos] != 0.0 && o[d_pos] != 1.0) throw InputError("indicator column must be 0 or 1");
    if (o[d_pos] == 0.0 && o[dy_pos] != 0.0) throw InputError("observed product must be 0 when the indicator is 0");
  };
}

// S_ab = s_ab, m1(O,h) = w(O) h(Z), m2(O,h) = q(O) h(Z), S0 = s0. This is the
// separable form; q doubles as the ratio-route statistic.
inline ProblemSpec separable_spec(std::string name, std::vector<std::string> columns, std::size_t z_offset,
                                  Statistic s_ab, Statistic w, Statistic q, Statistic s0, int sign) {
  ProblemSpec s;
  s.name = std::move(name);
  s.columns = std::move(columns);
  s.z_offset = z_offset;
  s.s_ab = s_ab;
  s.m1 = [w, z_offset](const Observation& o, const NuisanceFn& h) {
    const double wv = w(o);
    return wv == 0.0 ? 0.0 : wv * h(o.values().subspan(z_offset));
  };
  s.m2 = [q, z_offset](const Observation& o, const NuisanceFn& h) {
    const double qv = q(o);
    return qv == 0.0 ? 0.0 : qv * h(o.values().subspan(z_offset));
  };
  s.s0 = std::move(s0);
  s.q = q;
  s.separable = SeparableForm{w, q};
  s.sab_sign = sign;
  return s;
}

inline Statistic col(std::size_t i) {
  return [i](const Observation& o) { return o[i]; };
}
inline Statistic one_minus(std::size_t i) {
  return [i](const Observation& o) { return 1.0 - o[i]; };
}
inline Statistic neg(std::size_t i) {
  return [i](const Observation& o) { return -o[i]; };
}
inline Statistic constant(double c) {
  return [c](const Observation&) { return c; };
}

// Grouping of a law's support by a set of coordinates, for closed-form
// recipes.
class Strata {
 public:
  Strata(const FiniteLaw& law, std::vector<std::string> by) : law_(law), by_(std::move(by)) {
    for (const auto& c : by_) idx_.push_back(law.support().index_of(c));
    std::map<std::vector<double>, double> mass;
    for (std::size_t i = 0; i < law.size(); ++i) mass[key(i)] += law.probs()[i];
    for (const auto& [k, m] : mass) {
      levels_.push_back(k);
      prob_.push_back(m);
    }
    index_ = LevelTable(by_.size(), levels_, iota(levels_.size()));
  }

  std::size_t size() const { return levels_.size(); }
  const std::vector<std::vector<double>>& levels() const { return levels_; }
  double prob(std::size_t k) const { return prob_[k]; }
  std::size_t column(const std::string& name) const { return law_.support().index_of(name); }

  // E[f(O) | stratum k] for all k; f sees the law's own column order.
  std::vector<double> mean(const Statistic& f) const {
    std::vector<double> num(levels_.size(), 0.0);
    for (std::size_t i = 0; i < law_.size(); ++i) {
      if (law_.probs()[i] > 0.0) num[which(i)] += law_.probs()[i] * f(law_.support().row(i));
    }
    for (std::size_t k = 0; k < num.size(); ++k) {
      if (prob_[k] <= 0.0) throw StratumError("recipe: zero-probability stratum");
      num[k] /= prob_[k];
    }
    return num;
  }

  std::size_t find(std::span<const double> level) const {
    auto k = index_.find(level);
    if (!k) throw StratumError("recipe: level not in support");
    return *k;
  }

  NuisanceFn function(std::vector<double> values, std::string label = "recipe") const {
    return table_function(LevelTable(by_.size(), levels_, std::move(values)), std::move(label));
  }

 private:
  static std::vector<double> iota(std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<double>(k);
    return v;
  }
  std::vector<double> key(std::size_t i) const {
    std::vector<double> k;
    for (std::size_t j : idx_) k.push_back(law_.support().at(i, j));
    return k;
  }
  std::size_t which(std::size_t i) const { return static_cast<std::size_t>(index_(key(i))); }

  const FiniteLaw& law_;
  std::vector<std::string> by_;
  std::vector<std::size_t> idx_;
  std::vector<std::vector<double>> levels_;
  std::vector<double> prob_;
  LevelTable index_;
};

inline double law_mean(const FiniteLaw& law, const Statistic& f) { return expectation(law, f); }

inline std::string single_covariate(const std::vector<std::string>& covs, const std::string& entry) {
  if (covs.size() != 1) throw ParameterError(entry + ": the canned law is defined for exactly one covariate");
  return covs.front();
}

// Z in {0,1}, P(Z=1) = pz1, P(D=1|Z) = (0.5, 0.8), P(Y=1|Z) = (0.4, 0.8),
// Y independent of D given Z. Columns z, d, y, dy.
inline FiniteLaw law_l0(const std::string& z = "z", double pz1 = 0.5) {
  LawBuilder b({z, "d", "y", "dy"});
  const double e[2] = {0.5, 0.8};
  const double py[2] = {0.4, 0.8};
  for (int zv = 0; zv < 2; ++zv) {
    const double pz = zv ? pz1 : 1.0 - pz1;
    for (int d = 0; d < 2; ++d) {
      for (int y = 0; y < 2; ++y) {
        const double p = pz * (d ? e[zv] : 1.0 - e[zv]) * (y ? py[zv] : 1.0 - py[zv]);
        b.add({double(zv), double(d), double(y), double(d * y)}, p);
      }
    }
  }
  return b.build();
}

// Binary Z, D, Y with P(Y=1 | D, Z) given per cell. Columns z, d, y.
inline FiniteLaw law_binary(const std::string& z, double pz1, const double e[2], const double py[2][2]) {
  LawBuilder b({z, "d", "y"});
  for (int zv = 0; zv < 2; ++zv) {
    const double pz = zv ? pz1 : 1.0 - pz1;
    for (int d = 0; d < 2; ++d) {
      for (int y = 0; y < 2; ++y) {
        const double p = pz * (d ? e[zv] : 1.0 - e[zv]) * (y ? py[d][zv] : 1.0 - py[d][zv]);
        b.add({double(zv), double(d), double(y)}, p);
      }
    }
  }
  return b.build();
}

// D and Y dependent given Z, so the conditional covariance is nonzero.
inline FiniteLaw law_covariance(const std::string& z = "z", double pz1 = 0.4) {
  const double e[2] = {0.3, 0.6};
  const double py[2][2] = {{0.2, 0.4}, {0.5, 0.9}};  // [d][z]
  return law_binary(z, pz1, e, py);
}

// Treatment effect 0.2 in every stratum.
inline FiniteLaw law_effect(const std::string& z = "z", double pz1 = 0.5) {
  const double e[2] = {0.5, 0.8};
  const double py[2][2] = {{0.3, 0.5}, {0.5, 0.7}};
  return law_binary(z, pz1, e, py);
}

// L in {0,1}, D on the grid g/(G-1) with P(D=u_g | L=0) uniform and
// P(D=u_g | L=1) proportional to 1+g, Y binary with
// P(Y=1 | D, L) = 0.2 + 0.5 D + 0.1 L. Columns l, d, y.
inline FiniteLaw law_grid_treatment(std::size_t levels, const std::string& l = "l", double pl1 = 0.5) {
  const auto u = grid_nodes(levels);
  const double tri = static_cast<double>(levels * (levels + 1)) / 2.0;
  LawBuilder b({l, "d", "y"});
  for (int lv = 0; lv < 2; ++lv) {
    const double plv = lv ? pl1 : 1.0 - pl1;
    for (std::size_t g = 0; g < levels; ++g) {
      const double pd = lv ? static_cast<double>(g + 1) / tri : 1.0 / static_cast<double>(levels);
      const double mu = 0.2 + 0.5 * u[g] + 0.1 * lv;
      b.add({double(lv), u[g], 1.0}, plv * pd * mu);
      b.add({double(lv), u[g], 0.0}, plv * pd * (1.0 - mu));
    }
  }
  return b.build();
}

// Z on the grid with P(Z = z_g) proportional to 1+g, Y1 binary with
// P(Y1=1 | Z) = 0.2 + 0.5 Z and Y2 in {1,2,3} independent of Y1 given Z.
// `alternate` keeps E(Y2 | Z) = 1.7 + 0.3 Z but changes the distribution.
inline FiniteLaw law_toy(std::size_t levels, const std::string& z = "z", bool alternate = false) {
  const auto u = grid_nodes(levels);
  const double tri = static_cast<double>(levels * (levels + 1)) / 2.0;
  LawBuilder b({z, "y1", "y2"});
  for (std::size_t g = 0; g < levels; ++g) {
    const double pz = static_cast<double>(g + 1) / tri;
    const double p1 = 0.2 + 0.5 * u[g];
    const double p2[3] = {alternate ? 0.4 - 0.2 * u[g] : 0.5 - 0.2 * u[g], alternate ? 0.5 + 0.1 * u[g] : 0.3 + 0.1 * u[g],
                          alternate ? 0.1 + 0.1 * u[g] : 0.2 + 0.1 * u[g]};
    for (int y1 = 0; y1 < 2; ++y1) {
      for (int k = 0; k < 3; ++k) {
        b.add({u[g], double(y1), double(k + 1)}, pz * (y1 ? p1 : 1.0 - p1) * p2[k]);
      }
    }
  }
  return b.build();
}

inline std::size_t grid_index(double d, std::size_t levels) {
  const double g = std::round(d * static_cast<double>(levels - 1));
  return static_cast<std::size_t>(std::clamp(g, 0.0, static_cast<double>(levels - 1)));
}

inline std::size_t read_odd_levels(const ParamReader& r, const std::string& entry) {
  const long v = r.integer("levels");
  if (v < 3 || v % 2 == 0 || v > 1001) throw ParameterError(entry + ": 'levels' must be odd and in [3, 1001]");
  return static_cast<std::size_t>(v);
}

}  // namespace catalog_detail

// ---------------------------------------------------------------------------
// Component specs

// Mean of an outcome missing at random. Columns (dy, d, Z...).
inline ProblemSpec mar_mean_spec(const std::vector<std::string>& covariates, std::string name = "mar_mean") {
  using namespace catalog_detail;
  ProblemSpec s = separable_spec(std::move(name), concat({"dy", "d"}, covariates), 2, neg(1), constant(1.0), col(0),
                                 constant(0.0), -1);
  s.row_check = observed_product_check(0, 1);
  return s;
}

// Exponential-tilt components for the mean of an outcome missing not at
// random: S_ab = -D exp(delta DY), q = DY exp(delta DY), m1 = (1-D) h,
// S0 = DY. Valid for every delta, including 0.
inline ProblemSpec tilt_spec(double delta, const std::vector<std::string>& covariates, std::string name = "mnar_tilt") {
  using namespace catalog_detail;
  auto s_ab = [delta](const Observation& o) { return -o[1] * std::exp(delta * o[0]); };
  auto q = [delta](const Observation& o) { return o[0] * std::exp(delta * o[0]); };
  ProblemSpec s = separable_spec(std::move(name), concat({"dy", "d"}, covariates), 2, s_ab, one_minus(1), q, col(0), -1);
  s.row_check = observed_product_check(0, 1);
  return s;
}

// The same mean with covariate Z* = (D, Z): S*_ab = 1, a* = E(DY | D, Z),
// m1*(O, h) = h(1, Z), m2*(O, h) = -DY h(D, Z).
inline ProblemSpec mar_mean_star_spec(const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  ProblemSpec s;
  s.name = "mar_mean_star";
  s.columns = concat({"dy", "d"}, covariates);
  s.z_offset = 1;
  s.s_ab = constant(1.0);
  s.m1 = [](const Observation& o, const NuisanceFn& h) {
    std::vector<double> z(o.values().begin() + 1, o.values().end());
    z[0] = 1.0;
    return h(z);
  };
  Statistic q = neg(0);
  s.m2 = [q](const Observation& o, const NuisanceFn& h) {
    const double qv = q(o);
    return qv == 0.0 ? 0.0 : qv * h(o.values().subspan(1));
  };
  s.s0 = constant(0.0);
  s.q = q;
  s.sab_sign = 1;
  s.row_check = observed_product_check(0, 1);
  return s;
}

// E{cov(D, Y | Z)}: S_ab = -1, m1 = -D h, m2 = Y h, S0 = DY. Columns (y, d, Z...).
inline ProblemSpec expected_cond_cov_spec(const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  auto dy = [](const Observation& o) { return o[0] * o[1]; };
  return separable_spec("expected_cond_cov", concat({"y", "d"}, covariates), 2, constant(-1.0), neg(1), col(0), dy,
                        -1);
}

// Weighted contrast of E(Y | D = u, L) over a treatment grid. Columns
// (y, d, L...), Z = (d, L...). m1(O, h) = sum_g omega_g w(u_g) h(u_g, L).
inline ProblemSpec continuous_treatment_spec(const Polynomial& w, std::size_t levels,
                                             const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  const auto u = grid_nodes(levels);
  const auto omega = simpson_weights(levels);
  std::vector<double> weight(levels);
  for (std::size_t g = 0; g < levels; ++g) weight[g] = omega[g] * w(u[g]);
  ProblemSpec s;
  s.name = "continuous_treatment";
  s.columns = concat({"y", "d"}, covariates);
  s.z_offset = 1;
  s.s_ab = constant(-1.0);
  s.m1 = [u, weight](const Observation& o, const NuisanceFn& h) {
    std::vector<double> z(o.values().begin() + 1, o.values().end());
    double acc = 0.0;
    for (std::size_t g = 0; g < u.size(); ++g) {
      if (weight[g] == 0.0) continue;
      z[0] = u[g];
      acc += weight[g] * h(z);
    }
    return acc;
  };
  Statistic q = col(0);
  s.m2 = [](const Observation& o, const NuisanceFn& h) { return o[0] == 0.0 ? 0.0 : o[0] * h(o.values().subspan(1)); };
  s.s0 = constant(0.0);
  s.q = q;
  s.sab_sign = -1;
  return s;
}

// Integral of E(Y1 | Z) / E(Y2 | Z) over a grid on [0, 1]. Columns (y1, y2, z).
inline ProblemSpec toy_ratio_spec(std::size_t levels, const std::string& covariate) {
  using namespace catalog_detail;
  const auto u = grid_nodes(levels);
  const auto omega = simpson_weights(levels);
  ProblemSpec s;
  s.name = "toy_ratio";
  s.columns = {"y1", "y2", covariate};
  s.z_offset = 2;
  s.s_ab = neg(1);
  s.m1 = [u, omega](const Observation&, const NuisanceFn& h) {
    double acc = 0.0;
    for (std::size_t g = 0; g < u.size(); ++g) acc += omega[g] * h(std::span<const double>(&u[g], 1));
    return acc;
  };
  Statistic q = col(0);
  s.m2 = [](const Observation& o, const NuisanceFn& h) { return o[0] == 0.0 ? 0.0 : o[0] * h(o.values().subspan(2)); };
  s.s0 = constant(0.0);
  s.q = q;
  s.sab_sign = -1;
  s.row_check = [](const Observation& o) {
    if (!(o[1] > 0.0)) throw InputError("y2 must be positive");
  };
  return s;
}

// Arm mean E{E(Y | D = arm, Z)} with observed columns (y, d, Z...).
inline ProblemSpec arm_mean_spec(int arm, const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  auto r = [arm](const Observation& o) { return arm ? o[1] : 1.0 - o[1]; };
  auto s_ab = [r](const Observation& o) { return -r(o); };
  auto q = [r](const Observation& o) { return r(o) * o[0]; };
  ProblemSpec s = separable_spec(arm ? "ate_treated" : "ate_control", concat({"y", "d"}, covariates), 2, s_ab,
                                 constant(1.0), q, constant(0.0), -1);
  s.row_check = binary_indicator_check(1);
  return s;
}

// E{(1 - D) a(Z)} with a = E(DY | Z) / E(D | Z). Columns (dy, d, Z...).
inline ProblemSpec nonrespondent_mean_spec(const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  ProblemSpec s = separable_spec("nonrespondent_mean", concat({"dy", "d"}, covariates), 2, neg(1), one_minus(1), col(0),
                                 constant(0.0), -1);
  s.row_check = observed_product_check(0, 1);
  return s;
}

// E{D a0(Z)} with a0 = E((1-D) Y | Z) / E(1-D | Z): the treated units'
// mean control outcome, times P(D = 1). Columns (y, d, Z...).
inline ProblemSpec treated_control_mean_spec(const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  auto s_ab = [](const Observation& o) { return -(1.0 - o[1]); };
  auto q = [](const Observation& o) { return (1.0 - o[1]) * o[0]; };
  ProblemSpec s = separable_spec("att_control", concat({"y", "d"}, covariates), 2, s_ab, col(1), q, constant(0.0), -1);
  s.row_check = binary_indicator_check(1);
  return s;
}

// E{a(t(D), L)} - E(Y) for a grid shift t. Columns (y, d, L...), Z = (d, L...).
inline ProblemSpec policy_effect_spec(long shift, std::size_t levels, const std::vector<std::string>& covariates) {
  using namespace catalog_detail;
  const auto u = grid_nodes(levels);
  ProblemSpec s;
  s.name = "policy_effect";
  s.columns = concat({"y", "d"}, covariates);
  s.z_offset = 1;
  s.s_ab = constant(-1.0);
  s.m1 = [u, shift, levels](const Observation& o, const NuisanceFn& h) {
    std::vector<double> z(o.values().begin() + 1, o.values().end());
    const long g = static_cast<long>(grid_index(z[0], levels)) + shift;
    z[0] = u[static_cast<std::size_t>(std::clamp(g, 0L, static_cast<long>(levels) - 1))];
    return h(z);
  };
  s.m2 = [](const Observation& o, const NuisanceFn& h) { return o[0] == 0.0 ? 0.0 : o[0] * h(o.values().subspan(1)); };
  s.s0 = neg(0);
  s.q = col(0);
  s.sab_sign = -1;
  return s;
}

// ---------------------------------------------------------------------------
// Registry

namespace catalog_detail {

inline ParamInfo covariates_param(const std::string& def = "z") {
  return {"covariates", def, "comma-separated covariate column names"};
}

// a = E(R Y | Z) / E(R | Z), b = E(W | Z) / E(R | Z) for an indicator R.
inline NuisancePair ratio_recipe(const FiniteLaw& law, const std::vector<std::string>& covs, const Statistic& r,
                                 const Statistic& ry, const Statistic& w) {
  Strata st(law, covs);
  const auto er = st.mean(r), ery = st.mean(ry), ew = st.mean(w);
  std::vector<double> a(st.size()), b(st.size());
  for (std::size_t k = 0; k < st.size(); ++k) {
    a[k] = ery[k] / er[k];
    b[k] = ew[k] / er[k];
  }
  return {st.function(a, "recipe a"), st.function(b, "recipe b")};
}

inline double mean_of(const FiniteLaw& law, const std::vector<std::string>& covs, const NuisanceFn& f,
                      const Statistic& weight) {
  std::vector<std::size_t> idx;
  for (const auto& c : covs) idx.push_back(law.support().index_of(c));
  return expectation(law, [&](const Observation& o) {
    std::vector<double> z;
    for (std::size_t j : idx) z.push_back(o[j]);
    return weight(o) * f(z);
  });
}

inline NuisancePair zero_pair() { return {NuisanceFn::constant(0.0), NuisanceFn::constant(0.0)}; }

inline CatalogEntry entry_mar_mean() {
  CatalogEntry e;
  e.name = "mar_mean";
  e.title = "Mean of an outcome missing at random (AIPW)";
  e.params = {covariates_param()};
  e.robins_class = true;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("mar_mean", {covariates_param()}, p);
    return Estimand::single(mar_mean_spec(r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("mar_mean", {covariates_param()}, p);
    return law_l0(single_covariate(r.list("covariates"), "mar_mean"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("mar_mean", {covariates_param()}, p);
    return law_l0(single_covariate(r.list("covariates"), "mar_mean"), 0.7);
  };
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("mar_mean", {covariates_param()}, p);
    const auto covs = r.list("covariates");
    const std::size_t d = law.support().index_of("d"), dy = law.support().index_of("dy");
    return std::vector<NuisancePair>{ratio_recipe(law, covs, col(d), col(dy), constant(1.0))};
  };
  e.target = [recipes = e.recipes](const FiniteLaw& law, const Params& p) {
    ParamReader r("mar_mean", {covariates_param()}, p);
    return mean_of(law, r.list("covariates"), recipes(law, p)[0].a, constant(1.0));
  };
  return e;
}

inline CatalogEntry entry_mar_mean_star() {
  CatalogEntry e;
  e.name = "mar_mean_star";
  e.title = "Mean of an outcome missing at random, covariate Z* = (D, Z)";
  e.params = {covariates_param()};
  e.robins_class = true;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("mar_mean_star", {covariates_param()}, p);
    return Estimand::single(mar_mean_star_spec(r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("mar_mean_star", {covariates_param()}, p);
    return law_l0(single_covariate(r.list("covariates"), "mar_mean_star"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("mar_mean_star", {covariates_param()}, p);
    return law_l0(single_covariate(r.list("covariates"), "mar_mean_star"), 0.7);
  };
  // a*(d, z) = E(DY | D = d, Z = z), b*(d, z) = -d / E(D | Z = z).
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("mar_mean_star", {covariates_param()}, p);
    const auto covs = r.list("covariates");
    const std::size_t d = law.support().index_of("d"), dy = law.support().index_of("dy");
    Strata by_z(law, covs);
    const auto e_z = by_z.mean(col(d));
    Strata by_dz(law, concat({"d"}, covs));
    const auto a = by_dz.mean(col(dy));
    std::vector<double> b(by_dz.size());
    for (std::size_t k = 0; k < by_dz.size(); ++k) {
      const auto& lvl = by_dz.levels()[k];
      b[k] = -lvl[0] / e_z[by_z.find(std::span<const double>(lvl).subspan(1))];
    }
    return std::vector<NuisancePair>{{by_dz.function(a, "recipe a*"), by_dz.function(b, "recipe b*")}};
  };
  e.target = [](const FiniteLaw& law, const Params& p) {
    // Same parameter as mar_mean.
    return entry_mar_mean().target(law, p);
  };
  return e;
}

inline CatalogEntry entry_expected_cond_cov() {
  CatalogEntry e;
  e.name = "expected_cond_cov";
  e.title = "Expected conditional covariance E{cov(D, Y | Z)}";
  e.params = {covariates_param()};
  e.robins_class = true;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("expected_cond_cov", {covariates_param()}, p);
    return Estimand::single(expected_cond_cov_spec(r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("expected_cond_cov", {covariates_param()}, p);
    return law_covariance(single_covariate(r.list("covariates"), "expected_cond_cov"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("expected_cond_cov", {covariates_param()}, p);
    return law_covariance(single_covariate(r.list("covariates"), "expected_cond_cov"), 0.7);
  };
  // a = E(Y | Z), b = -E(D | Z).
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("expected_cond_cov", {covariates_param()}, p);
    Strata st(law, r.list("covariates"));
    const std::size_t d = law.support().index_of("d"), y = law.support().index_of("y");
    auto b = st.mean(col(d));
    for (double& v : b) v = -v;
    return std::vector<NuisancePair>{{st.function(st.mean(col(y))), st.function(b)}};
  };
  e.target = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("expected_cond_cov", {covariates_param()}, p);
    Strata st(law, r.list("covariates"));
    const std::size_t d = law.support().index_of("d"), y = law.support().index_of("y");
    const auto ed = st.mean(col(d)), ey = st.mean(col(y));
    const auto edy = st.mean([d, y](const Observation& o) { return o[d] * o[y]; });
    double chi = 0.0;
    for (std::size_t k = 0; k < st.size(); ++k) chi += st.prob(k) * (edy[k] - ed[k] * ey[k]);
    return chi;
  };
  return e;
}

inline std::vector<ParamInfo> mnar_params() {
  return {{"delta", "0.5", "exponential tilt parameter"}, covariates_param()};
}

inline CatalogEntry entry_mnar_tilt() {
  CatalogEntry e;
  e.name = "mnar_tilt";
  e.title = "Mean of an outcome missing not at random under an exponential tilt";
  e.params = mnar_params();
  e.robins_class = true;
  e.newey_chernozhukov_class = false;
  e.build = [](const Params& p) {
    ParamReader r("mnar_tilt", mnar_params(), p);
    const double delta = r.number("delta");
    // With no tilt the parameter equals the MAR mean on every observed-data law.
    if (delta == 0.0) return Estimand::single(mar_mean_spec(r.list("covariates"), "mnar_tilt"));
    return Estimand::single(tilt_spec(delta, r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("mnar_tilt", mnar_params(), p);
    return law_l0(single_covariate(r.list("covariates"), "mnar_tilt"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("mnar_tilt", mnar_params(), p);
    return law_l0(single_covariate(r.list("covariates"), "mnar_tilt"), 0.7);
  };
  // a = E(DY e^{dY} | Z) / E(D e^{dY} | Z), b = E(1-D | Z) / E(D e^{dY} | Z);
  // at delta = 0 the MAR pair.
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("mnar_tilt", mnar_params(), p);
    const double delta = r.number("delta");
    const auto covs = r.list("covariates");
    const std::size_t d = law.support().index_of("d"), dy = law.support().index_of("dy");
    auto tilt = [=](const Observation& o) { return o[d] * std::exp(delta * o[dy]); };
    auto tilt_y = [=](const Observation& o) { return o[dy] * std::exp(delta * o[dy]); };
    if (delta == 0.0) return std::vector<NuisancePair>{ratio_recipe(law, covs, col(d), col(dy), constant(1.0))};
    return std::vector<NuisancePair>{ratio_recipe(law, covs, tilt, tilt_y, one_minus(d))};
  };
  e.target = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("mnar_tilt", mnar_params(), p);
    const double delta = r.number("delta");
    const auto covs = r.list("covariates");
    const std::size_t d = law.support().index_of("d"), dy = law.support().index_of("dy");
    auto tilt = [=](const Observation& o) { return o[d] * std::exp(delta * o[dy]); };
    auto tilt_y = [=](const Observation& o) { return o[dy] * std::exp(delta * o[dy]); };
    const NuisancePair ab = ratio_recipe(law, covs, tilt, tilt_y, one_minus(d));
    return law_mean(law, col(dy)) + mean_of(law, covs, ab.a, one_minus(d));
  };
  return e;
}

inline std::vector<ParamInfo> ct_params() {
  return {{"w", "-0.5,1", "polynomial coefficients c0,c1,... of w(u); must integrate to 0 on [0,1]"},
          {"levels", "11", "odd number of treatment grid levels (also the Simpson nodes)"},
          covariates_param("l")};
}

inline Polynomial read_weight(const ParamReader& r) {
  Polynomial w{r.numbers("w")};
  if (w.coef.empty()) throw ParameterError("continuous_treatment: w needs at least one coefficient");
  if (std::abs(w.integral01()) > 1e-12) {
    throw ParameterError("continuous_treatment: w must integrate to 0 over [0,1], got " + format_double(w.integral01()));
  }
  return w;
}

inline CatalogEntry entry_continuous_treatment() {
  CatalogEntry e;
  e.name = "continuous_treatment";
  e.title = "Weighted dose-response contrast for a treatment on [0,1] (grid-valued)";
  e.params = ct_params();
  e.robins_class = false;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("continuous_treatment", ct_params(), p);
    return Estimand::single(
        continuous_treatment_spec(read_weight(r), read_odd_levels(r, "continuous_treatment"), r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("continuous_treatment", ct_params(), p);
    return law_grid_treatment(read_odd_levels(r, "continuous_treatment"),
                              single_covariate(r.list("covariates"), "continuous_treatment"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("continuous_treatment", ct_params(), p);
    return law_grid_treatment(read_odd_levels(r, "continuous_treatment"),
                              single_covariate(r.list("covariates"), "continuous_treatment"), 0.7);
  };
  // a = E(Y | D, L), b = omega(D) w(D) / P(D | L).
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("continuous_treatment", ct_params(), p);
    const auto covs = r.list("covariates");
    const auto w = read_weight(r);
    const std::size_t levels = read_odd_levels(r, "continuous_treatment");
    const auto omega = simpson_weights(levels);
    const std::size_t y = law.support().index_of("y");
    Strata by_dl(law, concat({"d"}, covs));
    Strata by_l(law, covs);
    const auto a = by_dl.mean(col(y));
    std::vector<double> b(by_dl.size());
    for (std::size_t k = 0; k < by_dl.size(); ++k) {
      const auto& lvl = by_dl.levels()[k];
      const double pl = by_l.prob(by_l.find(std::span<const double>(lvl).subspan(1)));
      const double dv = lvl[0];
      b[k] = omega[grid_index(dv, levels)] * w(dv) / (by_dl.prob(k) / pl);
    }
    return std::vector<NuisancePair>{{by_dl.function(a), by_dl.function(b)}};
  };
  e.target = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("continuous_treatment", ct_params(), p);
    const auto covs = r.list("covariates");
    const auto w = read_weight(r);
    const std::size_t levels = read_odd_levels(r, "continuous_treatment");
    const auto u = grid_nodes(levels);
    const auto omega = simpson_weights(levels);
    const std::size_t y = law.support().index_of("y");
    Strata by_dl(law, concat({"d"}, covs));
    Strata by_l(law, covs);
    const auto mu = by_dl.mean(col(y));
    double chi = 0.0;
    for (std::size_t k = 0; k < by_l.size(); ++k) {
      for (std::size_t g = 0; g < levels; ++g) {
        std::vector<double> key{u[g]};
        key.insert(key.end(), by_l.levels()[k].begin(), by_l.levels()[k].end());
        chi += by_l.prob(k) * omega[g] * w(u[g]) * mu[by_dl.find(key)];
      }
    }
    return chi;
  };
  return e;
}

inline std::vector<ParamInfo> toy_params() {
  return {{"levels", "3", "odd number of grid points for Z on [0,1] (also the Simpson nodes)"}, covariates_param()};
}

inline CatalogEntry entry_toy_ratio() {
  CatalogEntry e;
  e.name = "toy_ratio";
  e.title = "Integral over [0,1] of E(Y1 | Z) / E(Y2 | Z)";
  e.params = toy_params();
  e.robins_class = false;
  e.newey_chernozhukov_class = false;
  e.build = [](const Params& p) {
    ParamReader r("toy_ratio", toy_params(), p);
    return Estimand::single(
        toy_ratio_spec(read_odd_levels(r, "toy_ratio"), single_covariate(r.list("covariates"), "toy_ratio")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("toy_ratio", toy_params(), p);
    return law_toy(read_odd_levels(r, "toy_ratio"), single_covariate(r.list("covariates"), "toy_ratio"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("toy_ratio", toy_params(), p);
    return law_toy(read_odd_levels(r, "toy_ratio"), single_covariate(r.list("covariates"), "toy_ratio"), true);
  };
  // a = E(Y1 | Z) / E(Y2 | Z), b = omega(Z) / {P(Z) E(Y2 | Z)}.
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("toy_ratio", toy_params(), p);
    const std::size_t levels = read_odd_levels(r, "toy_ratio");
    const auto omega = simpson_weights(levels);
    Strata st(law, r.list("covariates"));
    const auto e1 = st.mean(col(law.support().index_of("y1")));
    const auto e2 = st.mean(col(law.support().index_of("y2")));
    std::vector<double> a(st.size()), b(st.size());
    for (std::size_t k = 0; k < st.size(); ++k) {
      a[k] = e1[k] / e2[k];
      b[k] = omega[grid_index(st.levels()[k][0], levels)] / (st.prob(k) * e2[k]);
    }
    return std::vector<NuisancePair>{{st.function(a), st.function(b)}};
  };
  e.target = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("toy_ratio", toy_params(), p);
    const std::size_t levels = read_odd_levels(r, "toy_ratio");
    const auto u = grid_nodes(levels);
    const auto omega = simpson_weights(levels);
    Strata st(law, r.list("covariates"));
    const auto e1 = st.mean(col(law.support().index_of("y1")));
    const auto e2 = st.mean(col(law.support().index_of("y2")));
    double chi = 0.0;
    for (std::size_t g = 0; g < levels; ++g) {
      const std::size_t k = st.find(std::span<const double>(&u[g], 1));
      chi += omega[g] * e1[k] / e2[k];
    }
    return chi;
  };
  return e;
}

inline CatalogEntry entry_ate() {
  CatalogEntry e;
  e.name = "ate";
  e.title = "Average treatment effect (difference of two arm means)";
  e.params = {covariates_param()};
  e.robins_class = true;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("ate", {covariates_param()}, p);
    const auto covs = r.list("covariates");
    return Estimand::difference("ate", arm_mean_spec(1, covs), arm_mean_spec(0, covs));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("ate", {covariates_param()}, p);
    return law_effect(single_covariate(r.list("covariates"), "ate"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("ate", {covariates_param()}, p);
    return law_effect(single_covariate(r.list("covariates"), "ate"), 0.7);
  };
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("ate", {covariates_param()}, p);
    const auto covs = r.list("covariates");
    const std::size_t d = law.support().index_of("d"), y = law.support().index_of("y");
    auto dy = [=](const Observation& o) { return o[d] * o[y]; };
    auto cy = [=](const Observation& o) { return (1.0 - o[d]) * o[y]; };
    return std::vector<NuisancePair>{ratio_recipe(law, covs, col(d), dy, constant(1.0)),
                                     ratio_recipe(law, covs, one_minus(d), cy, constant(1.0))};
  };
  e.target = [recipes = e.recipes](const FiniteLaw& law, const Params& p) {
    ParamReader r("ate", {covariates_param()}, p);
    const auto covs = r.list("covariates");
    const auto ab = recipes(law, p);
    return mean_of(law, covs, ab[0].a, constant(1.0)) - mean_of(law, covs, ab[1].a, constant(1.0));
  };
  return e;
}

inline CatalogEntry entry_nonrespondent_mean() {
  CatalogEntry e;
  e.name = "nonrespondent_mean";
  e.title = "E{(1-D) a(Z)}: outcome mass among non-respondents under MAR";
  e.params = {covariates_param()};
  e.robins_class = true;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("nonrespondent_mean", {covariates_param()}, p);
    return Estimand::single(nonrespondent_mean_spec(r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("nonrespondent_mean", {covariates_param()}, p);
    return law_l0(single_covariate(r.list("covariates"), "nonrespondent_mean"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("nonrespondent_mean", {covariates_param()}, p);
    return law_l0(single_covariate(r.list("covariates"), "nonrespondent_mean"), 0.7);
  };
  // a = E(DY | Z) / E(D | Z), b = E(1-D | Z) / E(D | Z).
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("nonrespondent_mean", {covariates_param()}, p);
    const std::size_t d = law.support().index_of("d"), dy = law.support().index_of("dy");
    return std::vector<NuisancePair>{ratio_recipe(law, r.list("covariates"), col(d), col(dy), one_minus(d))};
  };
  e.target = [recipes = e.recipes](const FiniteLaw& law, const Params& p) {
    ParamReader r("nonrespondent_mean", {covariates_param()}, p);
    const std::size_t d = law.support().index_of("d");
    return mean_of(law, r.list("covariates"), recipes(law, p)[0].a, one_minus(d));
  };
  return e;
}

inline CatalogEntry entry_att() {
  CatalogEntry e;
  e.name = "att";
  e.title = "Average treatment effect on the treated";
  e.params = {covariates_param()};
  // through its nuisance component
  e.robins_class = true;
  e.newey_chernozhukov_class = true;
  // ATT = {E(DY) - E[D a0(Z)]} / E(D).
  e.build = [](const Params& p) {
    ParamReader r("att", {covariates_param()}, p);
    const auto covs = r.list("covariates");
    Estimand est;
    est.name = "att";
    est.components.push_back(sample_mean_spec("treated_outcome", {"y", "d"},
                                              [](const Observation& o) { return o[0] * o[1]; }));
    est.components.push_back(treated_control_mean_spec(covs));
    est.components.push_back(sample_mean_spec("treated_share", {"d"}, [](const Observation& o) { return o[0]; }));
    est.combine = [](std::span<const double> t) { return (t[0] - t[1]) / t[2]; };
    est.gradient = [](std::span<const double> t) {
      return std::vector<double>{1.0 / t[2], -1.0 / t[2], -(t[0] - t[1]) / (t[2] * t[2])};
    };
    return est;
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("att", {covariates_param()}, p);
    return law_effect(single_covariate(r.list("covariates"), "att"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("att", {covariates_param()}, p);
    return law_effect(single_covariate(r.list("covariates"), "att"), 0.7);
  };
  // a0 = E((1-D) Y | Z) / E(1-D | Z), b = E(D | Z) / E(1-D | Z).
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("att", {covariates_param()}, p);
    const std::size_t d = law.support().index_of("d"), y = law.support().index_of("y");
    auto cy = [=](const Observation& o) { return (1.0 - o[d]) * o[y]; };
    return std::vector<NuisancePair>{zero_pair(), ratio_recipe(law, r.list("covariates"), one_minus(d), cy, col(d)),
                                     zero_pair()};
  };
  e.target = [recipes = e.recipes](const FiniteLaw& law, const Params& p) {
    ParamReader r("att", {covariates_param()}, p);
    const std::size_t d = law.support().index_of("d"), y = law.support().index_of("y");
    const double edy = law_mean(law, [=](const Observation& o) { return o[d] * o[y]; });
    const double ed = law_mean(law, col(d));
    return (edy - mean_of(law, r.list("covariates"), recipes(law, p)[1].a, col(d))) / ed;
  };
  return e;
}

inline std::vector<ParamInfo> policy_params() {
  return {{"shift", "1", "grid steps added to the treatment by the policy (clamped to the grid)"},
          {"levels", "11", "odd number of treatment grid levels"},
          covariates_param("l")};
}

inline CatalogEntry entry_policy_effect() {
  CatalogEntry e;
  e.name = "policy_effect";
  e.title = "Average policy effect of shifting a grid-valued treatment";
  e.params = policy_params();
  e.robins_class = false;
  e.newey_chernozhukov_class = true;
  e.build = [](const Params& p) {
    ParamReader r("policy_effect", policy_params(), p);
    return Estimand::single(
        policy_effect_spec(r.integer("shift"), read_odd_levels(r, "policy_effect"), r.list("covariates")));
  };
  e.canned_law = [](const Params& p) {
    ParamReader r("policy_effect", policy_params(), p);
    return law_grid_treatment(read_odd_levels(r, "policy_effect"),
                              single_covariate(r.list("covariates"), "policy_effect"));
  };
  e.invariance_law = [](const Params& p) {
    ParamReader r("policy_effect", policy_params(), p);
    return law_grid_treatment(read_odd_levels(r, "policy_effect"),
                              single_covariate(r.list("covariates"), "policy_effect"), 0.7);
  };
  // a = E(Y | D, L), b = P(t(D) = D | L) / P(D | L) evaluated at the cell.
  e.recipes = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("policy_effect", policy_params(), p);
    const auto covs = r.list("covariates");
    const long shift = r.integer("shift");
    const std::size_t levels = read_odd_levels(r, "policy_effect");
    const std::size_t y = law.support().index_of("y");
    Strata by_dl(law, concat({"d"}, covs));
    const auto a = by_dl.mean(col(y));
    auto t_of = [&](double d) {
      const long g = std::clamp(static_cast<long>(grid_index(d, levels)) + shift, 0L, static_cast<long>(levels) - 1);
      return grid_nodes(levels)[static_cast<std::size_t>(g)];
    };
    std::vector<double> b(by_dl.size(), 0.0);
    // mass of t(D) landing on each cell
    std::vector<double> pushed(by_dl.size(), 0.0);
    for (std::size_t k = 0; k < by_dl.size(); ++k) {
      std::vector<double> key = by_dl.levels()[k];
      key[0] = t_of(key[0]);
      pushed[by_dl.find(key)] += by_dl.prob(k);
    }
    for (std::size_t k = 0; k < by_dl.size(); ++k) b[k] = pushed[k] / by_dl.prob(k);
    return std::vector<NuisancePair>{{by_dl.function(a), by_dl.function(b)}};
  };
  e.target = [](const FiniteLaw& law, const Params& p) {
    ParamReader r("policy_effect", policy_params(), p);
    const auto covs = r.list("covariates");
    const long shift = r.integer("shift");
    const std::size_t levels = read_odd_levels(r, "policy_effect");
    const std::size_t y = law.support().index_of("y");
    Strata by_dl(law, concat({"d"}, covs));
    const auto mu = by_dl.mean(col(y));
    double psi = 0.0;
    for (std::size_t k = 0; k < by_dl.size(); ++k) {
      std::vector<double> key = by_dl.levels()[k];
      const long g = std::clamp(static_cast<long>(grid_index(key[0], levels)) + shift, 0L, static_cast<long>(levels) - 1);
      key[0] = grid_nodes(levels)[static_cast<std::size_t>(g)];
      psi += by_dl.prob(k) * mu[by_dl.find(key)];
    }
    return psi - law_mean(law, col(y));
  };
  return e;
}

}  // namespace catalog_detail

inline const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = [] {
    using namespace catalog_detail;
    return std::vector<CatalogEntry>{entry_mar_mean(),          entry_mar_mean_star(),   entry_expected_cond_cov(),
                                     entry_mnar_tilt(),         entry_continuous_treatment(), entry_toy_ratio(),
                                     entry_ate(),               entry_nonrespondent_mean(),   entry_att(),
                                     entry_policy_effect()};
  }();
  return entries;
}

inline const CatalogEntry& find_entry(const std::string& name) {
  for (const auto& e : catalog()) {
    if (e.name == name) return e;
  }
  throw ParameterError("unknown catalog entry '" + name + "'");
}

inline Estimand get_estimand(const std::string& name, const Params& params = {}) {
  return find_entry(name).build(params);
}

// The single ProblemSpec of a non-composite entry.
inline ProblemSpec get_spec(const std::string& name, const Params& params = {}) {
  Estimand e = get_estimand(name, params);
  if (!e.is_single()) throw ParameterError("entry '" + name + "' is a composite estimand; use get_estimand");
  return e.components.front();
}

inline FiniteLaw canned_law(const std::string& name, const Params& params = {}) {
  return find_entry(name).canned_law(params);
}

// ---------------------------------------------------------------------------
// Validation

struct CheckResult {
  std::string component;
  std::string identity;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::string entry;
  std::vector<CheckResult> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
  // "component/identity" of the first failing check, empty if none.
  std::string first_failure() const {
    for (const auto& c : checks) {
      if (!c.pass) return c.component + "/" + c.identity;
    }
    return {};
  }
};

struct ValidationOptions {
  double tol = 1e-10;
  // finite-difference checks
  double fd_tol = 1e-6;
  double step = 1e-5;
  std::size_t perturbations = 100;
  std::size_t directions = 8;
  std::uint64_t seed = 20240601;
};

namespace catalog_detail {

inline double max_level_gap(const BoundLaw& bl, const NuisanceFn& f, const NuisanceFn& g) {
  double worst = 0.0;
  for (const auto& lvl : bl.levels) worst = std::max(worst, std::abs(f(lvl) - g(lvl)));
  return worst;
}

// Linearized influence function of the estimand at each support point.
inline std::vector<double> composite_influence(const FiniteLaw& law, const Estimand& est) {
  std::vector<double> theta;
  std::vector<std::vector<double>> phi;
  for (const auto& spec : est.components) {
    const BoundLaw bl = bind_law(law, spec);
    const TrueNuisances nu = true_nuisances(bl, spec);
    theta.push_back(chi_exact(bl, spec, nu).value);
    std::vector<double> v(bl.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = uncentered_if(spec, nu.a, nu.b, bl.sample.row(i));
    phi.push_back(std::move(v));
  }
  const auto grad = est.gradient(theta);
  std::vector<double> out(law.size(), 0.0);
  for (std::size_t j = 0; j < phi.size(); ++j) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += grad[j] * (phi[j][i] - theta[j]);
  }
  return out;
}

}  // namespace catalog_detail

// The oracle suite for one entry. Residuals are computed on the canned law
// (and its partner for invariance); recipes and the target recipe are checked
// against the oracle's nuisances and chi.
// A law with the same nuisances as `law`: the covariate marginal is
// reweighted towards higher levels. The toy ratio's b involves the density
// of Z itself, so there the law is its own partner.
inline FiniteLaw invariance_partner(const CatalogEntry& entry, const FiniteLaw& law, const Params& params) {
  if (entry.name == "toy_ratio") return law;
  const auto covs = ParamReader(entry.name, entry.params, params).list("covariates");
  std::map<std::vector<double>, double> rank;
  {
    std::vector<std::size_t> idx;
    for (const auto& c : covs) idx.push_back(law.support().index_of(c));
    for (std::size_t i = 0; i < law.size(); ++i) {
      std::vector<double> k;
      for (std::size_t j : idx) k.push_back(law.support().at(i, j));
      rank[k] = 0.0;
    }
    double r = 1.0;
    for (auto& [k, v] : rank) v = r++;
  }
  return reweight_marginal(law, covs, [&](std::span<const double> k) {
    return rank.at(std::vector<double>(k.begin(), k.end()));
  });
}

inline ValidationReport validate_entry(const CatalogEntry& entry, const Params& params = {},
                                       const ValidationOptions& opt = {},
                                       const std::optional<FiniteLaw>& custom_law = std::nullopt) {
  using namespace catalog_detail;
  ValidationReport rep;
  rep.entry = entry.name;
  auto add = [&](const std::string& comp, const std::string& id, double r, double tol) {
    rep.checks.push_back({comp, id, r, tol, std::isfinite(r) && r < tol});
  };
  auto guarded = [&](const std::string& comp, const std::string& id, double tol, const std::function<double()>& f) {
    try {
      add(comp, id, f(), tol);
    } catch (const Error& e) {
      rep.checks.push_back({comp, id + " (" + e.what() + ")", INFINITY, tol, false});
    }
  };

  const Estimand est = entry.build(params);
  const FiniteLaw law = custom_law ? *custom_law : entry.canned_law(params);
  const FiniteLaw partner = custom_law ? invariance_partner(entry, law, params) : entry.invariance_law(params);
  const auto recipes = entry.recipes(law, params);
  if (recipes.size() != est.components.size()) throw Error(entry.name + ": recipe count does not match components");
  Rng rng(derive_seed(opt.seed, "validate:" + entry.name));

  std::vector<double> theta;
  for (std::size_t c = 0; c < est.components.size(); ++c) {
    const ProblemSpec& spec = est.components[c];
    const std::string& cn = spec.name;
    const BoundLaw bl = bind_law(law, spec);
    const TrueNuisances nu = true_nuisances(bl, spec);
    const ChiExact chi = chi_exact(bl, spec, nu);
    theta.push_back(chi.value);
    if (spec.nuisance_free) continue;

    add(cn, "chi_three_way", chi.residual, opt.tol);
    if (nu.q_route_residual) add(cn, "q_route", *nu.q_route_residual, opt.tol);
    add(cn, "recipe_a", max_level_gap(bl, nu.a, recipes[c].a), opt.tol);
    add(cn, "recipe_b", max_level_gap(bl, nu.b, recipes[c].b), opt.tol);
    guarded(cn, "if_mean_zero", opt.tol, [&] { return std::abs(expected_if(bl, spec, nu.a, nu.b) - chi.value); });
    guarded(cn, "if_mean_zero_recipe", opt.tol,
            [&] { return std::abs(expected_if(bl, spec, recipes[c].a, recipes[c].b) - chi.value); });
    guarded(cn, "moments", opt.tol, [&] {
      double worst = 0.0;
      for (const auto& r : moment_residuals(bl, spec, nu.a, nu.b)) {
        worst = std::max({worst, std::abs(r.m1_equation), std::abs(r.m2_equation)});
      }
      return worst;
    });
    guarded(cn, "mixed_bias", opt.tol, [&] {
      double worst = 0.0;
      for (std::size_t k = 0; k < opt.perturbations; ++k) {
        const NuisanceFn u = random_level_function(bl, rng), v = random_level_function(bl, rng);
        const NuisanceFn a1 = NuisanceFn::perturbed(nu.a, u, 1.0), b1 = NuisanceFn::perturbed(nu.b, v, 1.0);
        const double lhs = expected_if(bl, spec, a1, b1) - chi.value;
        worst = std::max(worst, std::abs(lhs - mixed_bias_term(bl, spec, nu.a, nu.b, a1, b1)));
      }
      return worst;
    });
    guarded(cn, "linearity", opt.tol, [&] {
      const auto obs = observations(bl.sample);
      double worst = 0.0;
      for (std::size_t k = 0; k < 10; ++k) {
        const NuisanceFn h1 = random_level_function(bl, rng), h2 = random_level_function(bl, rng);
        const double a1 = 4.0 * uniform01(rng) - 2.0, a2 = 4.0 * uniform01(rng) - 2.0;
        worst = std::max(worst, check_linearity(spec, h1, h2, a1, a2, obs));
      }
      return worst;
    });
    try {
      std::vector<NuisanceFn> dirs = level_indicators(law, spec);
      for (std::size_t k = 0; k < 3; ++k) dirs.push_back(random_level_function(bl, rng));
      const LossCheck lc = verify_loss_stationarity(law, spec, dirs, opt.step);
      add(cn, "loss_gradient", lc.gradient_residual, opt.fd_tol);
      add(cn, "loss_expansion", lc.expansion_residual, opt.tol);
      add(cn, "loss_minimum", lc.minimum ? 0.0 : 1.0, 0.5);
    } catch (const Error& e) {
      rep.checks.push_back({cn, std::string("loss (") + e.what() + ")", INFINITY, opt.fd_tol, false});
    }
    guarded(cn, "invariance", opt.tol, [&] { return verify_invariance(law, partner, spec); });
    guarded(cn, "delta_method", opt.tol,
            [&] { return verify_delta_mean_zero(law, spec, [](double x) { return 2.0 * x; }); });
  }

  guarded(est.name, "target", opt.tol, [&] { return std::abs(est.combine(theta) - entry.target(law, params)); });
  guarded(est.name, "pathwise_derivative", opt.fd_tol, [&] {
    const auto infl = composite_influence(law, est);
    return verify_pathwise_derivative(
        law, infl, [&](const FiniteLaw& l) { return entry.target(l, params); }, opt.directions, opt.step,
        derive_seed(opt.seed, "pathwise:" + entry.name));
  });
  return rep;
}

inline ValidationReport validate_entry(const std::string& name, const Params& params = {},
                                       const ValidationOptions& opt = {},
                                       const std::optional<FiniteLaw>& custom_law = std::nullopt) {
  return validate_entry(find_entry(name), params, opt, custom_law);
}

// Parameters for validating an estimation request: the canned laws fix the
// covariate names, so those are reset to the entry's defaults.
inline Params validation_params(const CatalogEntry& entry, Params params) {
  params.erase("covariates");
  ParamReader(entry.name, entry.params, params);
  return params;
}

inline void require_valid(const CatalogEntry& entry, const Params& params) {
  const ValidationReport rep = validate_entry(entry, validation_params(entry, params));
  if (!rep.pass()) throw Error("entry '" + entry.name + "' failed oracle validation: " + rep.first_failure());
}

inline nlohmann::json resolved_params(const CatalogEntry& entry, const Params& params) {
  return ParamReader(entry.name, entry.params, params).to_json();
}

}  // namespace mixbias
