#pragma once

// Functional representation of a parameter with the mixed bias property.
//
// A parameter is encoded by four components evaluated on an observation O:
//
//   chi + IF(O) = S_ab(O) a(Z) b(Z) + m1(O, a) + m2(O, b) + S0(O)
//
// where m1 and m2 are linear in their function argument. The
// left-hand side is what `uncentered_if` returns; it depends on the law only
// through the nuisance pair (a, b).

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixbias/dataset.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/nuisance.hpp"

namespace mixbias {

using Statistic = std::function<double(const Observation&)>;
using LinearMap = std::function<double(const Observation&, const NuisanceFn&)>;
using RowCheck = std::function<void(const Observation&)>;

struct SeparableForm {
  Statistic s_a;
  Statistic s_b;
};

struct ProblemSpec {
  std::string name;
  // Required columns in observation order. Z is the trailing block starting
  // at z_offset.
  std::vector<std::string> columns;
  std::size_t z_offset = 0;

  Statistic s_ab;
  LinearMap m1;
  LinearMap m2;
  Statistic s0;

  // Present when m2(O, h) = q(O) h(Z).
  std::optional<Statistic> q;
  // Present when m1(O, h) = s_a(O) h(Z) and m2(O, h) = s_b(O) h(Z).
  std::optional<SeparableForm> separable;

  // Declared sign of E(S_ab | Z).
  int sab_sign = -1;
  // True for plain sample means (S_ab = m1 = m2 = 0); no nuisances to fit.
  bool nuisance_free = false;
  // Extra row-level constraints, e.g. d in {0,1} and d = 0 implies dy = 0.
  RowCheck row_check;

  std::span<const std::string> covariate_names() const {
    return std::span<const std::string>(columns).subspan(z_offset);
  }
  std::size_t z_dim() const { return columns.size() - z_offset; }
  Covariates z(const Observation& o) const { return o.values().subspan(z_offset); }
};

// A table projected onto a spec's required columns (in spec order) and
// checked against its row constraints.
class BoundSample {
 public:
  BoundSample() = default;
  BoundSample(Dataset table, std::size_t z_offset) : table_(std::move(table)), z_offset_(z_offset) {}

  std::size_t size() const { return table_.rows(); }
  bool empty() const { return table_.empty(); }
  Observation row(std::size_t i) const { return table_.row(i); }
  Covariates z(std::size_t i) const { return table_.row(i).values().subspan(z_offset_); }
  std::size_t z_offset() const { return z_offset_; }
  const Dataset& table() const { return table_; }

  BoundSample subset(std::span<const std::size_t> rows) const {
    return BoundSample(table_.subset(rows), z_offset_);
  }

 private:
  Dataset table_;
  std::size_t z_offset_ = 0;
};

inline BoundSample bind(const Dataset& data, const ProblemSpec& spec) {
  Dataset table = data.select(spec.columns);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const Observation o = table.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) {
      if (!std::isfinite(o[j])) {
        throw InputError("row " + std::to_string(i) + ": column '" + spec.columns[j] + "' is not finite");
      }
    }
    if (spec.row_check) {
      try {
        spec.row_check(o);
      } catch (const InputError& e) {
        throw InputError("row " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  return BoundSample(std::move(table), spec.z_offset);
}

namespace detail {

inline double finite_or_throw(double v, const char* component) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in component ") + component);
  return v;
}

template <typename F>
auto with_row_context(std::size_t row, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError("row " + std::to_string(row) + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError("row " + std::to_string(row) + ": " + e.what());
  }
}

}  // namespace detail

// s_ab(o) a(z) b(z) + m1(o, a) + m2(o, b) + s0(o), i.e. the influence
// function without the -chi term.
inline double uncentered_if(const ProblemSpec& spec, const NuisanceFn& a, const NuisanceFn& b,
                            const Observation& o) {
  const Covariates z = spec.z(o);
  const double sab = detail::finite_or_throw(spec.s_ab(o), "s_ab");
  double product = 0.0;
  if (sab != 0.0) {
    product = sab * detail::finite_or_throw(a(z), "a") * detail::finite_or_throw(b(z), "b");
  }
  const double t1 = detail::finite_or_throw(spec.m1(o, a), "m1");
  const double t2 = detail::finite_or_throw(spec.m2(o, b), "m2");
  const double t0 = detail::finite_or_throw(spec.s0(o), "s0");
  return product + t1 + t2 + t0;
}

inline std::vector<double> if_values(const ProblemSpec& spec, const NuisanceFn& a, const NuisanceFn& b,
                                     const BoundSample& sample) {
  std::vector<double> out(sample.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = detail::with_row_context(i, [&] { return uncentered_if(spec, a, b, sample.row(i)); });
  }
  return out;
}

// Empirical mean of the uncentered influence function: the one-step estimate.
inline double one_step_value(const ProblemSpec& spec, const NuisanceFn& a, const NuisanceFn& b,
                             const BoundSample& sample) {
  if (sample.empty()) throw InputError("one_step_value: empty dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    sum += detail::with_row_context(i, [&] { return uncentered_if(spec, a, b, sample.row(i)); });
  }
  return sum / static_cast<double>(sample.size());
}

// Empirical mean of m1(O, a) + S0.
inline double plugin_value(const ProblemSpec& spec, const NuisanceFn& a, const BoundSample& sample) {
  if (sample.empty()) throw InputError("plugin_value: empty dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    sum += detail::with_row_context(i, [&] {
      const Observation o = sample.row(i);
      return detail::finite_or_throw(spec.m1(o, a), "m1") + detail::finite_or_throw(spec.s0(o), "s0");
    });
  }
  return sum / static_cast<double>(sample.size());
}

// Max over the sample and over m1, m2 of
// |m(o, alpha1 h1 + alpha2 h2) - alpha1 m(o, h1) - alpha2 m(o, h2)|.
inline double check_linearity(const ProblemSpec& spec, const NuisanceFn& h1, const NuisanceFn& h2,
                              double alpha1, double alpha2, std::span<const Observation> sample) {
  const NuisanceFn h = NuisanceFn::combination(alpha1, h1, alpha2, h2);
  double worst = 0.0;
  for (const Observation& o : sample) {
    for (const LinearMap* m : {&spec.m1, &spec.m2}) {
      const double lhs = (*m)(o, h);
      const double rhs = alpha1 * (*m)(o, h1) + alpha2 * (*m)(o, h2);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

inline std::vector<Observation> observations(const BoundSample& sample) {
  std::vector<Observation> out;
  out.reserve(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) out.push_back(sample.row(i));
  return out;
}

}  // namespace mixbias
