#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mixbias/errors.hpp"

namespace mixbias {

// The covariate vector Z of one observation.
using Covariates = std::span<const double>;

class FeatureMap;

// An evaluable real-valued function of the covariates, with a record of how
// it was obtained. Evaluation is pure.
class NuisanceFn {
 public:
  using Eval = std::function<double(Covariates)>;

  struct Analytic {
    std::string label;
  };
  struct Sieve {
    std::shared_ptr<const FeatureMap> features;
    std::vector<double> coefficients;
  };
  struct Perturbed {
    std::shared_ptr<const NuisanceFn> base;
    std::shared_ptr<const NuisanceFn> direction;
    double scale;
  };
  using Provenance = std::variant<Analytic, Sieve, Perturbed>;

  NuisanceFn() : NuisanceFn(constant(0.0)) {}
  NuisanceFn(Eval eval, Provenance provenance)
      : eval_(std::move(eval)), provenance_(std::move(provenance)) {}

  double operator()(Covariates z) const { return eval_(z); }
  const Provenance& provenance() const { return provenance_; }

  static NuisanceFn analytic(Eval eval, std::string label = "analytic") {
    return NuisanceFn(std::move(eval), Analytic{std::move(label)});
  }

  static NuisanceFn constant(double c) {
    return analytic([c](Covariates) { return c; }, "constant");
  }

  // base + scale * direction
  static NuisanceFn perturbed(NuisanceFn base, NuisanceFn direction, double scale) {
    auto b = std::make_shared<const NuisanceFn>(std::move(base));
    auto d = std::make_shared<const NuisanceFn>(std::move(direction));
    return NuisanceFn([b, d, scale](Covariates z) { return (*b)(z) + scale * (*d)(z); },
                      Perturbed{b, d, scale});
  }

  // alpha1 * h1 + alpha2 * h2
  static NuisanceFn combination(double alpha1, NuisanceFn h1, double alpha2, NuisanceFn h2) {
    return analytic([alpha1, alpha2, h1 = std::move(h1), h2 = std::move(h2)](Covariates z) {
      return alpha1 * h1(z) + alpha2 * h2(z);
    }, "combination");
  }

  // 1{Z = level}
  static NuisanceFn indicator(std::vector<double> level) {
    return analytic([level = std::move(level)](Covariates z) {
      return std::equal(z.begin(), z.end(), level.begin(), level.end()) ? 1.0 : 0.0;
    }, "indicator");
  }

 private:
  Eval eval_;
  Provenance provenance_;
};

// Function defined on a finite set of covariate levels. Lookup is exact;
// evaluating at an unknown level throws.
class LevelTable {
 public:
  LevelTable() = default;
  LevelTable(std::size_t dim, std::vector<std::vector<double>> levels, std::vector<double> values)
      : dim_(dim) {
    if (levels.size() != values.size()) throw InputError("level table: size mismatch");
    std::vector<std::size_t> order(levels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return levels[x] < levels[y]; });
    for (std::size_t i : order) {
      if (levels[i].size() != dim_) throw InputError("level table: level of wrong dimension");
      keys_.insert(keys_.end(), levels[i].begin(), levels[i].end());
      values_.push_back(values[i]);
    }
    for (std::size_t i = 1; i < values_.size(); ++i) {
      if (!less(key(i - 1), key(i))) throw InputError("level table: duplicate level");
    }
  }

  std::size_t size() const { return values_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> key(std::size_t i) const {
    return std::span<const double>(keys_).subspan(i * dim_, dim_);
  }
  double value(std::size_t i) const { return values_[i]; }

  std::optional<std::size_t> find(Covariates z) const {
    std::size_t lo = 0, hi = values_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (less(key(mid), z)) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    if (lo < values_.size() && !less(z, key(lo))) return lo;
    return std::nullopt;
  }

  double operator()(Covariates z) const {
    if (auto i = find(z)) return values_[*i];
    throw InputError("covariate level outside the table's support");
  }

 private:
  static bool less(std::span<const double> x, std::span<const double> y) {
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  }

  std::size_t dim_ = 0;
  std::vector<double> keys_;
  std::vector<double> values_;
};

inline NuisanceFn table_function(LevelTable table, std::string label = "table") {
  auto t = std::make_shared<const LevelTable>(std::move(table));
  return NuisanceFn::analytic([t](Covariates z) { return (*t)(z); }, std::move(label));
}

}  // namespace mixbias
