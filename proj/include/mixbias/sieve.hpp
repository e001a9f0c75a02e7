#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixbias/errors.hpp"
#include "mixbias/functional.hpp"
#include "mixbias/nuisance.hpp"

namespace mixbias {

enum class Basis { polynomial, indicator };
enum class Penalty { l2, l1 };

// Hypothesis class for a nuisance regression: a linear expansion in a
// feature map whose first feature is the constant 1.
struct Sieve {
  Basis basis = Basis::indicator;
  int degree = 1;
  bool interactions = true;
  Penalty penalty = Penalty::l2;
  double lambda = 0.0;
};

inline Sieve sieve_from_json(const nlohmann::json& j) {
  Sieve s;
  if (!j.is_object()) throw ConfigError("sieve config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "basis") {
      const auto b = v.get<std::string>();
      if (b == "polynomial") {
        s.basis = Basis::polynomial;
      } else if (b == "indicator" || b == "saturated") {
        s.basis = Basis::indicator;
      } else {
        throw ConfigError("unknown sieve basis '" + b + "'");
      }
    } else if (key == "degree") {
      s.degree = v.get<int>();
    } else if (key == "interactions") {
      s.interactions = v.get<bool>();
    } else if (key == "penalty") {
      const auto p = v.get<std::string>();
      if (p == "l2") {
        s.penalty = Penalty::l2;
      } else if (p == "l1") {
        s.penalty = Penalty::l1;
      } else {
        throw ConfigError("unknown penalty '" + p + "'");
      }
    } else if (key == "lambda") {
      s.lambda = v.get<double>();
    } else {
      throw ConfigError("unknown sieve field '" + key + "'");
    }
  }
  if (s.degree < 0) throw ConfigError("sieve degree must be nonnegative");
  if (!(s.lambda >= 0.0) || !std::isfinite(s.lambda)) throw ConfigError("sieve lambda must be finite and >= 0");
  return s;
}

inline nlohmann::json sieve_to_json(const Sieve& s) {
  return {{"basis", s.basis == Basis::polynomial ? "polynomial" : "indicator"},
          {"degree", s.degree},
          {"interactions", s.interactions},
          {"penalty", s.penalty == Penalty::l2 ? "l2" : "l1"},
          {"lambda", s.lambda}};
}

class FeatureMap {
 public:
  // Monomials of total degree <= degree (all cross terms when
  // `interactions`, pure powers otherwise), constant first.
  static FeatureMap polynomial(std::size_t dim, int degree, bool interactions) {
    FeatureMap f;
    f.kind_ = Basis::polynomial;
    f.dim_ = dim;
    f.exponents_.push_back(std::vector<int>(dim, 0));
    for (int total = 1; total <= degree; ++total) {
      if (interactions) {
        std::vector<int> e(dim, 0);
        f.enumerate(e, 0, total);
      } else {
        for (std::size_t k = 0; k < dim; ++k) {
          std::vector<int> e(dim, 0);
          e[k] = total;
          f.exponents_.push_back(e);
        }
      }
    }
    return f;
  }

  // Constant plus indicators of every cell but the first (the reference).
  static FeatureMap indicator(std::size_t dim, std::vector<std::vector<double>> cells) {
    FeatureMap f;
    f.kind_ = Basis::indicator;
    f.dim_ = dim;
    std::vector<double> idx(cells.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<double>(k);
    f.cells_ = LevelTable(dim, std::move(cells), std::move(idx));
    return f;
  }

  Basis kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return kind_ == Basis::polynomial ? exponents_.size() : std::max<std::size_t>(cells_.size(), 1); }

  double feature(std::size_t j, Covariates z) const {
    if (j == 0) return 1.0;
    if (kind_ == Basis::polynomial) {
      double v = 1.0;
      for (std::size_t k = 0; k < dim_; ++k) {
        for (int p = 0; p < exponents_[j][k]; ++p) v *= z[k];
      }
      return v;
    }
    auto key = cells_.key(j);
    return std::equal(z.begin(), z.end(), key.begin(), key.end()) ? 1.0 : 0.0;
  }

  void features(Covariates z, std::span<double> out) const {
    if (kind_ == Basis::polynomial) {
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = feature(j, z);
      return;
    }
    std::fill(out.begin(), out.end(), 0.0);
    out[0] = 1.0;
    if (auto c = cells_.find(z); c && *c > 0) out[*c] = 1.0;
  }

  double dot(std::span<const double> coef, Covariates z) const {
    if (kind_ == Basis::indicator) {
      double v = coef[0];
      if (auto c = cells_.find(z); c && *c > 0) v += coef[*c];
      return v;
    }
    double v = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) v += coef[j] * feature(j, z);
    return v;
  }

 private:
  void enumerate(std::vector<int>& e, std::size_t k, int remaining) {
    if (k + 1 == e.size()) {
      e[k] = remaining;
      exponents_.push_back(e);
      e[k] = 0;
      return;
    }
    for (int p = remaining; p >= 0; --p) {
      e[k] = p;
      enumerate(e, k + 1, remaining - p);
    }
    e[k] = 0;
  }

  Basis kind_ = Basis::polynomial;
  std::size_t dim_ = 0;
  std::vector<std::vector<int>> exponents_;
  LevelTable cells_;
};

// Feature map for `sieve`; indicator cells are the distinct covariate
// levels of `train`.
inline std::shared_ptr<const FeatureMap> build_feature_map(const Sieve& sieve, const BoundSample& train,
                                                           std::size_t z_dim) {
  if (sieve.basis == Basis::polynomial) {
    return std::make_shared<const FeatureMap>(FeatureMap::polynomial(z_dim, sieve.degree, sieve.interactions));
  }
  std::map<std::vector<double>, int> seen;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto z = train.z(i);
    seen.emplace(std::vector<double>(z.begin(), z.end()), 0);
  }
  std::vector<std::vector<double>> cells;
  for (const auto& [c, unused] : seen) cells.push_back(c);
  return std::make_shared<const FeatureMap>(FeatureMap::indicator(z_dim, std::move(cells)));
}

// theta . phi(z), recorded as a sieve provenance.
inline NuisanceFn sieve_function(std::shared_ptr<const FeatureMap> features, std::vector<double> coef) {
  auto c = std::make_shared<const std::vector<double>>(coef);
  auto f = features;
  return NuisanceFn([f, c](Covariates z) { return f->dot(*c, z); },
                    NuisanceFn::Sieve{std::move(features), std::move(coef)});
}

// The j-th basis function as a nuisance, for evaluating m(O, phi_j).
inline NuisanceFn basis_function(std::shared_ptr<const FeatureMap> features, std::size_t j) {
  return NuisanceFn::analytic([features, j](Covariates z) { return features->feature(j, z); }, "basis");
}

}  // namespace mixbias
