#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixbias/dataset.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/random.hpp"

namespace mixbias {

// A probability distribution on finitely many observations. Expectations
// under it are exact sums.
class FiniteLaw {
 public:
  static constexpr double kSumTolerance = 1e-12;

  FiniteLaw() = default;
  FiniteLaw(Dataset support, std::vector<double> probs)
      : support_(std::move(support)), probs_(std::move(probs)) {
    validate();
  }

  const Dataset& support() const { return support_; }
  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  const std::vector<std::string>& columns() const { return support_.columns(); }

 private:
  void validate() const {
    if (support_.rows() != probs_.size()) {
      throw InputError("finite law: " + std::to_string(support_.rows()) + " support points but " +
                       std::to_string(probs_.size()) + " probabilities");
    }
    if (probs_.empty()) throw InputError("finite law: empty support");
    double total = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0) throw InputError("finite law: probabilities must be finite and nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw InputError("finite law: probabilities sum to " + format_double(total) + ", not 1");
    }
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto row_less = [&](std::size_t x, std::size_t y) {
      auto rx = support_.row(x).values();
      auto ry = support_.row(y).values();
      return std::lexicographical_compare(rx.begin(), rx.end(), ry.begin(), ry.end());
    };
    std::sort(order.begin(), order.end(), row_less);
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (!row_less(order[i - 1], order[i])) throw InputError("finite law: duplicate support point");
    }
    for (double v : support_.data()) {
      if (!std::isfinite(v)) throw InputError("finite law: non-finite coordinate");
    }
  }

  Dataset support_;
  std::vector<double> probs_;
};

// Builds a law from (point, probability) pairs, summing duplicates.
class LawBuilder {
 public:
  explicit LawBuilder(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  LawBuilder& add(std::vector<double> point, double prob) {
    if (point.size() != columns_.size()) throw InputError("law builder: point of wrong width");
    mass_[std::move(point)] += prob;
    return *this;
  }

  FiniteLaw build() const {
    std::vector<std::vector<double>> rows;
    std::vector<double> probs;
    for (const auto& [pt, p] : mass_) {
      rows.push_back(pt);
      probs.push_back(p);
    }
    return FiniteLaw(Dataset::from_rows(columns_, rows), std::move(probs));
  }

 private:
  std::vector<std::string> columns_;
  std::map<std::vector<double>, double> mass_;
};

inline FiniteLaw law_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("support") || !j.contains("probs")) {
    throw InputError("law JSON: expected an object with 'support' and 'probs'");
  }
  const auto& sup = j.at("support");
  const auto& pr = j.at("probs");
  if (!sup.is_array() || !pr.is_array()) throw InputError("law JSON: 'support' and 'probs' must be arrays");
  if (sup.empty()) throw InputError("law JSON: empty support");
  std::vector<std::string> columns;
  for (const auto& [k, v] : sup.front().items()) columns.push_back(k);
  std::vector<double> data;
  for (const auto& pt : sup) {
    if (!pt.is_object() || pt.size() != columns.size()) {
      throw InputError("law JSON: every support point must have the coordinates of the first");
    }
    for (const auto& c : columns) {
      if (!pt.contains(c) || !pt.at(c).is_number()) {
        throw InputError("law JSON: support point lacks numeric coordinate '" + c + "'");
      }
      data.push_back(pt.at(c).get<double>());
    }
  }
  std::vector<double> probs;
  for (const auto& p : pr) {
    if (!p.is_number()) throw InputError("law JSON: probabilities must be numbers");
    probs.push_back(p.get<double>());
  }
  return FiniteLaw(Dataset(std::move(columns), std::move(data)), std::move(probs));
}

inline nlohmann::json law_to_json(const FiniteLaw& law) {
  nlohmann::json sup = nlohmann::json::array();
  for (std::size_t i = 0; i < law.size(); ++i) {
    nlohmann::json pt = nlohmann::json::object();
    for (std::size_t j = 0; j < law.columns().size(); ++j) pt[law.columns()[j]] = law.support().at(i, j);
    sup.push_back(pt);
  }
  return {{"support", sup}, {"probs", std::vector<double>(law.probs().begin(), law.probs().end())}};
}

inline FiniteLaw read_law_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open law file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("law file '" + path + "': " + e.what());
  }
  return law_from_json(j);
}

// Inverse-CDF sampler for i.i.d. draws from a finite law.
class LawSampler {
 public:
  explicit LawSampler(const FiniteLaw& law) : law_(law) {
    cdf_.reserve(law.size());
    double acc = 0.0;
    for (double p : law.probs()) cdf_.push_back(acc += p);
    cdf_.back() = 1.0;
  }

  std::size_t draw_index(Rng& rng) const {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
    // Zero-probability points share a cdf value with their predecessor and are never returned.
    return std::min(i, cdf_.size() - 1);
  }

  Dataset sample(std::size_t n, Rng& rng) const {
    const std::size_t w = law_.columns().size();
    std::vector<double> data;
    data.reserve(n * w);
    for (std::size_t k = 0; k < n; ++k) {
      auto r = law_.support().row(draw_index(rng)).values();
      data.insert(data.end(), r.begin(), r.end());
    }
    return Dataset(law_.columns(), std::move(data));
  }

 private:
  const FiniteLaw& law_;
  std::vector<double> cdf_;
};

inline Dataset sample_law(const FiniteLaw& law, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return LawSampler(law).sample(n, rng);
}

// Replaces the marginal of `coords` with `marginal` (a function of the
// coordinate values returning the new stratum probability), keeping every
// conditional law given those coordinates.
inline FiniteLaw reweight_marginal(const FiniteLaw& law, std::span<const std::string> coords,
                                   const std::function<double(std::span<const double>)>& marginal) {
  std::vector<std::size_t> idx;
  for (const auto& c : coords) idx.push_back(law.support().index_of(c));
  auto key_of = [&](std::size_t i) {
    std::vector<double> k;
    for (std::size_t j : idx) k.push_back(law.support().at(i, j));
    return k;
  };
  std::map<std::vector<double>, double> old_mass;
  for (std::size_t i = 0; i < law.size(); ++i) old_mass[key_of(i)] += law.probs()[i];
  double total = 0.0;
  std::map<std::vector<double>, double> new_mass;
  for (const auto& [k, m] : old_mass) total += new_mass[k] = marginal(k);
  std::vector<double> probs(law.size());
  for (std::size_t i = 0; i < law.size(); ++i) {
    const auto k = key_of(i);
    const double m = old_mass.at(k);
    if (m <= 0.0) throw StratumError("reweight_marginal: zero-probability stratum");
    probs[i] = law.probs()[i] / m * new_mass.at(k) / total;
  }
  return FiniteLaw(law.support(), std::move(probs));
}

// P_t(o) = p(o) (1 + t g(o)) for a direction g of mean zero under the law.
inline FiniteLaw tilt_law(const FiniteLaw& law, std::span<const double> direction, double t) {
  std::vector<double> probs(law.size());
  for (std::size_t i = 0; i < law.size(); ++i) probs[i] = law.probs()[i] * (1.0 + t * direction[i]);
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  return FiniteLaw(law.support(), std::move(probs));
}

}  // namespace mixbias
