#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixbias/errors.hpp"
#include "mixbias/functional.hpp"

namespace mixbias {

// A target psi = g(theta_1, ..., theta_J) of component parameters, each
// encoded as a ProblemSpec (a mixed-bias triplet or a nuisance-free sample
// mean). A lone component with the identity map is the common case.
struct Estimand {
  using Map = std::function<double(std::span<const double>)>;
  using Gradient = std::function<std::vector<double>(std::span<const double>)>;

  std::string name;
  std::vector<ProblemSpec> components;
  Map combine;
  Gradient gradient;
  bool identity = false;

  static Estimand single(ProblemSpec spec) {
    Estimand e;
    e.name = spec.name;
    e.components.push_back(std::move(spec));
    e.combine = [](std::span<const double> t) { return t[0]; };
    e.gradient = [](std::span<const double>) { return std::vector<double>{1.0}; };
    e.identity = true;
    return e;
  }

  // theta_1 - theta_2
  static Estimand difference(std::string name, ProblemSpec first, ProblemSpec second) {
    Estimand e;
    e.name = std::move(name);
    e.components.push_back(std::move(first));
    e.components.push_back(std::move(second));
    e.combine = [](std::span<const double> t) { return t[0] - t[1]; };
    e.gradient = [](std::span<const double>) { return std::vector<double>{1.0, -1.0}; };
    return e;
  }

  bool is_single() const { return identity && components.size() == 1; }
  const ProblemSpec& spec() const {
    if (!is_single()) throw ConfigError("estimand '" + name + "' is composite");
    return components.front();
  }

  // Union of component columns, in first-seen order.
  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    for (const auto& c : components) {
      for (const auto& col : c.columns) {
        if (std::find(out.begin(), out.end(), col) == out.end()) out.push_back(col);
      }
    }
    return out;
  }
};

// Sample-mean component E[f(O)] with uncentered influence function f(O).
inline ProblemSpec sample_mean_spec(std::string name, std::vector<std::string> columns, Statistic f) {
  ProblemSpec s;
  s.name = std::move(name);
  s.columns = std::move(columns);
  s.z_offset = s.columns.size();
  s.s_ab = [](const Observation&) { return 0.0; };
  s.m1 = [](const Observation&, const NuisanceFn&) { return 0.0; };
  s.m2 = [](const Observation&, const NuisanceFn&) { return 0.0; };
  s.s0 = std::move(f);
  s.sab_sign = 1;
  s.nuisance_free = true;
  return s;
}

}  // namespace mixbias
