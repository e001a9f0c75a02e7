#pragma once

// Values frozen from tests/oracle/frozen_values.py (exact rational
// enumeration of the canned laws, independent of the library).

#include <cmath>
#include <initializer_list>
#include <vector>

#include "mixbias/mixbias.hpp"

namespace frozen {

inline constexpr double chi_mar_l0 = 0.6;
inline constexpr double chi_mar_l0_reweighted = 0.68;
inline constexpr double expected_d_l0 = 0.65;
inline constexpr double nonrespondent_l0 = 0.18;
inline constexpr double mnar_half_l0 = 0.6377372782774506;
inline constexpr double cov_law_chi = 0.0858;
inline constexpr double ct_chi = 1.0 / 24.0;
inline constexpr double policy_chi = 23.0 / 528.0;
inline constexpr double toy_chi = 6041.0 / 25160.0;
inline constexpr double toy_a[3] = {0.11764705882352941, 0.24324324324324326, 0.35};
inline constexpr double toy_b[3] = {0.5882352941176471, 1.0810810810810811, 0.16666666666666666};
inline constexpr double ate = 0.2;
inline constexpr double att = 0.2;
inline constexpr double predicted_bias_example = -0.0065;

}  // namespace frozen

namespace testing_support {

inline double at(const mixbias::NuisanceFn& f, std::initializer_list<double> z) {
  const std::vector<double> v(z);
  return f(v);
}

// Dataset whose rows reproduce a finite law's probabilities exactly when
// each probability is a multiple of 1/n.
inline mixbias::Dataset exact_frequencies(const mixbias::FiniteLaw& law, std::size_t n) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < law.size(); ++i) {
    const auto count = static_cast<std::size_t>(std::llround(law.probs()[i] * static_cast<double>(n)));
    const auto r = law.support().row(i).values();
    for (std::size_t c = 0; c < count; ++c) rows.emplace_back(r.begin(), r.end());
  }
  return mixbias::Dataset::from_rows(law.support().columns(), rows);
}

}  // namespace testing_support
