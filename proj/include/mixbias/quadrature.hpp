#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mixbias/errors.hpp"

namespace mixbias {

// Equally spaced nodes g / (levels - 1) on [0, 1].
inline std::vector<double> grid_nodes(std::size_t levels) {
  if (levels < 2) throw ParameterError("a grid needs at least 2 levels");
  std::vector<double> u(levels);
  for (std::size_t g = 0; g < levels; ++g) u[g] = static_cast<double>(g) / static_cast<double>(levels - 1);
  return u;
}

// Composite Simpson weights on grid_nodes(levels); levels must be odd.
inline std::vector<double> simpson_weights(std::size_t levels) {
  if (levels < 3 || levels % 2 == 0) throw ParameterError("Simpson quadrature needs an odd number (>= 3) of nodes");
  const double h = 1.0 / static_cast<double>(levels - 1);
  std::vector<double> w(levels);
  for (std::size_t g = 0; g < levels; ++g) {
    const double c = (g == 0 || g + 1 == levels) ? 1.0 : (g % 2 ? 4.0 : 2.0);
    w[g] = h / 3.0 * c;
  }
  return w;
}

// c0 + c1 u + c2 u^2 + ...
struct Polynomial {
  std::vector<double> coef;

  double operator()(double u) const {
    double v = 0.0;
    for (std::size_t k = coef.size(); k-- > 0;) v = v * u + coef[k];
    return v;
  }

  // Exact integral over [0, 1].
  double integral01() const {
    double s = 0.0;
    for (std::size_t k = 0; k < coef.size(); ++k) s += coef[k] / static_cast<double>(k + 1);
    return s;
  }
};

}  // namespace mixbias
