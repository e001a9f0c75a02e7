// Library walk-through: exact checks on a finite law, then a cross-fitted
// estimate from a sample of it.

#include <iostream>

#include "mixbias/mixbias.hpp"

int main() {
  using namespace mixbias;

  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = canned_law("mar_mean");

  const ChiExact chi = chi_exact(law, spec);
  std::cout << "chi = " << chi.value << " (three-way residual " << chi.residual << ")\n";

  const TrueNuisances nu = true_nuisances(law, spec);
  for (double z : {0.0, 1.0}) {
    const double zz[] = {z};
    std::cout << "a(" << z << ") = " << nu.a(zz) << ", b(" << z << ") = " << nu.b(zz) << "\n";
  }

  // Bias of the one-step at a wrong pair is the product of the two errors.
  const NuisanceFn a_wrong = NuisanceFn::perturbed(nu.a, NuisanceFn::constant(1.0), 0.1);
  const NuisanceFn b_wrong = NuisanceFn::perturbed(nu.b, NuisanceFn::constant(1.0), 0.1);
  const BoundLaw bl = bind_law(law, spec);
  std::cout << "E[IF(a', b')] - chi = " << expected_if(bl, spec, a_wrong, b_wrong) - chi.value
            << ", product term = " << mixed_bias_term(bl, spec, nu.a, nu.b, a_wrong, b_wrong) << "\n";

  const Dataset data = sample_law(law, 2000, 7);
  const Estimand est = Estimand::single(spec);
  const EstimateReport r = cross_fit_estimate(data, est, make_learner(default_learner(spec, Side::a), Side::a),
                                              make_learner(default_learner(spec, Side::b), Side::b), 2, 11);
  std::cout << "estimate " << r.estimate << " (se " << r.se << "), 95% CI [" << r.ci_low << ", " << r.ci_high
            << "]\n";
  return 0;
}
