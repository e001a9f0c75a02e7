#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace mixbias;
using testing_support::at;

namespace {

const std::vector<std::string> kZ = {"z"};

FiniteLaw l0() { return canned_law("mar_mean"); }

double rz(const RieszRepresenter& r, double z) { return r(std::vector<double>{z}); }

}  // namespace

TEST(Expectation, Basics) {
  const FiniteLaw law = l0();
  EXPECT_NEAR(expectation(law, [](const Observation&) { return 1.0; }), 1.0, 1e-15);
  // support point (z=0, d=0, y=0): 0.5 * 0.5 * 0.6 = 0.15
  const std::vector<double> pt = {0, 0, 0, 0};
  EXPECT_NEAR(expectation(law,
                          [&](const Observation& o) {
                            return std::equal(pt.begin(), pt.end(), o.values().begin(), o.values().end()) ? 1.0 : 0.0;
                          }),
              0.15, 1e-15);
  const ProblemSpec spec = get_spec("mar_mean");
  EXPECT_NEAR(expectation(bind_law(law, spec), spec.s_ab), -frozen::expected_d_l0, 1e-15);
}

TEST(Expectation, IndicatorOfPointWithProbabilityPointThree) {
  const FiniteLaw law = LawBuilder({"x"}).add({1}, 0.3).add({2}, 0.7).build();
  EXPECT_DOUBLE_EQ(expectation(law, [](const Observation& o) { return o[0] == 1 ? 1.0 : 0.0; }), 0.3);
}

TEST(CondMean, L0Values) {
  const FiniteLaw law = l0();
  const std::vector<double> one = {1}, zero = {0};
  EXPECT_NEAR(cond_mean(law, [](const Observation& o) { return o[1]; }, kZ, one), 0.8, 1e-15);
  EXPECT_NEAR(cond_mean(law, [](const Observation&) { return 3.5; }, kZ, one), 3.5, 1e-15);
  EXPECT_NEAR(cond_mean(law, [](const Observation& o) { return o[3]; }, kZ, zero), 0.2, 1e-15);
}

TEST(CondMean, ZeroProbabilityStratumIsError) {
  const FiniteLaw law = LawBuilder({"z", "x"}).add({0, 1}, 1.0).add({1, 1}, 0.0).build();
  const std::vector<double> one = {1};
  EXPECT_THROW(cond_mean(law, [](const Observation& o) { return o[1]; }, kZ, one), StratumError);
}

TEST(Riesz, MarMeanM1IsOne) {
  const ProblemSpec spec = get_spec("mar_mean");
  const RieszRepresenter r = riesz(l0(), spec, spec.m1);
  EXPECT_NEAR(rz(r, 0.0), 1.0, 1e-15);
  EXPECT_NEAR(rz(r, 1.0), 1.0, 1e-15);
}

TEST(Riesz, CovarianceM1IsMinusPropensity) {
  const ProblemSpec spec = get_spec("expected_cond_cov");
  const RieszRepresenter r = riesz(l0(), spec, spec.m1);
  EXPECT_NEAR(rz(r, 0.0), -0.5, 1e-15);
  EXPECT_NEAR(rz(r, 1.0), -0.8, 1e-15);
}

TEST(Riesz, ZeroMapHasZeroRepresenter) {
  const ProblemSpec spec = get_spec("mar_mean");
  const RieszRepresenter r = riesz(l0(), spec, [](const Observation&, const NuisanceFn&) { return 0.0; });
  EXPECT_EQ(rz(r, 0.0), 0.0);
  EXPECT_EQ(rz(r, 1.0), 0.0);
}

TEST(Riesz, RepresenterInvariantForRandomFunctions) {
  Rng rng(99);
  for (const auto& e : catalog()) {
    const Estimand est = e.build({});
    const FiniteLaw law = e.canned_law({});
    for (const auto& spec : est.components) {
      if (spec.nuisance_free) continue;
      const BoundLaw bl = bind_law(law, spec);
      for (const LinearMap* m : {&spec.m1, &spec.m2}) {
        const RieszRepresenter r = riesz(bl, *m);
        for (int k = 0; k < 100; ++k) {
          const NuisanceFn h = random_level_function(bl, rng, 3.0);
          const double lhs = expectation(bl, [&](const Observation& o) { return (*m)(o, h); });
          double rhs = 0.0;
          for (std::size_t j = 0; j < bl.levels.size(); ++j) rhs += bl.level_prob[j] * r(bl.levels[j]) * h(bl.levels[j]);
          ASSERT_NEAR(lhs, rhs, 1e-12) << e.name << "/" << spec.name;
        }
      }
    }
  }
}

TEST(TrueNuisances, MarMeanOnL0) {
  const TrueNuisances nu = true_nuisances(l0(), get_spec("mar_mean"));
  EXPECT_NEAR(at(nu.a, {0}), 0.4, 1e-15);
  EXPECT_NEAR(at(nu.a, {1}), 0.8, 1e-15);
  EXPECT_NEAR(at(nu.b, {0}), 2.0, 1e-15);
  EXPECT_NEAR(at(nu.b, {1}), 1.25, 1e-15);
  ASSERT_TRUE(nu.q_route_residual.has_value());
  EXPECT_LT(*nu.q_route_residual, 1e-12);
}

TEST(TrueNuisances, CovarianceIsOutcomeAndMinusPropensity) {
  const ProblemSpec spec = get_spec("expected_cond_cov");
  for (const FiniteLaw& law : {canned_law("expected_cond_cov"), l0()}) {
    const TrueNuisances nu = true_nuisances(law, spec);
    const std::size_t y = law.support().index_of("y"), d = law.support().index_of("d");
    for (double z : {0.0, 1.0}) {
      const std::vector<double> zz = {z};
      EXPECT_NEAR(nu.a(zz), cond_mean(law, [y](const Observation& o) { return o[y]; }, kZ, zz), 1e-14);
      EXPECT_NEAR(nu.b(zz), -cond_mean(law, [d](const Observation& o) { return o[d]; }, kZ, zz), 1e-14);
    }
  }
}

TEST(TrueNuisances, UntiltedTiltComponentsMatchMar) {
  const FiniteLaw law = l0();
  const TrueNuisances mar = true_nuisances(law, get_spec("mar_mean"));
  const ProblemSpec t0 = tilt_spec(0.0, {"z"});
  const TrueNuisances tilt = true_nuisances(law, t0);
  for (double z : {0.0, 1.0}) {
    EXPECT_NEAR(at(tilt.a, {z}), at(mar.a, {z}), 1e-15);
  }
  // chi = E[DY + (1 - D) a] = chi_mar at delta = 0
  EXPECT_NEAR(chi_exact(law, t0).value, frozen::chi_mar_l0, 1e-15);
}

TEST(TrueNuisances, DegenerateDenominatorIsError) {
  ProblemSpec spec = get_spec("mar_mean");
  spec.s_ab = [](const Observation& o) { return o[2] == 1.0 ? 0.0 : -o[1]; };
  EXPECT_THROW(true_nuisances(l0(), spec), DegeneracyError);
}

TEST(ChiExact, CanonicalValues) {
  EXPECT_NEAR(chi_exact(l0(), get_spec("mar_mean")).value, frozen::chi_mar_l0, 1e-15);
  EXPECT_LT(chi_exact(l0(), get_spec("mar_mean")).residual, 1e-12);
  // Y independent of D given Z in L0.
  EXPECT_NEAR(chi_exact(l0(), get_spec("expected_cond_cov")).value, 0.0, 1e-15);
  EXPECT_NEAR(chi_exact(canned_law("expected_cond_cov"), get_spec("expected_cond_cov")).value, frozen::cov_law_chi,
              1e-15);
  EXPECT_NEAR(chi_exact(l0(), get_spec("mnar_tilt")).value, frozen::mnar_half_l0, 1e-14);
  EXPECT_NEAR(chi_exact(l0(), get_spec("nonrespondent_mean")).value, frozen::nonrespondent_l0, 1e-15);
  EXPECT_NEAR(chi_exact(canned_law("continuous_treatment"), get_spec("continuous_treatment")).value, frozen::ct_chi,
              1e-14);
  EXPECT_NEAR(chi_exact(canned_law("policy_effect"), get_spec("policy_effect")).value, frozen::policy_chi, 1e-14);
}

TEST(ChiExact, ToyRatioIsGridWeightedSumOfA) {
  const ProblemSpec spec = get_spec("toy_ratio");
  const FiniteLaw law = canned_law("toy_ratio");
  const TrueNuisances nu = true_nuisances(law, spec);
  const double w[3] = {1.0 / 6, 4.0 / 6, 1.0 / 6};
  const double z[3] = {0.0, 0.5, 1.0};
  double sum = 0.0;
  for (int g = 0; g < 3; ++g) {
    EXPECT_NEAR(at(nu.a, {z[g]}), frozen::toy_a[g], 1e-15);
    EXPECT_NEAR(at(nu.b, {z[g]}), frozen::toy_b[g], 1e-14);
    sum += w[g] * at(nu.a, {z[g]});
  }
  const ChiExact chi = chi_exact(law, spec);
  EXPECT_NEAR(chi.value, sum, 1e-15);
  EXPECT_NEAR(chi.value, frozen::toy_chi, 1e-15);
  EXPECT_LT(chi.residual, 1e-12);
}

TEST(ChiExact, ThreeWayConsistencyForEveryEntry) {
  for (const auto& e : catalog()) {
    const FiniteLaw law = e.canned_law({});
    for (const auto& spec : e.build({}).components) EXPECT_LT(chi_exact(law, spec).residual, 1e-12) << e.name;
  }
}

TEST(MixedBias, TrivialPerturbations) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = l0();
  const TrueNuisances nu = true_nuisances(law, spec);
  EXPECT_LT(verify_mixed_bias(law, spec, nu.a, nu.b, nu.a, nu.b), 1e-15);
  const NuisanceFn a1 = NuisanceFn::perturbed(nu.a, NuisanceFn::constant(1.0), 0.1);
  EXPECT_LT(verify_mixed_bias(law, spec, nu.a, nu.b, a1, nu.b), 1e-15);
  const BoundLaw bl = bind_law(law, spec);
  EXPECT_LT(std::abs(expected_if(bl, spec, a1, nu.b) - frozen::chi_mar_l0), 1e-15);
}

TEST(MixedBias, RandomPerturbationsOnL0) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = l0();
  const TrueNuisances nu = true_nuisances(law, spec);
  const BoundLaw bl = bind_law(law, spec);
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const NuisanceFn a1 = NuisanceFn::perturbed(nu.a, random_level_function(bl, rng), 1.0);
    const NuisanceFn b1 = NuisanceFn::perturbed(nu.b, random_level_function(bl, rng), 1.0);
    ASSERT_LT(verify_mixed_bias(law, spec, nu.a, nu.b, a1, b1), 1e-10);
  }
}

TEST(MixedBias, BiasIsNotZeroWhenBothWrong) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = l0();
  const TrueNuisances nu = true_nuisances(law, spec);
  const NuisanceFn a1 = NuisanceFn::perturbed(nu.a, NuisanceFn::constant(1.0), 0.1);
  const NuisanceFn b1 = NuisanceFn::perturbed(nu.b, NuisanceFn::constant(1.0), 0.1);
  const BoundLaw bl = bind_law(law, spec);
  EXPECT_NEAR(expected_if(bl, spec, a1, b1) - frozen::chi_mar_l0, frozen::predicted_bias_example, 1e-15);
}

TEST(Moments, HoldAtOracleNuisances) {
  for (const auto& e : catalog()) {
    const FiniteLaw law = e.canned_law({});
    for (const auto& spec : e.build({}).components) {
      if (spec.nuisance_free) continue;
      EXPECT_LT(verify_moments(law, spec), 1e-10) << e.name;
    }
  }
}

TEST(Moments, ShiftedBExposesSabMass) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = l0();
  const TrueNuisances nu = true_nuisances(law, spec);
  const NuisanceFn b1 = NuisanceFn::perturbed(nu.b, NuisanceFn::constant(1.0), 1.0);
  for (const auto& r : moment_residuals(bind_law(law, spec), spec, nu.a, b1)) {
    // E[S_ab 1{Z = z}] = -P(Z = z) e(z)
    const double e = r.level[0] == 0 ? 0.5 : 0.8;
    EXPECT_NEAR(std::abs(r.m1_equation), 0.5 * e, 1e-15);
    EXPECT_NEAR(r.m2_equation, 0.0, 1e-15);
  }
}

TEST(Moments, ZeroDirectionGivesZero) {
  const ProblemSpec spec = get_spec("mar_mean");
  const BoundLaw bl = bind_law(l0(), spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  const NuisanceFn h = NuisanceFn::constant(0.0);
  const double r = expectation(bl, [&](const Observation& o) {
    return spec.s_ab(o) * h(spec.z(o)) * nu.b(spec.z(o)) + spec.m1(o, h);
  });
  EXPECT_EQ(r, 0.0);
}

TEST(Loss, StationaryAtOracleNuisances) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = l0();
  const auto dirs = level_indicators(law, spec);
  const LossCheck lc = verify_loss_stationarity(law, spec, dirs, 1e-5);
  EXPECT_LT(lc.gradient_residual, 1e-8);
  EXPECT_LT(lc.expansion_residual, 1e-12);
  EXPECT_TRUE(lc.minimum);
  const std::vector<NuisanceFn> zero = {NuisanceFn::constant(0.0)};
  EXPECT_EQ(verify_loss_stationarity(law, spec, zero, 1e-5).gradient_residual, 0.0);
}

TEST(Loss, QuadraticExpansionIsExact) {
  const ProblemSpec spec = get_spec("expected_cond_cov");
  const FiniteLaw law = canned_law("expected_cond_cov");
  const BoundLaw bl = bind_law(law, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const NuisanceFn u = random_level_function(bl, rng, 2.0);
    for (Side side : {Side::a, Side::b}) {
      const NuisanceFn& g = side == Side::a ? nu.a : nu.b;
      const double diff = population_loss(bl, spec, side, NuisanceFn::perturbed(g, u, 1.0)) -
                          population_loss(bl, spec, side, g);
      const double quad = spec.sab_sign * expectation(bl, [&](const Observation& o) {
        const double uz = u(spec.z(o));
        return spec.s_ab(o) * uz * uz / 2.0;
      });
      EXPECT_NEAR(diff, quad, 1e-12);
    }
  }
}

TEST(Loss, WrongDeclaredSignIsError) {
  ProblemSpec spec = get_spec("mar_mean");
  spec.sab_sign = 1;
  const auto dirs = level_indicators(l0(), spec);
  EXPECT_THROW(verify_loss_stationarity(l0(), spec, dirs, 1e-5), SignError);
}

TEST(Loss, MixedSignIsError) {
  ProblemSpec spec = get_spec("mar_mean");
  spec.s_ab = [](const Observation& o) { return o[2] == 1.0 ? o[1] : -o[1]; };
  const auto dirs = level_indicators(l0(), spec);
  EXPECT_THROW(verify_loss_stationarity(l0(), spec, dirs, 1e-5), SignError);
}

TEST(IfMeanZero, EveryEntryOnItsCannedLaw) {
  for (const auto& e : catalog()) {
    const FiniteLaw law = e.canned_law({});
    for (const auto& spec : e.build({}).components) EXPECT_LT(verify_if_mean_zero(law, spec), 1e-10) << e.name;
  }
}

TEST(IfMeanZero, ConstantSpec) {
  const ProblemSpec spec = sample_mean_spec("c", {"z"}, [](const Observation&) { return 4.0; });
  EXPECT_EQ(verify_if_mean_zero(l0(), spec), 0.0);
  EXPECT_EQ(chi_exact(l0(), spec).value, 4.0);
}

TEST(IfMeanZero, TiltOnBinaryOutcome) {
  EXPECT_LT(verify_if_mean_zero(l0(), tilt_spec(0.5, {"z"})), 1e-10);
}

TEST(IfMeanZero, FlippedBIsDetectedOnlyWithWrongA) {
  const ProblemSpec spec = get_spec("mar_mean");
  const TrueNuisances nu = true_nuisances(l0(), spec);
  const NuisanceFn flipped = NuisanceFn::combination(-1.0, nu.b, 0.0, nu.b);
  EXPECT_LT(verify_if_mean_zero(l0(), spec, nu.a, flipped), 1e-15);
  // E[-D (0.1)(-2 b)] = 0.2 E[D / e(Z)]
  const NuisanceFn shifted = NuisanceFn::perturbed(nu.a, NuisanceFn::constant(1.0), 0.1);
  EXPECT_NEAR(verify_if_mean_zero(l0(), spec, shifted, flipped), 0.2, 1e-14);
}

TEST(Invariance, MarginalReweightingKeepsIntegrand) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw l1 = l0();
  const FiniteLaw l2 = reweight_marginal(l1, kZ, [](std::span<const double> z) { return z[0] == 0 ? 0.3 : 0.7; });
  EXPECT_LT(verify_invariance(l1, l2, spec), 1e-15);
  EXPECT_NEAR(chi_exact(l2, spec).value, frozen::chi_mar_l0_reweighted, 1e-15);
  EXPECT_EQ(verify_invariance(l1, l1, spec), 0.0);
  const ProblemSpec cov = get_spec("expected_cond_cov");
  const FiniteLaw c1 = canned_law("expected_cond_cov");
  const FiniteLaw c2 = reweight_marginal(c1, kZ, [](std::span<const double> z) { return z[0] == 0 ? 0.1 : 0.9; });
  EXPECT_LT(verify_invariance(c1, c2, cov), 1e-15);
  EXPECT_GT(std::abs(chi_exact(c1, cov).value - chi_exact(c2, cov).value), 1e-3);
}

TEST(Invariance, DifferentNuisancesAreRejected) {
  const ProblemSpec spec = get_spec("mar_mean");
  EXPECT_THROW(verify_invariance(l0(), canned_law("expected_cond_cov"), spec), Error);
}

TEST(DeltaMethod, SquareTransformHasMeanZeroIf) {
  for (const auto& e : catalog()) {
    const FiniteLaw law = e.canned_law({});
    for (const auto& spec : e.build({}).components) {
      EXPECT_LT(verify_delta_mean_zero(law, spec, [](double x) { return 2 * x; }), 1e-10) << e.name;
    }
  }
}

TEST(Pathwise, WrongInfluenceFunctionFailsDerivativeCheck) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = l0();
  const BoundLaw bl = bind_law(law, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  const double chi = chi_exact(bl, spec, nu).value;
  std::vector<double> good(law.size()), bad(law.size());
  for (std::size_t i = 0; i < law.size(); ++i) {
    const Observation o = bl.sample.row(i);
    good[i] = uncentered_if(spec, nu.a, nu.b, o) - chi;
    // plug-in part only
    bad[i] = nu.a(spec.z(o)) - chi;
  }
  auto target = [&](const FiniteLaw& l) { return chi_exact(l, spec).value; };
  EXPECT_LT(verify_pathwise_derivative(law, good, target, 5, 1e-5, 1), 1e-6);
  EXPECT_GT(verify_pathwise_derivative(law, bad, target, 5, 1e-5, 1), 1e-3);
}

TEST(FiniteLawJson, RoundTripAndValidation) {
  const FiniteLaw law = l0();
  const FiniteLaw back = law_from_json(law_to_json(law));
  ASSERT_EQ(back.size(), law.size());
  for (std::size_t i = 0; i < law.size(); ++i) EXPECT_EQ(back.probs()[i], law.probs()[i]);
  EXPECT_THROW(law_from_json(nlohmann::json::parse(R"({"support":[{"z":0},{"z":1}],"probs":[0.5,0.6]})")),
               InputError);
  EXPECT_THROW(law_from_json(nlohmann::json::parse(R"({"support":[{"z":0},{"z":0}],"probs":[0.5,0.5]})")),
               InputError);
  EXPECT_THROW(law_from_json(nlohmann::json::parse(R"({"support":[{"z":0}],"probs":[-1, 2]})")), InputError);
  EXPECT_THROW(law_from_json(nlohmann::json::parse(R"({"probs":[1]})")), InputError);
}

TEST(FiniteLaw, CannedLawsSumToOne) {
  for (const auto& e : catalog()) {
    const FiniteLaw law = e.canned_law({});
    double s = 0.0;
    for (double p : law.probs()) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12) << e.name;
  }
}
