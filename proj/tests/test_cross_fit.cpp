#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"

using namespace mixbias;

namespace {

Learner riesz_learner(Side side) { return make_learner(LearnerConfig{}, side); }

EstimateReport oracle_estimate(const Dataset& data, const ProblemSpec& spec, const FiniteLaw& law, std::size_t k,
                               std::uint64_t seed) {
  const TrueNuisances nu = true_nuisances(law, spec);
  return cross_fit_estimate(data, spec, fixed_learner(nu.a), fixed_learner(nu.b), k, seed);
}

}  // namespace

TEST(Folds, SizesDifferByAtMostOne) {
  for (auto [n, k] : {std::pair<std::size_t, std::size_t>{4, 2}, {5, 2}, {10, 3}, {7, 7}}) {
    const auto f = split_folds(n, k, 3);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t id : f) ++count[id];
    EXPECT_LE(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1u);
  }
  const auto f5 = split_folds(5, 2, 1);
  EXPECT_EQ(std::count(f5.begin(), f5.end(), 0u), 3);
  EXPECT_EQ(split_folds(100, 5, 42), split_folds(100, 5, 42));
  EXPECT_NE(split_folds(100, 5, 42), split_folds(100, 5, 43));
  EXPECT_THROW(split_folds(3, 4, 1), ConfigError);
  EXPECT_THROW(split_folds(3, 1, 1), ConfigError);
}

TEST(CrossFit, MarMeanOnL0CoversTruth) {
  const ProblemSpec spec = get_spec("mar_mean");
  const Dataset d = sample_law(canned_law("mar_mean"), 2000, 21);
  const EstimateReport r = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 2, 5);
  EXPECT_NEAR(r.estimate, frozen::chi_mar_l0, 4.0 * r.se);
  EXPECT_GT(r.se, 0.0);
  EXPECT_LT(r.se, 0.05);
  EXPECT_NEAR(r.ci_high - r.ci_low, 2.0 * 1.959963984540054 * r.se, 1e-12);
  EXPECT_EQ(r.n, 2000u);
  EXPECT_EQ(r.fold_sizes, (std::vector<std::size_t>{1000, 1000}));
}

TEST(CrossFit, DeterministicGivenSeed) {
  const ProblemSpec spec = get_spec("mar_mean");
  const Dataset d = sample_law(canned_law("mar_mean"), 500, 2);
  const auto r1 = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 3, 9);
  const auto r2 = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 3, 9);
  EXPECT_EQ(r1.estimate, r2.estimate);
  EXPECT_EQ(r1.se, r2.se);
  EXPECT_EQ(r1.if_values, r2.if_values);
}

TEST(CrossFit, OracleLearnersReproduceOneStepForAnyFolds) {
  const ProblemSpec spec = get_spec("mar_mean");
  const FiniteLaw law = canned_law("mar_mean");
  const Dataset d = sample_law(law, 777, 3);
  const TrueNuisances nu = true_nuisances(law, spec);
  const double one_step = one_step_value(spec, nu.a, nu.b, bind(d, spec));
  for (std::size_t k : {2, 3, 5}) {
    for (std::uint64_t seed : {1, 2}) EXPECT_NEAR(oracle_estimate(d, spec, law, k, seed).estimate, one_step, 1e-13);
  }
  EXPECT_NEAR(oracle_estimate(d, spec, law, 2, 1).se, oracle_estimate(d, spec, law, 5, 8).se, 1e-15);
}

TEST(CrossFit, CovarianceUnderConditionalIndependence) {
  const ProblemSpec spec = get_spec("expected_cond_cov");
  const Dataset d = sample_law(canned_law("mar_mean"), 4000, 4);
  const auto r = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 2, 1);
  EXPECT_NEAR(r.estimate, 0.0, 4.0 * r.se);
}

TEST(CrossFit, PerFoldMeansAverageToEstimate) {
  const ProblemSpec spec = get_spec("policy_effect");
  const Dataset d = sample_law(canned_law("policy_effect"), 1001, 6);
  const auto r = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 3, 2);
  double weighted = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < r.folds; ++k) weighted += r.per_fold[k] * r.fold_sizes[k];
  for (double v : r.if_values) mean += v;
  EXPECT_NEAR(weighted / r.n, r.estimate, 1e-12);
  EXPECT_NEAR(mean / r.n, r.estimate, 1e-12);
  EXPECT_EQ(r.a_hat.front().size(), 3u);
}

TEST(CrossFit, EmptyDataAndBadLevel) {
  const ProblemSpec spec = get_spec("mar_mean");
  EXPECT_THROW(cross_fit_estimate(Dataset({"dy", "d", "z"}, {}), spec, riesz_learner(Side::a), riesz_learner(Side::b), 2, 1),
               InputError);
  const Dataset d = sample_law(canned_law("mar_mean"), 50, 1);
  EXPECT_THROW(cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 2, 1, 1.5), ConfigError);
}

TEST(DeltaTransform, IdentityScaleAndSquare) {
  const ProblemSpec spec = get_spec("mar_mean");
  const Dataset d = sample_law(canned_law("mar_mean"), 1000, 12);
  const auto r = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 2, 3);
  const auto id = delta_transform(r, [](double x) { return x; }, [](double) { return 1.0; });
  EXPECT_EQ(id.estimate, r.estimate);
  EXPECT_EQ(id.se, r.se);
  const auto twice = delta_transform(r, [](double x) { return 2 * x; }, [](double) { return 2.0; });
  EXPECT_DOUBLE_EQ(twice.estimate, 2 * r.estimate);
  EXPECT_DOUBLE_EQ(twice.se, 2 * r.se);
  const auto sq = delta_transform(r, [](double x) { return x * x; }, [](double x) { return 2 * x; });
  EXPECT_DOUBLE_EQ(sq.estimate, r.estimate * r.estimate);
  EXPECT_DOUBLE_EQ(sq.se, 2 * r.estimate * r.se);
  EXPECT_NEAR(sq.se, 1.2 * r.se, 0.1 * r.se);
}

TEST(Composite, AteNearTruthAndMatchesDifference) {
  const Estimand ate = get_estimand("ate");
  const FiniteLaw law = canned_law("ate");
  const Dataset d = sample_law(law, 4000, 13);
  const auto r = cross_fit_estimate(d, ate, riesz_learner(Side::a), riesz_learner(Side::b), 2, 4);
  EXPECT_NEAR(r.estimate, frozen::ate, 4.0 * r.se);
  const auto r1 = cross_fit_estimate(d, ate.components[0], riesz_learner(Side::a), riesz_learner(Side::b), 2, 4);
  const auto r2 = cross_fit_estimate(d, ate.components[1], riesz_learner(Side::a), riesz_learner(Side::b), 2, 4);
  const auto diff = difference_estimate(r1, r2, r1.if_values, r2.if_values);
  EXPECT_NEAR(diff.estimate, r.estimate, 1e-12);
  EXPECT_NEAR(diff.se, r.se, 1e-12);
  const auto other = cross_fit_estimate(d, ate.components[1], riesz_learner(Side::a), riesz_learner(Side::b), 2, 5);
  EXPECT_THROW(difference_estimate(r1, other, r1.if_values, other.if_values), InputError);
}

TEST(Composite, AttNearTruth) {
  const Estimand att = get_estimand("att");
  const Dataset d = sample_law(canned_law("att"), 8000, 14);
  const auto r = cross_fit_estimate(d, att, riesz_learner(Side::a), riesz_learner(Side::b), 2, 4);
  EXPECT_NEAR(r.estimate, frozen::att, 4.0 * r.se);
  EXPECT_EQ(r.a_hat.size(), 3u);
}

TEST(LearnerConfig, JsonRoundTripAndRatioSideCheck) {
  const auto c = learner_from_json(nlohmann::json::parse(R"({"method":"ratio","trim":0.05})"));
  EXPECT_EQ(c.method, LearnerMethod::ratio);
  EXPECT_EQ(c.trim, 0.05);
  EXPECT_THROW(make_learner(c, Side::b), ConfigError);
  EXPECT_EQ(learner_from_json(learner_to_json(c)).trim, 0.05);
  EXPECT_THROW(learner_from_json(nlohmann::json::parse(R"({"trim":0})")), ConfigError);
  EXPECT_THROW(learner_from_json(nlohmann::json::parse(R"({"method":"forest"})")), ConfigError);
}

TEST(Report, JsonHasCoreFields) {
  const ProblemSpec spec = get_spec("mar_mean");
  const Dataset d = sample_law(canned_law("mar_mean"), 100, 1);
  const auto r = cross_fit_estimate(d, spec, riesz_learner(Side::a), riesz_learner(Side::b), 2, 1);
  const auto j = report_to_json(r, "mar_mean", nlohmann::json::object());
  for (const char* key : {"estimate", "se", "ci", "per_fold", "fold_sizes", "diagnostics", "n", "folds", "seed"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["estimate"].get<double>(), r.estimate);
}
