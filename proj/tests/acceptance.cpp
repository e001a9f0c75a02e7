// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. argv[1] is the path of the mixbias CLI.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mixbias/mixbias.hpp"

using namespace mixbias;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fix(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

template <typename F>
void guarded(int id, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

// Every (entry, component) pair with nuisances, on the entry's canned law.
struct Case {
  std::string entry;
  ProblemSpec spec;
  FiniteLaw law;
};

std::vector<Case> nuisance_cases() {
  std::vector<Case> out;
  for (const auto& e : catalog()) {
    for (const auto& c : e.build({}).components) {
      if (c.nuisance_free) continue;
      out.push_back({e.name, c, e.canned_law({})});
    }
  }
  return out;
}

void criterion1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  auto track = [&](double r, const std::string& w) {
    if (!(r <= worst)) {
      worst = r;
      where = w;
    }
  };
  std::size_t entries = 0;
  for (const auto& e : catalog()) {
    ++entries;
    const FiniteLaw law = e.canned_law({}), partner = e.invariance_law({});
    for (const auto& spec : e.build({}).components) {
      const std::string tag = e.name + "/" + spec.name;
      track(verify_if_mean_zero(law, spec), tag + " if_mean_zero");
      track(chi_exact(law, spec).residual, tag + " chi_three_way");
      if (spec.nuisance_free) continue;
      track(verify_moments(law, spec), tag + " moments");
      track(verify_invariance(law, partner, spec), tag + " invariance");
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-10 && secs < 5.0,
         std::to_string(entries) + " entries, max residual " + sci(worst) + " (" + where + "), " + fix(secs, 3) +
             " s");
}

void criterion2() {
  double worst = 0.0;
  std::size_t pairs = 0;
  for (const auto& c : nuisance_cases()) {
    const BoundLaw bl = bind_law(c.law, c.spec);
    const TrueNuisances nu = true_nuisances(bl, c.spec);
    const double chi = chi_exact(bl, c.spec, nu).value;
    Rng rng(derive_seed(20240601, "acceptance-mixed-bias:" + c.entry + "/" + c.spec.name));
    for (int k = 0; k < 100; ++k) {
      const NuisanceFn a1 = NuisanceFn::perturbed(nu.a, random_level_function(bl, rng), 1.0);
      const NuisanceFn b1 = NuisanceFn::perturbed(nu.b, random_level_function(bl, rng), 1.0);
      const double lhs = expected_if(bl, c.spec, a1, b1) - chi;
      worst = std::max(worst, std::abs(lhs - mixed_bias_term(bl, c.spec, nu.a, nu.b, a1, b1)));
      ++pairs;
    }
  }
  report(2, worst < 1e-10, std::to_string(pairs) + " perturbation pairs, max residual " + sci(worst));
}

void criterion3() {
  double grad = 0.0, expansion = 0.0;
  bool minimum = true;
  for (const auto& c : nuisance_cases()) {
    const BoundLaw bl = bind_law(c.law, c.spec);
    std::vector<NuisanceFn> dirs = level_indicators(c.law, c.spec);
    Rng rng(derive_seed(20240601, "acceptance-loss:" + c.entry + "/" + c.spec.name));
    for (int k = 0; k < 5; ++k) dirs.push_back(random_level_function(bl, rng));
    const LossCheck lc = verify_loss_stationarity(c.law, c.spec, dirs, 1e-5);
    grad = std::max(grad, lc.gradient_residual);
    expansion = std::max(expansion, lc.expansion_residual);
    minimum = minimum && lc.minimum;
  }
  report(3, grad < 1e-6 && expansion < 1e-10 && minimum,
         "max directional derivative " + sci(grad) + " (step 1e-5), max expansion residual " + sci(expansion));
}

void criterion4() {
  const ProblemSpec spec = get_spec("expected_cond_cov");
  const FiniteLaw law = canned_law("expected_cond_cov");
  const BoundLaw bl = bind_law(law, spec);
  const TrueNuisances nu = true_nuisances(bl, spec);
  const double chi = chi_exact(bl, spec, nu).value;
  const std::size_t iy = law.support().index_of("y"), id = law.support().index_of("d");
  const std::vector<std::string> zc = spec.covariate_names().empty()
                                          ? std::vector<std::string>{}
                                          : std::vector<std::string>(spec.covariate_names().begin(),
                                                                     spec.covariate_names().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < law.size(); ++i) {
    const Observation o = law.support().row(i);
    std::vector<double> z;
    for (const auto& c : zc) z.push_back(law.support().at(i, law.support().index_of(c)));
    const double e = cond_mean(law, [id](const Observation& r) { return r[id]; }, zc, z);
    const double mu = cond_mean(law, [iy](const Observation& r) { return r[iy]; }, zc, z);
    // both sides centered at chi
    const double lhs = uncentered_if(spec, nu.a, nu.b, bl.sample.row(i)) - chi;
    const double rhs = (o[id] - e) * (o[iy] - mu) - chi;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  report(4, worst < 1e-12, "max pointwise residual " + sci(worst) + " over " + std::to_string(law.size()) + " points");
}

void criterion5() {
  const auto t0 = Clock::now();
  Scenario s;
  s.spec = "mar_mean";
  s.sizes = {2000};
  s.reps = 1000;
  s.seed = 20240605;
  s.folds = 2;
  s.a.kind = TreatmentKind::learned;
  s.b.kind = TreatmentKind::learned;
  s.a.learner = default_learner(get_spec("mar_mean"), Side::a);
  s.b.learner = default_learner(get_spec("mar_mean"), Side::b);
  const ScenarioRunner runner(s);
  const Summary sum = summarize(runner, runner.run());
  const auto& z = sum.sizes.front();
  const double secs = seconds_since(t0);
  report(5, std::abs(z.mean_bias) < 0.01 && z.coverage >= 0.93 && z.coverage <= 0.97 && secs < 120.0,
         "mean bias " + sci(z.mean_bias) + ", coverage " + fix(z.coverage, 3) + ", " + fix(secs, 1) + " s");
}

void criterion6() {
  const auto t0 = Clock::now();
  Scenario s;
  s.spec = "mar_mean";
  s.sizes = {500, 2000, 8000, 32000};
  s.reps = 2000;
  s.seed = 20240606;
  for (NuisanceTreatment* t : {&s.a, &s.b}) {
    t->kind = TreatmentKind::perturbed;
    t->rate = 0.25;
    t->scale = 1.0;
  }
  const ScenarioRunner runner(s);
  const Summary sum = summarize(runner, runner.run());
  const double secs = seconds_since(t0);
  bool all_match = true;
  std::ostringstream detail;
  for (const auto& z : sum.sizes) {
    all_match = all_match && z.bias_matches_prediction.value_or(false);
    detail << "n=" << z.n << " bias " << sci(z.mean_bias) << " pred " << sci(z.predicted_bias.value_or(NAN))
           << " mcse " << sci(z.mc_se) << "; ";
  }
  const bool slope_ok = sum.slope && std::abs(*sum.slope + 0.5) <= 0.15;
  detail << "slope " << (sum.slope ? fix(*sum.slope, 3) : std::string("n/a")) << ", " << fix(secs, 1) << " s";
  report(6, all_match && slope_ok && secs < 600.0, detail.str());
}

void criterion7() {
  Scenario s;
  s.spec = "mar_mean";
  s.sizes = {10000};
  s.reps = 200;
  s.seed = 20240607;
  s.a.kind = TreatmentKind::learned;
  s.a.learner = default_learner(get_spec("mar_mean"), Side::a);
  s.b.kind = TreatmentKind::fixed_wrong;
  s.b.shift = 0.5;
  const SizeSummary one = summarize(ScenarioRunner(s), run_scenario(s)).sizes.front();
  s.a = NuisanceTreatment{};
  s.a.kind = TreatmentKind::fixed_wrong;
  s.a.shift = 0.2;
  const SizeSummary both = summarize(ScenarioRunner(s), run_scenario(s)).sizes.front();
  report(7, one.standardized_bias < 2.0 && both.standardized_bias > 5.0,
         "b wrong, a learned: standardized bias " + fix(one.standardized_bias, 3) +
             "; both wrong: standardized bias " + fix(both.standardized_bias, 3));
}

void criterion8() {
  const Dataset data = sample_law(canned_law("mar_mean"), 3000, derive_seed(20240608, "acceptance-sample"));
  RunConfig mar;
  mar.spec = "mar_mean";
  mar.seed = 17;
  mar.folds = 3;
  RunConfig tilt = mar;
  tilt.spec = "mnar_tilt";
  tilt.params = {{"delta", "0"}};
  EstimateRun r1 = run_estimate(mar, data), r2 = run_estimate(tilt, data);
  // The reports name their entry and its parameters; everything else must match bit for bit.
  for (auto* j : {&r1.json, &r2.json}) {
    j->erase("spec");
    j->erase("params");
  }
  bool same_if = r1.report.if_values == r2.report.if_values;
  const bool pass = r1.json.dump() == r2.json.dump() && same_if &&
                    std::memcmp(&r1.report.estimate, &r2.report.estimate, sizeof(double)) == 0;
  report(8, pass, "estimate " + format_double(r1.report.estimate) + " vs " + format_double(r2.report.estimate) +
                      (same_if ? ", per-row influence values identical" : ", per-row influence values differ"));
}

void criterion9() {
  const FiniteLaw law = canned_law("mar_mean");
  std::vector<std::vector<double>> rows;
  const std::size_t n = 100;
  for (std::size_t i = 0; i < law.size(); ++i) {
    const auto count = static_cast<std::size_t>(std::llround(law.probs()[i] * n));
    const auto r = law.support().row(i).values();
    for (std::size_t c = 0; c < count; ++c) rows.emplace_back(r.begin(), r.end());
  }
  const ProblemSpec spec = get_spec("mar_mean");
  const BoundSample sample = bind(Dataset::from_rows(law.support().columns(), rows), spec);
  Sieve sieve;
  sieve.basis = Basis::indicator;
  sieve.lambda = 0.0;
  const FittedNuisance b = fit_riesz_loss(sample, spec, Side::b, sieve);
  const std::vector<double> z0{0.0}, z1{1.0};
  const double r = std::max(std::abs(b.fn(z0) - 2.0), std::abs(b.fn(z1) - 1.25));
  report(9, rows.size() == n && r < 1e-8,
         "b(0) = " + format_double(b.fn(z0)) + ", b(1) = " + format_double(b.fn(z1)) + ", residual " + sci(r));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion10(const std::string& cli) {
  {
    std::ofstream("acc_scenario.json") << R"({"spec":"mar_mean","sizes":[200,400],"replications":5,"seed":3,
      "nuisance_a":{"kind":"learned"},"nuisance_b":{"kind":"perturbed","rate":0.25,"scale":1}})";
  }
  struct Invocation {
    std::string args;
    std::vector<std::string> outputs;
  };
  const std::vector<Invocation> runs = {
      {"sample --spec mar_mean --n 1500 --seed 5 --out acc_sample_R.csv", {"acc_sample_R.csv"}},
      {"estimate --spec mar_mean --data acc_sample_1.csv --seed 9 --folds 3 --out acc_est_R.json", {"acc_est_R.json"}},
      {"simulate --scenario acc_scenario.json --out-prefix acc_sim_R", {"acc_sim_R.csv", "acc_sim_R.summary.json"}},
      {"verify --spec all", {}},
      {"catalog", {}},
  };
  bool pass = true;
  std::string bad;
  std::size_t compared = 0;
  for (const auto& inv : runs) {
    std::string texts[2];
    std::vector<std::string> files[2];
    for (int rep = 1; rep <= 2; ++rep) {
      auto sub = [rep](std::string s) {
        for (std::size_t p; (p = s.find("_R")) != std::string::npos;) s.replace(p, 2, "_" + std::to_string(rep));
        return s;
      };
      const std::string log = "acc_stdout_" + std::to_string(rep) + ".txt";
      const int code = shell(cli + " " + sub(inv.args) + " > " + log + " 2>&1");
      if (code != 0) {
        pass = false;
        bad += " [" + inv.args + " exited " + std::to_string(code) + "]";
      }
      texts[rep - 1] = slurp(log);
      for (const auto& f : inv.outputs) files[rep - 1].push_back(slurp(sub(f)));
    }
    ++compared;
    if (texts[0] != texts[1]) {
      pass = false;
      bad += " [stdout of " + inv.args + "]";
    }
    for (std::size_t k = 0; k < inv.outputs.size(); ++k) {
      ++compared;
      if (files[0][k] != files[1][k] || files[0][k].empty()) {
        pass = false;
        bad += " [" + inv.outputs[k] + "]";
      }
    }
  }
  report(10, pass,
         std::to_string(runs.size()) + " invocations run twice, " + std::to_string(compared) + " outputs compared" +
             (pass ? ", all byte-identical" : ";" + bad));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-mixbias-cli>\n";
    return 2;
  }
  const std::string cli = argv[1];
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);
  guarded(6, criterion6);
  guarded(7, criterion7);
  guarded(8, criterion8);
  guarded(9, criterion9);
  guarded(10, [&] { criterion10(cli); });
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
