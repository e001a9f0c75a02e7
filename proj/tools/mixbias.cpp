// mixbias: estimate, verify, simulate and inspect mixed-bias parameters.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mixbias/mixbias.hpp"

namespace {

using namespace mixbias;

Params parse_params(const std::vector<std::string>& kv) {
  Params p;
  for (const auto& s : kv) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ParameterError("--param expects key=value, got '" + s + "'");
    p[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return p;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

struct EstimateArgs {
  std::string spec, data, config, out;
  std::vector<std::string> params;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  double level = 0.0;
};

int cmd_estimate(const EstimateArgs& args, CLI::App& sub) {
  RunConfig cfg;
  if (!args.config.empty()) cfg = run_config_from_json(read_json_file(args.config, "config"));
  if (!args.spec.empty()) cfg.spec = args.spec;
  for (const auto& [k, v] : parse_params(args.params)) cfg.params[k] = v;
  if (!args.data.empty()) cfg.data = args.data;
  if (!args.out.empty()) cfg.out = args.out;
  if (sub.count("--folds")) cfg.folds = args.folds;
  if (sub.count("--seed")) cfg.seed = args.seed;
  if (sub.count("--level")) cfg.level = args.level;
  if (cfg.spec.empty()) throw ConfigError("no spec given (--spec or config 'spec')");
  if (cfg.data.empty()) throw ConfigError("no data file given (--data or config 'data')");
  if (cfg.out.empty()) throw ConfigError("no output file given (--out or config 'out')");
  const Dataset data = read_csv_file(cfg.data);
  const EstimateRun run = run_estimate(cfg, data);
  write_text(cfg.out, run.json.dump(2) + "\n");
  std::cout << cfg.spec << ": estimate " << format_double(run.report.estimate) << ", se "
            << format_double(run.report.se) << ", " << run.report.level * 100 << "% CI ["
            << format_double(run.report.ci_low) << ", " << format_double(run.report.ci_high) << "]\n";
  return 0;
}

int cmd_verify(const std::string& spec, const std::string& law_path, double tol,
               const std::vector<std::string>& kv) {
  std::optional<FiniteLaw> law;
  if (!law_path.empty()) law = read_law_file(law_path);
  std::vector<const CatalogEntry*> entries;
  if (spec == "all") {
    if (!kv.empty()) throw ParameterError("--param needs a single --spec");
    for (const auto& e : catalog()) entries.push_back(&e);
  } else {
    entries.push_back(&find_entry(spec));
  }
  ValidationOptions opt;
  opt.tol = tol;
  opt.fd_tol = 1e4 * tol;
  const Params params = parse_params(kv);
  bool all_pass = true;
  std::cout << std::left << std::setw(22) << "entry" << std::setw(22) << "component" << std::setw(24) << "identity"
            << std::setw(14) << "residual" << std::setw(10) << "tol"
            << "result\n";
  for (const CatalogEntry* e : entries) {
    const ValidationReport rep = validate_entry(*e, params, opt, law);
    for (const auto& c : rep.checks) {
      std::ostringstream r, t;
      r << std::scientific << std::setprecision(2) << c.residual;
      t << std::scientific << std::setprecision(0) << c.tolerance;
      std::cout << std::setw(22) << e->name << std::setw(22) << c.component << std::setw(24) << c.identity
                << std::setw(14) << r.str() << std::setw(10) << t.str() << (c.pass ? "PASS" : "FAIL") << "\n";
    }
    all_pass = all_pass && rep.pass();
    std::cout << (rep.pass() ? "PASS " : "FAIL ") << e->name
              << (rep.pass() ? std::string() : " (first failure: " + rep.first_failure() + ")") << "\n";
  }
  std::cout << (all_pass ? "all checks passed" : "verification failed") << "\n";
  return all_pass ? 0 : 1;
}

int cmd_simulate(const std::string& scenario_path, const std::string& prefix) {
  const Scenario s = scenario_from_json(read_json_file(scenario_path, "scenario"));
  const ScenarioRunner runner(s);
  const auto rows = runner.run();
  std::ostringstream csv;
  write_results_csv(csv, rows);
  write_text(prefix + ".csv", csv.str());
  const Summary sum = summarize(runner, rows);
  nlohmann::json j = summary_to_json(sum);
  j["scenario"] = scenario_to_json(s);
  write_text(prefix + ".summary.json", j.dump(2) + "\n");
  std::cout << "n        mean_bias     mc_se         coverage  predicted\n";
  for (const auto& z : sum.sizes) {
    std::cout << std::left << std::setw(9) << z.n << std::setw(14) << format_double(z.mean_bias) << std::setw(14)
              << format_double(z.mc_se) << std::setw(10) << format_double(z.coverage)
              << (z.predicted_bias ? format_double(*z.predicted_bias) : "-") << "\n";
  }
  std::cout << "slope " << (sum.slope ? format_double(*sum.slope) : "n/a") << "\n";
  return 0;
}

int cmd_catalog() {
  for (const auto& e : catalog()) {
    const Estimand est = e.build({});
    std::cout << e.name << "  " << e.title << "\n";
    std::cout << "  columns: ";
    const auto cols = est.columns();
    for (std::size_t i = 0; i < cols.size(); ++i) std::cout << (i ? "," : "") << cols[i];
    std::cout << "\n  components:";
    for (const auto& c : est.components) {
      std::cout << " " << c.name << (c.nuisance_free ? "(mean)" : "") << "[Z=";
      const auto z = c.covariate_names();
      for (std::size_t i = 0; i < z.size(); ++i) std::cout << (i ? "," : "") << z[i];
      std::cout << "]";
    }
    std::cout << "\n  params:";
    for (const auto& p : e.params) std::cout << " " << p.name << "=" << p.default_value;
    std::cout << "\n  robins_class: " << (e.robins_class ? "yes" : "no")
              << "  newey_chernozhukov_class: " << (e.newey_chernozhukov_class ? "yes" : "no") << "\n";
  }
  return 0;
}

int cmd_sample(const std::string& spec, const std::vector<std::string>& kv, const std::string& law_path,
               std::size_t n, std::uint64_t seed, const std::string& out) {
  const Params p = parse_params(kv);
  const FiniteLaw law = law_path.empty() ? canned_law(spec, p) : read_law_file(law_path);
  std::ostringstream csv;
  write_csv(csv, sample_law(law, n, derive_seed(seed, "cli-sample")));
  write_text(out, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixbias: one-step estimation and exact verification for mixed-bias parameters"};
  app.require_subcommand(1);

  EstimateArgs est;
  auto* s_est = app.add_subcommand("estimate", "cross-fitted one-step estimate from a CSV file");
  s_est->add_option("--spec", est.spec, "catalog entry name");
  s_est->add_option("--param", est.params, "entry parameter key=value (repeatable)");
  s_est->add_option("--data", est.data, "input CSV");
  s_est->add_option("--config", est.config, "JSON run config");
  s_est->add_option("--folds", est.folds, "number of folds K")->check(CLI::Range(2, 1000000));
  s_est->add_option("--seed", est.seed, "random seed");
  s_est->add_option("--level", est.level, "confidence level")->check(CLI::Range(0.0, 1.0));
  s_est->add_option("--out", est.out, "output report JSON");

  std::string v_spec = "all", v_law;
  double v_tol = 1e-10;
  std::vector<std::string> v_params;
  auto* s_ver = app.add_subcommand("verify", "run the exact identity suite on finite laws");
  s_ver->add_option("--spec", v_spec, "entry name or 'all'");
  s_ver->add_option("--param", v_params, "entry parameter key=value (repeatable)");
  s_ver->add_option("--law", v_law, "law JSON file (default: the entry's canned law)");
  s_ver->add_option("--tol", v_tol, "absolute tolerance for exact identities")->check(CLI::NonNegativeNumber);

  std::string sim_scenario, sim_prefix;
  auto* s_sim = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  s_sim->add_option("--scenario", sim_scenario, "scenario JSON")->required();
  s_sim->add_option("--out-prefix", sim_prefix, "writes <prefix>.csv and <prefix>.summary.json")->required();

  auto* s_cat = app.add_subcommand("catalog", "list catalog entries");

  std::string smp_spec, smp_law, smp_out;
  std::vector<std::string> smp_params;
  std::size_t smp_n = 1000;
  std::uint64_t smp_seed = 0;
  auto* s_smp = app.add_subcommand("sample", "draw a CSV sample from an entry's canned law or a law file");
  s_smp->add_option("--spec", smp_spec, "catalog entry name")->required();
  s_smp->add_option("--param", smp_params, "entry parameter key=value (repeatable)");
  s_smp->add_option("--law", smp_law, "law JSON file");
  s_smp->add_option("--n", smp_n, "number of rows")->check(CLI::PositiveNumber);
  s_smp->add_option("--seed", smp_seed, "random seed");
  s_smp->add_option("--out", smp_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*s_est) return cmd_estimate(est, *s_est);
    if (*s_ver) return cmd_verify(v_spec, v_law, v_tol, v_params);
    if (*s_sim) return cmd_simulate(sim_scenario, sim_prefix);
    if (*s_cat) return cmd_catalog();
    if (*s_smp) return cmd_sample(smp_spec, smp_params, smp_law, smp_n, smp_seed, smp_out);
  } catch (const mixbias::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
