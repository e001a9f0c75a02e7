#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mixbias/catalog.hpp"
#include "mixbias/cross_fit.hpp"
#include "mixbias/errors.hpp"
#include "mixbias/simulation.hpp"

namespace mixbias {

struct RunConfig {
  std::string spec;
  Params params;
  std::optional<LearnerConfig> learner_a;  // defaults from the spec when absent
  std::optional<LearnerConfig> learner_b;
  std::size_t folds = 2;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::string data;
  std::string out;
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "spec") {
        c.spec = v.get<std::string>();
      } else if (k == "params") {
        c.params = sim_detail::params_from_json(v);
      } else if (k == "learner_a") {
        c.learner_a = learner_from_json(v);
      } else if (k == "learner_b") {
        c.learner_b = learner_from_json(v);
      } else if (k == "folds") {
        const long long f = v.get<long long>();
        if (f < 2) throw ConfigError("folds must be >= 2");
        c.folds = static_cast<std::size_t>(f);
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "level") {
        c.level = v.get<double>();
      } else if (k == "data") {
        c.data = v.get<std::string>();
      } else if (k == "out") {
        c.out = v.get<std::string>();
      } else {
        throw ConfigError("unknown config field '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline nlohmann::json read_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + what + " file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(what + " file '" + path + "' is not valid JSON: " + e.what());
  }
}

struct EstimateRun {
  EstimateReport report;
  nlohmann::json json;
};

// Validates the entry, checks the CSV header against the spec's columns and
// runs the cross-fitted estimator.
inline EstimateRun run_estimate(const RunConfig& c, const Dataset& data) {
  const CatalogEntry& entry = find_entry(c.spec);
  const Estimand est = entry.build(c.params);
  require_valid(entry, c.params);
  for (const auto& col : est.columns()) {
    if (!data.find(col)) throw InputError("data is missing column '" + col + "' required by spec '" + c.spec + "'");
  }
  const LearnerConfig la = c.learner_a ? *c.learner_a : default_learner(est, Side::a);
  const LearnerConfig lb = c.learner_b ? *c.learner_b : default_learner(est, Side::b);
  EstimateRun run;
  run.report = cross_fit_estimate(data, est, make_learner(la, Side::a), make_learner(lb, Side::b), c.folds, c.seed,
                                  c.level);
  run.json = report_to_json(run.report, c.spec, resolved_params(entry, c.params));
  run.json["learners"] = {{"a", learner_to_json(la)}, {"b", learner_to_json(lb)}};
  return run;
}

}  // namespace mixbias
