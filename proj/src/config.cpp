#include "forge/config.hpp"

#include <fstream>
#include <set>

#include "forge/errors.hpp"
#include "forge/trajectory.hpp"

namespace forge {

namespace {

void reject_unknown_keys(const nlohmann::json &obj,
                         const std::set<std::string> &allowed,
                         const std::string &path) {
  if (!obj.is_object())
    throw ConfigError("expected a JSON object", path);
  for (const auto &[key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError("unknown key",
                        path.empty() ? key : path + "." + key);
  }
}

std::string str_field(const nlohmann::json &obj, const char *key,
                      const std::string &path,
                      const std::string &fallback = "") {
  if (!obj.contains(key))
    return fallback;
  if (!obj[key].is_string())
    throw ConfigError("expected a string", path + "." + key);
  return obj[key].get<std::string>();
}

} // namespace

ForgeConfig ForgeConfig::from_json(const nlohmann::json &j) {
  reject_unknown_keys(j,
                      {"datasets", "env_map", "policies", "tier3",
                       "validator", "eval", "tool_fixture_path", "workers",
                       "global_seed"},
                      "");

  ForgeConfig cfg;

  if (j.contains("datasets")) {
    if (!j["datasets"].is_array())
      throw ConfigError("expected a list", "datasets");
    int i = 0;
    for (const auto &dj : j["datasets"]) {
      std::string path = "datasets[" + std::to_string(i) + "]";
      reject_unknown_keys(
          dj, {"id", "path", "matcher", "category_field", "vignette_dir"},
          path);
      Dataset d;
      d.id = str_field(dj, "id", path);
      d.path = str_field(dj, "path", path);
      d.matcher = str_field(dj, "matcher", path, "exact");
      d.category_field = str_field(dj, "category_field", path);
      d.vignette_dir = str_field(dj, "vignette_dir", path);
      if (d.id.empty())
        throw ConfigError("dataset needs an id", path + ".id");
      if (d.matcher != "exact" && d.matcher != "soft" &&
          d.matcher != "diagnosis")
        throw ConfigError("matcher must be exact|soft|diagnosis",
                          path + ".matcher");
      cfg.datasets.push_back(std::move(d));
      ++i;
    }
  }

  if (j.contains("env_map")) {
    reject_unknown_keys(
        j["env_map"],
        [&] {
          std::set<std::string> ids;
          for (const auto &d : cfg.datasets)
            ids.insert(d.id);
          for (const auto &[k, v] : j["env_map"].items()) {
            (void)v;
            ids.insert(k); // extra entries are allowed; missing ones are not
          }
          return ids;
        }(),
        "env_map");
    for (const auto &[id, env] : j["env_map"].items()) {
      if (!env.is_string())
        throw ConfigError("expected an environment name", "env_map." + id);
      environment_from_name(env.get<std::string>()); // validates
      cfg.env_map[id] = env.get<std::string>();
    }
  }
  for (const auto &d : cfg.datasets)
    if (!cfg.env_map.count(d.id))
      throw ConfigError("dataset has no environment mapping",
                        "env_map." + d.id);

  if (j.contains("policies")) {
    for (const auto &[role, pj] : j["policies"].items()) {
      std::string path = "policies." + role;
      if (role != "student" && role != "teacher" && role != "agent" &&
          role != "recap" && role != "expert" && role != "moderator" &&
          role != "patient")
        throw ConfigError("unknown policy role", path);
      reject_unknown_keys(pj, {"backend", "endpoint", "fixture_path", "seed"},
                          path);
      Policy p;
      p.backend = str_field(pj, "backend", path, "scripted");
      p.endpoint = str_field(pj, "endpoint", path);
      p.fixture_path = str_field(pj, "fixture_path", path);
      if (pj.contains("seed"))
        p.seed = pj["seed"].get<std::uint64_t>();
      if (p.backend != "scripted" && p.backend != "remote")
        throw ConfigError("backend must be scripted|remote",
                          path + ".backend");
      if (p.backend == "remote" && p.endpoint.empty())
        throw ConfigError("remote backend requires an endpoint",
                          path + ".endpoint");
      cfg.policies[role] = std::move(p);
    }
  }

  if (j.contains("tier3")) {
    reject_unknown_keys(j["tier3"], {"retries", "temperature_schedule"},
                        "tier3");
    if (j["tier3"].contains("retries"))
      cfg.tier3.retries = j["tier3"]["retries"].get<int>();
    if (j["tier3"].contains("temperature_schedule"))
      cfg.tier3.temperature_schedule =
          j["tier3"]["temperature_schedule"].get<std::vector<double>>();
    if (cfg.tier3.retries < 1)
      throw ConfigError("retries must be >= 1", "tier3.retries");
  }

  if (j.contains("validator")) {
    reject_unknown_keys(
        j["validator"],
        {"length_bound", "depth_bounds", "lexicon_path", "majority_rate"},
        "validator");
    const auto &vj = j["validator"];
    if (vj.contains("length_bound"))
      cfg.validator.length_bound = vj["length_bound"].get<int>();
    if (cfg.validator.length_bound < 1)
      throw ConfigError("length bound must be positive",
                        "validator.length_bound");
    if (vj.contains("depth_bounds")) {
      for (const auto &[env, bound] : vj["depth_bounds"].items()) {
        environment_from_name(env);
        int b = bound.get<int>();
        if (b < 1)
          throw ConfigError("depth bound must be positive",
                            "validator.depth_bounds." + env);
        cfg.validator.depth_bounds[env] = b;
      }
    }
    cfg.validator.lexicon_path = str_field(vj, "lexicon_path", "validator");
    if (vj.contains("majority_rate"))
      cfg.validator.majority_rate = vj["majority_rate"].get<double>();
    if (cfg.validator.majority_rate <= 0.0 ||
        cfg.validator.majority_rate > 1.0)
      throw ConfigError("majority rate must be in (0, 1]",
                        "validator.majority_rate");
  }

  if (j.contains("eval")) {
    reject_unknown_keys(j["eval"],
                        {"soft_match_threshold", "ngram_n", "synonyms_path"},
                        "eval");
    const auto &ej = j["eval"];
    if (ej.contains("soft_match_threshold"))
      cfg.eval.soft_match_threshold =
          ej["soft_match_threshold"].get<double>();
    if (cfg.eval.soft_match_threshold <= 0.0 ||
        cfg.eval.soft_match_threshold > 1.0)
      throw ConfigError("threshold must be in (0, 1]",
                        "eval.soft_match_threshold");
    if (ej.contains("ngram_n"))
      cfg.eval.ngram_n = ej["ngram_n"].get<int>();
    if (cfg.eval.ngram_n < 1)
      throw ConfigError("n must be >= 1", "eval.ngram_n");
    cfg.eval.synonyms_path = str_field(ej, "synonyms_path", "eval");
  }

  cfg.tool_fixture_path = str_field(j, "tool_fixture_path", "");
  if (j.contains("workers")) {
    cfg.workers = j["workers"].get<int>();
    if (cfg.workers < 1)
      throw ConfigError("workers must be >= 1", "workers");
  }
  if (j.contains("global_seed"))
    cfg.global_seed = j["global_seed"].get<std::uint64_t>();

  return cfg;
}

ForgeConfig ForgeConfig::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

nlohmann::json ForgeConfig::emit() const {
  nlohmann::json datasets_j = nlohmann::json::array();
  for (const Dataset &d : datasets)
    datasets_j.push_back({{"category_field", d.category_field},
                          {"id", d.id},
                          {"matcher", d.matcher},
                          {"path", d.path},
                          {"vignette_dir", d.vignette_dir}});
  nlohmann::json policies_j = nlohmann::json::object();
  for (const auto &[role, p] : policies)
    policies_j[role] = {{"backend", p.backend},
                        {"endpoint", p.endpoint},
                        {"fixture_path", p.fixture_path},
                        {"seed", p.seed}};
  return {
      {"datasets", datasets_j},
      {"env_map", env_map},
      {"eval",
       {{"ngram_n", eval.ngram_n},
        {"soft_match_threshold", eval.soft_match_threshold},
        {"synonyms_path", eval.synonyms_path}}},
      {"global_seed", global_seed},
      {"policies", policies_j},
      {"tier3",
       {{"retries", tier3.retries},
        {"temperature_schedule", tier3.temperature_schedule}}},
      {"tool_fixture_path", tool_fixture_path},
      {"validator",
       {{"depth_bounds", validator.depth_bounds},
        {"length_bound", validator.length_bound},
        {"lexicon_path", validator.lexicon_path},
        {"majority_rate", validator.majority_rate}}},
      {"workers", workers},
  };
}

} // namespace forge
