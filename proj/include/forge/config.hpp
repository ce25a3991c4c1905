#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

// Single JSON configuration document. Unknown keys are rejected with the
// offending key path; every constant has a default so a minimal config only
// names its datasets.
struct ForgeConfig {
  struct Dataset {
    std::string id;
    std::string path;
    std::string matcher = "exact"; // exact | soft | diagnosis
    std::string category_field;
    std::string vignette_dir;
  };

  struct Policy {
    std::string backend = "scripted"; // scripted | remote
    std::string endpoint;
    std::string fixture_path;
    std::uint64_t seed = 0;
  };

  struct Tier3 {
    int retries = 8;
    std::vector<double> temperature_schedule{0.2, 0.7};
  };

  struct Validator {
    int length_bound = 10000;
    std::map<std::string, int> depth_bounds{{"collaboration", 12},
                                            {"interleaved", 6},
                                            {"simulation", 12},
                                            {"tool_calling", 4}};
    std::string lexicon_path;
    double majority_rate = 1.0 / 3.0;
  };

  struct Eval {
    double soft_match_threshold = 0.8;
    int ngram_n = 8;
    std::string synonyms_path;
  };

  std::vector<Dataset> datasets;
  std::map<std::string, std::string> env_map; // dataset id -> environment
  std::map<std::string, Policy> policies;     // role name -> policy
  Tier3 tier3;
  Validator validator;
  Eval eval;
  std::string tool_fixture_path;
  int workers = 1;
  std::uint64_t global_seed = 0;

  static ForgeConfig load(const std::string &path); // throws ConfigError
  static ForgeConfig from_json(const nlohmann::json &j);
  nlohmann::json emit() const;
};

} // namespace forge
