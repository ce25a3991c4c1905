#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/environment.hpp"
#include "forge/episode.hpp"

namespace forge {

// Equivalence groups of medical terms; members are normalized and multi-word
// members are rewritten as single units before token-level comparison.
class SynonymTable {
public:
  SynonymTable() = default;

  // File format: one group per line, terms separated by '|'.
  static SynonymTable load(const std::string &path);
  static SynonymTable parse(const std::string &text);

  void add_group(const std::vector<std::string> &terms);

  // Rewrites every group member inside an already-normalized string to the
  // group's canonical single-token form.
  std::string canonicalize(const std::string &normalized) const;

  const std::vector<std::vector<std::string>> &groups() const {
    return groups_;
  }

private:
  std::vector<std::vector<std::string>> groups_; // normalized members
  // member phrase -> canonical token, longest phrases first
  std::vector<std::pair<std::string, std::string>> rules_;
};

// Normalization + synonym canonicalization, then: equal forms, token-set
// containment either way, or bidirectional token overlap >= threshold.
bool soft_match(const std::string &prediction, const std::string &gold,
                const SynonymTable &syn = {}, double threshold = 0.8);

// Exact normalized match -> substring containment either direction -> token
// overlap |A∩B| / max(|A|,|B|) >= 0.8.
bool diagnosis_match(const std::string &prediction, const std::string &gold);

using MatchFn = std::function<bool(const std::string &, const std::string &)>;

// name ∈ {exact, soft, diagnosis}; throws ConfigError otherwise.
MatchFn make_matcher(const std::string &name, const SynonymTable &syn = {},
                     double threshold = 0.8);

// ---- Decontamination ----

struct NgramOverlap {
  std::string train_id;
  std::string test_id;
  std::string ngram;
};

// Word n-grams over normalized test questions; one entry per (train, test)
// pair that shares at least one n-gram, carrying the first shared n-gram.
std::vector<NgramOverlap>
decontaminate(const std::vector<std::pair<std::string, std::string>> &train,
              const std::vector<std::pair<std::string, std::string>> &test,
              int n = 8);

// ---- Run evaluation ----

struct EpisodeRecord {
  std::string sample_id;
  std::string category;
  std::string answer;
  std::string gold;
  bool correct = false;
  int depth = 0;
  std::int64_t tokens = 0;
  std::int64_t latency_ms = 0;
  bool forced = false;

  static EpisodeRecord from_json(const nlohmann::json &j);
  nlohmann::json to_json() const;
};

struct EvalReport {
  int total = 0;
  int correct = 0;
  double accuracy = 0.0;
  std::map<std::string, std::pair<int, int>> per_category; // correct, total
  double mean_depth = 0.0;
  double mean_tokens = 0.0;
  double mean_latency_ms = 0.0;
  // decade buckets: <1ms, <10ms, <100ms, <1s, >=1s
  std::vector<int> latency_histogram = std::vector<int>(5, 0);

  nlohmann::json to_json() const;
  std::string table() const;
};

// Scores each episode with the matcher (already-set correct flags are
// recomputed) and aggregates.
EvalReport evaluate_run(std::vector<EpisodeRecord> episodes,
                        const MatchFn &matcher);

// ---- Depth-constrained analysis ----

struct DepthRunReport {
  double accuracy = 0.0;
  double mean_depth = 0.0;
  double mean_tokens = 0.0;
  std::vector<EpisodeRecord> episodes;
};

DepthRunReport depth_constrained_run(
    const PolicyHandle &policy, const EnvironmentSpec &env,
    const std::vector<Sample> &samples, std::optional<int> t_cap,
    const ExecutorSet &executors, const MatchFn &matcher,
    const std::map<std::string, PatientVignette> *vignettes = nullptr,
    const DecodingHints &decoding = {});

// ---- Counterfactual routing ----

struct StrategyCost {
  double actions = 0.0;
  double tokens = 0.0;
  double latency_ms = 0.0;
};

struct RoutingRecord {
  std::string sample_id;
  bool correct_direct = false;
  bool correct_agentic = false;
  StrategyCost cost_direct;  // actions recorded as 1 (one answer emission)
  StrategyCost cost_agentic;
  std::string learned_choice; // "direct" | "agentic"

  static RoutingRecord from_json(const nlohmann::json &j); // IncompleteRecord
  nlohmann::json to_json() const;
};

struct StrategyStats {
  double accuracy = 0.0;
  double mean_actions = 0.0;
  double mean_tokens = 0.0;
  double mean_latency_ms = 0.0;
  double frac_direct = 0.0;
  double frac_agentic = 0.0;
};

struct StrategyReport {
  std::map<std::string, StrategyStats> strategies;
  nlohmann::json to_json() const;
};

// Strategies always_direct / always_agentic / oracle / learned. The oracle
// picks any correct strategy per sample, preferring the cheaper (fewer
// actions) when both are correct and when both are wrong.
StrategyReport routing_report(const std::vector<RoutingRecord> &records);

} // namespace forge
