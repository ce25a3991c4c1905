#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/environment.hpp"
#include "forge/metrics.hpp"
#include "forge/policy.hpp"
#include "forge/trajectory.hpp"

namespace forge {

struct DatasetRecord {
  Sample sample;
  Trajectory trajectory;
  int tier = 1;
  Mode mode = Mode::direct;

  nlohmann::json to_json() const;
  static DatasetRecord from_json(const nlohmann::json &j);
};

struct DiscardEntry {
  std::string sample_id;
  std::string reason; // exhausted_retries | recap_filtered | ...
};

struct AgenticPair {
  DatasetRecord prospective;
  DatasetRecord retrospective;
  int attempts = 0;
};

struct TierPartition {
  std::vector<DatasetRecord> direct;
  std::vector<DatasetRecord> enhanced;
  std::vector<AgenticPair> agentic;
  std::vector<DiscardEntry> discard;
};

// Runs fn(0..n-1) on a bounded worker pool; serial when workers <= 1. The
// first exception thrown by fn is rethrown after all workers join.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)> &fn);

// Tier 1/2: one direct (depth-0) pass per sample; correct answers become
// records, the rest are the residual for the next tier.
std::pair<std::vector<DatasetRecord>, std::vector<Sample>>
run_tier1(const std::vector<Sample> &dataset, const PolicyHandle &student,
          const MatchFn &matcher, int workers = 1);
std::pair<std::vector<DatasetRecord>, std::vector<Sample>>
run_tier2(const std::vector<Sample> &residual, const PolicyHandle &teacher,
          const MatchFn &matcher, int workers = 1);

struct PipelineContext {
  std::map<std::string, EnvironmentId> env_map; // dataset_id -> environment
  const ExecutorSet *executors = nullptr;
  const std::map<std::string, PatientVignette> *vignettes =
      nullptr; // sample_id -> vignette
  std::vector<std::string> lexicon;
  int retries = 8;
  std::vector<double> temperature_schedule{0.2, 0.7};
  int workers = 1;
  int length_bound = 10000;
  std::uint64_t seed = 0;
};

// Tier 3: up to `retries` seeded episodes per sample in the mapped
// environment; the first correct, validation-passing episode becomes the
// prospective record and the recap backend supplies the retrospective
// partner's reasoning. Failures land in the discard list with a reason.
std::pair<std::vector<AgenticPair>, std::vector<DiscardEntry>>
run_tier3(const std::vector<Sample> &residual, const PolicyHandle &agent,
          const PolicyHandle &recap_policy, const MatchFn &matcher,
          const PipelineContext &ctx);

TierPartition run_pipeline(const std::vector<Sample> &dataset,
                           const PolicyHandle &student,
                           const PolicyHandle &teacher,
                           const PolicyHandle &agent,
                           const PolicyHandle &recap_policy,
                           const MatchFn &matcher, const PipelineContext &ctx);

// All records of a partition, two per agentic pair, sorted canonically by
// (sample_id, mode).
std::vector<DatasetRecord> flatten(const TierPartition &partition);

// Per (dataset, tier, environment) counts, tier/mode splits, depth histogram.
nlohmann::json stats(const std::vector<DatasetRecord> &records);

// Concatenates the partition into one JSONL corpus (after class balancing on
// the normalized final answer) and writes a stats sidecar.
// Throws InvariantViolation when the partition's sample sets overlap.
void assemble(const TierPartition &partition, const std::string &corpus_path,
              const std::string &stats_path, double majority_rate = 1.0,
              std::uint64_t seed = 0);

std::vector<DatasetRecord> read_corpus(const std::string &corpus_path);

} // namespace forge
