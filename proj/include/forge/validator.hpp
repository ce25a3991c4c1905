#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/environment.hpp"
#include "forge/metrics.hpp"
#include "forge/trajectory.hpp"

namespace forge {

struct Violation {
  enum class Severity { reject, flag };

  std::string rule_id;
  std::optional<int> turn_index;
  std::string message;
  Severity severity = Severity::reject;

  nlohmann::json to_json() const;
};

struct LintReport {
  enum class Verdict { pass, reject, flagged };

  std::string trajectory_id;
  std::vector<Violation> violations;

  Verdict verdict() const;
  bool rejected() const { return verdict() == Verdict::reject; }
  nlohmann::json to_json() const;
};

// Format-level rules over a raw interchange document, so that documents too
// broken to deserialize are still lintable. Rules: correctness, turn_grammar,
// unknown_tool, arguments_json, missing_terminate, image_alignment,
// length_bound, depth_bound. An empty gold skips the correctness rule.
LintReport structural_check(const nlohmann::json &doc,
                            const EnvironmentSpec &env, const MatchFn &matcher,
                            const std::string &gold, int length_bound = 10000);
LintReport structural_check(const Trajectory &t, const EnvironmentSpec &env,
                            const MatchFn &matcher, const std::string &gold,
                            int length_bound = 10000);

// Content-level rules over a parsed trajectory: hallucination_keyword (flag),
// repetition_loop, truncation, short_content, missing_think.
LintReport behavioral_check(const Trajectory &t,
                            const std::vector<std::string> &lexicon);

// One term per line; blank lines and '#' comments skipped.
std::vector<std::string> load_lexicon(const std::string &path);

// Keeps majority-label records with probability majority_rate (seeded,
// deterministic); everything else is kept in full. A uniform draw is consumed
// for every record so the random stream is label-independent. No strict
// majority (tie) or rate >= 1 leaves the input unchanged.
template <typename R, typename F>
std::vector<R> class_balance(const std::vector<R> &records, F &&label_of,
                             double majority_rate, std::uint64_t seed) {
  if (records.empty() || majority_rate >= 1.0)
    return records;
  std::map<std::string, int> counts;
  for (const R &r : records)
    ++counts[label_of(r)];
  std::string majority;
  int best = 0;
  bool tie = false;
  for (const auto &[label, count] : counts) {
    if (count > best) {
      majority = label;
      best = count;
      tie = false;
    } else if (count == best) {
      tie = true;
    }
  }
  if (tie)
    return records;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<R> out;
  out.reserve(records.size());
  for (const R &r : records) {
    double roll = unit(rng);
    if (label_of(r) != majority || roll < majority_rate)
      out.push_back(r);
  }
  return out;
}

// Deterministic seeded subset of ceil(fraction * N) records, original order.
template <typename R>
std::vector<R> audit_sample(const std::vector<R> &corpus, double fraction,
                            std::uint64_t seed) {
  std::size_t n = corpus.size();
  auto k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n)));
  if (k > n)
    k = n;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<R> out;
  out.reserve(k);
  for (std::size_t i : idx)
    out.push_back(corpus[i]);
  return out;
}

} // namespace forge
