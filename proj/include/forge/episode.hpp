#pragma once

#include <optional>
#include <string>

#include "forge/environment.hpp"
#include "forge/policy.hpp"

namespace forge {

struct EpisodeRunResult {
  EpisodeState state;
  std::string answer;
  bool success = false; // terminated with an extractable answer
  bool forced = false;  // hit the depth cap and was asked to answer
  int depth = 0;
  // "direct" when the first policy reply was the answer, else the tool name.
  std::string first_action;
  std::int64_t tokens = 0; // completion-token estimates, summed
  std::int64_t latency_ms = 0;
};

// Conversation-so-far rendered as a policy request. human/observation turns
// map to user messages, function_call/gpt turns to assistant messages.
PolicyRequest episode_request(const EpisodeState &state,
                              const DecodingHints &decoding, PolicyRole role);

// Drives one episode to completion: query the policy, parse its reply as an
// action or an answer, step the environment, repeat. An optional t_cap lowers
// the environment's depth bound for depth-constrained analysis.
EpisodeRunResult run_episode(const EnvironmentSpec &env, const Sample &sample,
                             const std::optional<PatientVignette> &vignette,
                             const PolicyHandle &policy,
                             const ExecutorSet &executors,
                             const DecodingHints &decoding = {},
                             std::optional<int> t_cap = {});

} // namespace forge
