#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/trajectory.hpp"

namespace forge {

enum class PolicyRole { student, teacher, agent, recap, expert, moderator, patient };

std::string policy_role_name(PolicyRole r);
PolicyRole policy_role_from_name(const std::string &name);

enum class PolicyBackend { scripted, remote, callback };

struct PolicyMessage {
  std::string role; // "user" or "assistant"
  std::string content;
  std::vector<std::string> images; // ids/paths; bytes never fingerprinted
};

struct DecodingHints {
  int max_length = 2048;
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

struct PolicyRequest {
  PolicyRole role = PolicyRole::student;
  std::string system_prompt;
  std::vector<PolicyMessage> messages;
  DecodingHints decoding;
};

struct Usage {
  std::int64_t prompt_token_estimate = 0;
  std::int64_t completion_token_estimate = 0;
};

struct PolicyResponse {
  std::string content;
  Usage usage;
  std::int64_t latency_ms = 0;
};

// Stable lookup key for scripted fixtures: role + system prompt + message
// contents + image ids. Image bytes are excluded so fixtures survive
// re-encoding.
std::string fingerprint(const PolicyRequest &req);

using PolicyFn = std::function<std::string(const PolicyRequest &)>;

class PolicyHandle {
public:
  PolicyRole role = PolicyRole::student;
  PolicyBackend backend = PolicyBackend::scripted;
  std::string endpoint;
  std::uint64_t seed = 0;

  static PolicyHandle scripted(PolicyRole role, const std::string &fixture_path,
                               std::uint64_t seed = 0);
  static PolicyHandle remote(PolicyRole role, const std::string &endpoint,
                             std::uint64_t seed = 0, int max_in_flight = 8);
  static PolicyHandle callback(PolicyRole role, PolicyFn fn,
                               std::uint64_t seed = 0);

  // Optional fallback for scripted lookups with no fixture entry.
  void set_default_content(const std::string &content);

  PolicyResponse complete(const PolicyRequest &req) const;

private:
  std::shared_ptr<std::map<std::string, std::string>> fixtures_;
  std::optional<std::string> default_content_;
  PolicyFn fn_;
  int max_in_flight_ = 8;
  std::shared_ptr<struct InFlightGate> gate_;
};

// One recap entry per tool action plus a final Terminate entry.
struct RecapEntry {
  int step = 0;
  std::string tool;
  std::string why;
  std::string got;
  std::string update; // increase | decrease | no_change
  std::string evidence;
  std::string inference;
  int confidence = 0;
  bool terminate_entry = false;
};

struct RecapResult {
  std::vector<std::string> thinks; // one per action + one for the final turn
  std::vector<RecapEntry> entries;
};

// Asks the recap backend for a hindsight re-narration. The action sequence is
// never taken from the backend; callers rebuild retrospective turns from the
// original actions plus these think texts. Throws RecapInvalid when the
// backend output fails schema validation.
RecapResult recap(const PolicyHandle &h, const std::string &question,
                  const std::string &answer, const std::vector<Action> &actions,
                  const std::vector<std::string> &observations);

} // namespace forge
