#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

enum class Role { human, function_call, observation, gpt };

std::string role_name(Role r);
Role role_from_name(const std::string &name); // throws ParseError

enum class EnvironmentId {
  tool_calling,
  interleaved,
  collaboration,
  simulation,
  direct
};

std::string environment_name(EnvironmentId id);
EnvironmentId environment_from_name(const std::string &name);

enum class Mode { direct, enhanced, prospective, retrospective };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string &name);

inline constexpr const char *kImageToken = "<image>";
inline constexpr const char *kThinkOpen = "<think>";
inline constexpr const char *kThinkClose = "</think>";
inline constexpr const char *kFinalMarker = "[FINAL]";

struct Action {
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
  std::string think;

  bool operator==(const Action &) const = default;
};

struct Turn {
  Role role = Role::human;
  std::string content; // body with any leading think block removed
  std::optional<std::string> think;
  std::vector<std::string> images; // references for this turn's placeholders

  // Full turn text as stored in the interchange format (think re-embedded).
  std::string value() const;
  std::size_t image_token_count() const;

  bool operator==(const Turn &) const = default;
};

struct ToolSchema {
  struct Param {
    std::string type;
    std::string description;
    bool required = false;
    bool operator==(const Param &) const = default;
  };
  std::string name;
  std::string description;
  std::map<std::string, Param> parameters;

  bool operator==(const ToolSchema &) const = default;
};

struct Trajectory {
  std::string sample_id;
  EnvironmentId environment_id = EnvironmentId::direct;
  std::string system_prompt;
  std::vector<ToolSchema> tool_schemas;
  std::vector<Turn> turns;
  std::vector<std::string> images;
  Mode mode = Mode::direct;
  std::string final_answer;
  std::optional<int> tier;

  bool operator==(const Trajectory &) const = default;
};

// Number of function_call turns. The terminal gpt turn never counts.
int depth(const Trajectory &t);

// Splits a leading <think>...</think> block off a raw turn value.
// Returns {think (nullopt when absent), remainder}. The remainder keeps its
// original bytes so value() reconstructs the input exactly.
std::pair<std::optional<std::string>, std::string>
split_think(const std::string &raw);

std::size_t count_image_tokens(const std::string &content);

// Parses the JSON action body of a function_call turn.
Action parse_action(const Turn &turn); // throws ParseError

// Canonical single-document serialization: UTF-8, sorted keys, no
// insignificant whitespace, trailing LF. Throws InvariantViolation when the
// trajectory breaks its own invariants.
std::string serialize(const Trajectory &t);
nlohmann::json to_document(const Trajectory &t);

Trajectory deserialize(const std::string &doc);       // throws ParseError
Trajectory from_document(const nlohmann::json &doc);  // throws ParseError

// Grammar + alignment checks shared by serialize/deserialize. Throws
// InvariantViolation with a human-readable reason.
void check_invariants(const Trajectory &t);

} // namespace forge
