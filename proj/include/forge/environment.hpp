#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/policy.hpp"
#include "forge/trajectory.hpp"

namespace forge {

inline constexpr const char *kNotAvailableSentinel = "not available";
inline constexpr const char *kForcedAnswerRequest =
    "Interaction limit reached. Provide your final answer now without "
    "calling any more tools.";

struct EnvironmentSpec {
  EnvironmentId environment_id = EnvironmentId::direct;
  int t_max = 0;
  std::vector<ToolSchema> tool_schemas;
  std::string terminal_rule;
  std::string system_prompt;

  // Canonical per-environment definition: T_max 4 / 6 / 12 / 12 and the
  // environment's tool roster.
  static EnvironmentSpec standard(EnvironmentId id);

  const ToolSchema *find_tool(const std::string &name) const;
};

struct Sample {
  std::string sample_id;
  std::string dataset_id;
  std::string question;
  std::vector<std::string> images;
  std::string gold_answer;
  std::string category;

  static Sample from_json(const nlohmann::json &j);
  nlohmann::json to_json() const;
};

struct PatientVignette {
  std::string objective;
  std::string demographics;
  std::string history;
  std::string primary_symptom;
  std::vector<std::string> secondary_symptoms;
  std::string past_medical_history;
  std::string social_history;
  std::string review_of_systems;
  nlohmann::json physical_examination_findings = nlohmann::json::object();
  nlohmann::json test_results = nlohmann::json::object();
  std::string correct_diagnosis;

  // Parses the strict OSCE JSON layout (OSCE_Examination wrapper accepted).
  static PatientVignette from_json(const nlohmann::json &j);
  static PatientVignette load(const std::string &path);

  std::string presentation_text() const;

  // Case-insensitive lookup with underscores/spaces unified; one nested
  // level of fallback before giving up.
  std::optional<std::string> lookup_exam(const std::string &name) const;
  std::optional<std::string> lookup_test(const std::string &name) const;
};

// Renders a vignette JSON node the way observations quote it: string nodes
// verbatim, object nodes as "Key: value; ..." over their leaves.
std::string render_vignette_node(const nlohmann::json &node);

struct ToolResult {
  std::string observation;
  std::optional<std::string> produced_image;
  bool failed = false;
};

// Scripted tool outputs keyed by (sample_id, tool, arguments hash), plus the
// builtin zoom crop. The neural tools from the source frameworks stay
// scripted; only the crop is computed for real.
class ExecutorSet {
public:
  ExecutorSet() = default;

  void load_fixtures(const std::string &jsonl_path);
  void add_fixture(const std::string &sample_id, const std::string &tool,
                   const nlohmann::json &arguments,
                   const std::string &observation,
                   const std::string &produced_image = "");

  // Directory for images produced by the builtin crop.
  void set_output_dir(const std::string &dir) { output_dir_ = dir; }

  ToolResult execute(const std::string &sample_id, const Action &action,
                     const std::string &resolved_image_path) const;

  static std::string arguments_hash(const nlohmann::json &arguments);

private:
  std::map<std::string, ToolResult> fixtures_;
  std::string output_dir_ = ".";
};

struct EpisodeState {
  EnvironmentSpec env;
  Sample sample;
  std::optional<PatientVignette> vignette;
  std::vector<Turn> turns;
  int actions_taken = 0;
  // Insertion-ordered registry; img_last aliases the newest id.
  std::vector<std::pair<std::string, std::string>> image_registry;
  std::string img_last;
  std::string stage;
  bool terminated = false;
  bool forced = false;
  bool failed = false;
  std::optional<std::string> final_answer;

  std::optional<std::string> resolve_image(const std::string &id) const;
};

EpisodeState reset(const EnvironmentSpec &env, const Sample &sample,
                   const std::optional<PatientVignette> &vignette = {});

struct StepOutcome {
  enum class Kind { continued, terminal, depth_limit } kind;
  std::string final_answer; // set when terminal
};

// Checks an action's arguments against a tool schema: required fields
// present, no unknown fields, values of the declared types. Throws
// SchemaViolation.
void validate_action_arguments(const ToolSchema &schema, const Action &action);

// Applies one action. Terminate-class actions close the episode; hitting
// T_max appends a forced-answer request and reports depth_limit. Tool
// failures come back as observations and the episode continues.
StepOutcome step(EpisodeState &state, const Action &action,
                 const ExecutorSet &executors);

// Appends the terminal gpt turn for answer-style finishes ([FINAL] for tool
// calling, forced answers, direct replies).
void finish(EpisodeState &state, const std::optional<std::string> &think,
            const std::string &content);

// Answer extraction from a terminated episode, per environment rule.
std::string extract_answer(const EpisodeState &state);

// Builds the strict trajectory for a successfully terminated, unforced
// episode.
Trajectory to_trajectory(const EpisodeState &state, Mode mode,
                         std::optional<int> tier = {});

// ---- Multi-agent collaboration (staged debate protocol) ----

struct CollaborationOptions {
  int expert_count = 3;
  int debate_rounds = 2;
  DecodingHints decoding;
};

// Runs difficulty assessment -> (basic: single expert) | (intermediate or
// advanced: recruit -> analyses -> debate -> synthesis -> moderator majority
// vote). Each stage is one (function_call, observation) pair; the moderator
// verdict becomes the terminal gpt turn.
Trajectory run_collaboration(const Sample &sample, const PolicyHandle &policy,
                             const CollaborationOptions &opts = {});

// Majority by normalized answer; ties fall back to the first expert.
std::string majority_vote(const std::vector<std::string> &answers);

} // namespace forge
