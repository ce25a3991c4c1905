#include "forge/validator.hpp"

#include <algorithm>
#include <fstream>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

nlohmann::json Violation::to_json() const {
  nlohmann::json j = {{"message", message},
                      {"rule_id", rule_id},
                      {"severity",
                       severity == Severity::reject ? "reject" : "flag"}};
  if (turn_index)
    j["turn_index"] = *turn_index;
  return j;
}

LintReport::Verdict LintReport::verdict() const {
  bool flagged = false;
  for (const Violation &v : violations) {
    if (v.severity == Violation::Severity::reject)
      return Verdict::reject;
    flagged = true;
  }
  return flagged ? Verdict::flagged : Verdict::pass;
}

nlohmann::json LintReport::to_json() const {
  nlohmann::json vs = nlohmann::json::array();
  for (const Violation &v : violations)
    vs.push_back(v.to_json());
  const char *verdict_name =
      verdict() == Verdict::pass
          ? "pass"
          : (verdict() == Verdict::reject ? "reject" : "flagged");
  return {{"trajectory_id", trajectory_id},
          {"verdict", verdict_name},
          {"violations", vs}};
}

namespace {

struct RawTurn {
  Role role;
  std::string value;
};

// Terminal-marker rule per environment, evaluated on the raw final value.
bool has_terminal_marker(EnvironmentId env, const std::string &raw_value,
                         std::string *answer_out) {
  auto [think, body] = split_think(raw_value);
  (void)think;
  switch (env) {
  case EnvironmentId::tool_calling: {
    std::size_t pos = raw_value.find(kFinalMarker);
    if (pos == std::string::npos)
      return false;
    if (answer_out)
      *answer_out = text::trim(
          raw_value.substr(pos + std::string(kFinalMarker).size()));
    return true;
  }
  case EnvironmentId::interleaved:
  case EnvironmentId::simulation: {
    nlohmann::json j = nlohmann::json::parse(text::trim(body), nullptr, false);
    const char *field =
        env == EnvironmentId::simulation ? "diagnosis" : "ans";
    if (j.is_discarded() || !j.is_object() || j.value("name", "") != "Terminate" ||
        !j.contains("arguments") || !j["arguments"].is_object() ||
        !j["arguments"].contains(field) || !j["arguments"][field].is_string())
      return false;
    if (answer_out)
      *answer_out = j["arguments"][field].get<std::string>();
    return true;
  }
  case EnvironmentId::collaboration:
  case EnvironmentId::direct: {
    std::string trimmed = text::trim(body);
    if (trimmed.empty())
      return false;
    if (answer_out)
      *answer_out = trimmed;
    return true;
  }
  }
  return false;
}

} // namespace

LintReport structural_check(const nlohmann::json &doc,
                            const EnvironmentSpec &env, const MatchFn &matcher,
                            const std::string &gold, int length_bound) {
  LintReport rep;
  if (doc.is_object() && doc.contains("metadata") &&
      doc["metadata"].is_object())
    rep.trajectory_id = doc["metadata"].value("sample_id", std::string());

  auto add = [&rep](const std::string &rule, std::optional<int> turn,
                    const std::string &msg) {
    rep.violations.push_back(
        {rule, turn, msg, Violation::Severity::reject});
  };

  // Shape + grammar. If the conversation structure is broken, later rules
  // would only be noise, so stop after reporting.
  std::vector<RawTurn> turns;
  bool grammar_ok = true;
  if (!doc.is_object() || !doc.contains("conversations") ||
      !doc["conversations"].is_array()) {
    add("turn_grammar", std::nullopt, "document lacks a conversations list");
    return rep;
  }
  int idx = 0;
  for (const auto &cj : doc["conversations"]) {
    if (!cj.is_object() || !cj.contains("role") || !cj["role"].is_string() ||
        !cj.contains("value") || !cj["value"].is_string()) {
      add("turn_grammar", idx, "malformed conversation entry");
      return rep;
    }
    try {
      turns.push_back({role_from_name(cj["role"].get<std::string>()),
                       cj["value"].get<std::string>()});
    } catch (const ParseError &) {
      add("turn_grammar", idx, "unknown role name");
      return rep;
    }
    ++idx;
  }
  if (turns.size() < 2 || turns.front().role != Role::human ||
      turns.back().role != Role::gpt || turns.size() % 2 != 0) {
    grammar_ok = false;
  } else {
    for (std::size_t i = 1; i + 1 < turns.size(); ++i) {
      Role expected = (i % 2 == 1) ? Role::function_call : Role::observation;
      if (turns[i].role != expected) {
        grammar_ok = false;
        break;
      }
    }
  }
  if (!grammar_ok) {
    add("turn_grammar", std::nullopt,
        "turn sequence breaks human -> (function_call -> observation)* -> "
        "gpt");
    return rep;
  }

  // Actions: JSON body, known tool, schema-valid arguments.
  int call_count = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].role != Role::function_call)
      continue;
    ++call_count;
    auto [think, body] = split_think(turns[i].value);
    (void)think;
    nlohmann::json j =
        nlohmann::json::parse(text::trim(body), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("name") ||
        !j["name"].is_string() || j["name"].get<std::string>().empty() ||
        (j.contains("arguments") && !j["arguments"].is_object())) {
      add("arguments_json", static_cast<int>(i),
          "action body is not a JSON object with name and arguments");
      continue;
    }
    std::string name = j["name"].get<std::string>();
    const ToolSchema *schema = env.find_tool(name);
    if (!schema) {
      add("unknown_tool", static_cast<int>(i),
          "action names an unregistered tool: " + name);
      continue;
    }
    Action a;
    a.name = name;
    if (j.contains("arguments"))
      a.arguments = j["arguments"];
    try {
      validate_action_arguments(*schema, a);
    } catch (const SchemaViolation &e) {
      add("arguments_json", static_cast<int>(i), e.what());
    }
  }

  // Terminal marker and correctness.
  std::string extracted;
  if (!has_terminal_marker(env.environment_id, turns.back().value,
                           &extracted))
    add("missing_terminate", static_cast<int>(turns.size()) - 1,
        "terminal gpt turn lacks the environment's answer marker");

  if (!gold.empty()) {
    std::string answer;
    if (doc.contains("metadata") && doc["metadata"].is_object())
      answer = doc["metadata"].value("final_answer", std::string());
    if (answer.empty())
      answer = extracted;
    if (answer.empty() || !matcher(answer, gold))
      add("correctness", std::nullopt,
          "final answer does not match the gold answer");
  }

  // Image alignment.
  std::size_t placeholder_count = 0;
  for (const RawTurn &t : turns)
    placeholder_count += count_image_tokens(t.value);
  std::size_t image_count = 0;
  if (doc.contains("images") && doc["images"].is_array())
    image_count = doc["images"].size();
  if (placeholder_count != image_count)
    add("image_alignment", std::nullopt,
        std::to_string(placeholder_count) + " image tokens vs " +
            std::to_string(image_count) + " image references");

  // Length and depth bounds.
  std::size_t total_chars = 0;
  for (const RawTurn &t : turns)
    total_chars += t.value.size();
  if (total_chars > static_cast<std::size_t>(length_bound))
    add("length_bound", std::nullopt,
        "turn contents total " + std::to_string(total_chars) +
            " characters, bound is " + std::to_string(length_bound));

  if (call_count > env.t_max)
    add("depth_bound", std::nullopt,
        "depth " + std::to_string(call_count) + " exceeds bound " +
            std::to_string(env.t_max));

  return rep;
}

LintReport structural_check(const Trajectory &t, const EnvironmentSpec &env,
                            const MatchFn &matcher, const std::string &gold,
                            int length_bound) {
  return structural_check(to_document(t), env, matcher, gold, length_bound);
}

namespace {

std::size_t meaningful_chars(const std::string &s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if (std::isalnum(c))
      ++n;
  return n;
}

bool contains_phrase(const std::string &normalized_haystack,
                     const std::string &normalized_phrase) {
  std::string h = " " + normalized_haystack + " ";
  std::string p = " " + normalized_phrase + " ";
  return h.find(p) != std::string::npos;
}

} // namespace

std::vector<std::string> load_lexicon(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open lexicon file: " + path);
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    line = text::trim(line);
    if (!line.empty() && line.front() != '#')
      terms.push_back(line);
  }
  return terms;
}

LintReport behavioral_check(const Trajectory &t,
                            const std::vector<std::string> &lexicon) {
  LintReport rep;
  rep.trajectory_id = t.sample_id;

  auto add = [&rep](const std::string &rule, std::optional<int> turn,
                    const std::string &msg, Violation::Severity sev) {
    rep.violations.push_back({rule, turn, msg, sev});
  };

  // Per-turn checks.
  std::optional<Action> previous_action;
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const Turn &turn = t.turns[i];
    std::string value = turn.value();

    if (std::count(value.begin(), value.end(), '`') >= 3) {
      std::size_t fences = 0, pos = 0;
      while ((pos = value.find("```", pos)) != std::string::npos) {
        ++fences;
        pos += 3;
      }
      if (fences % 2 != 0)
        add("truncation", static_cast<int>(i), "unclosed code fence",
            Violation::Severity::reject);
    }

    if (meaningful_chars(value) < 10)
      add("short_content", static_cast<int>(i),
          "fewer than 10 characters of meaningful content",
          Violation::Severity::reject);

    if (turn.role == Role::function_call) {
      if (!turn.think || text::trim(*turn.think).empty()) {
        add("missing_think", static_cast<int>(i),
            "function_call turn has no reasoning block",
            Violation::Severity::reject);
      } else {
        std::string think = text::trim(*turn.think);
        char last = think.back();
        if (last != '.' && last != '!' && last != '?')
          add("truncation", static_cast<int>(i),
              "reasoning block lacks terminal punctuation",
              Violation::Severity::reject);
      }

      long balance_braces = 0, balance_brackets = 0;
      for (char c : turn.content) {
        balance_braces += (c == '{') - (c == '}');
        balance_brackets += (c == '[') - (c == ']');
      }
      if (balance_braces != 0 || balance_brackets != 0)
        add("truncation", static_cast<int>(i),
            "unbalanced braces in action JSON", Violation::Severity::reject);

      nlohmann::json j =
          nlohmann::json::parse(text::trim(turn.content), nullptr, false);
      if (!j.is_discarded() && j.is_object() && j.contains("name")) {
        Action a;
        a.name = j.value("name", "");
        if (j.contains("arguments") && j["arguments"].is_object())
          a.arguments = j["arguments"];
        if (previous_action && previous_action->name == a.name &&
            previous_action->arguments == a.arguments)
          add("repetition_loop", static_cast<int>(i),
              "consecutive duplicate tool call: " + a.name,
              Violation::Severity::reject);
        previous_action = a;
      }
    }
  }

  // Hallucination candidates: lexicon terms appearing in reasoning but in
  // neither the question nor any observation.
  std::string context;
  for (const Turn &turn : t.turns)
    if (turn.role == Role::human || turn.role == Role::observation)
      context += " " + text::normalize(turn.content);
  std::string thinks;
  for (const Turn &turn : t.turns)
    if (turn.think)
      thinks += " " + text::normalize(*turn.think);
  for (const std::string &term : lexicon) {
    std::string norm_term = text::normalize(term);
    if (norm_term.empty())
      continue;
    if (contains_phrase(thinks, norm_term) &&
        !contains_phrase(context, norm_term))
      add("hallucination_keyword", std::nullopt,
          "reasoning mentions \"" + term +
              "\" absent from question and observations",
          Violation::Severity::flag);
  }

  return rep;
}

} // namespace forge
