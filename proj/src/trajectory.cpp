#include "forge/trajectory.hpp"

#include <algorithm>
#include <set>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

namespace {

bool contains_ci(const std::string &haystack, const std::string &needle) {
  if (needle.empty())
    return true;
  std::string h = text::lower(haystack), n = text::lower(needle);
  return h.find(n) != std::string::npos;
}

} // namespace

std::string role_name(Role r) {
  switch (r) {
  case Role::human:
    return "human";
  case Role::function_call:
    return "function_call";
  case Role::observation:
    return "observation";
  case Role::gpt:
    return "gpt";
  }
  return "?";
}

Role role_from_name(const std::string &name) {
  if (name == "human")
    return Role::human;
  if (name == "function_call")
    return Role::function_call;
  if (name == "observation")
    return Role::observation;
  if (name == "gpt")
    return Role::gpt;
  throw ParseError("unknown role: " + name);
}

std::string environment_name(EnvironmentId id) {
  switch (id) {
  case EnvironmentId::tool_calling:
    return "tool_calling";
  case EnvironmentId::interleaved:
    return "interleaved";
  case EnvironmentId::collaboration:
    return "collaboration";
  case EnvironmentId::simulation:
    return "simulation";
  case EnvironmentId::direct:
    return "direct";
  }
  return "?";
}

EnvironmentId environment_from_name(const std::string &name) {
  if (name == "tool_calling")
    return EnvironmentId::tool_calling;
  if (name == "interleaved")
    return EnvironmentId::interleaved;
  if (name == "collaboration")
    return EnvironmentId::collaboration;
  if (name == "simulation")
    return EnvironmentId::simulation;
  if (name == "direct")
    return EnvironmentId::direct;
  throw ParseError("unknown environment_id: " + name);
}

std::string mode_name(Mode m) {
  switch (m) {
  case Mode::direct:
    return "direct";
  case Mode::enhanced:
    return "enhanced";
  case Mode::prospective:
    return "prospective";
  case Mode::retrospective:
    return "retrospective";
  }
  return "?";
}

Mode mode_from_name(const std::string &name) {
  if (name == "direct")
    return Mode::direct;
  if (name == "enhanced")
    return Mode::enhanced;
  if (name == "prospective")
    return Mode::prospective;
  if (name == "retrospective")
    return Mode::retrospective;
  throw ParseError("unknown mode: " + name);
}

std::string Turn::value() const {
  if (think)
    return std::string(kThinkOpen) + *think + kThinkClose + content;
  return content;
}

std::size_t Turn::image_token_count() const {
  return count_image_tokens(value());
}

std::size_t count_image_tokens(const std::string &content) {
  std::size_t n = 0, pos = 0;
  const std::string tok = kImageToken;
  while ((pos = content.find(tok, pos)) != std::string::npos) {
    ++n;
    pos += tok.size();
  }
  return n;
}

std::pair<std::optional<std::string>, std::string>
split_think(const std::string &raw) {
  const std::string open = kThinkOpen, close = kThinkClose;
  if (raw.rfind(open, 0) != 0)
    return {std::nullopt, raw};
  std::size_t end = raw.find(close, open.size());
  if (end == std::string::npos)
    return {std::nullopt, raw};
  return {raw.substr(open.size(), end - open.size()),
          raw.substr(end + close.size())};
}

int depth(const Trajectory &t) {
  return static_cast<int>(
      std::count_if(t.turns.begin(), t.turns.end(), [](const Turn &turn) {
        return turn.role == Role::function_call;
      }));
}

Action parse_action(const Turn &turn) {
  if (turn.role != Role::function_call && turn.role != Role::gpt)
    throw ParseError("turn role " + role_name(turn.role) +
                     " carries no action");
  nlohmann::json body =
      nlohmann::json::parse(text::trim(turn.content), nullptr, false);
  if (body.is_discarded() || !body.is_object())
    throw ParseError("action body is not a JSON object");
  if (!body.contains("name") || !body["name"].is_string() ||
      body["name"].get<std::string>().empty())
    throw ParseError("action missing nonempty name");
  Action a;
  a.name = body["name"].get<std::string>();
  if (body.contains("arguments")) {
    if (!body["arguments"].is_object())
      throw ParseError("action arguments is not a JSON object");
    a.arguments = body["arguments"];
  }
  if (turn.think)
    a.think = *turn.think;
  return a;
}

namespace {

void check_grammar(const std::vector<Turn> &turns, bool as_parse_error) {
  auto fail = [&](const std::string &msg, int idx) {
    if (as_parse_error)
      throw ParseError(msg, -1, idx);
    throw InvariantViolation(msg + " (turn " + std::to_string(idx) + ")");
  };
  if (turns.size() < 2)
    fail("trajectory needs at least human and gpt turns",
         static_cast<int>(turns.size()));
  if (turns.front().role != Role::human)
    fail("first turn must be human", 0);
  if (turns.back().role != Role::gpt)
    fail("last turn must be gpt", static_cast<int>(turns.size()) - 1);
  for (std::size_t i = 1; i + 1 < turns.size(); ++i) {
    Role expected =
        (i % 2 == 1) ? Role::function_call : Role::observation;
    if (turns[i].role != expected)
      fail("expected " + role_name(expected) + " but found " +
               role_name(turns[i].role),
           static_cast<int>(i));
  }
  if (turns.size() % 2 != 0)
    fail("dangling function_call without observation",
         static_cast<int>(turns.size()) - 1);
}

} // namespace

void check_invariants(const Trajectory &t) {
  check_grammar(t.turns, /*as_parse_error=*/false);
  std::size_t image_total = 0;
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const Turn &turn = t.turns[i];
    if (turn.role == Role::observation && turn.think)
      throw InvariantViolation("observation turn " + std::to_string(i) +
                               " carries a think block");
    if (turn.image_token_count() != turn.images.size())
      throw InvariantViolation(
          "turn " + std::to_string(i) + " has " +
          std::to_string(turn.image_token_count()) + " image tokens but " +
          std::to_string(turn.images.size()) + " image references");
    if (turn.role == Role::function_call) {
      try {
        parse_action(turn);
      } catch (const ParseError &e) {
        throw InvariantViolation("turn " + std::to_string(i) + ": " +
                                 e.what());
      }
    }
    image_total += turn.images.size();
  }
  if (image_total != t.images.size())
    throw InvariantViolation(
        "per-turn image references (" + std::to_string(image_total) +
        ") do not match conversation images (" +
        std::to_string(t.images.size()) + ")");
  std::vector<std::string> flat;
  for (const Turn &turn : t.turns)
    flat.insert(flat.end(), turn.images.begin(), turn.images.end());
  if (flat != t.images)
    throw InvariantViolation("per-turn image order disagrees with "
                             "conversation-level images list");
  std::set<std::string> tool_names;
  for (const ToolSchema &schema : t.tool_schemas)
    if (!tool_names.insert(schema.name).second)
      throw InvariantViolation("duplicate tool schema: " + schema.name);
  if (!t.final_answer.empty() &&
      !contains_ci(t.turns.back().value(), t.final_answer))
    throw InvariantViolation("final gpt turn does not contain final_answer");
  if (t.tier && (*t.tier < 1 || *t.tier > 3))
    throw InvariantViolation("tier out of range");
}

namespace {

nlohmann::json schema_to_json(const ToolSchema &s) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto &[pname, p] : s.parameters) {
    params[pname] = {{"description", p.description},
                     {"required", p.required},
                     {"type", p.type}};
  }
  return {{"description", s.description},
          {"name", s.name},
          {"parameters", params}};
}

ToolSchema schema_from_json(const nlohmann::json &j) {
  if (!j.is_object() || !j.contains("name"))
    throw ParseError("malformed tool schema");
  ToolSchema s;
  s.name = j.at("name").get<std::string>();
  s.description = j.value("description", std::string());
  if (j.contains("parameters")) {
    for (const auto &[pname, pj] : j.at("parameters").items()) {
      ToolSchema::Param p;
      p.type = pj.value("type", std::string("string"));
      p.description = pj.value("description", std::string());
      p.required = pj.value("required", false);
      s.parameters[pname] = p;
    }
  }
  return s;
}

} // namespace

nlohmann::json to_document(const Trajectory &t) {
  check_invariants(t);
  nlohmann::json conversations = nlohmann::json::array();
  for (const Turn &turn : t.turns)
    conversations.push_back(
        {{"role", role_name(turn.role)}, {"value", turn.value()}});
  nlohmann::json tools = nlohmann::json::array();
  for (const ToolSchema &s : t.tool_schemas)
    tools.push_back(schema_to_json(s));
  nlohmann::json metadata = {
      {"environment_id", environment_name(t.environment_id)},
      {"final_answer", t.final_answer},
      {"mode", mode_name(t.mode)},
      {"sample_id", t.sample_id},
      {"system_prompt", t.system_prompt}};
  if (t.tier)
    metadata["tier"] = *t.tier;
  return {{"conversations", conversations},
          {"images", t.images},
          {"metadata", metadata},
          {"tools", tools}};
}

std::string serialize(const Trajectory &t) {
  return to_document(t).dump() + "\n";
}

Trajectory from_document(const nlohmann::json &doc) {
  if (!doc.is_object())
    throw ParseError("document is not a JSON object");
  for (const char *key : {"conversations", "images", "metadata"})
    if (!doc.contains(key))
      throw ParseError(std::string("document missing field: ") + key);

  Trajectory t;
  const nlohmann::json &md = doc.at("metadata");
  t.sample_id = md.value("sample_id", std::string());
  t.environment_id =
      environment_from_name(md.value("environment_id", std::string("direct")));
  t.system_prompt = md.value("system_prompt", std::string());
  t.mode = mode_from_name(md.value("mode", std::string("direct")));
  t.final_answer = md.value("final_answer", std::string());
  if (md.contains("tier") && !md.at("tier").is_null())
    t.tier = md.at("tier").get<int>();

  if (doc.contains("tools"))
    for (const auto &tj : doc.at("tools"))
      t.tool_schemas.push_back(schema_from_json(tj));

  for (const auto &ref : doc.at("images"))
    t.images.push_back(ref.get<std::string>());

  int idx = 0;
  for (const auto &cj : doc.at("conversations")) {
    if (!cj.is_object() || !cj.contains("role") || !cj.contains("value"))
      throw ParseError("malformed conversation entry", -1, idx);
    Turn turn;
    turn.role = role_from_name(cj.at("role").get<std::string>());
    std::string raw = cj.at("value").get<std::string>();
    if (turn.role == Role::function_call || turn.role == Role::gpt) {
      auto [think, rest] = split_think(raw);
      turn.think = think;
      turn.content = rest;
    } else {
      turn.content = raw;
    }
    t.turns.push_back(std::move(turn));
    ++idx;
  }

  check_grammar(t.turns, /*as_parse_error=*/true);

  // Distribute the conversation-level image list over turns in placeholder
  // order; any mismatch is an alignment error.
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    std::size_t n = t.turns[i].image_token_count();
    if (cursor + n > t.images.size())
      throw ParseError("image token count exceeds images list", -1,
                       static_cast<int>(i));
    t.turns[i].images.assign(t.images.begin() + cursor,
                             t.images.begin() + cursor + n);
    cursor += n;
  }
  if (cursor != t.images.size())
    throw ParseError("images list longer than image token count", -1,
                     static_cast<int>(t.turns.size()) - 1);

  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    if (t.turns[i].role != Role::function_call)
      continue;
    try {
      parse_action(t.turns[i]);
    } catch (const ParseError &e) {
      throw ParseError(e.what(), -1, static_cast<int>(i));
    }
  }
  return t;
}

Trajectory deserialize(const std::string &doc) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::parse_error &e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(),
                     static_cast<long>(e.byte));
  }
  return from_document(j);
}

} // namespace forge
