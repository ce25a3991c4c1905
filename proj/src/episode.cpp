#include "forge/episode.hpp"

#include <algorithm>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

PolicyRequest episode_request(const EpisodeState &state,
                              const DecodingHints &decoding, PolicyRole role) {
  PolicyRequest req;
  req.role = role;
  req.system_prompt = state.env.system_prompt;
  req.decoding = decoding;
  for (const Turn &t : state.turns) {
    PolicyMessage m;
    m.role = (t.role == Role::human || t.role == Role::observation)
                 ? "user"
                 : "assistant";
    m.content = t.value();
    m.images = t.images;
    req.messages.push_back(std::move(m));
  }
  return req;
}

namespace {

std::optional<Action> try_parse_action(const std::string &body,
                                       const std::string &think) {
  nlohmann::json j = nlohmann::json::parse(text::trim(body), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("name") ||
      !j["name"].is_string() || j["name"].get<std::string>().empty())
    return std::nullopt;
  Action a;
  a.name = j["name"].get<std::string>();
  if (j.contains("arguments") && j["arguments"].is_object())
    a.arguments = j["arguments"];
  a.think = think;
  return a;
}

} // namespace

EpisodeRunResult run_episode(const EnvironmentSpec &env, const Sample &sample,
                             const std::optional<PatientVignette> &vignette,
                             const PolicyHandle &policy,
                             const ExecutorSet &executors,
                             const DecodingHints &decoding,
                             std::optional<int> t_cap) {
  EnvironmentSpec capped = env;
  if (t_cap)
    capped.t_max = std::min(capped.t_max, *t_cap);

  EpisodeRunResult out;
  out.state = reset(capped, sample, vignette);
  EpisodeState &state = out.state;

  while (!state.terminated && !state.failed) {
    PolicyResponse resp =
        policy.complete(episode_request(state, decoding, policy.role));
    out.tokens += resp.usage.completion_token_estimate;
    out.latency_ms += resp.latency_ms;

    auto [think, body] = split_think(resp.content);
    std::string think_text = think ? *think : std::string();

    if (capped.environment_id == EnvironmentId::tool_calling &&
        body.find(kFinalMarker) != std::string::npos) {
      finish(state, think, body);
      break;
    }

    std::optional<Action> action = try_parse_action(body, think_text);
    if (!action) {
      // A plain reply is only a legal finish for answer-style terminals or
      // after a forced-answer request.
      finish(state, think, body);
      break;
    }

    if (state.forced && action->name != "Terminate") {
      // Already asked for an immediate answer; another tool call fails the
      // episode instead of looping.
      state.failed = true;
      state.terminated = true;
      break;
    }

    if (out.first_action.empty())
      out.first_action = action->name;

    try {
      StepOutcome outcome = step(state, *action, executors);
      if (outcome.kind == StepOutcome::Kind::terminal)
        break;
    } catch (const UnknownAction &) {
      state.failed = true;
      state.terminated = true;
    } catch (const SchemaViolation &) {
      state.failed = true;
      state.terminated = true;
    }
  }

  out.forced = state.forced;
  out.depth = state.actions_taken;
  if (out.first_action.empty())
    out.first_action = "direct";
  if (!state.failed && state.final_answer) {
    out.answer = *state.final_answer;
    out.success = true;
  }
  return out;
}

} // namespace forge
