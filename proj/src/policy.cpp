#include "forge/policy.hpp"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

std::string policy_role_name(PolicyRole r) {
  switch (r) {
  case PolicyRole::student:
    return "student";
  case PolicyRole::teacher:
    return "teacher";
  case PolicyRole::agent:
    return "agent";
  case PolicyRole::recap:
    return "recap";
  case PolicyRole::expert:
    return "expert";
  case PolicyRole::moderator:
    return "moderator";
  case PolicyRole::patient:
    return "patient";
  }
  return "?";
}

PolicyRole policy_role_from_name(const std::string &name) {
  if (name == "student")
    return PolicyRole::student;
  if (name == "teacher")
    return PolicyRole::teacher;
  if (name == "agent")
    return PolicyRole::agent;
  if (name == "recap")
    return PolicyRole::recap;
  if (name == "expert")
    return PolicyRole::expert;
  if (name == "moderator")
    return PolicyRole::moderator;
  if (name == "patient")
    return PolicyRole::patient;
  throw ConfigError("unknown policy role: " + name);
}

std::string fingerprint(const PolicyRequest &req) {
  std::string key = policy_role_name(req.role);
  key.push_back('\x1f');
  key += req.system_prompt;
  for (const PolicyMessage &m : req.messages) {
    key.push_back('\x1f');
    key += m.role;
    key.push_back('\x1e');
    key += m.content;
    for (const std::string &img : m.images) {
      key.push_back('\x1d');
      key += img;
    }
  }
  return text::fnv1a_hex(key);
}

struct InFlightGate {
  std::mutex mu;
  std::condition_variable cv;
  int in_flight = 0;
  int limit = 8;

  void acquire() {
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [this] { return in_flight < limit; });
    ++in_flight;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lk(mu);
      --in_flight;
    }
    cv.notify_one();
  }
};

PolicyHandle PolicyHandle::scripted(PolicyRole role,
                                    const std::string &fixture_path,
                                    std::uint64_t seed) {
  PolicyHandle h;
  h.role = role;
  h.backend = PolicyBackend::scripted;
  h.seed = seed;
  h.fixtures_ = std::make_shared<std::map<std::string, std::string>>();
  if (!fixture_path.empty()) {
    std::ifstream in(fixture_path);
    if (!in)
      throw ConfigError("cannot open fixture file: " + fixture_path);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty())
        continue;
      nlohmann::json j = nlohmann::json::parse(line);
      if (j.contains("default") && j["default"].get<bool>()) {
        h.default_content_ = j.at("content").get<std::string>();
        continue;
      }
      (*h.fixtures_)[j.at("fingerprint").get<std::string>()] =
          j.at("content").get<std::string>();
    }
  }
  return h;
}

PolicyHandle PolicyHandle::remote(PolicyRole role, const std::string &endpoint,
                                  std::uint64_t seed, int max_in_flight) {
  if (endpoint.empty())
    throw ConfigError("remote policy requires an endpoint");
  PolicyHandle h;
  h.role = role;
  h.backend = PolicyBackend::remote;
  h.endpoint = endpoint;
  h.seed = seed;
  h.max_in_flight_ = max_in_flight;
  h.gate_ = std::make_shared<InFlightGate>();
  h.gate_->limit = max_in_flight;
  return h;
}

PolicyHandle PolicyHandle::callback(PolicyRole role, PolicyFn fn,
                                    std::uint64_t seed) {
  PolicyHandle h;
  h.role = role;
  h.backend = PolicyBackend::callback;
  h.seed = seed;
  h.fn_ = std::move(fn);
  return h;
}

void PolicyHandle::set_default_content(const std::string &content) {
  default_content_ = content;
}

namespace {

nlohmann::json request_to_wire(const PolicyRequest &req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const PolicyMessage &m : req.messages)
    messages.push_back(
        {{"role", m.role}, {"content", m.content}, {"images", m.images}});
  return {{"role", policy_role_name(req.role)},
          {"system", req.system_prompt},
          {"messages", messages},
          {"decoding",
           {{"max_length", req.decoding.max_length},
            {"temperature", req.decoding.temperature},
            {"seed", req.decoding.seed}}}};
}

std::int64_t prompt_estimate(const PolicyRequest &req) {
  std::int64_t total = text::token_estimate(req.system_prompt);
  for (const PolicyMessage &m : req.messages)
    total += text::token_estimate(m.content);
  return total;
}

} // namespace

PolicyResponse PolicyHandle::complete(const PolicyRequest &req) const {
  if (req.messages.empty())
    throw InvariantViolation("policy request has no messages");
  if (req.messages.front().role != "user")
    throw InvariantViolation("first policy message must be human-side");

  auto start = std::chrono::steady_clock::now();
  PolicyResponse resp;

  switch (backend) {
  case PolicyBackend::scripted: {
    bool found = false;
    if (fixtures_) {
      auto it = fixtures_->find(fingerprint(req));
      if (it != fixtures_->end()) {
        resp.content = it->second;
        found = true;
      }
    }
    if (!found) {
      if (!default_content_)
        throw FixtureMiss("no fixture for " + policy_role_name(req.role) +
                          " fingerprint " + fingerprint(req));
      resp.content = *default_content_;
    }
    break;
  }
  case PolicyBackend::callback: {
    resp.content = fn_(req);
    break;
  }
  case PolicyBackend::remote: {
    if (gate_)
      gate_->acquire();
    struct Release {
      std::shared_ptr<InFlightGate> g;
      ~Release() {
        if (g)
          g->release();
      }
    } release{gate_};

    std::string body = request_to_wire(req).dump();
    const int max_retries = 3;
    int attempt = 0;
    httplib::Result res;
    while (true) {
      httplib::Client client(endpoint);
      client.set_read_timeout(60, 0);
      res = client.Post("/complete", body, "application/json");
      if (res)
        break;
      ++attempt;
      if (attempt >= max_retries)
        throw TransportError("policy endpoint unreachable: " + endpoint,
                             attempt);
      std::this_thread::sleep_for(
          std::chrono::milliseconds(100LL << (attempt - 1)));
    }
    if (res->status != 200)
      throw TransportError("policy endpoint returned status " +
                           std::to_string(res->status));
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("content") ||
        !j["content"].is_string())
      throw MalformedResponse("policy endpoint body is not {content, usage?}");
    resp.content = j["content"].get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      resp.usage.prompt_token_estimate =
          j["usage"].value("prompt_tokens", std::int64_t{0});
      resp.usage.completion_token_estimate =
          j["usage"].value("completion_tokens", std::int64_t{0});
    }
    break;
  }
  }

  if (resp.content.empty())
    throw MalformedResponse("policy returned empty content");

  if (resp.usage.prompt_token_estimate == 0)
    resp.usage.prompt_token_estimate = prompt_estimate(req);
  if (resp.usage.completion_token_estimate == 0)
    resp.usage.completion_token_estimate = text::token_estimate(resp.content);

  auto end = std::chrono::steady_clock::now();
  auto measured =
      std::chrono::duration_cast<std::chrono::milliseconds>(end - start)
          .count();
  if (resp.latency_ms == 0)
    resp.latency_ms = measured;
  return resp;
}

namespace {

RecapEntry entry_from_json(const nlohmann::json &j, bool expect_terminate) {
  if (!j.is_object())
    throw RecapInvalid("recap entry is not an object");
  RecapEntry e;
  if (!j.contains("step") || !j["step"].is_number_integer())
    throw RecapInvalid("recap entry missing integer step");
  e.step = j["step"].get<int>();
  if (!j.contains("tool") || !j["tool"].is_string())
    throw RecapInvalid("recap entry missing tool");
  e.tool = j["tool"].get<std::string>();
  if (!j.contains("why") || !j["why"].is_string() ||
      j["why"].get<std::string>().empty())
    throw RecapInvalid("recap entry missing why");
  e.why = j["why"].get<std::string>();

  if (expect_terminate) {
    e.terminate_entry = true;
    if (e.tool != "Terminate")
      throw RecapInvalid("final recap entry must be Terminate");
    for (const auto &[k, v] : j.items())
      if (k != "step" && k != "tool" && k != "why")
        throw RecapInvalid("Terminate recap entry carries extra field: " + k);
    return e;
  }

  for (const char *field : {"got", "update", "evidence", "inference"}) {
    if (!j.contains(field) || !j[field].is_string())
      throw RecapInvalid(std::string("recap entry missing ") + field);
  }
  e.got = j["got"].get<std::string>();
  e.update = j["update"].get<std::string>();
  e.evidence = j["evidence"].get<std::string>();
  e.inference = j["inference"].get<std::string>();
  if (e.update != "increase" && e.update != "decrease" &&
      e.update != "no_change")
    throw RecapInvalid("recap update must be increase|decrease|no_change");
  if (!j.contains("confidence") || !j["confidence"].is_number_integer())
    throw RecapInvalid("recap entry missing integer confidence");
  e.confidence = j["confidence"].get<int>();
  if (e.confidence < 0 || e.confidence > 100)
    throw RecapInvalid("recap confidence out of [0, 100]");
  return e;
}

std::string synthesize_think(const RecapEntry &e) {
  if (e.terminate_entry)
    return e.why + (e.why.back() == '.' ? "" : ".");
  std::string t = "Called " + e.tool + " because " + e.why + " Observed: " +
                  e.got + " Evidence: " + e.evidence + " Inference: " +
                  e.inference + " Confidence " + std::to_string(e.confidence) +
                  "/100.";
  return t;
}

} // namespace

RecapResult recap(const PolicyHandle &h, const std::string &question,
                  const std::string &answer,
                  const std::vector<Action> &actions,
                  const std::vector<std::string> &observations) {
  if (actions.size() != observations.size())
    throw InvariantViolation("recap actions and observations misaligned");

  PolicyRequest req;
  req.role = PolicyRole::recap;
  req.system_prompt =
      "You are a hindsight analyst. Re-narrate the reasoning of a completed "
      "episode while preserving the action sequence. Output strict JSON "
      "{\"recap\": [...], \"thinks\": [...]} with one recap entry per action "
      "plus a final Terminate entry (step, tool, why only).";
  std::string user = "Question: " + question + "\nCorrect answer: " + answer;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    user += "\nStep " + std::to_string(i) + ": " + actions[i].name + " " +
            actions[i].arguments.dump() + " -> " + observations[i];
  }
  req.messages.push_back({"user", user, {}});
  req.decoding.seed = h.seed;

  PolicyResponse resp = h.complete(req);
  nlohmann::json j = nlohmann::json::parse(resp.content, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("recap") ||
      !j["recap"].is_array())
    throw RecapInvalid("recap backend output is not JSON with a recap list");

  const nlohmann::json &list = j["recap"];
  if (list.size() != actions.size() + 1)
    throw RecapInvalid("recap list must have one entry per action plus "
                       "Terminate; expected " +
                       std::to_string(actions.size() + 1) + ", got " +
                       std::to_string(list.size()));

  RecapResult out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    bool last = (i + 1 == list.size());
    RecapEntry e = entry_from_json(list[static_cast<int>(i)], last);
    if (!last && e.tool != actions[i].name)
      throw RecapInvalid("recap entry " + std::to_string(i) +
                         " names tool " + e.tool + " but action was " +
                         actions[i].name);
    out.entries.push_back(std::move(e));
  }

  if (j.contains("thinks") && j["thinks"].is_array() &&
      j["thinks"].size() == actions.size() + 1) {
    for (const auto &t : j["thinks"]) {
      if (!t.is_string() || t.get<std::string>().empty())
        throw RecapInvalid("recap thinks must be nonempty strings");
      out.thinks.push_back(t.get<std::string>());
    }
  } else {
    for (const RecapEntry &e : out.entries)
      out.thinks.push_back(synthesize_think(e));
  }
  return out;
}

} // namespace forge
