// Acceptance gate: one pass/fail line per release criterion.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/environment.hpp"
#include "forge/episode.hpp"
#include "forge/errors.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"
#include "forge/policy.hpp"
#include "forge/text.hpp"
#include "forge/trajectory.hpp"
#include "forge/validator.hpp"

namespace fs = std::filesystem;
using namespace forge;
using Clock = std::chrono::steady_clock;

namespace {

fs::path fixtures() { return FORGE_FIXTURES; }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

nlohmann::json load_json(const fs::path &p) {
  return nlohmann::json::parse(slurp(p));
}

bool expect(bool cond, const std::string &what, std::string *detail) {
  if (!cond && detail->empty())
    *detail = what;
  return cond;
}

// ---- 1: golden corpus round trip ----

bool golden_round_trip(std::string *detail) {
  auto t0 = Clock::now();
  int count = 0;
  for (const char *env :
       {"tool_calling", "interleaved", "collaboration", "simulation"}) {
    for (const auto &entry : fs::directory_iterator(fixtures() / env)) {
      if (entry.path().extension() != ".json")
        continue;
      std::string raw = slurp(entry.path());
      Trajectory t = from_document(nlohmann::json::parse(raw));
      if (serialize(t) != raw) {
        *detail = "re-serialization differs for " + entry.path().string();
        return false;
      }
      ++count;
    }
  }
  if (!expect(count >= 20, "fewer than 20 golden trajectories", detail))
    return false;
  return expect(seconds_since(t0) < 1.0, "round trip exceeded 1s", detail);
}

// ---- 2: validator rule suite ----

bool validator_rules(std::string *detail) {
  auto exact = make_matcher("exact");
  auto lexicon = load_lexicon((fixtures() / "lexicon.txt").string());
  auto reject_rules = [](const LintReport &rep) {
    std::set<std::string> out;
    for (const Violation &v : rep.violations)
      if (v.severity == Violation::Severity::reject)
        out.insert(v.rule_id);
    return out;
  };

  for (const char *rule :
       {"turn_grammar", "arguments_json", "unknown_tool", "missing_terminate",
        "correctness", "image_alignment", "length_bound", "depth_bound"}) {
    nlohmann::json f = load_json(fixtures() / "validator" /
                                 (std::string(rule) + ".json"));
    EnvironmentSpec env = EnvironmentSpec::standard(environment_from_name(
        f["document"]["metadata"]["environment_id"].get<std::string>()));
    LintReport rep = structural_check(f["document"], env, exact,
                                      f["gold"].get<std::string>(),
                                      f.value("length_bound", 10000));
    if (reject_rules(rep) != std::set<std::string>{rule}) {
      *detail = std::string("structural fixture ") + rule +
                " did not trip exactly its rule";
      return false;
    }
  }
  for (const char *rule :
       {"missing_think", "truncation", "repetition_loop", "short_content"}) {
    nlohmann::json f = load_json(fixtures() / "validator" /
                                 (std::string(rule) + ".json"));
    LintReport rep = behavioral_check(from_document(f["document"]), lexicon);
    if (reject_rules(rep) != std::set<std::string>{rule}) {
      *detail = std::string("behavioral fixture ") + rule +
                " did not trip exactly its rule";
      return false;
    }
  }
  nlohmann::json f =
      load_json(fixtures() / "validator" / "hallucination_keyword.json");
  LintReport rep = behavioral_check(from_document(f["document"]), lexicon);
  return expect(rep.verdict() == LintReport::Verdict::flagged &&
                    !rep.rejected(),
                "ungrounded keyword was not a non-fatal flag", detail);
}

// ---- 3: three-tier generation matches the per-sample reference ----

int group_of(const std::string &text) {
  std::size_t at = text.find("group");
  return at == std::string::npos ? -1 : text[at + 5] - '0';
}

std::string gold_of(const std::string &text) {
  return text.substr(text.find('=') + 1);
}

PolicyHandle tier_recap() {
  return PolicyHandle::callback(PolicyRole::recap, [](const PolicyRequest &r) {
    nlohmann::json list = nlohmann::json::array();
    std::istringstream in(r.messages.front().content);
    std::string line;
    int step = 0;
    while (std::getline(in, line)) {
      if (line.rfind("Step ", 0) != 0)
        continue;
      std::string rest = line.substr(line.find(": ") + 2);
      list.push_back({{"step", step++},
                      {"tool", rest.substr(0, rest.find(' '))},
                      {"why", "it narrowed the differential"},
                      {"got", "a clear observation"},
                      {"update", "increase"},
                      {"evidence", "the tool output"},
                      {"inference", "the finding is supported"},
                      {"confidence", 80}});
    }
    list.push_back({{"step", step},
                    {"tool", "Terminate"},
                    {"why", "the evidence sufficed"}});
    return nlohmann::json{{"recap", list}}.dump();
  });
}

bool tiered_generation(std::string *detail) {
  auto t0 = Clock::now();
  const int N = 200;
  std::vector<Sample> data;
  for (int i = 0; i < N; ++i) {
    Sample s;
    s.sample_id = "s" + std::string(i < 10 ? "00" : i < 100 ? "0" : "") +
                  std::to_string(i);
    s.dataset_id = "xr";
    s.question = s.sample_id + " group" + std::to_string(i % 10) + " =ans" +
                 std::to_string(i);
    s.gold_answer = "ans" + std::to_string(i);
    s.images = {"cxr.png"};
    data.push_back(s);
  }

  PolicyHandle student = PolicyHandle::callback(
      PolicyRole::student, [](const PolicyRequest &req) {
        const std::string &q = req.messages.front().content;
        if (group_of(q) < 6)
          return "<think>Direct recall answers this.</think>" + gold_of(q);
        return std::string("<think>Out of my depth here.</think>pass");
      });
  PolicyHandle teacher = PolicyHandle::callback(
      PolicyRole::teacher, [](const PolicyRequest &req) {
        const std::string &q = req.messages.front().content;
        int g = group_of(q);
        if (g == 6 || g == 7)
          return "<think>Deeper knowledge settles it.</think>" + gold_of(q);
        return std::string("<think>Still not answerable directly.</think>pass");
      });
  PolicyHandle agent = PolicyHandle::callback(
      PolicyRole::agent, [](const PolicyRequest &req) {
        const std::string &q = req.messages.front().content;
        if (group_of(q) != 8)
          return std::string(
              "<think>No tool can rescue this one.</think>[FINAL] pass");
        if (req.messages.size() == 1) {
          nlohmann::json call = {{"arguments", {{"image", "img_original"}}},
                                 {"name", "chest_xray_classifier"}};
          return "<think>The image needs a classifier pass.</think>" +
                 call.dump();
        }
        return "<think>The classifier output settles it.</think>[FINAL] " +
               gold_of(q);
      });

  PipelineContext ctx;
  ctx.env_map = {{"xr", EnvironmentId::tool_calling}};
  ctx.retries = 2;
  ctx.workers = 4;
  TierPartition part = run_pipeline(data, student, teacher, agent,
                                    tier_recap(), make_matcher("exact"), ctx);

  // reference partition, derived independently per sample
  std::set<std::string> want_direct, want_enhanced, want_agentic, want_discard;
  for (const Sample &s : data) {
    int g = group_of(s.question);
    (g < 6          ? want_direct
     : g <= 7       ? want_enhanced
     : g == 8       ? want_agentic
                    : want_discard)
        .insert(s.sample_id);
  }

  std::set<std::string> got;
  for (const DatasetRecord &r : part.direct) {
    got.insert(r.sample.sample_id);
    if (!want_direct.count(r.sample.sample_id) || r.tier != 1 ||
        r.mode != Mode::direct ||
        r.trajectory.final_answer != r.sample.gold_answer) {
      *detail = "tier-1 record mismatch at " + r.sample.sample_id;
      return false;
    }
  }
  for (const DatasetRecord &r : part.enhanced) {
    got.insert(r.sample.sample_id);
    if (!want_enhanced.count(r.sample.sample_id) || r.tier != 2 ||
        r.mode != Mode::enhanced) {
      *detail = "tier-2 record mismatch at " + r.sample.sample_id;
      return false;
    }
  }
  for (const AgenticPair &p : part.agentic) {
    const std::string &id = p.prospective.sample.sample_id;
    got.insert(id);
    bool ok = want_agentic.count(id) && p.prospective.tier == 3 &&
              p.prospective.mode == Mode::prospective &&
              p.retrospective.mode == Mode::retrospective &&
              p.retrospective.trajectory.turns.size() ==
                  p.prospective.trajectory.turns.size() &&
              p.retrospective.trajectory.turns[1].think.value_or("").rfind(
                  "Called chest_xray_classifier because", 0) == 0;
    if (!ok) {
      *detail = "agentic pair mismatch at " + id;
      return false;
    }
  }
  for (const DiscardEntry &d : part.discard) {
    got.insert(d.sample_id);
    if (!want_discard.count(d.sample_id) || d.reason != "exhausted_retries") {
      *detail = "discard mismatch at " + d.sample_id;
      return false;
    }
  }
  if (!expect(part.direct.size() == want_direct.size() &&
                  part.enhanced.size() == want_enhanced.size() &&
                  part.agentic.size() == want_agentic.size() &&
                  part.discard.size() == want_discard.size() &&
                  got.size() == static_cast<std::size_t>(N),
              "partition sizes differ from the reference", detail))
    return false;
  return expect(seconds_since(t0) < 30.0, "generation exceeded 30s", detail);
}

// ---- 4: routing oracle equals the per-record optimum ----

bool routing_oracle(std::string *detail) {
  auto t0 = Clock::now();
  std::mt19937_64 rng(20240817);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> acts(1, 6);
  for (int round = 0; round < 100; ++round) {
    std::vector<RoutingRecord> records(1000);
    for (std::size_t i = 0; i < records.size(); ++i) {
      RoutingRecord &r = records[i];
      r.sample_id = "r" + std::to_string(i);
      r.correct_direct = coin(rng) == 1;
      r.correct_agentic = coin(rng) == 1;
      r.cost_direct = {1.0, 40.0, 120.0};
      double a = acts(rng);
      r.cost_agentic = {a, a * 40.0, a * 120.0};
      r.learned_choice = coin(rng) ? "direct" : "agentic";
    }
    StrategyReport rep = routing_report(records);

    double best = 0, direct_n = 0, agentic_n = 0, learned_n = 0;
    for (const RoutingRecord &r : records) {
      best += (r.correct_direct || r.correct_agentic) ? 1 : 0;
      direct_n += r.correct_direct ? 1 : 0;
      agentic_n += r.correct_agentic ? 1 : 0;
      learned_n += (r.learned_choice == "direct" ? r.correct_direct
                                                 : r.correct_agentic)
                       ? 1
                       : 0;
    }
    double n = static_cast<double>(records.size());
    auto close = [](double a, double b) { return std::abs(a - b) < 1e-12; };
    if (!close(rep.strategies["oracle"].accuracy, best / n) ||
        !close(rep.strategies["always_direct"].accuracy, direct_n / n) ||
        !close(rep.strategies["always_agentic"].accuracy, agentic_n / n) ||
        !close(rep.strategies["learned"].accuracy, learned_n / n)) {
      *detail = "strategy accuracy differs from the reference in round " +
                std::to_string(round);
      return false;
    }
    for (const char *other : {"always_direct", "always_agentic", "learned"})
      if (rep.strategies["oracle"].accuracy <
          rep.strategies[other].accuracy) {
        *detail = std::string("oracle dominated by ") + other;
        return false;
      }
  }
  return expect(seconds_since(t0) < 10.0, "routing rounds exceeded 10s",
                detail);
}

// ---- 5: depth caps bind exactly ----

bool depth_caps(std::string *detail) {
  const int N = 25;
  // sample i needs exactly i % 5 tool calls before it can answer
  PolicyHandle policy = PolicyHandle::callback(
      PolicyRole::agent, [](const PolicyRequest &req) {
        if (req.messages.back().content.find("Interaction limit reached") !=
            std::string::npos)
          return std::string(
              "<think>Budget exhausted, guessing.</think>[FINAL] unknown");
        const std::string &q = req.messages.front().content;
        int need = q[q.find("needs") + 5] - '0';
        int seen = static_cast<int>(req.messages.size() - 1) / 2;
        if (seen < need) {
          nlohmann::json call = {{"arguments", {{"image", "img_original"}}},
                                 {"name", "chest_xray_classifier"}};
          return "<think>More evidence is required first.</think>" +
                 call.dump();
        }
        return std::string(
            "<think>The gathered evidence suffices.</think>[FINAL] yes");
      });
  EnvironmentSpec env = EnvironmentSpec::standard(EnvironmentId::tool_calling);
  ExecutorSet executors;
  std::vector<Sample> samples;
  for (int i = 0; i < N; ++i) {
    Sample s;
    s.sample_id = "d" + std::to_string(i);
    s.question = "needs" + std::to_string(i % 5) + " tools?";
    s.gold_answer = "yes";
    s.images = {"cxr.png"};
    samples.push_back(s);
  }
  auto exact = make_matcher("exact");
  for (int cap = 0; cap <= 4; ++cap) {
    DepthRunReport rep =
        depth_constrained_run(policy, env, samples, cap, executors, exact);
    int solvable = 0, forced = 0;
    for (int i = 0; i < N; ++i)
      solvable += (i % 5 <= cap) ? 1 : 0;
    for (const EpisodeRecord &e : rep.episodes)
      forced += e.forced ? 1 : 0;
    if (std::abs(rep.accuracy - static_cast<double>(solvable) / N) > 1e-12 ||
        forced != N - solvable) {
      *detail = "cap " + std::to_string(cap) + " accuracy is not exactly " +
                std::to_string(solvable) + "/" + std::to_string(N);
      return false;
    }
  }
  DepthRunReport full =
      depth_constrained_run(policy, env, samples, {}, executors, exact);
  return expect(full.accuracy == 1.0, "uncapped run should solve everything",
                detail);
}

// ---- 6: decontamination equals the quadratic reference ----

std::vector<NgramOverlap>
brute_overlaps(const std::vector<std::pair<std::string, std::string>> &train,
               const std::vector<std::pair<std::string, std::string>> &test,
               int n) {
  auto grams = [n](const std::string &s) {
    std::vector<std::string> toks = text::tokenize(text::normalize(s));
    std::vector<std::string> out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::string g = toks[i];
      for (int k = 1; k < n; ++k)
        g += " " + toks[i + k];
      out.push_back(g);
    }
    return out;
  };
  std::vector<NgramOverlap> report;
  for (const auto &[train_id, train_text] : train) {
    for (const auto &[test_id, test_text] : test) {
      auto tg = grams(test_text);
      std::set<std::string> test_set(tg.begin(), tg.end());
      for (const std::string &g : grams(train_text))
        if (test_set.count(g)) {
          report.push_back({train_id, test_id, g});
          break;
        }
    }
  }
  std::sort(report.begin(), report.end(),
            [](const NgramOverlap &a, const NgramOverlap &b) {
              return std::tie(a.train_id, a.test_id) <
                     std::tie(b.train_id, b.test_id);
            });
  return report;
}

std::string synthetic_text(std::mt19937_64 &rng, int words) {
  static const char *vocab[] = {
      "patient", "presents", "with", "acute", "chronic", "pain", "fever",
      "cough", "left", "right", "lung", "heart", "exam", "shows", "normal",
      "elevated", "mild", "severe", "history", "of"};
  std::uniform_int_distribution<std::size_t> pick(0, 19);
  std::string out;
  for (int i = 0; i < words; ++i)
    out += std::string(i ? " " : "") + vocab[pick(rng)];
  return out;
}

bool decontamination(std::string *detail) {
  std::mt19937_64 rng(31337);
  std::vector<std::pair<std::string, std::string>> train, test;
  for (int i = 0; i < 60; ++i) {
    train.emplace_back("tr" + std::to_string(i), synthetic_text(rng, 24));
    test.emplace_back("te" + std::to_string(i), synthetic_text(rng, 24));
  }
  std::string planted =
      "a verbatim leaked question fragment shared by both corpora exactly";
  train[7].second += " " + planted;
  test[13].second = planted + " with extra trailing words";

  auto fast = decontaminate(train, test, 8);
  auto slow = brute_overlaps(train, test, 8);
  if (fast.size() != slow.size()) {
    *detail = "overlap counts differ from the quadratic reference";
    return false;
  }
  bool planted_found = false;
  for (std::size_t i = 0; i < fast.size(); ++i) {
    if (fast[i].train_id != slow[i].train_id ||
        fast[i].test_id != slow[i].test_id ||
        fast[i].ngram != slow[i].ngram) {
      *detail = "overlap entries differ from the quadratic reference";
      return false;
    }
    if (fast[i].train_id == "tr7" && fast[i].test_id == "te13")
      planted_found = true;
  }
  if (!expect(planted_found, "planted contamination not reported", detail))
    return false;

  // scale: 500 x 500 within budget
  std::vector<std::pair<std::string, std::string>> big_train, big_test;
  for (int i = 0; i < 500; ++i) {
    big_train.emplace_back("btr" + std::to_string(i), synthetic_text(rng, 30));
    big_test.emplace_back("bte" + std::to_string(i), synthetic_text(rng, 30));
  }
  auto t0 = Clock::now();
  decontaminate(big_train, big_test, 8);
  return expect(seconds_since(t0) < 5.0, "500x500 scan exceeded 5s", detail);
}

// ---- 7: answer matchers on the canonical cases ----

bool matchers(std::string *detail) {
  SynonymTable syn =
      SynonymTable::load((fixtures() / "synonyms.txt").string());
  struct Case {
    const char *kind;
    const char *a;
    const char *b;
    bool want;
  } cases[] = {
      {"soft", "PICC line", "peripherally inserted central catheter", true},
      {"soft", "peripherally inserted central catheter", "PICC line", true},
      {"soft", "Tuberculosis", "Pulmonary Tuberculosis", true},
      {"soft", "yes", "no", false},
      {"diagnosis", "Pulmonary Tuberculosis", "tuberculosis", true},
      {"diagnosis", "tension pneumothorax", "intrapulmonary teratoma", false},
      {"exact", "Yes.", "yes", true},
      {"exact", "yes", "yes please", false},
  };
  for (const Case &c : cases) {
    MatchFn m = make_matcher(c.kind, syn);
    if (m(c.a, c.b) != c.want) {
      *detail = std::string(c.kind) + " matcher wrong on \"" + c.a +
                "\" vs \"" + c.b + "\"";
      return false;
    }
  }
  try {
    make_matcher("fuzzy");
    *detail = "unknown matcher name was accepted";
    return false;
  } catch (const ConfigError &) {
  }
  return true;
}

// ---- 8: collaboration protocol shape and majority verdict ----

bool collaboration_protocol(std::string *detail) {
  const std::vector<std::string> experts = {"Radiologist", "Pulmonologist",
                                            "Pathologist"};
  for (int bits = 0; bits < 8; ++bits) {
    std::vector<std::string> positions(3);
    int yes_count = 0;
    for (int i = 0; i < 3; ++i) {
      positions[i] = (bits >> i & 1) ? "the finding is malignant"
                                     : "the finding is benign";
      yes_count += bits >> i & 1;
    }
    PolicyHandle policy = PolicyHandle::callback(
        PolicyRole::agent, [&](const PolicyRequest &req) -> std::string {
          const std::string &p = req.messages.front().content;
          if (p.find("Decide the difficulty") != std::string::npos)
            return "intermediate - a panel should weigh in";
          if (p.find("Recruit") != std::string::npos)
            return "1. Radiologist\n2. Pulmonologist\n3. Pathologist";
          std::size_t at = p.find("You are the ");
          std::string name = p.substr(at + 12);
          name = name.substr(0, name.find('.'));
          for (int i = 0; i < 3; ++i)
            if (name == experts[i])
              return positions[i];
          return "The experts compared imaging and histology evidence.";
        });
    Sample s;
    s.sample_id = "panel" + std::to_string(bits);
    s.question = "Is the finding malignant or benign?";
    Trajectory t = run_collaboration(s, policy);

    std::vector<std::string> stages;
    for (const Turn &turn : t.turns)
      if (turn.role == Role::function_call)
        stages.push_back(parse_action(turn).name);
    std::vector<std::string> want = {"assess_difficulty", "recruit_experts",
                                     "expert_analysis", "expert_analysis",
                                     "expert_analysis"};
    for (int i = 0; i < 6; ++i)
      want.push_back("debate_turn");
    want.push_back("synthesize");
    if (stages != want || t.turns.size() != 26 || depth(t) != 12) {
      *detail = "stage sequence differs for combination " +
                std::to_string(bits);
      return false;
    }
    std::string expected = yes_count >= 2 ? "the finding is malignant"
                                          : "the finding is benign";
    int k = std::max(yes_count, 3 - yes_count);
    std::string think = t.turns.back().think.value_or("");
    if (t.final_answer != expected ||
        think.find(std::to_string(k) + " of 3") == std::string::npos) {
      *detail = "verdict disagrees with the majority oracle at combination " +
                std::to_string(bits);
      return false;
    }
  }
  return true;
}

// ---- 9: simulated-patient answers quote the vignette verbatim ----

bool vignette_fidelity(std::string *detail) {
  EnvironmentSpec env = EnvironmentSpec::standard(EnvironmentId::simulation);
  ExecutorSet executors;
  int vignette_count = 0, lookups = 0;
  for (const auto &entry : fs::directory_iterator(fixtures() / "vignettes")) {
    if (entry.path().extension() != ".json")
      continue;
    ++vignette_count;
    nlohmann::json raw = load_json(entry.path())["OSCE_Examination"];
    PatientVignette v = PatientVignette::load(entry.path().string());
    Sample s;
    s.sample_id = entry.path().stem().string();
    s.question = "What is the most likely diagnosis?";

    auto probe = [&](const char *tool, const char *arg,
                     const nlohmann::json &section) -> bool {
      for (const auto &[key, node] : section.items()) {
        EpisodeState state = reset(env, s, v);
        Action a;
        a.name = tool;
        a.arguments = {{arg, key}};
        a.think = "Requesting one more data point.";
        step(state, a, executors);
        if (state.turns.back().content != render_vignette_node(node)) {
          *detail = "observation differs from the vignette for " +
                    s.sample_id + " / " + key;
          return false;
        }
        ++lookups;
      }
      return true;
    };
    if (!probe("RequestPhysicalExam", "exam",
               raw["Physical_Examination_Findings"]) ||
        !probe("RequestTest", "test", raw["Test_Results"]))
      return false;
  }
  if (!expect(vignette_count >= 10 && lookups >= 40,
              "vignette corpus is too small", detail))
    return false;

  // replayed diagnostic episode against the tuberculosis case
  std::vector<std::string> replies = {
      R"(<think>Vitals frame the acuity of the illness.</think>{"name":"RequestPhysicalExam","arguments":{"exam":"Vital Signs"}})",
      R"(<think>Auscultation localizes the process.</think>{"name":"RequestPhysicalExam","arguments":{"exam":"Respiratory Examination"}})",
      R"(<think>Imaging will characterize the infiltrate.</think>{"name":"RequestTest","arguments":{"test":"Chest X-Ray"}})",
      R"(<think>Sputum microbiology confirms the organism.</think>{"name":"RequestTest","arguments":{"test":"Sputum Analysis"}})",
      R"(<think>Cavitary disease with acid-fast bacilli is diagnostic.</think>{"name":"Terminate","arguments":{"diagnosis":"Pulmonary Tuberculosis"}})",
  };
  PolicyHandle doctor = PolicyHandle::callback(
      PolicyRole::agent, [&replies](const PolicyRequest &req) {
        std::size_t turn = (req.messages.size() - 1) / 2;
        return replies.at(turn);
      });
  PatientVignette tb =
      PatientVignette::load((fixtures() / "vignettes" / "v001.json").string());
  Sample s;
  s.sample_id = "v001";
  s.question = "What is the most likely diagnosis?";
  EpisodeRunResult res = run_episode(env, s, tb, doctor, executors);
  if (!res.success || res.forced || res.depth != 4) {
    *detail = "replayed diagnostic episode did not terminate cleanly";
    return false;
  }
  return expect(diagnosis_match(res.answer, tb.correct_diagnosis) &&
                    res.answer == "Pulmonary Tuberculosis",
                "replayed diagnosis does not match the vignette", detail);
}

// ---- 10: CLI generation is byte-reproducible ----

void write_lines(const fs::path &p, const std::vector<nlohmann::json> &rows) {
  std::ofstream out(p, std::ios::trunc);
  for (const nlohmann::json &j : rows)
    out << j.dump() << "\n";
}

bool cli_determinism(std::string *detail) {
  fs::path dir = fs::temp_directory_path() / "forge_acceptance_cli";
  fs::create_directories(dir / "run1");
  fs::create_directories(dir / "run2");

  auto mk = [](const std::string &id, const std::string &q,
               const std::string &gold) {
    Sample s;
    s.sample_id = id;
    s.dataset_id = "xr";
    s.question = q;
    s.gold_answer = gold;
    s.images = {"cxr.png"};
    return s;
  };
  Sample a1 = mk("a1", "Is the lesion visible on this study?", "yes");
  Sample b1 = mk("b1", "Does the film show an effusion?", "no");
  Sample c1 = mk("c1", "Is there a nodule in the right upper zone?", "yes");
  Sample d1 = mk("d1", "Is the device correctly positioned?", "yes");
  write_lines(dir / "samples.jsonl",
              {a1.to_json(), b1.to_json(), c1.to_json(), d1.to_json()});

  EnvironmentSpec direct_env = EnvironmentSpec::standard(EnvironmentId::direct);
  EnvironmentSpec tc_env =
      EnvironmentSpec::standard(EnvironmentId::tool_calling);
  auto direct_fp = [&](PolicyRole role, const Sample &s) {
    PolicyRequest req;
    req.role = role;
    req.system_prompt = direct_env.system_prompt;
    req.messages.push_back({"user", s.question, s.images});
    return fingerprint(req);
  };
  write_lines(dir / "student.jsonl",
              {{{"fingerprint", direct_fp(PolicyRole::student, a1)},
                {"content",
                 "<think>The lesion is plainly visible.</think>yes"}},
               {{"default", true},
                {"content", "<think>Not confident on this one.</think>pass"}}});
  write_lines(dir / "teacher.jsonl",
              {{{"fingerprint", direct_fp(PolicyRole::teacher, b1)},
                {"content",
                 "<think>The costophrenic angles are sharp.</think>no"}},
               {{"default", true},
                {"content", "<think>Beyond direct answering.</think>pass"}}});

  nlohmann::json call = {{"arguments", {{"image", "img_original"}}},
                         {"name", "chest_xray_classifier"}};
  std::string reply1 =
      "<think>A classifier pass will confirm the nodule.</think>" +
      call.dump();
  PolicyRequest ep1;
  ep1.role = PolicyRole::agent;
  ep1.system_prompt = tc_env.system_prompt;
  ep1.messages.push_back({"user", "<image>\n" + c1.question, c1.images});
  PolicyRequest ep2 = ep1;
  ep2.messages.push_back({"assistant", reply1, {}});
  ep2.messages.push_back(
      {"user", "tool error: no scripted output for chest_xray_classifier", {}});
  write_lines(
      dir / "agent.jsonl",
      {{{"fingerprint", fingerprint(ep1)}, {"content", reply1}},
       {{"fingerprint", fingerprint(ep2)},
        {"content",
         "<think>The classifier output is decisive.</think>[FINAL] yes"}},
       {{"default", true},
        {"content", "<think>Guessing blind here.</think>[FINAL] pass"}}});

  nlohmann::json recap_json = {
      {"recap",
       {{{"step", 0},
         {"tool", "chest_xray_classifier"},
         {"why", "imaging evidence was needed"},
         {"got", "a failed tool probe"},
         {"update", "no_change"},
         {"evidence", "the tool response"},
         {"inference", "the stem already carried the answer"},
         {"confidence", 70}},
        {{"step", 1},
         {"tool", "Terminate"},
         {"why", "the available evidence sufficed"}}}}};
  write_lines(dir / "recap.jsonl",
              {{{"default", true}, {"content", recap_json.dump()}}});

  nlohmann::json config = {
      {"datasets",
       {{{"id", "xr"},
         {"path", (dir / "samples.jsonl").string()},
         {"matcher", "exact"}}}},
      {"env_map", {{"xr", "tool_calling"}}},
      {"policies",
       {{"student", {{"fixture_path", (dir / "student.jsonl").string()}}},
        {"teacher", {{"fixture_path", (dir / "teacher.jsonl").string()}}},
        {"agent", {{"fixture_path", (dir / "agent.jsonl").string()}}},
        {"recap", {{"fixture_path", (dir / "recap.jsonl").string()}}}}},
      {"tier3", {{"retries", 2}}},
      {"validator", {{"majority_rate", 1.0}}},
  };
  std::ofstream(dir / "config.json") << config.dump(2) << "\n";

  for (const char *run : {"run1", "run2"}) {
    std::string cmd = std::string(FORGE_BIN) + " generate --config " +
                      (dir / "config.json").string() + " --out " +
                      (dir / run).string() + " >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      *detail = std::string("generate exited nonzero on ") + run;
      return false;
    }
  }

  std::string corpus1 = slurp(dir / "run1" / "corpus.jsonl");
  if (corpus1 != slurp(dir / "run2" / "corpus.jsonl") ||
      slurp(dir / "run1" / "stats.json") !=
          slurp(dir / "run2" / "stats.json")) {
    *detail = "repeated runs produced different bytes";
    return false;
  }
  int lines = 0;
  for (char ch : corpus1)
    lines += ch == '\n';
  if (!expect(lines == 4, "corpus should hold 4 records, found " +
                              std::to_string(lines),
              detail))
    return false;
  nlohmann::json sidecar = load_json(dir / "run1" / "stats.json");
  return expect(sidecar["discard"]["by_reason"]["exhausted_retries"] == 1 &&
                    sidecar["input"]["agentic_samples"] == 1,
                "stats sidecar disagrees with the expected partition", detail);
}

} // namespace

int main() {
  struct Criterion {
    int id;
    const char *description;
    std::function<bool(std::string *)> fn;
  };
  std::vector<Criterion> criteria = {
      {1, "golden trajectories round-trip byte-for-byte", golden_round_trip},
      {2, "every validator rule fixture trips exactly its own rule",
       validator_rules},
      {3, "tiered generation matches the per-sample reference partition",
       tiered_generation},
      {4, "routing oracle equals the per-record optimum and dominates",
       routing_oracle},
      {5, "depth caps bind exactly at every budget", depth_caps},
      {6, "decontamination equals the quadratic reference within budget",
       decontamination},
      {7, "answer matchers agree on the canonical cases", matchers},
      {8, "collaboration runs 1+1+3+6+1 stages and votes with the majority",
       collaboration_protocol},
      {9, "simulated-patient observations quote the vignette verbatim",
       vignette_fidelity},
      {10, "CLI generation is byte-reproducible across runs", cli_determinism},
  };

  int failures = 0;
  for (const Criterion &c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(&detail);
    } catch (const std::exception &e) {
      detail = std::string("exception: ") + e.what();
    }
    if (ok) {
      std::cout << "criterion " << c.id << ": PASS — " << c.description
                << "\n";
    } else {
      ++failures;
      std::cout << "criterion " << c.id << ": FAIL — " << c.description
                << (detail.empty() ? "" : " (" + detail + ")") << "\n";
    }
  }
  return failures == 0 ? 0 : 1;
}
