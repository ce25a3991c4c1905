#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "forge/environment.hpp"
#include "forge/errors.hpp"
#include "forge/metrics.hpp"
#include "forge/text.hpp"

using namespace forge;

namespace {

SynonymTable medical_synonyms() {
  return SynonymTable::load(
      (std::filesystem::path(FORGE_FIXTURES) / "synonyms.txt").string());
}

} // namespace

TEST_CASE("synonym table") {
  SynonymTable syn = medical_synonyms();
  CHECK(syn.groups().size() >= 4);
  CHECK(syn.canonicalize("picc line") ==
        syn.canonicalize("peripherally inserted central catheter"));
  CHECK(syn.canonicalize("the ett is low") ==
        syn.canonicalize("the endotracheal tube is low"));

  SUBCASE("multi-word members collapse to one token") {
    std::string c = syn.canonicalize("peripherally inserted central catheter");
    CHECK(text::tokenize(c).size() == 1);
  }
  SUBCASE("overlapping groups are rejected") {
    SynonymTable t;
    t.add_group({"MI", "myocardial infarction"});
    CHECK_THROWS_AS(t.add_group({"mi", "cardiac event"}), ConfigError);
  }
  SUBCASE("longest member wins when phrases nest") {
    SynonymTable t;
    t.add_group({"left lower lobe pneumonia", "lll pneumonia"});
    t.add_group({"pneumonia", "lung infection"});
    CHECK(t.canonicalize("left lower lobe pneumonia") ==
          "left_lower_lobe_pneumonia");
  }
}

TEST_CASE("soft_match on the canonical device and diagnosis examples") {
  SynonymTable syn = medical_synonyms();
  CHECK(soft_match("PICC line", "peripherally inserted central catheter",
                   syn));
  CHECK(soft_match("peripherally inserted central catheter", "PICC line",
                   syn)); // symmetric
  CHECK(soft_match("Tuberculosis", "Pulmonary Tuberculosis")); // containment
  CHECK(soft_match("Pulmonary Tuberculosis", "Tuberculosis"));
  CHECK_FALSE(soft_match("tension pneumothorax", "intrapulmonary teratoma"));
  CHECK(soft_match("Yes.", "yes"));
  CHECK_FALSE(soft_match("yes", "no"));
  CHECK_FALSE(soft_match("", "yes"));
  CHECK_FALSE(soft_match("?!", "yes")); // empty after normalization
  // stopwords never decide a match by themselves
  CHECK(soft_match("effusion of the left lung", "left lung effusion"));
}

TEST_CASE("diagnosis_match") {
  CHECK(diagnosis_match("Pulmonary Tuberculosis", "Tuberculosis"));
  CHECK(diagnosis_match("tuberculosis", "Pulmonary tuberculosis."));
  CHECK_FALSE(diagnosis_match("tension pneumothorax",
                              "intrapulmonary teratoma"));
  CHECK(diagnosis_match("iron deficiency anemia",
                        "Iron-Deficiency Anemia"));
  // 4-of-5 full-token overlap = 0.8 passes; 3 of 5 does not
  CHECK(diagnosis_match("acute severe viral lobar pneumonia",
                        "acute severe viral round pneumonia"));
  CHECK_FALSE(diagnosis_match("acute severe viral lobar pneumonia",
                              "acute mild atypical round pneumonia"));
  CHECK_FALSE(diagnosis_match("", "x"));
}

TEST_CASE("make_matcher") {
  auto exact = make_matcher("exact");
  CHECK(exact("Yes", "yes!"));
  CHECK_FALSE(exact("yes", "yes please"));
  auto soft = make_matcher("soft", medical_synonyms());
  CHECK(soft("PICC line", "peripherally inserted central catheter"));
  auto dx = make_matcher("diagnosis");
  CHECK(dx("Pulmonary Tuberculosis", "tuberculosis"));
  CHECK_THROWS_AS(make_matcher("fuzzy"), ConfigError);
}

namespace {

std::string random_text(std::mt19937_64 &rng, int words) {
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

// Quadratic reference: for each pair, scan the train n-grams in order and
// report the first one the test text also contains.
std::vector<NgramOverlap> brute_force_overlaps(
    const std::vector<std::pair<std::string, std::string>> &train,
    const std::vector<std::pair<std::string, std::string>> &test, int n) {
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
      std::vector<std::string> tg = grams(test_text);
      std::set<std::string> test_set(tg.begin(), tg.end());
      for (const std::string &g : grams(train_text)) {
        if (test_set.count(g)) {
          report.push_back({train_id, test_id, g});
          break;
        }
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

bool same_overlaps(const std::vector<NgramOverlap> &a,
                   const std::vector<NgramOverlap> &b) {
  if (a.size() != b.size())
    return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].train_id != b[i].train_id || a[i].test_id != b[i].test_id ||
        a[i].ngram != b[i].ngram)
      return false;
  return true;
}

} // namespace

TEST_CASE("decontaminate agrees with the quadratic reference") {
  std::mt19937_64 rng(4242);
  std::vector<std::pair<std::string, std::string>> train, test;
  for (int i = 0; i < 40; ++i)
    train.emplace_back("tr" + std::to_string(i), random_text(rng, 20));
  for (int i = 0; i < 40; ++i)
    test.emplace_back("te" + std::to_string(i), random_text(rng, 20));
  // plant a guaranteed 8-gram collision
  std::string planted =
      "this exact sentence fragment appears in both corpora verbatim";
  train[5].second += " " + planted;
  test[9].second = planted + " plus trailing context";

  for (int n : {3, 8}) {
    CAPTURE(n);
    auto fast = decontaminate(train, test, n);
    auto slow = brute_force_overlaps(train, test, n);
    CHECK(same_overlaps(fast, slow));
  }

  auto hits = decontaminate(train, test, 8);
  bool found_planted = false;
  for (const NgramOverlap &o : hits)
    if (o.train_id == "tr5" && o.test_id == "te9")
      found_planted = true;
  CHECK(found_planted);
}

TEST_CASE("decontaminate boundary behavior") {
  // a shared 7-gram is invisible at n = 8
  std::string seven = "alpha beta gamma delta epsilon zeta eta";
  std::vector<std::pair<std::string, std::string>> train = {
      {"t1", seven + " one two"}};
  std::vector<std::pair<std::string, std::string>> test = {
      {"x1", seven + " three four"}};
  CHECK(decontaminate(train, test, 8).empty());
  auto at7 = decontaminate(train, test, 7);
  REQUIRE(at7.size() == 1);
  CHECK(at7[0].ngram == seven);

  // texts shorter than n produce nothing
  CHECK(decontaminate({{"t", "too short"}}, {{"x", "too short"}}, 8).empty());
  CHECK_THROWS_AS(decontaminate({}, {}, 0), ConfigError);

  // normalization unifies case and punctuation before hashing
  std::vector<std::pair<std::string, std::string>> a = {
      {"t", "Alpha, beta; GAMMA delta epsilon zeta eta theta."}};
  std::vector<std::pair<std::string, std::string>> b = {
      {"x", "alpha beta gamma delta epsilon zeta eta theta"}};
  CHECK(decontaminate(a, b, 8).size() == 1);
}

TEST_CASE("evaluate_run recomputes correctness and aggregates") {
  auto exact = make_matcher("exact");
  std::vector<EpisodeRecord> eps(4);
  eps[0] = {"a", "xray", "yes", "yes", false, 2, 100, 5, false};
  eps[1] = {"b", "xray", "no", "yes", true, 1, 50, 80, false};
  eps[2] = {"c", "path", "Left", "left", false, 0, 10, 500, false};
  eps[3] = {"d", "", "x", "y", true, 4, 40, 2000, true};

  EvalReport rep = evaluate_run(eps, exact);
  CHECK(rep.total == 4);
  CHECK(rep.correct == 2); // stored flags were recomputed
  CHECK(rep.accuracy == doctest::Approx(0.5));
  CHECK(rep.per_category["xray"] == std::pair<int, int>{1, 2});
  CHECK(rep.per_category["path"] == std::pair<int, int>{1, 1});
  CHECK(rep.per_category["uncategorized"] == std::pair<int, int>{0, 1});
  CHECK(rep.mean_depth == doctest::Approx(1.75));
  CHECK(rep.mean_tokens == doctest::Approx(50.0));
  // decade buckets: 5 -> <10, 80 -> <100, 500 -> <1000, 2000 -> >= 1000
  CHECK(rep.latency_histogram == std::vector<int>{0, 1, 1, 1, 1});
  nlohmann::json j = rep.to_json();
  CHECK(j["accuracy_pct"] == doctest::Approx(50.0));
  CHECK(j["per_category"]["xray"]["accuracy_pct"] == doctest::Approx(50.0));
  CHECK(rep.table().find("overall") != std::string::npos);

  // record JSON round trip
  EpisodeRecord back = EpisodeRecord::from_json(eps[3].to_json());
  CHECK(back.sample_id == "d");
  CHECK(back.forced);
  CHECK(back.latency_ms == 2000);
}

TEST_CASE("depth_constrained_run caps the tool budget") {
  // the policy needs exactly 3 tool calls before it can answer
  auto policy = PolicyHandle::callback(
      PolicyRole::agent, [](const PolicyRequest &req) -> std::string {
        if (req.messages.back().content.find("Interaction limit reached") !=
            std::string::npos)
          return "<think>Budget is gone, guessing now.</think>[FINAL] unknown";
        int observations = 0;
        for (const PolicyMessage &m : req.messages)
          if (m.role == "user")
            ++observations;
        --observations; // the opening question is not an observation
        if (observations < 3) {
          nlohmann::json call = {
              {"arguments",
               {{"image", "probe_" + std::to_string(observations) + ".png"}}},
              {"name", "chest_xray_classifier"}};
          return "<think>Need more evidence first.</think>" + call.dump();
        }
        return "<think>Three probes suffice.</think>[FINAL] yes";
      });
  auto env = EnvironmentSpec::standard(EnvironmentId::tool_calling);
  ExecutorSet ex;
  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) {
    Sample s;
    s.sample_id = "s" + std::to_string(i);
    s.question = "q?";
    s.images = {"a.png"};
    s.gold_answer = "yes";
    samples.push_back(s);
  }
  auto exact = make_matcher("exact");

  DepthRunReport full =
      depth_constrained_run(policy, env, samples, {}, ex, exact);
  CHECK(full.accuracy == doctest::Approx(1.0));
  CHECK(full.mean_depth == doctest::Approx(3.0));

  DepthRunReport capped =
      depth_constrained_run(policy, env, samples, 2, ex, exact);
  CHECK(capped.accuracy == doctest::Approx(0.0));
  CHECK(capped.mean_depth == doctest::Approx(2.0));
  for (const EpisodeRecord &e : capped.episodes) {
    CHECK(e.forced);
    CHECK(e.answer == "unknown");
  }

  DepthRunReport generous =
      depth_constrained_run(policy, env, samples, 4, ex, exact);
  CHECK(generous.accuracy == doctest::Approx(1.0));
  CHECK(generous.mean_depth == doctest::Approx(3.0));
}

namespace {

RoutingRecord rr(bool cd, bool ca, double actions_d, double actions_a,
                 const std::string &learned) {
  RoutingRecord r;
  r.sample_id = "r";
  r.correct_direct = cd;
  r.correct_agentic = ca;
  r.cost_direct = {actions_d, actions_d * 30, actions_d * 90};
  r.cost_agentic = {actions_a, actions_a * 30, actions_a * 90};
  r.learned_choice = learned;
  return r;
}

} // namespace

TEST_CASE("routing_report oracle agrees with the per-record optimum") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> acts(1, 6);
  std::vector<RoutingRecord> records;
  for (int i = 0; i < 500; ++i)
    records.push_back(rr(coin(rng) == 1, coin(rng) == 1, 1, acts(rng),
                         coin(rng) ? "direct" : "agentic"));

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
  CHECK(rep.strategies["oracle"].accuracy == doctest::Approx(best / n));
  CHECK(rep.strategies["always_direct"].accuracy ==
        doctest::Approx(direct_n / n));
  CHECK(rep.strategies["always_agentic"].accuracy ==
        doctest::Approx(agentic_n / n));
  CHECK(rep.strategies["learned"].accuracy ==
        doctest::Approx(learned_n / n));

  // the oracle dominates every other strategy
  for (const char *other : {"always_direct", "always_agentic", "learned"})
    CHECK(rep.strategies["oracle"].accuracy >=
          rep.strategies[other].accuracy);

  CHECK(rep.strategies["always_direct"].frac_direct == doctest::Approx(1.0));
  CHECK(rep.strategies["always_agentic"].frac_agentic ==
        doctest::Approx(1.0));
}

TEST_CASE("routing oracle prefers the cheaper side on correctness ties") {
  // both correct: fewer actions wins; equal actions: direct wins
  StrategyReport rep = routing_report({
      rr(true, true, 1, 5, "agentic"), // direct cheaper
      rr(true, true, 6, 2, "direct"),  // agentic cheaper
      rr(true, true, 3, 3, "agentic"), // tie: direct
      rr(false, false, 1, 9, "agentic"), // both wrong: cheaper (direct)
  });
  CHECK(rep.strategies["oracle"].frac_direct == doctest::Approx(0.75));
  CHECK(rep.strategies["oracle"].mean_actions ==
        doctest::Approx((1 + 2 + 3 + 1) / 4.0));
}

TEST_CASE("routing records reject incomplete input") {
  nlohmann::json good = rr(true, false, 1, 4, "direct").to_json();
  RoutingRecord r = RoutingRecord::from_json(good);
  CHECK(r.correct_direct);
  CHECK(r.cost_agentic.actions == doctest::Approx(4));

  nlohmann::json missing = good;
  missing.erase("cost_agentic");
  CHECK_THROWS_AS(RoutingRecord::from_json(missing), IncompleteRecord);

  nlohmann::json no_actions = good;
  no_actions["cost_direct"].erase("actions");
  CHECK_THROWS_AS(RoutingRecord::from_json(no_actions), IncompleteRecord);

  nlohmann::json bad_choice = good;
  bad_choice["learned_choice"] = "maybe";
  CHECK_THROWS_AS(RoutingRecord::from_json(bad_choice), IncompleteRecord);

  RoutingRecord broken = rr(true, true, 1, 1, "direct");
  broken.cost_direct.actions = -1;
  CHECK_THROWS_AS(routing_report({broken}), IncompleteRecord);
}
