#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge {

// ---- SynonymTable ----

SynonymTable SynonymTable::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open synonym file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

SynonymTable SynonymTable::parse(const std::string &content) {
  SynonymTable table;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    line = text::trim(line);
    if (line.empty() || line.front() == '#')
      continue;
    std::vector<std::string> terms;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t bar = line.find('|', start);
      std::string term = line.substr(
          start, bar == std::string::npos ? std::string::npos : bar - start);
      term = text::trim(term);
      if (!term.empty())
        terms.push_back(term);
      if (bar == std::string::npos)
        break;
      start = bar + 1;
    }
    if (terms.size() >= 2)
      table.add_group(terms);
  }
  return table;
}

void SynonymTable::add_group(const std::vector<std::string> &terms) {
  std::vector<std::string> normalized;
  for (const std::string &t : terms) {
    std::string n = text::normalize(t);
    if (n.empty())
      continue;
    for (const auto &g : groups_)
      for (const auto &member : g)
        if (member == n)
          throw ConfigError("synonym groups overlap on term: " + n);
    normalized.push_back(n);
  }
  if (normalized.size() < 2)
    return;
  std::string canonical = normalized.front();
  std::replace(canonical.begin(), canonical.end(), ' ', '_');
  for (const std::string &member : normalized)
    rules_.emplace_back(member, canonical);
  groups_.push_back(std::move(normalized));
  std::stable_sort(rules_.begin(), rules_.end(),
                   [](const auto &a, const auto &b) {
                     return a.first.size() > b.first.size();
                   });
}

std::string SynonymTable::canonicalize(const std::string &normalized) const {
  std::string s = " " + normalized + " ";
  for (const auto &[member, canonical] : rules_) {
    std::string needle = " " + member + " ";
    std::string repl = " " + canonical + " ";
    std::size_t pos = 0;
    while ((pos = s.find(needle, pos)) != std::string::npos) {
      s.replace(pos, needle.size(), repl);
      pos += repl.size() - 1; // re-scan the trailing space
    }
  }
  return text::trim(s);
}

// ---- Matchers ----

namespace {

std::set<std::string> token_set(const std::string &canonical,
                                bool drop_stopwords) {
  std::set<std::string> out;
  for (const std::string &tok : text::tokenize(canonical))
    if (!drop_stopwords || !text::is_stopword(tok))
      out.insert(tok);
  return out;
}

std::size_t intersection_size(const std::set<std::string> &a,
                              const std::set<std::string> &b) {
  std::size_t n = 0;
  for (const std::string &t : a)
    if (b.count(t))
      ++n;
  return n;
}

bool subset(const std::set<std::string> &a, const std::set<std::string> &b) {
  return intersection_size(a, b) == a.size();
}

} // namespace

bool soft_match(const std::string &prediction, const std::string &gold,
                const SynonymTable &syn, double threshold) {
  std::string a = syn.canonicalize(text::normalize(prediction));
  std::string b = syn.canonicalize(text::normalize(gold));
  if (a.empty() || b.empty())
    return false; // EmptyAfterNormalization: no match
  if (a == b)
    return true;
  std::set<std::string> ta = token_set(a, /*drop_stopwords=*/true);
  std::set<std::string> tb = token_set(b, /*drop_stopwords=*/true);
  if (ta.empty())
    ta = token_set(a, false);
  if (tb.empty())
    tb = token_set(b, false);
  if (ta.empty() || tb.empty())
    return false;
  if (subset(ta, tb) || subset(tb, ta))
    return true;
  double inter = static_cast<double>(intersection_size(ta, tb));
  return inter / static_cast<double>(ta.size()) >= threshold &&
         inter / static_cast<double>(tb.size()) >= threshold;
}

bool diagnosis_match(const std::string &prediction, const std::string &gold) {
  std::string a = text::normalize(prediction);
  std::string b = text::normalize(gold);
  if (a.empty() || b.empty())
    return false;
  if (a == b)
    return true;
  if (a.find(b) != std::string::npos || b.find(a) != std::string::npos)
    return true;
  std::set<std::string> ta = token_set(a, false);
  std::set<std::string> tb = token_set(b, false);
  double inter = static_cast<double>(intersection_size(ta, tb));
  return inter / static_cast<double>(std::max(ta.size(), tb.size())) >= 0.8;
}

MatchFn make_matcher(const std::string &name, const SynonymTable &syn,
                     double threshold) {
  if (name == "exact")
    return [](const std::string &p, const std::string &g) {
      return text::normalize(p) == text::normalize(g);
    };
  if (name == "soft")
    return [syn, threshold](const std::string &p, const std::string &g) {
      return soft_match(p, g, syn, threshold);
    };
  if (name == "diagnosis")
    return [](const std::string &p, const std::string &g) {
      return diagnosis_match(p, g);
    };
  throw ConfigError("unknown matcher: " + name, "matcher");
}

// ---- Decontamination ----

std::vector<NgramOverlap>
decontaminate(const std::vector<std::pair<std::string, std::string>> &train,
              const std::vector<std::pair<std::string, std::string>> &test,
              int n) {
  if (n < 1)
    throw ConfigError("n-gram size must be >= 1", "ngram_n");

  auto ngrams_of = [n](const std::string &s) {
    std::vector<std::string> grams;
    std::vector<std::string> toks = text::tokenize(text::normalize(s));
    if (static_cast<int>(toks.size()) < n)
      return grams;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::string g = toks[i];
      for (std::size_t k = 1; k < static_cast<std::size_t>(n); ++k)
        g += " " + toks[i + k];
      grams.push_back(std::move(g));
    }
    return grams;
  };

  std::map<std::string, std::vector<std::size_t>> index;
  for (std::size_t j = 0; j < test.size(); ++j)
    for (std::string &g : ngrams_of(test[j].second))
      index[std::move(g)].push_back(j);

  std::vector<NgramOverlap> report;
  for (const auto &[train_id, train_text] : train) {
    std::set<std::size_t> seen;
    for (const std::string &g : ngrams_of(train_text)) {
      auto it = index.find(g);
      if (it == index.end())
        continue;
      for (std::size_t j : it->second)
        if (seen.insert(j).second)
          report.push_back({train_id, test[j].first, g});
    }
  }
  std::sort(report.begin(), report.end(),
            [](const NgramOverlap &a, const NgramOverlap &b) {
              return std::tie(a.train_id, a.test_id) <
                     std::tie(b.train_id, b.test_id);
            });
  return report;
}

// ---- Run evaluation ----

EpisodeRecord EpisodeRecord::from_json(const nlohmann::json &j) {
  EpisodeRecord r;
  r.sample_id = j.value("sample_id", std::string());
  r.category = j.value("category", std::string());
  r.answer = j.value("answer", std::string());
  r.gold = j.value("gold", std::string());
  r.correct = j.value("correct", false);
  r.depth = j.value("depth", 0);
  r.tokens = j.value("tokens", std::int64_t{0});
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  r.forced = j.value("forced", false);
  return r;
}

nlohmann::json EpisodeRecord::to_json() const {
  return {{"answer", answer},         {"category", category},
          {"correct", correct},       {"depth", depth},
          {"forced", forced},         {"gold", gold},
          {"latency_ms", latency_ms}, {"sample_id", sample_id},
          {"tokens", tokens}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto &[cat, cnt] : per_category) {
    double acc = cnt.second ? 100.0 * cnt.first / cnt.second : 0.0;
    cats[cat] = {{"accuracy_pct", acc},
                 {"correct", cnt.first},
                 {"total", cnt.second}};
  }
  return {{"accuracy_pct", accuracy * 100.0},
          {"correct", correct},
          {"latency_histogram", latency_histogram},
          {"mean_depth", mean_depth},
          {"mean_latency_ms", mean_latency_ms},
          {"mean_tokens", mean_tokens},
          {"per_category", cats},
          {"total", total}};
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %10s\n", "category",
                "correct", "total", "accuracy");
  out << line;
  std::snprintf(line, sizeof(line), "%-24s %8d %8d %9.1f%%\n", "overall",
                correct, total, accuracy * 100.0);
  out << line;
  for (const auto &[cat, cnt] : per_category) {
    double acc = cnt.second ? 100.0 * cnt.first / cnt.second : 0.0;
    std::snprintf(line, sizeof(line), "%-24s %8d %8d %9.1f%%\n", cat.c_str(),
                  cnt.first, cnt.second, acc);
    out << line;
  }
  return out.str();
}

EvalReport evaluate_run(std::vector<EpisodeRecord> episodes,
                        const MatchFn &matcher) {
  EvalReport rep;
  rep.total = static_cast<int>(episodes.size());
  double depth_sum = 0.0, token_sum = 0.0, latency_sum = 0.0;
  for (EpisodeRecord &e : episodes) {
    e.correct = matcher(e.answer, e.gold);
    if (e.correct)
      ++rep.correct;
    auto &cat = rep.per_category[e.category.empty() ? "uncategorized"
                                                    : e.category];
    cat.first += e.correct ? 1 : 0;
    cat.second += 1;
    depth_sum += e.depth;
    token_sum += static_cast<double>(e.tokens);
    latency_sum += static_cast<double>(e.latency_ms);
    int bucket = 0;
    for (std::int64_t bound = 1; bucket < 4 && e.latency_ms >= bound;
         bound *= 10)
      ++bucket;
    ++rep.latency_histogram[static_cast<std::size_t>(bucket)];
  }
  if (rep.total) {
    rep.accuracy = static_cast<double>(rep.correct) / rep.total;
    rep.mean_depth = depth_sum / rep.total;
    rep.mean_tokens = token_sum / rep.total;
    rep.mean_latency_ms = latency_sum / rep.total;
  }
  return rep;
}

// ---- Depth-constrained analysis ----

DepthRunReport depth_constrained_run(
    const PolicyHandle &policy, const EnvironmentSpec &env,
    const std::vector<Sample> &samples, std::optional<int> t_cap,
    const ExecutorSet &executors, const MatchFn &matcher,
    const std::map<std::string, PatientVignette> *vignettes,
    const DecodingHints &decoding) {
  DepthRunReport rep;
  double depth_sum = 0.0, token_sum = 0.0;
  int correct = 0;
  for (const Sample &s : samples) {
    std::optional<PatientVignette> vig;
    if (vignettes) {
      auto it = vignettes->find(s.sample_id);
      if (it != vignettes->end())
        vig = it->second;
    }
    EpisodeRunResult res =
        run_episode(env, s, vig, policy, executors, decoding, t_cap);
    EpisodeRecord rec;
    rec.sample_id = s.sample_id;
    rec.category = s.category;
    rec.answer = res.answer;
    rec.gold = s.gold_answer;
    rec.correct = res.success && matcher(res.answer, s.gold_answer);
    rec.depth = res.depth;
    rec.tokens = res.tokens;
    rec.latency_ms = res.latency_ms;
    rec.forced = res.forced;
    if (rec.correct)
      ++correct;
    depth_sum += rec.depth;
    token_sum += static_cast<double>(rec.tokens);
    rep.episodes.push_back(std::move(rec));
  }
  if (!samples.empty()) {
    rep.accuracy = static_cast<double>(correct) / samples.size();
    rep.mean_depth = depth_sum / samples.size();
    rep.mean_tokens = token_sum / samples.size();
  }
  return rep;
}

// ---- Counterfactual routing ----

RoutingRecord RoutingRecord::from_json(const nlohmann::json &j) {
  auto cost = [](const nlohmann::json &c) {
    if (!c.is_object())
      throw IncompleteRecord("routing cost entry is not an object");
    StrategyCost out;
    out.actions = c.value("actions", -1.0);
    out.tokens = c.value("tokens", 0.0);
    out.latency_ms = c.value("latency_ms", 0.0);
    if (out.actions < 0 || out.tokens < 0 || out.latency_ms < 0)
      throw IncompleteRecord("routing cost entry missing or negative");
    return out;
  };
  RoutingRecord r;
  if (!j.contains("correct_direct") || !j.contains("correct_agentic") ||
      !j.contains("cost_direct") || !j.contains("cost_agentic"))
    throw IncompleteRecord("routing record missing correctness or cost");
  r.sample_id = j.value("sample_id", std::string());
  r.correct_direct = j.at("correct_direct").get<bool>();
  r.correct_agentic = j.at("correct_agentic").get<bool>();
  r.cost_direct = cost(j.at("cost_direct"));
  r.cost_agentic = cost(j.at("cost_agentic"));
  r.learned_choice = j.value("learned_choice", std::string("direct"));
  if (r.learned_choice != "direct" && r.learned_choice != "agentic")
    throw IncompleteRecord("learned_choice must be direct|agentic");
  return r;
}

nlohmann::json RoutingRecord::to_json() const {
  auto cost = [](const StrategyCost &c) {
    return nlohmann::json{{"actions", c.actions},
                          {"latency_ms", c.latency_ms},
                          {"tokens", c.tokens}};
  };
  return {{"correct_agentic", correct_agentic},
          {"correct_direct", correct_direct},
          {"cost_agentic", cost(cost_agentic)},
          {"cost_direct", cost(cost_direct)},
          {"learned_choice", learned_choice},
          {"sample_id", sample_id}};
}

nlohmann::json StrategyReport::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto &[name, s] : strategies)
    out[name] = {{"accuracy", s.accuracy},
                 {"frac_agentic", s.frac_agentic},
                 {"frac_direct", s.frac_direct},
                 {"mean_actions", s.mean_actions},
                 {"mean_latency_ms", s.mean_latency_ms},
                 {"mean_tokens", s.mean_tokens}};
  return out;
}

StrategyReport routing_report(const std::vector<RoutingRecord> &records) {
  for (const RoutingRecord &r : records) {
    if (r.cost_direct.actions < 0 || r.cost_agentic.actions < 0 ||
        (r.learned_choice != "direct" && r.learned_choice != "agentic"))
      throw IncompleteRecord("routing record incomplete: " + r.sample_id);
  }

  struct Acc {
    double correct = 0, actions = 0, tokens = 0, latency = 0, direct = 0;
  };
  std::map<std::string, Acc> acc;

  auto tally = [&](const std::string &strategy, const RoutingRecord &r,
                   bool pick_direct) {
    Acc &a = acc[strategy];
    const StrategyCost &c = pick_direct ? r.cost_direct : r.cost_agentic;
    bool correct = pick_direct ? r.correct_direct : r.correct_agentic;
    a.correct += correct ? 1 : 0;
    a.actions += c.actions;
    a.tokens += c.tokens;
    a.latency += c.latency_ms;
    a.direct += pick_direct ? 1 : 0;
  };

  for (const RoutingRecord &r : records) {
    tally("always_direct", r, true);
    tally("always_agentic", r, false);

    bool oracle_direct;
    if (r.correct_direct == r.correct_agentic)
      // both right or both wrong: prefer the cheaper by action count,
      // direct on ties
      oracle_direct = r.cost_direct.actions <= r.cost_agentic.actions;
    else
      oracle_direct = r.correct_direct;
    tally("oracle", r, oracle_direct);

    tally("learned", r, r.learned_choice == "direct");
  }

  StrategyReport rep;
  double n = static_cast<double>(records.size());
  for (const char *name :
       {"always_direct", "always_agentic", "oracle", "learned"}) {
    const Acc &a = acc[name];
    StrategyStats s;
    if (n > 0) {
      s.accuracy = a.correct / n;
      s.mean_actions = a.actions / n;
      s.mean_tokens = a.tokens / n;
      s.mean_latency_ms = a.latency / n;
      s.frac_direct = a.direct / n;
      s.frac_agentic = 1.0 - s.frac_direct;
    }
    rep.strategies[name] = s;
  }
  return rep;
}

} // namespace forge
