// forge: generate, lint, and analyze agentic training corpora.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "forge/config.hpp"
#include "forge/environment.hpp"
#include "forge/errors.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"
#include "forge/policy.hpp"
#include "forge/text.hpp"
#include "forge/trajectory.hpp"
#include "forge/validator.hpp"

namespace {

void log_event(const std::string &event, nlohmann::json fields) {
  fields["event"] = event;
  std::cerr << fields.dump() << "\n";
}

std::vector<nlohmann::json> read_jsonl(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw forge::ConfigError("cannot open file: " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (forge::text::trim(line).empty())
      continue;
    out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

forge::ForgeConfig load_config(const std::string &flag_path) {
  std::string path = flag_path;
  if (path.empty()) {
    const char *env = std::getenv("FORGE_CONFIG");
    if (env)
      path = env;
  }
  if (path.empty())
    throw forge::ConfigError("no config given (flag or FORGE_CONFIG)");
  return forge::ForgeConfig::load(path);
}

forge::PolicyHandle policy_from_config(const forge::ForgeConfig &cfg,
                                       const std::string &role) {
  auto it = cfg.policies.find(role);
  if (it == cfg.policies.end())
    throw forge::ConfigError("no policy configured for role " + role,
                             "policies." + role);
  forge::PolicyRole r = forge::policy_role_from_name(role);
  if (it->second.backend == "remote")
    return forge::PolicyHandle::remote(r, it->second.endpoint,
                                       it->second.seed);
  return forge::PolicyHandle::scripted(r, it->second.fixture_path,
                                       it->second.seed);
}

forge::SynonymTable synonyms_from(const forge::ForgeConfig &cfg) {
  if (cfg.eval.synonyms_path.empty())
    return {};
  return forge::SynonymTable::load(cfg.eval.synonyms_path);
}

forge::MatchFn matcher_for_dataset(const forge::ForgeConfig &cfg,
                                   const std::string &dataset_id,
                                   const forge::SynonymTable &syn) {
  for (const auto &d : cfg.datasets)
    if (d.id == dataset_id)
      return forge::make_matcher(d.matcher, syn,
                                 cfg.eval.soft_match_threshold);
  return forge::make_matcher("exact");
}

int cmd_generate(const std::string &config_path,
                 const std::string &dataset_path, const std::string &out_dir,
                 const std::string &tiers, std::optional<int> retries,
                 std::optional<int> workers,
                 std::optional<std::uint64_t> seed) {
  forge::ForgeConfig cfg = load_config(config_path);
  if (retries)
    cfg.tier3.retries = *retries;
  if (workers)
    cfg.workers = *workers;
  if (seed)
    cfg.global_seed = *seed;

  std::string samples_path = dataset_path;
  if (samples_path.empty()) {
    if (cfg.datasets.empty())
      throw forge::ConfigError("config lists no datasets", "datasets");
    samples_path = cfg.datasets.front().path;
  }
  std::vector<forge::Sample> samples;
  for (const nlohmann::json &j : read_jsonl(samples_path))
    samples.push_back(forge::Sample::from_json(j));
  log_event("dataset_loaded",
            {{"path", samples_path}, {"count", samples.size()}});

  forge::SynonymTable syn = synonyms_from(cfg);
  std::string dataset_id =
      samples.empty() ? std::string() : samples.front().dataset_id;
  forge::MatchFn matcher = matcher_for_dataset(cfg, dataset_id, syn);

  forge::PolicyHandle student = policy_from_config(cfg, "student");
  forge::PolicyHandle teacher = policy_from_config(cfg, "teacher");
  forge::PolicyHandle agent = policy_from_config(cfg, "agent");
  forge::PolicyHandle recap = policy_from_config(cfg, "recap");

  forge::ExecutorSet executors;
  if (!cfg.tool_fixture_path.empty())
    executors.load_fixtures(cfg.tool_fixture_path);
  executors.set_output_dir(out_dir);

  std::map<std::string, forge::PatientVignette> vignettes;
  for (const auto &d : cfg.datasets) {
    if (d.vignette_dir.empty())
      continue;
    for (const forge::Sample &s : samples) {
      std::string path = d.vignette_dir + "/" + s.sample_id + ".json";
      std::ifstream probe(path);
      if (probe)
        vignettes.emplace(s.sample_id, forge::PatientVignette::load(path));
    }
  }

  forge::PipelineContext ctx;
  for (const auto &[id, env] : cfg.env_map)
    ctx.env_map[id] = forge::environment_from_name(env);
  ctx.executors = &executors;
  ctx.vignettes = &vignettes;
  if (!cfg.validator.lexicon_path.empty())
    ctx.lexicon = forge::load_lexicon(cfg.validator.lexicon_path);
  ctx.retries = cfg.tier3.retries;
  ctx.temperature_schedule = cfg.tier3.temperature_schedule;
  ctx.workers = cfg.workers;
  ctx.length_bound = cfg.validator.length_bound;
  ctx.seed = cfg.global_seed;

  bool do1 = tiers.find('1') != std::string::npos;
  bool do2 = tiers.find('2') != std::string::npos;
  bool do3 = tiers.find('3') != std::string::npos;

  forge::TierPartition partition;
  std::vector<forge::Sample> residual = samples;
  if (do1) {
    auto [records, rest] =
        forge::run_tier1(residual, student, matcher, cfg.workers);
    partition.direct = std::move(records);
    residual = std::move(rest);
    log_event("tier1_done", {{"direct", partition.direct.size()},
                             {"residual", residual.size()}});
  }
  if (do2) {
    auto [records, rest] =
        forge::run_tier2(residual, teacher, matcher, cfg.workers);
    partition.enhanced = std::move(records);
    residual = std::move(rest);
    log_event("tier2_done", {{"enhanced", partition.enhanced.size()},
                             {"residual", residual.size()}});
  }
  if (do3) {
    auto [pairs, discard] =
        forge::run_tier3(residual, agent, recap, matcher, ctx);
    partition.agentic = std::move(pairs);
    partition.discard = std::move(discard);
    log_event("tier3_done", {{"pairs", partition.agentic.size()},
                             {"discard", partition.discard.size()}});
  } else {
    for (const forge::Sample &s : residual)
      partition.discard.push_back({s.sample_id, "tier_skipped"});
  }

  forge::assemble(partition, out_dir + "/corpus.jsonl",
                  out_dir + "/stats.json", cfg.validator.majority_rate,
                  cfg.global_seed);
  log_event("assembled", {{"corpus", out_dir + "/corpus.jsonl"},
                          {"stats", out_dir + "/stats.json"}});
  return 0;
}

int cmd_validate(const std::string &in_path, const std::string &config_path,
                 const std::string &lexicon_path,
                 const std::string &report_path, bool strict) {
  forge::ForgeConfig cfg = load_config(config_path);
  std::vector<std::string> lexicon;
  std::string lex = lexicon_path.empty() ? cfg.validator.lexicon_path
                                         : lexicon_path;
  if (!lex.empty())
    lexicon = forge::load_lexicon(lex);
  forge::SynonymTable syn = synonyms_from(cfg);

  nlohmann::json reports = nlohmann::json::array();
  int rejects = 0, flags = 0, total = 0;
  for (const nlohmann::json &line : read_jsonl(in_path)) {
    const nlohmann::json *doc = &line;
    std::string gold;
    forge::MatchFn matcher = forge::make_matcher("exact");
    if (line.is_object() && line.contains("trajectory")) {
      doc = &line.at("trajectory");
      if (line.contains("sample") && line["sample"].is_object()) {
        gold = line["sample"].value("gold_answer", std::string());
        matcher = matcher_for_dataset(
            cfg, line["sample"].value("dataset_id", std::string()), syn);
      }
    }
    std::string env_name = "direct";
    if (doc->is_object() && doc->contains("metadata") &&
        (*doc)["metadata"].is_object())
      env_name = (*doc)["metadata"].value("environment_id",
                                          std::string("direct"));
    forge::EnvironmentSpec env = forge::EnvironmentSpec::standard(
        forge::environment_from_name(env_name));
    auto bound = cfg.validator.depth_bounds.find(env_name);
    if (bound != cfg.validator.depth_bounds.end())
      env.t_max = bound->second;

    forge::LintReport structural = forge::structural_check(
        *doc, env, matcher, gold, cfg.validator.length_bound);
    nlohmann::json entry = structural.to_json();
    entry["stage"] = "structural";
    if (!structural.rejected()) {
      try {
        forge::Trajectory t = forge::from_document(*doc);
        forge::LintReport behavioral = forge::behavioral_check(t, lexicon);
        for (const forge::Violation &v : behavioral.violations)
          entry["violations"].push_back(v.to_json());
        if (behavioral.rejected())
          entry["verdict"] = "reject";
        else if (entry["verdict"] == "pass" &&
                 behavioral.verdict() ==
                     forge::LintReport::Verdict::flagged)
          entry["verdict"] = "flagged";
      } catch (const forge::ParseError &e) {
        entry["verdict"] = "reject";
        entry["violations"].push_back({{"message", e.what()},
                                       {"rule_id", "turn_grammar"},
                                       {"severity", "reject"}});
      }
    }
    if (entry["verdict"] == "reject")
      ++rejects;
    else if (entry["verdict"] == "flagged")
      ++flags;
    ++total;
    reports.push_back(std::move(entry));
  }

  nlohmann::json out = {{"flagged", flags},
                        {"rejected", rejects},
                        {"reports", reports},
                        {"total", total}};
  if (!report_path.empty()) {
    std::ofstream rf(report_path, std::ios::trunc);
    rf << out.dump(2) << "\n";
  } else {
    std::cout << out.dump(2) << "\n";
  }
  log_event("validated",
            {{"total", total}, {"rejects", rejects}, {"flags", flags}});
  return (strict && rejects > 0) ? 1 : 0;
}

int cmd_stats(const std::string &in_path, const std::string &out_path) {
  std::vector<forge::DatasetRecord> records = forge::read_corpus(in_path);
  nlohmann::json report = forge::stats(records);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    out << report.dump(2) << "\n";
  } else {
    std::cout << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string &episodes_path,
                 const std::string &matcher_name,
                 const std::string &synonyms_path, const std::string &out) {
  forge::SynonymTable syn;
  if (!synonyms_path.empty())
    syn = forge::SynonymTable::load(synonyms_path);
  forge::MatchFn matcher = forge::make_matcher(matcher_name, syn);

  std::vector<forge::EpisodeRecord> episodes;
  for (const nlohmann::json &j : read_jsonl(episodes_path))
    episodes.push_back(forge::EpisodeRecord::from_json(j));

  forge::EvalReport report = forge::evaluate_run(episodes, matcher);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    f << report.to_json().dump(2) << "\n";
  } else {
    std::cout << report.to_json().dump(2) << "\n";
  }
  std::cout << report.table();
  return 0;
}

int cmd_route_analyze(const std::string &records_path,
                      const std::string &out_path) {
  std::vector<forge::RoutingRecord> records;
  for (const nlohmann::json &j : read_jsonl(records_path))
    records.push_back(forge::RoutingRecord::from_json(j));
  forge::StrategyReport report = forge::routing_report(records);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    out << report.to_json().dump(2) << "\n";
  } else {
    std::cout << report.to_json().dump(2) << "\n";
  }
  return 0;
}

int cmd_decontaminate(const std::string &train_path,
                      const std::string &test_path, int n,
                      const std::string &out_path) {
  auto texts_of = [](const std::string &path) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const nlohmann::json &j : read_jsonl(path)) {
      std::string id = j.contains("id") ? j["id"].get<std::string>()
                                        : j.value("sample_id", std::string());
      std::string body = j.contains("text") ? j["text"].get<std::string>()
                                            : j.value("question",
                                                      std::string());
      out.emplace_back(std::move(id), std::move(body));
    }
    return out;
  };
  std::vector<forge::NgramOverlap> overlaps =
      forge::decontaminate(texts_of(train_path), texts_of(test_path), n);
  nlohmann::json report = nlohmann::json::array();
  for (const forge::NgramOverlap &o : overlaps)
    report.push_back({{"ngram", o.ngram},
                      {"test_id", o.test_id},
                      {"train_id", o.train_id}});
  nlohmann::json out = {{"n", n},
                        {"overlaps", report},
                        {"total", overlaps.size()}};
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    f << out.dump(2) << "\n";
  } else {
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"agentic trajectory corpus toolkit"};
  app.require_subcommand(1);

  std::string config_path, dataset_path, out_dir = ".", tiers = "123";
  std::optional<int> retries, workers;
  std::optional<std::uint64_t> seed;
  auto *generate = app.add_subcommand(
      "generate", "run the tiered trajectory-generation pipeline");
  generate->add_option("--config", config_path, "config JSON path");
  generate->add_option("--dataset", dataset_path, "samples JSONL path");
  generate->add_option("--out", out_dir, "output directory");
  generate->add_option("--tiers", tiers, "tiers to run, e.g. 1,2,3");
  generate->add_option("--retries", retries, "tier-3 retry budget");
  generate->add_option("--workers", workers, "worker pool size");
  generate->add_option("--seed", seed, "global seed");

  std::string in_path, lexicon_path, report_path;
  bool strict = false;
  auto *validate =
      app.add_subcommand("validate", "lint a trajectory corpus");
  validate->add_option("--in", in_path, "corpus JSONL")->required();
  validate->add_option("--env-config,--config", config_path, "config JSON");
  validate->add_option("--lexicon", lexicon_path, "keyword list path");
  validate->add_option("--report", report_path, "report output path");
  validate->add_flag("--strict", strict, "exit 1 on any reject");

  std::string stats_in, stats_out;
  auto *stats_cmd = app.add_subcommand("stats", "corpus statistics");
  stats_cmd->add_option("--in", stats_in, "corpus JSONL")->required();
  stats_cmd->add_option("--out", stats_out, "report output path");

  std::string episodes_path, matcher_name = "exact", synonyms_path,
              eval_out, category_field = "category";
  auto *evaluate = app.add_subcommand("evaluate", "score an episode run");
  evaluate->add_option("--episodes", episodes_path, "episodes JSONL")
      ->required();
  evaluate->add_option("--matcher", matcher_name, "exact|soft|diagnosis");
  evaluate->add_option("--synonyms", synonyms_path, "synonym table path");
  evaluate->add_option("--by-category", category_field,
                       "category field name");
  evaluate->add_option("--out", eval_out, "report output path");

  std::string routing_path, routing_out;
  auto *route = app.add_subcommand("route-analyze",
                                   "counterfactual routing report");
  route->add_option("--records", routing_path, "routing JSONL")->required();
  route->add_option("--out", routing_out, "report output path");

  std::string train_path, test_path, decon_out;
  int ngram_n = 8;
  auto *decon = app.add_subcommand("decontaminate",
                                   "n-gram overlap between corpora");
  decon->add_option("--train", train_path, "train JSONL")->required();
  decon->add_option("--test", test_path, "test JSONL")->required();
  decon->add_option("-n,--n", ngram_n, "n-gram size");
  decon->add_option("--out", decon_out, "report output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e); // prints usage, exit 0
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed())
      return cmd_generate(config_path, dataset_path, out_dir, tiers, retries,
                          workers, seed);
    if (validate->parsed())
      return cmd_validate(in_path, config_path, lexicon_path, report_path,
                          strict);
    if (stats_cmd->parsed())
      return cmd_stats(stats_in, stats_out);
    if (evaluate->parsed())
      return cmd_evaluate(episodes_path, matcher_name, synonyms_path,
                          eval_out);
    if (route->parsed())
      return cmd_route_analyze(routing_path, routing_out);
    if (decon->parsed())
      return cmd_decontaminate(train_path, test_path, ngram_n, decon_out);
  } catch (const forge::ConfigError &e) {
    log_event("config_error", {{"message", e.what()}});
    return 2;
  } catch (const std::exception &e) {
    log_event("error", {{"message", e.what()}});
    return 2;
  }
  return 2;
}
