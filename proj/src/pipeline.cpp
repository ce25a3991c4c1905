#include "forge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "forge/episode.hpp"
#include "forge/errors.hpp"
#include "forge/text.hpp"
#include "forge/validator.hpp"

namespace forge {

nlohmann::json DatasetRecord::to_json() const {
  return {{"mode", mode_name(mode)},
          {"sample", sample.to_json()},
          {"tier", tier},
          {"trajectory", to_document(trajectory)}};
}

DatasetRecord DatasetRecord::from_json(const nlohmann::json &j) {
  DatasetRecord r;
  r.sample = Sample::from_json(j.at("sample"));
  r.trajectory = from_document(j.at("trajectory"));
  r.tier = j.at("tier").get<int>();
  r.mode = mode_from_name(j.at("mode").get<std::string>());
  return r;
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)> &fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!first_error)
          first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  int count = std::min<int>(workers, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w)
    pool.emplace_back(worker);
  for (std::thread &t : pool)
    t.join();
  if (first_error)
    std::rethrow_exception(first_error);
}

namespace {

Trajectory make_direct_trajectory(const Sample &sample, int tier, Mode mode,
                                  const std::optional<std::string> &think,
                                  const std::string &body) {
  EnvironmentSpec env = EnvironmentSpec::standard(EnvironmentId::direct);
  Trajectory t;
  t.sample_id = sample.sample_id;
  t.environment_id = EnvironmentId::direct;
  t.system_prompt = env.system_prompt;
  t.mode = mode;
  t.tier = tier;

  Turn human;
  human.role = Role::human;
  std::string content;
  for (const std::string &img : sample.images) {
    content += kImageToken;
    content += "\n";
    human.images.push_back(img);
  }
  content += sample.question;
  human.content = content;

  Turn gpt;
  gpt.role = Role::gpt;
  gpt.think = think;
  gpt.content = body;

  t.turns = {std::move(human), std::move(gpt)};
  for (const Turn &turn : t.turns)
    t.images.insert(t.images.end(), turn.images.begin(), turn.images.end());
  t.final_answer = text::trim(body);
  return t;
}

std::pair<std::vector<DatasetRecord>, std::vector<Sample>>
run_direct_tier(const std::vector<Sample> &dataset, const PolicyHandle &policy,
                const MatchFn &matcher, int tier, Mode mode, int workers) {
  EnvironmentSpec env = EnvironmentSpec::standard(EnvironmentId::direct);
  std::vector<std::optional<DatasetRecord>> slots(dataset.size());
  std::vector<char> solved(dataset.size(), 0);

  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    const Sample &s = dataset[i];
    PolicyRequest req;
    req.role = policy.role;
    req.system_prompt = env.system_prompt;
    req.messages.push_back({"user", s.question, s.images});
    try {
      PolicyResponse resp = policy.complete(req);
      auto [think, body] = split_think(resp.content);
      std::string answer = text::trim(body);
      if (!answer.empty() && matcher(answer, s.gold_answer)) {
        DatasetRecord rec;
        rec.sample = s;
        rec.trajectory = make_direct_trajectory(s, tier, mode, think, body);
        rec.tier = tier;
        rec.mode = mode;
        slots[i] = std::move(rec);
        solved[i] = 1;
      }
    } catch (const ForgeError &) {
      // policy failure: the sample stays in the residual
    }
  });

  std::vector<DatasetRecord> records;
  std::vector<Sample> residual;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (solved[i])
      records.push_back(std::move(*slots[i]));
    else
      residual.push_back(dataset[i]);
  }
  std::sort(records.begin(), records.end(),
            [](const DatasetRecord &a, const DatasetRecord &b) {
              return a.sample.sample_id < b.sample.sample_id;
            });
  std::sort(residual.begin(), residual.end(),
            [](const Sample &a, const Sample &b) {
              return a.sample_id < b.sample_id;
            });
  return {std::move(records), std::move(residual)};
}

} // namespace

std::pair<std::vector<DatasetRecord>, std::vector<Sample>>
run_tier1(const std::vector<Sample> &dataset, const PolicyHandle &student,
          const MatchFn &matcher, int workers) {
  return run_direct_tier(dataset, student, matcher, 1, Mode::direct, workers);
}

std::pair<std::vector<DatasetRecord>, std::vector<Sample>>
run_tier2(const std::vector<Sample> &residual, const PolicyHandle &teacher,
          const MatchFn &matcher, int workers) {
  return run_direct_tier(residual, teacher, matcher, 2, Mode::enhanced,
                         workers);
}

namespace {

// Actions/observations of a prospective trajectory, for the recap request.
void collect_steps(const Trajectory &t, std::vector<Action> *actions,
                   std::vector<std::string> *observations) {
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    if (t.turns[i].role != Role::function_call)
      continue;
    actions->push_back(parse_action(t.turns[i]));
    if (i + 1 < t.turns.size() &&
        t.turns[i + 1].role == Role::observation)
      observations->push_back(t.turns[i + 1].content);
  }
}

Trajectory retrospective_from(const Trajectory &prospective,
                              const std::vector<std::string> &thinks) {
  Trajectory retro = prospective;
  retro.mode = Mode::retrospective;
  std::size_t next = 0;
  for (Turn &turn : retro.turns) {
    if (turn.role == Role::function_call && next < thinks.size())
      turn.think = thinks[next++];
  }
  if (!retro.turns.empty() && next < thinks.size())
    retro.turns.back().think = thinks[next];
  return retro;
}

} // namespace

std::pair<std::vector<AgenticPair>, std::vector<DiscardEntry>>
run_tier3(const std::vector<Sample> &residual, const PolicyHandle &agent,
          const PolicyHandle &recap_policy, const MatchFn &matcher,
          const PipelineContext &ctx) {
  for (const Sample &s : residual)
    if (!ctx.env_map.count(s.dataset_id))
      throw ConfigError("no environment mapped for dataset: " + s.dataset_id,
                        "env_map." + s.dataset_id);
  static const ExecutorSet kNoExecutors;
  const ExecutorSet &executors = ctx.executors ? *ctx.executors : kNoExecutors;

  std::vector<std::optional<AgenticPair>> pair_slots(residual.size());
  std::vector<std::optional<DiscardEntry>> discard_slots(residual.size());

  parallel_for(residual.size(), ctx.workers, [&](std::size_t i) {
    const Sample &s = residual[i];
    EnvironmentSpec env =
        EnvironmentSpec::standard(ctx.env_map.at(s.dataset_id));

    std::optional<PatientVignette> vignette;
    if (ctx.vignettes) {
      auto it = ctx.vignettes->find(s.sample_id);
      if (it != ctx.vignettes->end())
        vignette = it->second;
    }

    for (int attempt = 1; attempt <= ctx.retries; ++attempt) {
      DecodingHints dec;
      dec.seed = text::attempt_seed(s.sample_id, attempt);
      std::size_t sched =
          std::min<std::size_t>(static_cast<std::size_t>(attempt) - 1,
                                ctx.temperature_schedule.size() - 1);
      dec.temperature = ctx.temperature_schedule.empty()
                            ? 0.0
                            : ctx.temperature_schedule[sched];

      Trajectory prospective;
      try {
        if (env.environment_id == EnvironmentId::collaboration) {
          CollaborationOptions opts;
          opts.decoding = dec;
          prospective = run_collaboration(s, agent, opts);
          prospective.tier = 3;
        } else {
          EpisodeRunResult res =
              run_episode(env, s, vignette, agent, executors, dec);
          if (!res.success || res.forced ||
              !matcher(res.answer, s.gold_answer))
            continue;
          prospective = to_trajectory(res.state, Mode::prospective, 3);
        }
      } catch (const ForgeError &) {
        continue; // the failed attempt is consumed
      }

      if (!matcher(prospective.final_answer, s.gold_answer))
        continue;
      if (structural_check(prospective, env, matcher, s.gold_answer,
                           ctx.length_bound)
              .rejected())
        continue;
      if (behavioral_check(prospective, ctx.lexicon).rejected())
        continue;

      std::vector<Action> actions;
      std::vector<std::string> observations;
      collect_steps(prospective, &actions, &observations);
      if (actions.size() != observations.size())
        continue;

      try {
        RecapResult rr = recap(recap_policy, s.question,
                               prospective.final_answer, actions,
                               observations);
        AgenticPair pair;
        pair.prospective = {s, prospective, 3, Mode::prospective};
        pair.retrospective = {s, retrospective_from(prospective, rr.thinks),
                              3, Mode::retrospective};
        pair.attempts = attempt;
        pair_slots[i] = std::move(pair);
      } catch (const RecapInvalid &) {
        // the pair is dropped whole; the orphan prospective never ships
        discard_slots[i] = DiscardEntry{s.sample_id, "recap_filtered"};
      }
      return;
    }
    discard_slots[i] = DiscardEntry{s.sample_id, "exhausted_retries"};
  });

  std::vector<AgenticPair> pairs;
  std::vector<DiscardEntry> discards;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    if (pair_slots[i])
      pairs.push_back(std::move(*pair_slots[i]));
    else if (discard_slots[i])
      discards.push_back(std::move(*discard_slots[i]));
  }
  auto by_id = [](const auto &a, const auto &b) {
    return a.sample_id < b.sample_id;
  };
  std::sort(pairs.begin(), pairs.end(),
            [](const AgenticPair &a, const AgenticPair &b) {
              return a.prospective.sample.sample_id <
                     b.prospective.sample.sample_id;
            });
  std::sort(discards.begin(), discards.end(), by_id);
  return {std::move(pairs), std::move(discards)};
}

TierPartition run_pipeline(const std::vector<Sample> &dataset,
                           const PolicyHandle &student,
                           const PolicyHandle &teacher,
                           const PolicyHandle &agent,
                           const PolicyHandle &recap_policy,
                           const MatchFn &matcher,
                           const PipelineContext &ctx) {
  TierPartition p;
  auto [direct, residual] = run_tier1(dataset, student, matcher, ctx.workers);
  p.direct = std::move(direct);
  auto [enhanced, residual2] =
      run_tier2(residual, teacher, matcher, ctx.workers);
  p.enhanced = std::move(enhanced);
  auto [agentic, discard] =
      run_tier3(residual2, agent, recap_policy, matcher, ctx);
  p.agentic = std::move(agentic);
  p.discard = std::move(discard);
  return p;
}

std::vector<DatasetRecord> flatten(const TierPartition &partition) {
  std::vector<DatasetRecord> records = partition.direct;
  records.insert(records.end(), partition.enhanced.begin(),
                 partition.enhanced.end());
  for (const AgenticPair &pair : partition.agentic) {
    records.push_back(pair.prospective);
    records.push_back(pair.retrospective);
  }
  std::sort(records.begin(), records.end(),
            [](const DatasetRecord &a, const DatasetRecord &b) {
              return std::tie(a.sample.sample_id, a.mode) <
                     std::tie(b.sample.sample_id, b.mode);
            });
  return records;
}

nlohmann::json stats(const std::vector<DatasetRecord> &records) {
  std::map<std::string, int> by_key, tier_split, mode_split, depth_hist;
  for (const DatasetRecord &r : records) {
    std::string key = r.sample.dataset_id + "|" + std::to_string(r.tier) +
                      "|" + environment_name(r.trajectory.environment_id);
    ++by_key[key];
    ++tier_split[std::to_string(r.tier)];
    ++mode_split[mode_name(r.mode)];
    ++depth_hist[std::to_string(depth(r.trajectory))];
  }
  return {{"by_dataset_tier_env", by_key},
          {"depth_histogram", depth_hist},
          {"mode_split", mode_split},
          {"tier_split", tier_split},
          {"total", records.size()}};
}

void assemble(const TierPartition &partition, const std::string &corpus_path,
              const std::string &stats_path, double majority_rate,
              std::uint64_t seed) {
  std::set<std::string> seen;
  auto claim = [&seen](const std::string &id) {
    if (!seen.insert(id).second)
      throw InvariantViolation("sample appears in two partition sets: " + id);
  };
  for (const DatasetRecord &r : partition.direct)
    claim(r.sample.sample_id);
  for (const DatasetRecord &r : partition.enhanced)
    claim(r.sample.sample_id);
  for (const AgenticPair &p : partition.agentic)
    claim(p.prospective.sample.sample_id);
  for (const DiscardEntry &d : partition.discard)
    claim(d.sample_id);

  std::vector<DatasetRecord> records = flatten(partition);
  records = class_balance(
      records,
      [](const DatasetRecord &r) {
        return text::normalize(r.trajectory.final_answer);
      },
      majority_rate, seed);

  std::ofstream corpus(corpus_path, std::ios::trunc);
  if (!corpus)
    throw ForgeError("cannot write corpus: " + corpus_path);
  for (const DatasetRecord &r : records)
    corpus << r.to_json().dump() << "\n";

  nlohmann::json report = stats(records);
  std::map<std::string, int> discard_reasons;
  for (const DiscardEntry &d : partition.discard)
    ++discard_reasons[d.reason];
  report["discard"] = {{"by_reason", discard_reasons},
                       {"total", partition.discard.size()}};
  report["input"] = {{"agentic_samples", partition.agentic.size()},
                     {"direct", partition.direct.size()},
                     {"discard", partition.discard.size()},
                     {"enhanced", partition.enhanced.size()}};

  std::ofstream stats_out(stats_path, std::ios::trunc);
  if (!stats_out)
    throw ForgeError("cannot write stats: " + stats_path);
  stats_out << report.dump(2) << "\n";
}

std::vector<DatasetRecord> read_corpus(const std::string &corpus_path) {
  std::ifstream in(corpus_path);
  if (!in)
    throw ForgeError("cannot open corpus: " + corpus_path);
  std::vector<DatasetRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty())
      continue;
    records.push_back(DatasetRecord::from_json(nlohmann::json::parse(line)));
  }
  return records;
}

} // namespace forge
