#include "forge/environment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "forge/errors.hpp"
#include "forge/raster.hpp"
#include "forge/text.hpp"

namespace forge {

namespace {

ToolSchema tool(const std::string &name, const std::string &description,
                std::vector<std::tuple<std::string, std::string, std::string,
                                       bool>> params = {}) {
  ToolSchema s;
  s.name = name;
  s.description = description;
  for (auto &[pname, type, desc, required] : params)
    s.parameters[pname] = {type, desc, required};
  return s;
}

std::vector<ToolSchema> medrax_tools() {
  return {
      tool("chest_xray_classifier",
           "Scores the image for 14 common pathologies.",
           {{"image", "string", "Image identifier.", true}}),
      tool("chest_xray_segmentation", "Segments an anatomical structure.",
           {{"image", "string", "Image identifier.", true},
            {"anatomy", "string", "Structure to segment.", true}}),
      tool("chest_xray_expert", "Answers a focused question about the image.",
           {{"image", "string", "Image identifier.", true},
            {"question", "string", "Question for the expert model.", true}}),
      tool("llava_med_qa", "General medical visual question answering.",
           {{"image", "string", "Image identifier.", true},
            {"question", "string", "Question to ask.", true}}),
      tool("xray_phrase_grounding",
           "Localizes a phrase, returning a bounding box.",
           {{"image", "string", "Image identifier.", true},
            {"phrase", "string", "Phrase to localize.", true}}),
      tool("chest_xray_report_generator",
           "Writes a structured radiology report.",
           {{"image", "string", "Image identifier.", true}}),
      tool("dicom_processor", "Extracts metadata and pixel data.",
           {{"file", "string", "DICOM file reference.", true}}),
      tool("image_visualizer", "Renders the image with annotations.",
           {{"image", "string", "Image identifier.", true},
            {"annotations", "string", "Annotation payload.", false}}),
  };
}

std::vector<ToolSchema> interleaved_tools() {
  return {
      tool("ZoomInSubfigure",
           "Crops the image to a region for detailed inspection.",
           {{"image", "string", "Image identifier.", true},
            {"param", "array",
             "Bounding box [x1, y1, x2, y2], 0-1000 normalized.", true}}),
      tool("SegmentRegionAroundPoint",
           "Segments the region around given point coordinates.",
           {{"image", "string", "Image identifier.", true},
            {"param", "string", "Coordinates x=\"v\" y=\"v\" (0-1000).",
             true}}),
      tool("BioMedParseTextSeg",
           "Text-prompted segmentation of medical entities.",
           {{"image", "string", "Image identifier.", true},
            {"param", "string", "Semicolon-separated noun phrases.", true}}),
      tool("OCR", "Extracts text from image regions.",
           {{"image", "string", "Image identifier.", true},
            {"param", "string", "Optional region hint.", false}}),
      tool("Terminate", "Concludes the task with the final answer.",
           {{"ans", "string", "Short final answer.", true}}),
  };
}

std::vector<ToolSchema> simulation_tools() {
  return {
      tool("RequestPhysicalExam",
           "Requests a specific physical examination finding.",
           {{"exam", "string", "Name of the physical examination.", true}}),
      tool("RequestTest", "Requests a medical test or laboratory result.",
           {{"test", "string", "Name of the medical test.", true}}),
      tool("Terminate", "Provides the final diagnosis.",
           {{"diagnosis", "string", "Disease or condition name only.",
             true}}),
  };
}

std::vector<ToolSchema> collaboration_stages() {
  return {
      tool("assess_difficulty",
           "Classifies the query as basic, intermediate, or advanced."),
      tool("recruit_experts", "Selects three specialists for the panel."),
      tool("expert_answer", "Single-expert direct answer for basic queries.",
           {{"expert", "string", "Expert answering.", false}}),
      tool("expert_analysis", "Independent analysis from one expert.",
           {{"expert", "string", "Expert analyzing.", true}}),
      tool("debate_turn", "One debate contribution.",
           {{"expert", "string", "Expert speaking.", true},
            {"round", "integer", "Debate round.", true}}),
      tool("synthesize", "Synthesizes the expert opinions into a report."),
  };
}

} // namespace

EnvironmentSpec EnvironmentSpec::standard(EnvironmentId id) {
  EnvironmentSpec spec;
  spec.environment_id = id;
  switch (id) {
  case EnvironmentId::tool_calling:
    spec.t_max = 4;
    spec.tool_schemas = medrax_tools();
    spec.terminal_rule = "gpt turn carrying the [FINAL] marker";
    spec.system_prompt =
        "You are a medical imaging agent for chest X-ray question answering. "
        "Enclose reasoning in <think></think> tags before every action. Call "
        "tools only when needed, then output [FINAL] followed by the answer. "
        "For yes/no questions answer exactly \"yes\" or \"no\".";
    break;
  case EnvironmentId::interleaved:
    spec.t_max = 6;
    spec.tool_schemas = interleaved_tools();
    spec.terminal_rule = "Terminate action with an ans argument";
    spec.system_prompt =
        "You are a visual assistant for medical images. Reference images by "
        "id: img_original is the input, img_last the newest output, "
        "img_round_N the output of step N. Reason in <think></think> tags, "
        "call one tool at a time as JSON, and always finish by calling "
        "Terminate with a short answer.";
    break;
  case EnvironmentId::collaboration:
    spec.t_max = 12;
    spec.tool_schemas = collaboration_stages();
    spec.terminal_rule = "moderator verdict as the terminal gpt turn";
    spec.system_prompt =
        "You coordinate a panel of medical experts. Assess difficulty, "
        "recruit specialists when needed, run the debate, and report the "
        "majority decision.";
    break;
  case EnvironmentId::simulation:
    spec.t_max = 12;
    spec.tool_schemas = simulation_tools();
    spec.terminal_rule = "Terminate action with a diagnosis argument";
    spec.system_prompt =
        "You are an expert medical diagnostician evaluating a patient. "
        "Reason in <think></think> tags, request exams and tests one at a "
        "time as JSON tool calls, and finish by calling Terminate with the "
        "disease or condition name only.";
    break;
  case EnvironmentId::direct:
    spec.t_max = 0;
    spec.terminal_rule = "single gpt answer turn";
    spec.system_prompt =
        "Answer the medical question directly and concisely.";
    break;
  }
  return spec;
}

const ToolSchema *EnvironmentSpec::find_tool(const std::string &name) const {
  for (const ToolSchema &s : tool_schemas)
    if (s.name == name)
      return &s;
  return nullptr;
}

Sample Sample::from_json(const nlohmann::json &j) {
  Sample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.dataset_id = j.value("dataset_id", std::string());
  s.question = j.at("question").get<std::string>();
  if (j.contains("images"))
    for (const auto &img : j.at("images"))
      s.images.push_back(img.get<std::string>());
  s.gold_answer = j.value("gold_answer", std::string());
  s.category = j.value("category", std::string());
  if (s.question.empty())
    throw ParseError("sample " + s.sample_id + " has empty question");
  return s;
}

nlohmann::json Sample::to_json() const {
  return {{"sample_id", sample_id}, {"dataset_id", dataset_id},
          {"question", question},   {"images", images},
          {"gold_answer", gold_answer}, {"category", category}};
}

// ---- Vignettes ----

namespace {

std::string unify_key(const std::string &k) {
  std::string out;
  for (unsigned char c : k) {
    if (c == '_' || c == ' ' || c == '-')
      out.push_back(' ');
    else
      out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string json_leaf_to_string(const nlohmann::json &v) {
  if (v.is_string())
    return v.get<std::string>();
  return v.dump();
}

const nlohmann::json *find_key(const nlohmann::json &obj,
                               const std::string &wanted) {
  if (!obj.is_object())
    return nullptr;
  std::string target = unify_key(wanted);
  for (const auto &[k, v] : obj.items())
    if (unify_key(k) == target)
      return &v;
  return nullptr;
}

std::optional<std::string> lookup_in(const nlohmann::json &table,
                                     const std::string &name) {
  if (const nlohmann::json *hit = find_key(table, name))
    return render_vignette_node(*hit);
  // one nested level of fallback
  for (const auto &[k, v] : table.items()) {
    (void)k;
    if (const nlohmann::json *hit = find_key(v, name))
      return render_vignette_node(*hit);
  }
  return std::nullopt;
}

} // namespace

std::string render_vignette_node(const nlohmann::json &node) {
  if (node.is_string())
    return node.get<std::string>();
  if (node.is_object()) {
    std::string out;
    for (const auto &[k, v] : node.items()) {
      if (!out.empty())
        out += "; ";
      out += k + ": " + json_leaf_to_string(v);
    }
    return out;
  }
  return node.dump();
}

PatientVignette PatientVignette::from_json(const nlohmann::json &root) {
  const nlohmann::json &j =
      root.contains("OSCE_Examination") ? root.at("OSCE_Examination") : root;
  PatientVignette v;
  v.objective = j.value("Objective_for_Doctor", std::string());
  if (const nlohmann::json *actor = find_key(j, "Patient_Actor")) {
    v.demographics = actor->value("Demographics", std::string());
    v.history = actor->value("History", std::string());
    v.past_medical_history =
        actor->value("Past_Medical_History", std::string());
    v.social_history = actor->value("Social_History", std::string());
    v.review_of_systems = actor->value("Review_of_Systems", std::string());
    if (const nlohmann::json *sym = find_key(*actor, "Symptoms")) {
      v.primary_symptom = sym->value("Primary_Symptom", std::string());
      if (sym->contains("Secondary_Symptoms"))
        for (const auto &s : sym->at("Secondary_Symptoms"))
          v.secondary_symptoms.push_back(s.get<std::string>());
    }
  }
  if (const nlohmann::json *pe = find_key(j, "Physical_Examination_Findings"))
    v.physical_examination_findings = *pe;
  if (const nlohmann::json *tr = find_key(j, "Test_Results"))
    v.test_results = *tr;
  v.correct_diagnosis = j.value("Correct_Diagnosis", std::string());
  if (v.correct_diagnosis.empty())
    throw ParseError("vignette has empty Correct_Diagnosis");
  return v;
}

PatientVignette PatientVignette::load(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ForgeError("cannot open vignette: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

std::string PatientVignette::presentation_text() const {
  std::ostringstream out;
  out << "Patient presentation.";
  if (!demographics.empty())
    out << " Demographics: " << demographics << ".";
  if (!history.empty())
    out << " History: " << history;
  if (!primary_symptom.empty())
    out << " Primary symptom: " << primary_symptom << ".";
  if (!secondary_symptoms.empty()) {
    out << " Secondary symptoms:";
    for (std::size_t i = 0; i < secondary_symptoms.size(); ++i)
      out << (i ? ", " : " ") << secondary_symptoms[i];
    out << ".";
  }
  if (!past_medical_history.empty())
    out << " Past medical history: " << past_medical_history;
  if (!social_history.empty())
    out << " Social history: " << social_history;
  if (!review_of_systems.empty())
    out << " Review of systems: " << review_of_systems;
  return out.str();
}

std::optional<std::string>
PatientVignette::lookup_exam(const std::string &name) const {
  return lookup_in(physical_examination_findings, name);
}

std::optional<std::string>
PatientVignette::lookup_test(const std::string &name) const {
  return lookup_in(test_results, name);
}

// ---- Executors ----

std::string ExecutorSet::arguments_hash(const nlohmann::json &arguments) {
  return text::fnv1a_hex(arguments.dump());
}

namespace {
std::string fixture_key(const std::string &sample_id, const std::string &tool,
                        const std::string &args_hash) {
  return sample_id + "\x1f" + tool + "\x1f" + args_hash;
}
} // namespace

void ExecutorSet::load_fixtures(const std::string &jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in)
    throw ConfigError("cannot open tool fixture file: " + jsonl_path);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty())
      continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ToolResult r;
    r.observation = j.at("observation_text").get<std::string>();
    if (j.contains("produced_image") && !j["produced_image"].is_null())
      r.produced_image = j["produced_image"].get<std::string>();
    fixtures_[fixture_key(j.at("sample_id").get<std::string>(),
                          j.at("tool").get<std::string>(),
                          j.at("arguments_hash").get<std::string>())] = r;
  }
}

void ExecutorSet::add_fixture(const std::string &sample_id,
                              const std::string &tool,
                              const nlohmann::json &arguments,
                              const std::string &observation,
                              const std::string &produced_image) {
  ToolResult r;
  r.observation = observation;
  if (!produced_image.empty())
    r.produced_image = produced_image;
  fixtures_[fixture_key(sample_id, tool, arguments_hash(arguments))] = r;
}

ToolResult ExecutorSet::execute(const std::string &sample_id,
                                const Action &action,
                                const std::string &resolved_image_path) const {
  auto it = fixtures_.find(
      fixture_key(sample_id, action.name, arguments_hash(action.arguments)));
  if (it != fixtures_.end())
    return it->second;

  if (action.name == "ZoomInSubfigure") {
    try {
      std::vector<double> box;
      for (const auto &v : action.arguments.at("param"))
        box.push_back(v.get<double>());
      Raster src = Raster::load_pgm(resolved_image_path);
      Raster cropped = crop_normalized(src, box);
      std::string out_path = output_dir_ + "/" + sample_id + "_zoom_" +
                             arguments_hash(action.arguments) + ".pgm";
      cropped.save_pgm(out_path);
      ToolResult r;
      std::ostringstream obs;
      obs << "Cropped region to " << cropped.width << "x" << cropped.height
          << " pixels.";
      r.observation = obs.str();
      r.produced_image = out_path;
      return r;
    } catch (const ForgeError &e) {
      ToolResult r;
      r.observation = std::string("ZoomIn failed: ") + e.what();
      r.failed = true;
      return r;
    }
  }

  ToolResult r;
  r.observation = "tool error: no scripted output for " + action.name;
  r.failed = true;
  return r;
}

// ---- Episode lifecycle ----

std::optional<std::string>
EpisodeState::resolve_image(const std::string &id) const {
  std::string wanted = id;
  if (wanted == "img_last")
    wanted = img_last;
  for (const auto &[key, ref] : image_registry)
    if (key == wanted)
      return ref;
  return std::nullopt;
}

namespace {

Turn make_human_turn(const EnvironmentSpec &env, const Sample &sample,
                     const std::optional<PatientVignette> &vignette) {
  Turn t;
  t.role = Role::human;
  std::string body;
  for (const std::string &img : sample.images) {
    body += kImageToken;
    body += "\n";
    t.images.push_back(img);
  }
  if (env.environment_id == EnvironmentId::simulation && vignette)
    body += vignette->presentation_text() + "\n";
  body += sample.question;
  t.content = body;
  return t;
}

} // namespace

EpisodeState reset(const EnvironmentSpec &env, const Sample &sample,
                   const std::optional<PatientVignette> &vignette) {
  if (env.environment_id == EnvironmentId::simulation && !vignette)
    throw MissingVignette("simulation sample " + sample.sample_id +
                          " has no vignette");
  if ((env.environment_id == EnvironmentId::tool_calling ||
       env.environment_id == EnvironmentId::interleaved) &&
      sample.images.empty())
    throw MissingImage("sample " + sample.sample_id + " has no image for " +
                       environment_name(env.environment_id));

  EpisodeState state;
  state.env = env;
  state.sample = sample;
  state.vignette = vignette;
  state.turns.push_back(make_human_turn(env, sample, vignette));
  if (env.environment_id == EnvironmentId::interleaved) {
    state.image_registry.emplace_back("img_original", sample.images.front());
    state.img_last = "img_original";
  }
  if (env.environment_id == EnvironmentId::collaboration)
    state.stage = "difficulty_assessment";
  return state;
}

void validate_action_arguments(const ToolSchema &schema,
                               const Action &action) {
  for (const auto &[pname, p] : schema.parameters) {
    if (p.required && !action.arguments.contains(pname))
      throw SchemaViolation(action.name + ": missing required argument " +
                            pname);
  }
  for (const auto &[aname, aval] : action.arguments.items()) {
    auto it = schema.parameters.find(aname);
    if (it == schema.parameters.end())
      throw SchemaViolation(action.name + ": unknown argument " + aname);
    const std::string &type = it->second.type;
    bool ok = true;
    if (type == "string")
      ok = aval.is_string();
    else if (type == "integer")
      ok = aval.is_number_integer();
    else if (type == "number")
      ok = aval.is_number();
    else if (type == "array")
      ok = aval.is_array();
    else if (type == "object")
      ok = aval.is_object();
    else if (type == "boolean")
      ok = aval.is_boolean();
    if (!ok)
      throw SchemaViolation(action.name + ": argument " + aname +
                            " is not of type " + type);
  }
}

namespace {

Turn make_call_turn(const Action &action) {
  Turn t;
  t.role = Role::function_call;
  t.think = action.think.empty()
                ? std::optional<std::string>{}
                : std::optional<std::string>{action.think};
  t.content = nlohmann::json{{"arguments", action.arguments},
                             {"name", action.name}}
                  .dump();
  return t;
}

std::string terminate_answer(const EnvironmentSpec &env,
                             const Action &action) {
  const char *field =
      env.environment_id == EnvironmentId::simulation ? "diagnosis" : "ans";
  if (!action.arguments.contains(field) ||
      !action.arguments[field].is_string())
    throw SchemaViolation("Terminate: missing " + std::string(field));
  return action.arguments[field].get<std::string>();
}

} // namespace

StepOutcome step(EpisodeState &state, const Action &action,
                 const ExecutorSet &executors) {
  if (state.terminated)
    throw ForgeError("step on terminated episode " + state.sample.sample_id);

  if (action.name == "Terminate") {
    const ToolSchema *schema = state.env.find_tool(action.name);
    if (!schema)
      throw UnknownAction("Terminate is not valid in " +
                          environment_name(state.env.environment_id));
    validate_action_arguments(*schema, action);
    std::string answer = terminate_answer(state.env, action);
    Turn t;
    t.role = Role::gpt;
    t.think = action.think.empty()
                  ? std::optional<std::string>{}
                  : std::optional<std::string>{action.think};
    t.content = nlohmann::json{{"arguments", action.arguments},
                               {"name", action.name}}
                    .dump();
    state.turns.push_back(std::move(t));
    state.terminated = true;
    state.final_answer = answer;
    return {StepOutcome::Kind::terminal, answer};
  }

  const ToolSchema *schema = state.env.find_tool(action.name);
  if (!schema)
    throw UnknownAction("unknown action " + action.name + " in " +
                        environment_name(state.env.environment_id));
  validate_action_arguments(*schema, action);

  if (state.actions_taken >= state.env.t_max) {
    // Depth cap reached: request an immediate final answer instead of
    // executing the action.
    Turn t;
    t.role = Role::human;
    t.content = kForcedAnswerRequest;
    state.turns.push_back(std::move(t));
    state.forced = true;
    return {StepOutcome::Kind::depth_limit, {}};
  }

  Turn obs;
  obs.role = Role::observation;

  if (state.env.environment_id == EnvironmentId::simulation) {
    std::optional<std::string> found;
    if (action.name == "RequestPhysicalExam")
      found = state.vignette->lookup_exam(
          action.arguments.at("exam").get<std::string>());
    else if (action.name == "RequestTest")
      found = state.vignette->lookup_test(
          action.arguments.at("test").get<std::string>());
    obs.content = found ? *found : kNotAvailableSentinel;
  } else {
    std::string resolved;
    if (state.env.environment_id == EnvironmentId::interleaved) {
      std::string id = action.arguments.value("image", std::string());
      if (auto ref = state.resolve_image(id.empty() ? "img_last" : id))
        resolved = *ref;
    } else if (!state.sample.images.empty()) {
      resolved = state.sample.images.front();
    }
    ToolResult result =
        executors.execute(state.sample.sample_id, action, resolved);
    if (result.produced_image &&
        state.env.environment_id == EnvironmentId::interleaved) {
      int round = static_cast<int>(state.image_registry.size()) - 1;
      std::string id = "img_round_" + std::to_string(round);
      state.image_registry.emplace_back(id, *result.produced_image);
      state.img_last = id;
      obs.content = "[Output Image ID: " + id + "]\n" + result.observation +
                    "\n" + kImageToken;
      obs.images.push_back(*result.produced_image);
    } else {
      obs.content = result.observation;
    }
  }

  state.turns.push_back(make_call_turn(action));
  state.turns.push_back(std::move(obs));
  ++state.actions_taken;
  return {StepOutcome::Kind::continued, {}};
}

void finish(EpisodeState &state, const std::optional<std::string> &think,
            const std::string &content) {
  if (state.terminated)
    throw ForgeError("finish on terminated episode");
  Turn t;
  t.role = Role::gpt;
  t.think = think;
  t.content = content;
  state.turns.push_back(std::move(t));
  state.terminated = true;
  try {
    state.final_answer = extract_answer(state);
  } catch (const MarkerMissing &) {
    if (state.forced)
      state.final_answer = text::trim(content);
    else
      state.failed = true;
  }
}

std::string extract_answer(const EpisodeState &state) {
  if (!state.terminated)
    throw ForgeError("extract_answer on live episode");
  const Turn &last = state.turns.back();
  if (last.role != Role::gpt)
    throw MarkerMissing("episode did not end with a gpt turn");

  switch (state.env.environment_id) {
  case EnvironmentId::tool_calling: {
    const std::string value = last.value();
    std::size_t pos = value.find(kFinalMarker);
    if (pos == std::string::npos)
      throw MarkerMissing("no [FINAL] marker in terminal turn");
    std::string answer =
        text::trim(value.substr(pos + std::string(kFinalMarker).size()));
    std::string lowered = text::lower(answer);
    if (lowered == "yes" || lowered == "no")
      return lowered;
    return answer;
  }
  case EnvironmentId::interleaved:
  case EnvironmentId::simulation: {
    Action a;
    try {
      a = parse_action(last);
    } catch (const ParseError &) {
      throw MarkerMissing("terminal turn is not a Terminate action");
    }
    if (a.name != "Terminate")
      throw MarkerMissing("terminal action is not Terminate");
    const char *field = state.env.environment_id == EnvironmentId::simulation
                            ? "diagnosis"
                            : "ans";
    if (!a.arguments.contains(field))
      throw MarkerMissing(std::string("Terminate lacks ") + field);
    return a.arguments[field].get<std::string>();
  }
  case EnvironmentId::collaboration:
  case EnvironmentId::direct: {
    std::string answer = text::trim(last.content);
    if (answer.empty())
      throw MarkerMissing("terminal turn has no answer text");
    return answer;
  }
  }
  throw MarkerMissing("unhandled environment");
}

Trajectory to_trajectory(const EpisodeState &state, Mode mode,
                         std::optional<int> tier) {
  if (!state.terminated || state.failed)
    throw ForgeError("episode is not cleanly terminated");
  if (state.forced)
    throw ForgeError("forced episode cannot become a strict trajectory");
  Trajectory t;
  t.sample_id = state.sample.sample_id;
  t.environment_id = state.env.environment_id;
  t.system_prompt = state.env.system_prompt;
  t.tool_schemas = state.env.tool_schemas;
  t.turns = state.turns;
  for (const Turn &turn : state.turns)
    t.images.insert(t.images.end(), turn.images.begin(), turn.images.end());
  t.mode = mode;
  t.final_answer = state.final_answer.value_or("");
  t.tier = tier;
  return t;
}

// ---- Collaboration protocol ----

std::string majority_vote(const std::vector<std::string> &answers) {
  if (answers.empty())
    throw ProtocolViolation("majority vote over zero answers");
  std::vector<std::string> norms;
  norms.reserve(answers.size());
  for (const std::string &a : answers)
    norms.push_back(text::normalize(a));
  std::map<std::string, int> counts;
  for (const std::string &n : norms)
    ++counts[n];
  std::string best;
  int best_count = 0;
  bool tie = false;
  for (const auto &[label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
      tie = false;
    } else if (count == best_count) {
      tie = true;
    }
  }
  if (tie)
    return answers.front();
  for (std::size_t i = 0; i < answers.size(); ++i)
    if (norms[i] == best)
      return answers[i];
  return answers.front();
}

namespace {

struct StagePair {
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
  std::string think;
  std::string observation;
};

void append_stage(std::vector<Turn> &turns, const StagePair &stage) {
  Action a;
  a.name = stage.name;
  a.arguments = stage.arguments;
  a.think = stage.think;
  turns.push_back(make_call_turn(a));
  Turn obs;
  obs.role = Role::observation;
  obs.content = stage.observation;
  turns.push_back(std::move(obs));
}

struct StageReply {
  std::optional<std::string> think;
  std::string body;
};

StageReply ask(const PolicyHandle &policy, PolicyRole role,
               const std::string &system_prompt, const std::string &prompt,
               const DecodingHints &decoding) {
  PolicyRequest req;
  req.role = role;
  req.system_prompt = system_prompt;
  req.messages.push_back({"user", prompt, {}});
  req.decoding = decoding;
  PolicyResponse resp = policy.complete(req);
  auto [think, body] = split_think(resp.content);
  return {think, text::trim(body)};
}

std::string stage_think(const StageReply &reply, const std::string &fallback) {
  if (reply.think && !text::trim(*reply.think).empty())
    return *reply.think;
  return fallback;
}

std::optional<std::string> parse_difficulty(const std::string &body) {
  std::string lowered = text::lower(body);
  std::size_t best = std::string::npos;
  std::string found;
  for (const char *level : {"basic", "intermediate", "advanced"}) {
    std::size_t pos = lowered.find(level);
    if (pos != std::string::npos && pos < best) {
      best = pos;
      found = level;
    }
  }
  if (found.empty())
    return std::nullopt;
  return found;
}

std::vector<std::string> parse_expert_list(const std::string &body,
                                           int wanted) {
  std::vector<std::string> experts;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line) &&
         static_cast<int>(experts.size()) < wanted) {
    std::string trimmed = text::trim(line);
    if (trimmed.empty() || !std::isdigit(static_cast<unsigned char>(
                               trimmed.front())))
      continue;
    std::size_t i = 0;
    while (i < trimmed.size() &&
           std::isdigit(static_cast<unsigned char>(trimmed[i])))
      ++i;
    while (i < trimmed.size() &&
           (trimmed[i] == '.' || trimmed[i] == ')' || trimmed[i] == ' '))
      ++i;
    std::string rest = trimmed.substr(i);
    std::size_t cut = rest.find(" - ");
    if (cut == std::string::npos)
      cut = rest.find(':');
    std::string name = text::trim(cut == std::string::npos
                                      ? rest
                                      : rest.substr(0, cut));
    if (!name.empty())
      experts.push_back(name);
  }
  return experts;
}

} // namespace

Trajectory run_collaboration(const Sample &sample, const PolicyHandle &policy,
                             const CollaborationOptions &opts) {
  EnvironmentSpec env = EnvironmentSpec::standard(EnvironmentId::collaboration);

  std::vector<Turn> turns;
  turns.push_back(make_human_turn(env, sample, std::nullopt));

  const std::string q = sample.question;

  // Stage: difficulty assessment, one re-ask on unparseable output.
  std::string assess_prompt =
      "Decide the difficulty of the medical query as one of: basic (a single "
      "expert can answer), intermediate (a panel of experts should discuss), "
      "advanced (multiple teams must collaborate).\nQuestion: " + q;
  StageReply assess = ask(policy, PolicyRole::agent, env.system_prompt,
                          assess_prompt, opts.decoding);
  std::optional<std::string> difficulty = parse_difficulty(assess.body);
  if (!difficulty) {
    assess = ask(policy, PolicyRole::agent, env.system_prompt,
                 assess_prompt +
                     "\nAnswer with exactly one of: basic, intermediate, "
                     "advanced.",
                 opts.decoding);
    difficulty = parse_difficulty(assess.body);
    if (!difficulty)
      throw ProtocolViolation("difficulty assessment unparseable: " +
                              assess.body);
  }
  append_stage(turns,
               {"assess_difficulty",
                nlohmann::json::object(),
                stage_think(assess, "Assessing the difficulty of the query."),
                assess.body});

  std::string final_answer;
  std::optional<std::string> final_think;

  if (*difficulty == "basic") {
    StageReply expert =
        ask(policy, PolicyRole::expert, env.system_prompt,
            "As a single medical expert, answer the question concisely.\n"
            "Question: " + q,
            opts.decoding);
    append_stage(turns, {"expert_answer", nlohmann::json::object(),
                         stage_think(expert, "Answering as a single expert."),
                         expert.body});
    final_answer = expert.body;
    final_think = "A single expert answered this basic query directly.";
  } else {
    // Advanced queries run the intermediate panel protocol as well.
    std::string recruit_prompt =
        "Recruit " + std::to_string(opts.expert_count) +
        " experts in different medical specialties for this question. Output "
        "a numbered list, one expert per line, as \"N. Specialty - why - "
        "Hierarchy: ...\".\nQuestion: " + q;
    StageReply recruit = ask(policy, PolicyRole::agent, env.system_prompt,
                             recruit_prompt, opts.decoding);
    std::vector<std::string> experts =
        parse_expert_list(recruit.body, opts.expert_count);
    if (static_cast<int>(experts.size()) < opts.expert_count) {
      recruit = ask(policy, PolicyRole::agent, env.system_prompt,
                    recruit_prompt + "\nList exactly " +
                        std::to_string(opts.expert_count) + " experts.",
                    opts.decoding);
      experts = parse_expert_list(recruit.body, opts.expert_count);
      if (static_cast<int>(experts.size()) < opts.expert_count)
        throw ProtocolViolation("expert recruitment unparseable: " +
                                recruit.body);
    }
    experts.resize(opts.expert_count);
    append_stage(turns, {"recruit_experts", nlohmann::json::object(),
                         stage_think(recruit, "Recruiting the expert panel."),
                         recruit.body});

    std::vector<std::string> positions(experts.size());
    for (std::size_t i = 0; i < experts.size(); ++i) {
      StageReply analysis =
          ask(policy, PolicyRole::expert, env.system_prompt,
              "You are the " + experts[i] +
                  ". Give your independent analysis and answer.\nQuestion: " +
                  q,
              opts.decoding);
      append_stage(turns,
                   {"expert_analysis",
                    {{"expert", experts[i]}},
                    stage_think(analysis, "Analyzing as the " + experts[i] +
                                              "."),
                    analysis.body});
      positions[i] = analysis.body;
    }

    for (int round = 1; round <= opts.debate_rounds; ++round) {
      for (std::size_t i = 0; i < experts.size(); ++i) {
        std::string others;
        for (std::size_t jdx = 0; jdx < experts.size(); ++jdx) {
          if (jdx == i)
            continue;
          others += "\n" + experts[jdx] + ": " + positions[jdx];
        }
        StageReply turn_reply =
            ask(policy, PolicyRole::expert, env.system_prompt,
                "Debate round " + std::to_string(round) + ". You are the " +
                    experts[i] + ". The other experts said:" + others +
                    "\nRestate or revise your answer.\nQuestion: " + q,
                opts.decoding);
        append_stage(turns,
                     {"debate_turn",
                      {{"expert", experts[i]}, {"round", round}},
                      stage_think(turn_reply,
                                  "Debating as the " + experts[i] + "."),
                      turn_reply.body});
        positions[i] = turn_reply.body;
      }
    }

    std::string opinions;
    for (std::size_t i = 0; i < experts.size(); ++i)
      opinions += "\n" + experts[i] + ": " + positions[i];
    StageReply synthesis =
        ask(policy, PolicyRole::agent, env.system_prompt,
            "Synthesize the expert opinions into a short report." + opinions +
                "\nQuestion: " + q,
            opts.decoding);
    append_stage(turns, {"synthesize", nlohmann::json::object(),
                         stage_think(synthesis,
                                     "Synthesizing the expert opinions."),
                         synthesis.body});

    final_answer = majority_vote(positions);
    std::map<std::string, int> tally;
    for (const std::string &p : positions)
      ++tally[text::normalize(p)];
    final_think = "Majority vote over " + std::to_string(positions.size()) +
                  " expert positions selects this answer (" +
                  std::to_string(tally[text::normalize(final_answer)]) +
                  " of " + std::to_string(positions.size()) + ").";
  }

  Turn verdict;
  verdict.role = Role::gpt;
  verdict.think = final_think;
  verdict.content = text::trim(final_answer);
  turns.push_back(std::move(verdict));

  Trajectory t;
  t.sample_id = sample.sample_id;
  t.environment_id = EnvironmentId::collaboration;
  t.system_prompt = env.system_prompt;
  t.tool_schemas = env.tool_schemas;
  t.turns = std::move(turns);
  for (const Turn &turn : t.turns)
    t.images.insert(t.images.end(), turn.images.begin(), turn.images.end());
  t.mode = Mode::prospective;
  t.final_answer = text::trim(final_answer);
  return t;
}

} // namespace forge
