// Regenerates the golden trajectory corpus under fixtures/<environment>/.
// Usage: make_golden [fixtures_dir]

#include <filesystem>
#include <fstream>
#include <iostream>

#include "forge/environment.hpp"
#include "forge/trajectory.hpp"

using namespace forge;

namespace {

Turn human(const std::string &content,
           const std::vector<std::string> &images = {}) {
  Turn t;
  t.role = Role::human;
  t.content = content;
  t.images = images;
  return t;
}

Turn call(const std::string &think, const std::string &name,
          const nlohmann::json &args) {
  Turn t;
  t.role = Role::function_call;
  t.think = think;
  t.content = nlohmann::json{{"arguments", args}, {"name", name}}.dump();
  return t;
}

Turn obs(const std::string &content,
         const std::vector<std::string> &images = {}) {
  Turn t;
  t.role = Role::observation;
  t.content = content;
  t.images = images;
  return t;
}

Turn gpt(const std::string &think, const std::string &content) {
  Turn t;
  t.role = Role::gpt;
  t.think = think;
  t.content = content;
  return t;
}

Turn terminate(const std::string &think, const char *field,
               const std::string &answer) {
  Turn t;
  t.role = Role::gpt;
  t.think = think;
  t.content = nlohmann::json{{"arguments", {{field, answer}}},
                             {"name", "Terminate"}}
                  .dump();
  return t;
}

Trajectory build(EnvironmentId env, const std::string &sample_id,
                 std::vector<Turn> turns, const std::string &final_answer,
                 Mode mode = Mode::prospective, int tier = 3) {
  EnvironmentSpec spec = EnvironmentSpec::standard(env);
  Trajectory t;
  t.sample_id = sample_id;
  t.environment_id = env;
  t.system_prompt = spec.system_prompt;
  t.tool_schemas = spec.tool_schemas;
  t.turns = std::move(turns);
  for (const Turn &turn : t.turns)
    t.images.insert(t.images.end(), turn.images.begin(), turn.images.end());
  t.mode = mode;
  t.final_answer = final_answer;
  t.tier = tier;
  return t;
}

std::vector<Trajectory> tool_calling_cases() {
  std::vector<Trajectory> out;
  std::string q = "<image>\nIs there evidence of pleural effusion?";
  std::vector<std::string> img = {"cxr_001.png"};

  out.push_back(build(
      EnvironmentId::tool_calling, "tc_depth0",
      {human(q, img),
       gpt("The effusion is visible as blunting of the costophrenic angle, "
           "so no tools are needed.",
           "[FINAL] yes")},
      "yes", Mode::direct, 1));

  out.push_back(build(
      EnvironmentId::tool_calling, "tc_report_depth1",
      {human(q, img),
       call("A structured report will summarize the pleural spaces.",
            "chest_xray_report_generator", {{"image", "cxr_001.png"}}),
       obs("FINDINGS: Blunting of the left costophrenic angle with a "
           "meniscus sign. IMPRESSION: small left pleural effusion."),
       gpt("The report confirms a left pleural effusion.", "[FINAL] yes")},
      "yes"));

  out.push_back(build(
      EnvironmentId::tool_calling, "tc_two_tools_depth2",
      {human("<image>\nWhich side shows the abnormality?", img),
       call("Classifier scores will point at the dominant finding.",
            "chest_xray_classifier", {{"image", "cxr_001.png"}}),
       obs("pleural_effusion: 0.91, consolidation: 0.12, all others < 0.05"),
       call("Grounding the phrase localizes the finding to one side.",
            "xray_phrase_grounding",
            {{"image", "cxr_001.png"}, {"phrase", "pleural effusion"}}),
       obs("box [612, 540, 910, 880] over the left lower hemithorax"),
       gpt("The grounded box sits in the left lower zone.", "[FINAL] left")},
      "left"));

  out.push_back(build(
      EnvironmentId::tool_calling, "tc_expert_depth2",
      {human("<image>\nIs the cardiac silhouette enlarged?", img),
       call("The expert model can judge the cardiothoracic ratio.",
            "chest_xray_expert",
            {{"image", "cxr_001.png"},
             {"question", "Is the cardiothoracic ratio above 0.5?"}}),
       obs("The cardiothoracic ratio measures approximately 0.62."),
       call("A second opinion from the general VQA model adds confidence.",
            "llava_med_qa",
            {{"image", "cxr_001.png"},
             {"question", "Does the heart appear enlarged?"}}),
       obs("Yes, the cardiac silhouette appears enlarged."),
       gpt("Both tools agree the ratio exceeds the normal bound.",
           "[FINAL] yes")},
      "yes"));

  out.push_back(build(
      EnvironmentId::tool_calling, "tc_depth4_max",
      {human("<image>\nIs a support device correctly positioned?", img),
       call("Metadata may state the device type.", "dicom_processor",
            {{"file", "cxr_001.dcm"}}),
       obs("Modality CR, StudyDescription: line placement check."),
       call("Classifier scores rule out acute findings first.",
            "chest_xray_classifier", {{"image", "cxr_001.png"}}),
       obs("support_devices: 0.97, all pathology scores < 0.10"),
       call("Grounding the line tip shows where it ends.",
            "xray_phrase_grounding",
            {{"image", "cxr_001.png"}, {"phrase", "catheter tip"}}),
       obs("box [488, 300, 540, 360] projecting over the cavoatrial "
           "junction"),
       call("Rendering the box confirms the location visually.",
            "image_visualizer",
            {{"image", "cxr_001.png"},
             {"annotations", "[488, 300, 540, 360]"}}),
       obs("Rendered overlay saved; the tip projects at the cavoatrial "
           "junction."),
       gpt("The tip sits at the cavoatrial junction, which is the correct "
           "position.",
           "[FINAL] yes")},
      "yes"));
  return out;
}

std::vector<Trajectory> interleaved_cases() {
  std::vector<Trajectory> out;
  std::vector<std::string> img = {"figure_panel.png"};
  auto zoom_obs = [](int round, const std::string &detail,
                     const std::string &path) {
    return obs("[Output Image ID: img_round_" + std::to_string(round) +
                   "]\n" + detail + "\n<image>",
               {path});
  };

  out.push_back(build(
      EnvironmentId::interleaved, "il_depth0",
      {human("<image>\nHow many panels does the figure contain?", img),
       terminate("Four panels are directly countable at full resolution.",
                 "ans", "four")},
      "four"));

  out.push_back(build(
      EnvironmentId::interleaved, "il_zoom_depth1",
      {human("<image>\nWhat does the scale bar in panel B read?", img),
       call("Zooming into the lower right quadrant isolates panel B.",
            "ZoomInSubfigure",
            {{"image", "img_original"}, {"param", {500, 500, 1000, 1000}}}),
       zoom_obs(0, "Cropped region to 480x360 pixels.", "zoom_b.png"),
       terminate("The scale bar in the crop reads 100 micrometers.", "ans",
                 "100 um")},
      "100 um"));

  out.push_back(build(
      EnvironmentId::interleaved, "il_segment_depth2",
      {human("<image>\nIs the marked nodule solid or cystic?", img),
       call("Zooming near the marker gives enough resolution to segment.",
            "ZoomInSubfigure",
            {{"image", "img_original"}, {"param", {200, 100, 700, 600}}}),
       zoom_obs(0, "Cropped region to 500x500 pixels.", "zoom_nodule.png"),
       call("Segmenting around the marker separates the nodule from "
            "background.",
            "SegmentRegionAroundPoint",
            {{"image", "img_round_0"}, {"param", "x=\"450\" y=\"380\""}}),
       zoom_obs(1, "Mask covers a round homogeneous region.",
                "seg_nodule.png"),
       terminate("The homogeneous mask interior indicates a solid nodule.",
                 "ans", "solid")},
      "solid"));

  out.push_back(build(
      EnvironmentId::interleaved, "il_ocr_depth3",
      {human("<image>\nWhich antibody is named on the axis label?", img),
       call("Zooming to the axis region makes the label legible.",
            "ZoomInSubfigure",
            {{"image", "img_original"}, {"param", {0, 700, 1000, 1000}}}),
       zoom_obs(0, "Cropped region to 1000x300 pixels.", "zoom_axis.png"),
       call("Text segmentation isolates the printed label.",
            "BioMedParseTextSeg",
            {{"image", "img_round_0"}, {"param", "axis label"}}),
       zoom_obs(1, "Text region isolated along the horizontal axis.",
                "seg_axis.png"),
       call("Reading the isolated region yields the label text.", "OCR",
            {{"image", "img_round_1"}}),
       obs("anti-CD20 concentration (ug/mL)"),
       terminate("The axis names the anti-CD20 antibody.", "ans",
                 "anti-CD20")},
      "anti-CD20"));

  out.push_back(build(
      EnvironmentId::interleaved, "il_depth6_max",
      {human("<image>\nWhat value does the highlighted cell contain?", img),
       call("The table occupies the top half, so zoom there first.",
            "ZoomInSubfigure",
            {{"image", "img_original"}, {"param", {0, 0, 1000, 500}}}),
       zoom_obs(0, "Cropped region to 800x400 pixels.", "zoom_top.png"),
       call("The highlighted column is on the right side of the table.",
            "ZoomInSubfigure",
            {{"image", "img_round_0"}, {"param", {500, 0, 1000, 1000}}}),
       zoom_obs(1, "Cropped region to 400x400 pixels.", "zoom_col.png"),
       call("Segmenting around the highlight isolates the cell.",
            "SegmentRegionAroundPoint",
            {{"image", "img_round_1"}, {"param", "x=\"520\" y=\"440\""}}),
       zoom_obs(2, "Mask covers one table cell.", "seg_cell.png"),
       call("Reading the cell yields its printed value.", "OCR",
            {{"image", "img_round_2"}}),
       obs("The highlighted cell reads 0.83."),
       call("Checking the row header confirms which metric this is.",
            "ZoomInSubfigure",
            {{"image", "img_round_0"}, {"param", {0, 0, 500, 1000}}}),
       zoom_obs(3, "Cropped region to 400x400 pixels.", "zoom_row.png"),
       call("Reading the header ties the value to its row.", "OCR",
            {{"image", "img_round_3"}}),
       obs("The row header reads AUROC."),
       terminate("The highlighted AUROC cell contains 0.83.", "ans", "0.83")},
      "0.83"));
  return out;
}

std::vector<Trajectory> collaboration_cases() {
  std::vector<Trajectory> out;
  auto stage = [](const std::string &think, const std::string &name,
                  const nlohmann::json &args, const std::string &reply) {
    return std::vector<Turn>{call(think, name, args), obs(reply)};
  };
  auto extend = [](std::vector<Turn> &turns, std::vector<Turn> more) {
    for (Turn &t : more)
      turns.push_back(std::move(t));
  };

  out.push_back(build(
      EnvironmentId::collaboration, "col_depth0",
      {human("Which vitamin deficiency causes scurvy?"),
       gpt("This is textbook knowledge and needs no panel.", "vitamin C")},
      "vitamin C"));

  {
    std::vector<Turn> turns = {
        human("Is aspirin contraindicated in children with viral illness?")};
    extend(turns, stage("A single expert can settle this safety question.",
                        "assess_difficulty", nlohmann::json::object(),
                        "basic - one expert suffices"));
    extend(turns, stage("Answering as the consulted pediatrician.",
                        "expert_answer", nlohmann::json::object(),
                        "yes, because of the risk of Reye syndrome"));
    turns.push_back(gpt("A single expert answered this basic query directly.",
                        "yes, because of the risk of Reye syndrome"));
    out.push_back(build(EnvironmentId::collaboration, "col_basic_depth2",
                        std::move(turns),
                        "yes, because of the risk of Reye syndrome"));
  }

  {
    std::vector<Turn> turns = {
        human("What is the first-line treatment for newly diagnosed type 2 "
              "diabetes?")};
    extend(turns, stage("Guideline recall suits a single specialist.",
                        "assess_difficulty", nlohmann::json::object(),
                        "basic - guideline recall"));
    extend(turns, stage("Answering as the consulted endocrinologist.",
                        "expert_answer", nlohmann::json::object(),
                        "metformin with lifestyle modification"));
    turns.push_back(gpt("A single expert answered this basic query directly.",
                        "metformin with lifestyle modification"));
    out.push_back(build(EnvironmentId::collaboration, "col_basic2_depth2",
                        std::move(turns),
                        "metformin with lifestyle modification"));
  }

  auto intermediate = [&](const std::string &sample_id, const std::string &q,
                          const std::vector<std::string> &experts,
                          const std::vector<std::string> &positions,
                          const std::string &verdict_text) {
    std::vector<Turn> turns = {human(q)};
    extend(turns, stage("Conflicting organ systems favor a panel debate.",
                        "assess_difficulty", nlohmann::json::object(),
                        "intermediate - a panel should discuss"));
    extend(turns,
           stage("Three complementary specialties cover the differential.",
                 "recruit_experts", nlohmann::json::object(),
                 "1. " + experts[0] + " - primary system - Hierarchy: "
                 "independent\n2. " + experts[1] +
                 " - second system - Hierarchy: independent\n3. " +
                 experts[2] + " - third system - Hierarchy: independent"));
    for (std::size_t i = 0; i < 3; ++i)
      extend(turns, stage("Analyzing as the " + experts[i] + ".",
                          "expert_analysis", {{"expert", experts[i]}},
                          positions[i]));
    for (int round = 1; round <= 2; ++round)
      for (std::size_t i = 0; i < 3; ++i)
        extend(turns,
               stage("Debating as the " + experts[i] + ".", "debate_turn",
                     {{"expert", experts[i]}, {"round", round}},
                     positions[i]));
    extend(turns, stage("Synthesizing the expert opinions.", "synthesize",
                        nlohmann::json::object(),
                        "The panel converges on: " + verdict_text));
    turns.push_back(gpt("Majority vote over 3 expert positions selects this "
                        "answer (2 of 3).",
                        verdict_text));
    return build(EnvironmentId::collaboration, sample_id, std::move(turns),
                 verdict_text);
  };

  out.push_back(intermediate(
      "col_intermediate_depth12",
      "Should this patient with chest pain and a normal troponin be "
      "admitted?",
      {"Cardiologist", "Emergency Physician", "Internist"},
      {"no, discharge with early follow-up", "no, discharge with early "
       "follow-up",
       "yes, observe overnight"},
      "no, discharge with early follow-up"));

  out.push_back(intermediate(
      "col_intermediate2_depth12",
      "Is anticoagulation indicated for this patient with atrial "
      "fibrillation and a CHA2DS2-VASc score of 3?",
      {"Cardiologist", "Neurologist", "Geriatrician"},
      {"yes", "yes", "yes"}, "yes"));
  return out;
}

std::vector<Trajectory> simulation_cases() {
  std::vector<Trajectory> out;
  auto request = [](const std::string &think, const char *tool,
                    const char *field, const std::string &name,
                    const std::string &finding) {
    return std::vector<Turn>{
        call(think, tool, {{field, name}}), obs(finding)};
  };
  auto extend = [](std::vector<Turn> &turns, std::vector<Turn> more) {
    for (Turn &t : more)
      turns.push_back(std::move(t));
  };

  out.push_back(build(
      EnvironmentId::simulation, "sim_depth0",
      {human("Patient presentation. Demographics: 8 year old boy. Primary "
             "symptom: barking cough worse at night.\nWhat is the most "
             "likely diagnosis?"),
       terminate("The barking cough in a young child is classic for croup.",
                 "diagnosis", "Croup")},
      "Croup"));

  {
    std::vector<Turn> turns = {human(
        "Patient presentation. Demographics: 45 year old woman. Primary "
        "symptom: fatigue and pallor for three months.\nWhat is the most "
        "likely diagnosis?")};
    extend(turns, request("Conjunctival pallor would support anemia.",
                          "RequestPhysicalExam", "exam", "General_Appearance",
                          "Pale conjunctivae and nail beds; no "
                          "lymphadenopathy."));
    extend(turns, request("A blood count quantifies the suspicion.",
                          "RequestTest", "test", "Complete_Blood_Count",
                          "Hemoglobin 8.2 g/dL, MCV 71 fL, ferritin 6 "
                          "ng/mL."));
    turns.push_back(terminate(
        "Microcytic anemia with low ferritin confirms iron deficiency.",
        "diagnosis", "Iron Deficiency Anemia"));
    out.push_back(build(EnvironmentId::simulation, "sim_anemia_depth2",
                        std::move(turns), "Iron Deficiency Anemia"));
  }

  {
    // Four requests then Terminate, matching the weight-loss/night-sweats
    // presentation resolved as tuberculosis.
    std::vector<Turn> turns = {human(
        "Patient presentation. Demographics: 35 year old man, recent "
        "immigrant. Primary symptom: productive cough for six weeks with "
        "night sweats and weight loss.\nWhat is the most likely "
        "diagnosis?")};
    extend(turns, request("Fever and tachypnea would suggest active "
                          "infection.",
                          "RequestPhysicalExam", "exam", "Vital_Signs",
                          "Temperature 38.1 C, heart rate 96, respiratory "
                          "rate 20, blood pressure 118/74."));
    extend(turns, request("Apical findings are typical for reactivation "
                          "disease.",
                          "RequestPhysicalExam", "exam",
                          "Respiratory_Examination",
                          "Crackles over the right upper lobe with "
                          "bronchial breath sounds."));
    extend(turns, request("Imaging localizes the process.", "RequestTest",
                          "test", "Chest X-Ray",
                          "Right upper lobe cavitary infiltrate with hilar "
                          "lymphadenopathy."));
    extend(turns, request("Sputum microbiology can confirm the organism.",
                          "RequestTest", "test", "Sputum Analysis",
                          "Acid-fast bacilli seen on smear; culture "
                          "pending."));
    turns.push_back(terminate(
        "Cavitary upper lobe disease with acid-fast bacilli confirms the "
        "diagnosis.",
        "diagnosis", "Tuberculosis"));
    out.push_back(build(EnvironmentId::simulation, "sim_tb_depth4",
                        std::move(turns), "Tuberculosis"));
  }

  {
    std::vector<Turn> turns = {human(
        "Patient presentation. Demographics: 60 year old man. Primary "
        "symptom: crushing substernal chest pain for one hour.\nWhat is "
        "the most likely diagnosis?")};
    extend(turns, request("Vitals frame the acuity.", "RequestPhysicalExam",
                          "exam", "Vital_Signs",
                          "Blood pressure 98/60, heart rate 110, "
                          "diaphoretic."));
    extend(turns, request("An ECG is the immediate discriminator.",
                          "RequestTest", "test", "ECG",
                          "ST elevation in leads II, III and aVF."));
    extend(turns, request("Troponin confirms myocardial injury.",
                          "RequestTest", "test", "Troponin",
                          "Troponin I 4.2 ng/mL, rising."));
    turns.push_back(terminate(
        "Inferior ST elevation with rising troponin is diagnostic.",
        "diagnosis", "Inferior Myocardial Infarction"));
    out.push_back(build(EnvironmentId::simulation, "sim_mi_depth3",
                        std::move(turns), "Inferior Myocardial Infarction"));
  }

  {
    std::vector<Turn> turns = {human(
        "Patient presentation. Demographics: 28 year old woman. Primary "
        "symptom: intermittent joint pain, rash, and fatigue for four "
        "months.\nWhat is the most likely diagnosis?")};
    const char *exams[6] = {"Vital_Signs", "Skin_Examination",
                            "Joint_Examination", "Cardiac_Examination",
                            "Lymph_Nodes", "Oral_Examination"};
    const char *exam_findings[6] = {
        "Temperature 37.8 C, otherwise unremarkable.",
        "Malar rash sparing the nasolabial folds.",
        "Symmetric tenderness of the wrists and knees without deformity.",
        "Soft friction rub at the left sternal border.",
        "No palpable lymphadenopathy.",
        "Two painless oral ulcers on the hard palate."};
    for (int i = 0; i < 6; ++i)
      extend(turns, request("Each system adds one criterion to the "
                            "differential.",
                            "RequestPhysicalExam", "exam", exams[i],
                            exam_findings[i]));
    const char *tests[6] = {"Complete_Blood_Count", "ANA", "Anti-dsDNA",
                            "Complement_Levels", "Urinalysis", "ESR"};
    const char *test_results[6] = {
        "Mild leukopenia and thrombocytopenia.",
        "Positive at 1:640, homogeneous pattern.",
        "Strongly positive.",
        "C3 and C4 both low.",
        "Proteinuria 2+ with red cell casts.",
        "Elevated at 58 mm/hr."};
    for (int i = 0; i < 6; ++i)
      extend(turns, request("Serology narrows the autoimmune differential.",
                            "RequestTest", "test", tests[i],
                            test_results[i]));
    turns.push_back(terminate(
        "Malar rash, serositis, cytopenias, renal involvement and positive "
        "anti-dsDNA satisfy the classification criteria.",
        "diagnosis", "Systemic Lupus Erythematosus"));
    out.push_back(build(EnvironmentId::simulation, "sim_sle_depth12_max",
                        std::move(turns), "Systemic Lupus Erythematosus"));
  }
  return out;
}

void write_all(const std::string &root,
               const std::vector<Trajectory> &trajectories) {
  for (const Trajectory &t : trajectories) {
    std::filesystem::path dir =
        std::filesystem::path(root) / environment_name(t.environment_id);
    std::filesystem::create_directories(dir);
    std::filesystem::path path = dir / (t.sample_id + ".json");
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out << serialize(t);
    std::cout << path.string() << "\n";
  }
}

} // namespace

int main(int argc, char **argv) {
  std::string root = argc > 1 ? argv[1] : "fixtures";
  write_all(root, tool_calling_cases());
  write_all(root, interleaved_cases());
  write_all(root, collaboration_cases());
  write_all(root, simulation_cases());
  return 0;
}
