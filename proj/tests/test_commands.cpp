#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch_amalgamated.hpp>
#include <focuslime/focuslime.hpp>

#include "support/helpers.hpp"
#include "support/minischema.hpp"

using namespace focuslime;

namespace {

nlohmann::json load_schema(const std::string& name) {
  const std::string path = std::string(TEST_SOURCE_DIR) + "/schemas/" + name;
  std::ifstream in(path);
  REQUIRE(in.good());
  return nlohmann::json::parse(in);
}

nlohmann::json small_suite_spec() {
  return {{"documents", 3},
          {"words_per_document", 64},
          {"trigger_words", {"garnet", "vexwood", "illyria"}},
          {"placement_paragraph", -1},
          {"kind", "keyword_and"},
          {"p_on", 0.95},
          {"p_off", 0.05},
          {"seed", 7},
          {"question", "Does the document contain the designated clause?"}};
}

RunConfig small_run_config() {
  RunConfig cfg;
  cfg.target = testutil::keyword_and_spec({"garnet", "vexwood", "illyria"}, 0.95, 0.05,
                                          "suite-target");
  cfg.proxy = testutil::keyword_and_spec({"garnet", "vexwood", "illyria"}, 0.95, 0.05,
                                         "suite-proxy");
  cfg.seed = 11;
  cfg.eval.aopc_k_max = 10;
  cfg.eval.narrow_steps = 1;
  cfg.eval.narrow_samples = 32;
  return cfg;
}

std::string synth_dataset(const testutil::TempDir& tmp) {
  const std::string spec_path = tmp.file("suite.json");
  {
    std::ofstream out(spec_path);
    out << small_suite_spec().dump();
  }
  const std::string out_dir = tmp.file("suite");
  REQUIRE(cmd_synth(spec_path, out_dir) == kExitOk);
  return out_dir + "/dataset.jsonl";
}

std::vector<std::string> json_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TEST_CASE("cmd_synth writes a valid, trigger-bearing, reproducible corpus") {
  testutil::TempDir tmp;
  const std::string dataset = synth_dataset(tmp);
  const nlohmann::json schema = load_schema("dataset.schema.json");

  const std::vector<DatasetRecord> records = read_jsonl(dataset);
  REQUIRE(records.size() == 3);
  std::ifstream in(dataset);
  std::string line;
  while (std::getline(in, line)) {
    const auto errors = minischema::validate(schema, nlohmann::json::parse(line));
    CHECK(errors.empty());
  }

  // Evidence spans cover exactly the planted triggers.
  for (const DatasetRecord& record : records) {
    REQUIRE(record.evidence.size() == 1);
    const std::string span = record.document.substr(
        record.evidence[0].start, record.evidence[0].end - record.evidence[0].start);
    CHECK(span == "garnet vexwood illyria");
  }

  // The registered model fires on the corpus and not on a trigger-free control.
  std::ifstream model_in(tmp.file("suite/model.json"));
  const SyntheticModel model = synthetic_from_json(nlohmann::json::parse(model_in));
  CHECK(model.evaluate(records[0].document) == 0.95);
  std::string control = records[0].document;
  const std::size_t at = control.find("garnet");
  REQUIRE(at != std::string::npos);
  control.replace(at, 6, "humble");
  CHECK(model.evaluate(control) == 0.05);

  // Fixed seed: regenerating yields the identical corpus.
  const std::string again = synth_dataset(tmp);
  (void)again;
  testutil::TempDir tmp2;
  const std::string dataset2 = synth_dataset(tmp2);
  CHECK(testutil::read_file(dataset) == testutil::read_file(dataset2));
}

TEST_CASE("cmd_explain emits schema-valid JSON deterministically") {
  testutil::TempDir tmp;
  const std::string dataset = synth_dataset(tmp);
  RunConfig cfg = small_run_config();
  cfg.cache_path = tmp.file("cache.jsonl");

  const std::string out_a = tmp.file("out-a");
  REQUIRE(cmd_explain(cfg, dataset, Method::Focus, out_a) == kExitOk);

  const nlohmann::json schema = load_schema("attribution.schema.json");
  const auto files = json_files(out_a);
  REQUIRE(files.size() == 3);
  for (const std::string& file : files) {
    const nlohmann::json j = nlohmann::json::parse(testutil::read_file(file));
    const auto errors = minischema::validate(schema, j);
    for (const std::string& error : errors) UNSCOPED_INFO(error);
    CHECK(errors.empty());
    CHECK(j.at("diagnostics").at("method") == "focus");
    // The HTML sibling exists.
    std::string html = file;
    html.replace(html.size() - 5, 5, ".html");
    CHECK(std::filesystem::exists(html));
  }

  // The cache file rows match the published cache schema.
  const nlohmann::json cache_schema = load_schema("cache.schema.json");
  std::ifstream cache_in(cfg.cache_path);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(cache_in, line)) {
    ++rows;
    CHECK(minischema::validate(cache_schema, nlohmann::json::parse(line)).empty());
  }
  CHECK(rows > 0);

  // Rerun with the same config and seed: byte-identical outputs. The rerun
  // uses a fresh cache so budget diagnostics are unaffected by the first run.
  RunConfig rerun_cfg = cfg;
  rerun_cfg.cache_path = "";
  const std::string out_b = tmp.file("out-b");
  REQUIRE(cmd_explain(rerun_cfg, dataset, Method::Focus, out_b) == kExitOk);
  for (const std::string& file : files) {
    const std::string other = out_b + file.substr(out_a.size());
    CHECK(testutil::read_file(file) == testutil::read_file(other));
  }
}

TEST_CASE("method lime equals explain with an all-ones focus mask") {
  testutil::TempDir tmp;
  const std::string dataset = synth_dataset(tmp);
  const RunConfig cfg = small_run_config();

  const std::string out_lime = tmp.file("out-lime");
  const std::string out_ablation = tmp.file("out-ablation");
  REQUIRE(cmd_explain(cfg, dataset, Method::Lime, out_lime) == kExitOk);
  REQUIRE(cmd_explain(cfg, dataset, Method::FocusNoProxy, out_ablation) == kExitOk);

  for (const std::string& file : json_files(out_lime)) {
    const nlohmann::json lime = nlohmann::json::parse(testutil::read_file(file));
    const nlohmann::json ablation = nlohmann::json::parse(
        testutil::read_file(out_ablation + file.substr(out_lime.size())));
    CHECK(lime.at("scores") == ablation.at("scores"));
    CHECK(lime.at("focus_mask") == ablation.at("focus_mask"));
    for (const auto& bit : lime.at("focus_mask")) CHECK(bit.get<int>() == 1);
    CHECK(lime.at("diagnostics").at("scout").at("iterations").empty());
  }
}

TEST_CASE("cmd_explain reports per-record failures without aborting the run") {
  testutil::TempDir tmp;
  const std::string dataset = tmp.file("mixed.jsonl");
  {
    std::ofstream out(dataset);
    out << R"({"id":"ok","document":"garnet vexwood illyria words","question":"clause?","answer":"yes"})"
        << "\n";
    out << R"({"id":"empty","document":"","question":"clause?","answer":"yes"})" << "\n";
  }
  RunConfig cfg = small_run_config();
  const std::string out_dir = tmp.file("out");
  CHECK(cmd_explain(cfg, dataset, Method::Lime, out_dir) == kExitFailure);
  CHECK(std::filesystem::exists(out_dir + "/ok.json"));
  CHECK_FALSE(std::filesystem::exists(out_dir + "/empty.json"));
}

TEST_CASE("cmd_evaluate recall is perfect for planted perfect attributions") {
  testutil::TempDir tmp;
  const std::string dataset = synth_dataset(tmp);
  const std::vector<DatasetRecord> records = read_jsonl(dataset);
  const std::string explanations = tmp.file("explanations");
  std::filesystem::create_directories(explanations);
  for (const DatasetRecord& record : records) {
    const Document doc = record.to_document();
    std::vector<double> scores(doc.size(), 0.0);
    for (std::size_t unit : evidence_units(doc)) scores[unit] = 1.0;
    const nlohmann::json j = {{"id", record.id},
                              {"scores", scores},
                              {"focus_mask", std::vector<int>(doc.size(), 1)}};
    std::ofstream out(explanations + "/" + record.id + ".json");
    out << j.dump();
  }

  const RunConfig cfg = small_run_config();
  const std::string out_dir = tmp.file("eval");
  REQUIRE(cmd_evaluate(cfg, dataset, explanations, "recall", out_dir) == kExitOk);
  const nlohmann::json report =
      nlohmann::json::parse(testutil::read_file(out_dir + "/recall.json"));
  for (const auto& value : report.at("aggregate")) CHECK(value.get<double>() == 1.0);
  CHECK(std::filesystem::exists(out_dir + "/recall.csv"));
}

TEST_CASE("cmd_evaluate aopc on a constant model is all zeros") {
  testutil::TempDir tmp;
  const std::string dataset = synth_dataset(tmp);
  const std::vector<DatasetRecord> records = read_jsonl(dataset);
  const std::string explanations = tmp.file("explanations");
  std::filesystem::create_directories(explanations);
  for (const DatasetRecord& record : records) {
    const Document doc = record.to_document();
    std::vector<double> scores(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) scores[i] = static_cast<double>(i);
    const nlohmann::json j = {{"id", record.id},
                              {"scores", scores},
                              {"focus_mask", std::vector<int>(doc.size(), 1)}};
    std::ofstream out(explanations + "/" + record.id + ".json");
    out << j.dump();
  }

  RunConfig cfg = small_run_config();
  cfg.target = testutil::weighted_linear_spec({}, 0.9, "constant-target");
  const std::string out_dir = tmp.file("eval");
  REQUIRE(cmd_evaluate(cfg, dataset, explanations, "aopc", out_dir) == kExitOk);
  const nlohmann::json report =
      nlohmann::json::parse(testutil::read_file(out_dir + "/aopc.json"));
  for (const auto& v : report.at("aggregate").at("per_k")) CHECK(v.get<double>() == 0.0);
  CHECK(report.at("aggregate").at("mean").get<double>() == 0.0);

  // Aggregate mean equals the mean of the per-example means.
  double total = 0.0;
  for (const auto& row : report.at("per_example")) total += row.at("mean").get<double>();
  CHECK(report.at("aggregate").at("mean").get<double>() ==
        Catch::Approx(total / report.at("per_example").size()).margin(1e-12));
}

TEST_CASE("cmd_narrow writes one CSV row per step plus the initial state") {
  testutil::TempDir tmp;
  const std::string dataset = synth_dataset(tmp);
  RunConfig cfg = small_run_config();  // narrow_steps = 1
  const std::string out_dir = tmp.file("narrow");
  REQUIRE(cmd_narrow(cfg, dataset, out_dir) == kExitOk);

  const std::string csv = testutil::read_file(out_dir + "/synthetic-0.narrow.csv");
  std::istringstream lines(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);  // header + steps 0 and 1
  CHECK(rows[0] == "step,n_active,mean_aopc,optimal");

  const nlohmann::json trace =
      nlohmann::json::parse(testutil::read_file(out_dir + "/synthetic-0.narrow.json"));
  REQUIRE(trace.at("steps").size() == 2);
  // Masks are nested: step 1 freezes exactly one coordinate of step 0.
  const auto mask0 = trace.at("steps")[0].at("mask").get<std::vector<int>>();
  const auto mask1 = trace.at("steps")[1].at("mask").get<std::vector<int>>();
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < mask0.size(); ++i) {
    CHECK(mask1[i] <= mask0[i]);
    frozen += mask0[i] - mask1[i];
  }
  CHECK(frozen == 1);
}

TEST_CASE("cmd_report escapes markup and distinguishes frozen regions") {
  testutil::TempDir tmp;
  const std::string explanations = tmp.file("explanations");
  std::filesystem::create_directories(explanations);
  const nlohmann::json crafted = {
      {"id", "crafted"},
      {"scores", {0.5, 0.0, -0.5}},
      {"units",
       {{{"start", 0}, {"end", 8}, {"surface", "<script>"}},
        {{"start", 9}, {"end", 13}, {"surface", "mid\"dle"}},
        {{"start", 14}, {"end", 18}, {"surface", "tail"}}}},
      {"focus_mask", {1, 0, 1}}};
  {
    std::ofstream out(explanations + "/crafted.json");
    out << crafted.dump();
  }
  {
    std::ofstream out(explanations + "/broken.json");
    out << "{not json";
  }
  const nlohmann::json neutral = {{"id", "neutral"},
                                  {"scores", {0.0, 0.0}},
                                  {"units",
                                   {{{"start", 0}, {"end", 1}, {"surface", "a"}},
                                    {{"start", 2}, {"end", 3}, {"surface", "b"}}}},
                                  {"focus_mask", {1, 1}}};
  {
    std::ofstream out(explanations + "/neutral.json");
    out << neutral.dump();
  }

  const std::string out_dir = tmp.file("report");
  REQUIRE(cmd_report(explanations, out_dir) == kExitOk);

  const std::string html = testutil::read_file(out_dir + "/crafted.html");
  CHECK(html.find("<script>") == std::string::npos);
  CHECK(html.find("&lt;script&gt;") != std::string::npos);
  CHECK(html.find("class=\"word frozen\"") != std::string::npos);

  // All-zero attribution: every word renders with the neutral background; the
  // only colored swatches are the two legend entries.
  const std::string neutral_html = testutil::read_file(out_dir + "/neutral.html");
  CHECK(neutral_html.find("background:#ffffff") != std::string::npos);
  std::size_t colored = 0;
  for (std::size_t at = neutral_html.find("background:rgb"); at != std::string::npos;
       at = neutral_html.find("background:rgb", at + 1)) {
    ++colored;
  }
  CHECK(colored == 2);

  const std::string error_html = testutil::read_file(out_dir + "/broken.html");
  CHECK(error_html.find("Malformed explanation") != std::string::npos);
}

TEST_CASE("run config round-trips through JSON") {
  RunConfig cfg = small_run_config();
  cfg.target_tokens = 123456;
  cfg.proxy_tokens = 654321;
  cfg.scout.k_sentences = 7;
  cfg.kernel.sigma = 0.5;
  cfg.lambda = 0.01;
  cfg.parallelism = 4;
  cfg.mask_replacement = "[MASK]";
  const nlohmann::json first = run_config_to_json(cfg);
  const RunConfig reparsed = run_config_from_json(first);
  CHECK(run_config_to_json(reparsed) == first);
}

TEST_CASE("unknown config keys are rejected") {
  nlohmann::json j = run_config_to_json(small_run_config());
  j["bogus"] = 1;
  try {
    run_config_from_json(j);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
}

TEST_CASE("error codes map to stable process exit codes") {
  CHECK(exit_code_for(ErrorCode::ConfigError) == 2);
  CHECK(exit_code_for(ErrorCode::BudgetExhausted) == 3);
  CHECK(exit_code_for(ErrorCode::NetworkError) == 4);
  CHECK(exit_code_for(ErrorCode::UnparseableResponse) == 4);
  CHECK(exit_code_for(ErrorCode::ContractViolation) == 1);
}
