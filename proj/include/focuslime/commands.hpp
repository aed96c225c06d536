#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "focuslime/config.hpp"
#include "focuslime/dataset.hpp"
#include "focuslime/error.hpp"
#include "focuslime/eval.hpp"
#include "focuslime/focus.hpp"
#include "focuslime/report.hpp"
#include "focuslime/synth.hpp"

namespace focuslime {

// Stable process exit codes; see README.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;
constexpr int kExitModel = 4;

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return kExitConfig;
    case ErrorCode::BudgetExhausted: return kExitBudget;
    case ErrorCode::NetworkError:
    case ErrorCode::UnparseableResponse: return kExitModel;
    default: return kExitFailure;
  }
}

// Crash-safe write: temp file in the same directory, then rename.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json scout_trace_to_json(const ScoutTrace& trace) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const ScoutIterationTrace& iteration : trace.iterations) {
    nlohmann::json survivors = nlohmann::json::array();
    for (const auto& [first, last] : iteration.survivor_spans) {
      survivors.push_back({first, last});
    }
    iterations.push_back({{"level", to_string(iteration.level)},
                          {"unit_count", iteration.unit_count},
                          {"scores", iteration.scores},
                          {"survivors", survivors},
                          {"word_coverage", iteration.word_coverage}});
  }
  return {{"stop_reason", trace.stop_reason},
          {"budget_truncated", trace.budget_truncated},
          {"iterations", iterations}};
}

inline nlohmann::json explanation_to_json(const Document& doc,
                                          const Explanation& explanation) {
  nlohmann::json units = nlohmann::json::array();
  for (const WordUnit& unit : doc.units) {
    units.push_back({{"start", unit.start}, {"end", unit.end}, {"surface", unit.surface}});
  }
  std::vector<int> focus_bits(explanation.focus.bits.begin(), explanation.focus.bits.end());
  return {{"id", doc.id},
          {"scores", explanation.attribution.scores},
          {"units", units},
          {"focus_mask", focus_bits},
          {"diagnostics",
           {{"method", explanation.method},
            {"seed", explanation.seed},
            {"n", doc.size()},
            {"n_active", explanation.focus.n_active()},
            {"k_target", explanation.k_target},
            {"samples_used", explanation.samples_used},
            {"truncated", explanation.truncated},
            {"intercept", explanation.fit.intercept},
            {"weighted_r2", explanation.fit.weighted_r2},
            {"lambda", explanation.fit.lambda},
            {"lambda_bumped", explanation.fit.lambda_bumped},
            {"proxy_tokens", explanation.proxy_tokens},
            {"target_tokens", explanation.target_tokens},
            {"target_tokens_phase1", explanation.target_tokens_phase1},
            {"scout", scout_trace_to_json(explanation.scout_trace)}}}};
}

// explain --config --data --method --out: one JSON + HTML bundle per record.
inline int cmd_explain(const RunConfig& cfg, const std::string& data_path, Method method,
                       const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto cache = std::make_shared<QueryCache>(cfg.cache_path);
  const ModelClient target(cfg.target, cache);
  const ModelClient proxy(cfg.proxy, cache);
  const std::vector<DatasetRecord> records = read_jsonl(data_path);

  std::atomic<int> worst_exit{kExitOk};
  std::atomic<std::size_t> failures{0};
  std::mutex log_mutex;

  auto process = [&](std::size_t index) {
    const DatasetRecord& record = records[index];
    try {
      const Document doc = record.to_document();
      Budget target_budget = cfg.make_target_budget();
      Budget proxy_budget = cfg.make_proxy_budget();
      ExplainParams params = cfg.explain_params(method);
      params.seed = derive_seed(cfg.seed, index);
      const Explanation explanation =
          explain(doc, target, proxy, target_budget, proxy_budget, params);
      const nlohmann::json out = explanation_to_json(doc, explanation);
      atomic_write(std::filesystem::path(out_dir) / (record.id + ".json"), out.dump(2) + "\n");
      atomic_write(std::filesystem::path(out_dir) / (record.id + ".html"),
                   render_explanation_html(out));
    } catch (const Error& e) {
      ++failures;
      int code = exit_code_for(e.code());
      int current = worst_exit.load();
      while (current < code && !worst_exit.compare_exchange_weak(current, code)) {}
      std::lock_guard lock(log_mutex);
      std::cerr << "record '" << record.id << "' failed: " << e.what() << "\n";
    }
  };

  const int workers = std::max(1, std::min<int>(cfg.parallelism, records.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < records.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
          process(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::cout << "explained " << (records.size() - failures.load()) << "/" << records.size()
            << " records (method=" << to_string(method) << ") -> " << out_dir << "\n";
  return worst_exit.load();
}

namespace detail {

struct LoadedExample {
  Document doc;
  Attribution attribution;
};

// Pairs dataset records with their emitted explanation JSON; missing or
// malformed explanations are reported and excluded from aggregates.
inline std::vector<LoadedExample> load_examples(const std::vector<DatasetRecord>& records,
                                                const std::string& explanations_dir,
                                                std::vector<std::string>& skipped) {
  std::vector<LoadedExample> examples;
  for (const DatasetRecord& record : records) {
    const std::filesystem::path path =
        std::filesystem::path(explanations_dir) / (record.id + ".json");
    std::ifstream in(path);
    if (!in.good()) {
      skipped.push_back(record.id);
      std::cerr << "missing explanation for '" << record.id << "', excluded\n";
      continue;
    }
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("scores") || !j.contains("focus_mask")) {
      skipped.push_back(record.id);
      std::cerr << "malformed explanation for '" << record.id << "', excluded\n";
      continue;
    }
    LoadedExample example;
    example.doc = record.to_document();
    example.attribution.scores = j.at("scores").get<std::vector<double>>();
    example.attribution.focus.bits.clear();
    for (const auto& bit : j.at("focus_mask")) {
      example.attribution.focus.bits.push_back(bit.get<int>() ? 1 : 0);
    }
    if (example.attribution.scores.size() != example.doc.size()) {
      skipped.push_back(record.id);
      std::cerr << "explanation for '" << record.id << "' does not match document, excluded\n";
      continue;
    }
    examples.push_back(std::move(example));
  }
  return examples;
}

inline std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.6g", value);
  return buffer;
}

}  // namespace detail

// evaluate --metric aopc|recall: aggregate JSON + CSV with per-example rows.
inline int cmd_evaluate(const RunConfig& cfg, const std::string& data_path,
                        const std::string& explanations_dir, const std::string& metric,
                        const std::string& out_dir) {
  require(metric == "aopc" || metric == "recall", ErrorCode::ConfigError,
          "metric must be 'aopc' or 'recall'");
  std::filesystem::create_directories(out_dir);
  const std::vector<DatasetRecord> records = read_jsonl(data_path);
  std::vector<std::string> skipped;
  std::vector<detail::LoadedExample> examples =
      detail::load_examples(records, explanations_dir, skipped);
  require(!examples.empty(), ErrorCode::ConfigError, "no usable explanations found");

  nlohmann::json out_json;
  std::string csv;

  if (metric == "aopc") {
    auto cache = std::make_shared<QueryCache>(cfg.cache_path);
    const ModelClient target(cfg.target, cache);
    Budget budget = cfg.make_target_budget();
    const std::size_t k_cap = cfg.eval.aopc_k_max;

    std::vector<AOPCCurve> curves;
    nlohmann::json per_example = nlohmann::json::array();
    csv = "id,aopc_10,aopc_50,aopc_100,mean\n";
    for (const detail::LoadedExample& example : examples) {
      std::vector<EvalExample> single{EvalExample{&example.doc, &example.attribution}};
      AOPCCurve curve = aopc_summary(target, single, budget, k_cap);
      auto named = [&](std::size_t k) {
        return k <= curve.per_k.size() ? nlohmann::json(curve.at(k)) : nlohmann::json();
      };
      per_example.push_back({{"id", example.doc.id},
                             {"aopc_10", named(10)},
                             {"aopc_50", named(50)},
                             {"aopc_100", named(100)},
                             {"mean", curve.mean},
                             {"per_k", curve.per_k}});
      csv += example.doc.id + "," +
             (10 <= curve.per_k.size() ? detail::format_double(curve.at(10)) : "") + "," +
             (50 <= curve.per_k.size() ? detail::format_double(curve.at(50)) : "") + "," +
             (100 <= curve.per_k.size() ? detail::format_double(curve.at(100)) : "") + "," +
             detail::format_double(curve.mean) + "\n";
      curves.push_back(std::move(curve));
    }
    AOPCCurve aggregate;
    aggregate.per_k.assign(k_cap, 0.0);
    for (const AOPCCurve& curve : curves) {
      for (std::size_t i = 0; i < k_cap; ++i) aggregate.per_k[i] += curve.per_k[i];
    }
    for (double& v : aggregate.per_k) v /= static_cast<double>(curves.size());
    for (double v : aggregate.per_k) aggregate.mean += v;
    aggregate.mean /= static_cast<double>(aggregate.per_k.size());
    auto named = [&](std::size_t k) {
      return k <= aggregate.per_k.size() ? nlohmann::json(aggregate.at(k)) : nlohmann::json();
    };
    out_json = {{"metric", "aopc"},
                {"aggregate",
                 {{"aopc_10", named(10)},
                  {"aopc_50", named(50)},
                  {"aopc_100", named(100)},
                  {"mean", aggregate.mean},
                  {"per_k", aggregate.per_k}}},
                {"per_example", per_example},
                {"skipped", skipped}};
    csv += "aggregate," +
           (10 <= aggregate.per_k.size() ? detail::format_double(aggregate.at(10)) : "") + "," +
           (50 <= aggregate.per_k.size() ? detail::format_double(aggregate.at(50)) : "") + "," +
           (100 <= aggregate.per_k.size() ? detail::format_double(aggregate.at(100)) : "") +
           "," + detail::format_double(aggregate.mean) + "\n";
  } else {
    const std::vector<double>& ratios = cfg.eval.recall_ratios;
    std::vector<double> totals(ratios.size(), 0.0);
    std::size_t counted = 0;
    nlohmann::json per_example = nlohmann::json::array();
    csv = "id";
    for (double ratio : ratios) csv += ",recall@" + detail::format_double(ratio);
    csv += "\n";
    for (const detail::LoadedExample& example : examples) {
      std::vector<double> recalls;
      try {
        for (double ratio : ratios) {
          recalls.push_back(recall_at_ratio(example.doc, example.attribution, ratio));
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoEvidence) throw;
        skipped.push_back(example.doc.id);
        std::cerr << "no evidence for '" << example.doc.id << "', skipped\n";
        continue;
      }
      ++counted;
      csv += example.doc.id;
      for (std::size_t r = 0; r < ratios.size(); ++r) {
        totals[r] += recalls[r];
        csv += "," + detail::format_double(recalls[r]);
      }
      csv += "\n";
      per_example.push_back({{"id", example.doc.id},
                             {"recalls", recalls},
                             {"evidence_words", evidence_units(example.doc).size()}});
    }
    require(counted > 0, ErrorCode::ConfigError, "no examples with evidence spans");
    std::vector<double> aggregate;
    csv += "aggregate";
    for (double total : totals) {
      aggregate.push_back(total / static_cast<double>(counted));
      csv += "," + detail::format_double(aggregate.back());
    }
    csv += "\n";
    out_json = {{"metric", "recall"},
                {"ratios", ratios},
                {"aggregate", aggregate},
                {"per_example", per_example},
                {"skipped", skipped}};
  }

  atomic_write(std::filesystem::path(out_dir) / (metric + ".json"), out_json.dump(2) + "\n");
  atomic_write(std::filesystem::path(out_dir) / (metric + ".csv"), csv);
  std::cout << "evaluated " << examples.size() << " examples (metric=" << metric << ") -> "
            << out_dir << "\n";
  return kExitOk;
}

// synth --spec: writes dataset.jsonl + the registered synthetic model definition.
inline int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream in(spec_path);
  require(in.good(), ErrorCode::ConfigError, "cannot open spec file '" + spec_path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorCode::ConfigError, "spec file is not valid JSON");
  const SyntheticSuiteSpec spec = SyntheticSuiteSpec::from_json(j);
  const SyntheticSuite suite = generate_suite(spec);

  std::filesystem::create_directories(out_dir);
  write_jsonl((std::filesystem::path(out_dir) / "dataset.jsonl").string(), suite.records);
  atomic_write(std::filesystem::path(out_dir) / "model.json",
               synthetic_to_json(suite.model).dump(2) + "\n");
  atomic_write(std::filesystem::path(out_dir) / "spec.json", spec.to_json().dump(2) + "\n");
  std::cout << "wrote " << suite.records.size() << " synthetic records -> " << out_dir << "\n";
  return kExitOk;
}

// narrow: greedy neighborhood-narrowing study per record.
inline int cmd_narrow(const RunConfig& cfg, const std::string& data_path,
                      const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto cache = std::make_shared<QueryCache>(cfg.cache_path);
  const ModelClient target(cfg.target, cache);
  const ModelClient proxy(cfg.proxy, cache);
  const std::vector<DatasetRecord> records = read_jsonl(data_path);

  int worst_exit = kExitOk;
  for (std::size_t index = 0; index < records.size(); ++index) {
    const DatasetRecord& record = records[index];
    try {
      const Document doc = record.to_document();
      Budget target_budget = cfg.make_target_budget();
      Budget proxy_budget = cfg.make_proxy_budget();
      const NarrowingTrace trace = narrowing_study(
          doc, target, proxy, cfg.eval.narrow_steps, cfg.eval.narrow_samples,
          derive_seed(cfg.seed, index), target_budget, proxy_budget, cfg.kernel, cfg.lambda);

      std::string csv = "step,n_active,mean_aopc,optimal\n";
      nlohmann::json steps = nlohmann::json::array();
      for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const NarrowingStep& step = trace.steps[s];
        csv += std::to_string(s) + "," + std::to_string(step.mask.n_active()) + "," +
               detail::format_double(step.curve.mean) + "," +
               (s == trace.optimal_index ? "1" : "0") + "\n";
        std::vector<int> mask_bits(step.mask.bits.begin(), step.mask.bits.end());
        steps.push_back({{"step", s},
                         {"n_active", step.mask.n_active()},
                         {"mask", mask_bits},
                         {"scores", step.attribution.scores},
                         {"mean_aopc", step.curve.mean},
                         {"per_k", step.curve.per_k}});
      }
      nlohmann::json out = {{"id", record.id},
                            {"optimal_index", trace.optimal_index},
                            {"stopped_early", trace.stopped_early},
                            {"steps", steps}};
      atomic_write(std::filesystem::path(out_dir) / (record.id + ".narrow.json"),
                   out.dump(2) + "\n");
      atomic_write(std::filesystem::path(out_dir) / (record.id + ".narrow.csv"), csv);
    } catch (const Error& e) {
      worst_exit = std::max(worst_exit, exit_code_for(e.code()));
      std::cerr << "record '" << record.id << "' failed: " << e.what() << "\n";
    }
  }
  std::cout << "narrowing study over " << records.size() << " records -> " << out_dir << "\n";
  return worst_exit;
}

// report: static HTML heatmap per explanation JSON in a directory.
inline int cmd_report(const std::string& explanations_dir, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::size_t rendered = 0;
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(explanations_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".json") continue;
    if (name.size() > 12 && name.substr(name.size() - 12) == ".narrow.json") continue;
    inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  for (const std::filesystem::path& path : inputs) {
    const std::string stem = path.stem().string();
    std::string html;
    try {
      std::ifstream in(path);
      nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
      require(!j.is_discarded(), ErrorCode::ConfigError, "not valid JSON");
      html = render_explanation_html(j);
    } catch (const std::exception& e) {
      html = render_error_html(stem, e.what());
    }
    atomic_write(std::filesystem::path(out_dir) / (stem + ".html"), html);
    ++rendered;
  }
  std::cout << "rendered " << rendered << " reports -> " << out_dir << "\n";
  return kExitOk;
}

}  // namespace focuslime
