#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "focuslime/focuslime.hpp"

namespace fl = focuslime;

int main(int argc, char** argv) {
  CLI::App app{"focuslime: proxy-guided local attribution for long-context models"};
  app.require_subcommand(1);

  std::string config_path, data_path, explanations_dir, out_dir, method = "focus",
              metric = "aopc", spec_path;

  CLI::App* explain = app.add_subcommand("explain", "generate per-record explanations");
  explain->add_option("--config", config_path, "run config JSON")->required();
  explain->add_option("--data", data_path, "dataset JSONL")->required();
  explain->add_option("--method", method, "focus | lime | proxy-only | focus-no-proxy")
      ->default_val("focus");
  explain->add_option("--out", out_dir, "output directory (default: config out_dir)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "aggregate faithfulness metrics");
  evaluate->add_option("--config", config_path, "run config JSON")->required();
  evaluate->add_option("--data", data_path, "dataset JSONL")->required();
  evaluate->add_option("--explanations", explanations_dir, "explanation JSON directory")
      ->required();
  evaluate->add_option("--metric", metric, "aopc | recall")->default_val("aopc");
  evaluate->add_option("--out", out_dir, "output directory (default: config out_dir)");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark suite");
  synth->add_option("--spec", spec_path, "suite spec JSON")->required();
  synth->add_option("--out", out_dir, "output directory")->default_val("synth-out");

  CLI::App* narrow = app.add_subcommand("narrow", "greedy neighborhood-narrowing study");
  narrow->add_option("--config", config_path, "run config JSON")->required();
  narrow->add_option("--data", data_path, "dataset JSONL")->required();
  narrow->add_option("--out", out_dir, "output directory (default: config out_dir)");

  CLI::App* report = app.add_subcommand("report", "render HTML heatmaps for explanations");
  report->add_option("--explanations", explanations_dir, "explanation JSON directory")
      ->required();
  report->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (explain->parsed()) {
      fl::RunConfig cfg = fl::load_run_config(config_path);
      if (out_dir.empty()) out_dir = cfg.out_dir;
      return fl::cmd_explain(cfg, data_path, fl::method_from_string(method), out_dir);
    }
    if (evaluate->parsed()) {
      fl::RunConfig cfg = fl::load_run_config(config_path);
      if (out_dir.empty()) out_dir = cfg.out_dir;
      return fl::cmd_evaluate(cfg, data_path, explanations_dir, metric, out_dir);
    }
    if (synth->parsed()) {
      return fl::cmd_synth(spec_path, out_dir);
    }
    if (narrow->parsed()) {
      fl::RunConfig cfg = fl::load_run_config(config_path);
      if (out_dir.empty()) out_dir = cfg.out_dir;
      return fl::cmd_narrow(cfg, data_path, out_dir);
    }
    if (report->parsed()) {
      return fl::cmd_report(explanations_dir, out_dir);
    }
  } catch (const fl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fl::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fl::kExitFailure;
  }
  return fl::kExitFailure;
}
