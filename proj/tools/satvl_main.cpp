// satvl: batch command-line front end for the caption-to-SVI pipeline.
//
//   satvl run-all --config configs/demo.json
//   satvl train --config configs/demo.json --level county --out out2

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "satvl/fusion.hpp"
#include "satvl/pipeline.hpp"

namespace {

int fail(const satvl::LogSink& log, std::string_view type, const std::string& message,
         std::optional<std::string_view> stage) {
  nlohmann::json err{{"type", type}, {"message", message}};
  if (stage) err["stage"] = *stage;
  std::cout << nlohmann::json{{"error", err}}.dump() << '\n';
  log({{"level", "error"}, {"event", "failed"}, {"error", err}});
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Satellite caption embedding pipeline for county SVI regression"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> level, fixtures, out;
  app.add_option("--config", config_path, "pipeline JSON config")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--level", level, "training level")->check(CLI::IsMember({"tile", "county"}));
  app.add_option("--fixtures", fixtures, "fixture directory");
  app.add_option("--out", out, "output directory");

  app.add_subcommand("run-all", "run every stage in order");
  const std::map<satvl::Stage, std::string> help{
      {satvl::Stage::Synth, "write the synthetic corpus and SVI table"},
      {satvl::Stage::Caption, "request captions per prompt tier"},
      {satvl::Stage::Parse, "extract structured attributes from captions"},
      {satvl::Stage::TrainCaptioner, "train the toy captioner and caption every tile"},
      {satvl::Stage::Encode, "embed satellite and LLM captions"},
      {satvl::Stage::Train, "fit the fusion regressor on training counties"},
      {satvl::Stage::Predict, "tile and county predictions with baselines"},
      {satvl::Stage::Explain, "SHAP attributions and the dimension report"},
      {satvl::Stage::Report, "collect metrics and the SHAP report"}};
  for (auto stage : satvl::kAllStages) app.add_subcommand(std::string(satvl::to_string(stage)), help.at(stage));

  CLI11_PARSE(app, argc, argv);
  const auto log = satvl::stderr_log_sink();
  const std::string command = app.get_subcommands().front()->get_name();

  satvl::PipelineConfig cfg;
  try {
    cfg = satvl::load_pipeline_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.apply_seed();
    }
    if (level) cfg.train.level = satvl::level_from_string(*level);
    if (fixtures) cfg.fixture_dir = *fixtures;
    if (out) cfg.out_dir = *out;
    cfg.validate();
  } catch (const std::exception& e) {
    return fail(log, "config", e.what(), std::nullopt);
  }

  try {
    if (command == "run-all") {
      satvl::run_all(cfg, log);
    } else {
      satvl::run_stage(*satvl::stage_from_string(command), cfg, log);
    }
  } catch (const satvl::StageError& e) {
    return fail(log, "stage", e.what(), satvl::to_string(e.stage()));
  } catch (const std::exception& e) {
    return fail(log, "runtime", e.what(), command);
  }
  return 0;
}
