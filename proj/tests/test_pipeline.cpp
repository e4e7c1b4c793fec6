#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "satvl/encode.hpp"
#include "satvl/pipeline.hpp"
#include "satvl/prompting.hpp"
#include "test_util.hpp"

namespace satvl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c;
  c.out_dir = out;
  c.seed = 11;
  c.synthetic.n_counties = 6;
  c.synthetic.tiles_per_county = 4;
  c.synthetic.caption_noise_rate = 0.2;
  c.caption_tiers = {2, 3};
  c.captioner.epochs = 4;
  c.train.epochs = 15;
  c.train.hidden = 8;
  c.train.d_out = 8;
  c.train.batch = 8;
  c.explain.k = 4;
  c.explain.m = 3;
  c.explain.n_samples = 1030;
  c.explain.background = 4;
  c.explain.max_instances = 5;
  c.explain.max_parallel = 2;
  c.apply_seed();
  return c;
}

LogSink quiet() {
  return [](const json&) {};
}

std::string file(const fs::path& p) { return read_file(p); }

TEST(SplitCounties, PartitionIsDeterministicAndNonEmpty) {
  std::vector<std::string> fips;
  for (int i = 0; i < 20; ++i) fips.push_back(synthetic_fips(i));
  const auto a = split_counties(fips, 0.25, 3);
  EXPECT_EQ(a.holdout.size(), 5u);
  EXPECT_EQ(a.train.size(), 15u);
  std::set<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.holdout.begin(), a.holdout.end());
  EXPECT_EQ(all.size(), 20u);
  const auto b = split_counties(fips, 0.25, 3);
  EXPECT_EQ(a.holdout, b.holdout);
  EXPECT_NE(split_counties(fips, 0.25, 4).holdout, a.holdout);

  const auto two = split_counties({"01001", "01003", "01001"}, 0.01, 1);
  EXPECT_EQ(two.holdout.size(), 1u);
  EXPECT_EQ(two.train.size(), 1u);
}

TEST(Pipeline, TrainBeforeEncodeNamesTheMissingStep) {
  testing::TempDir dir("pipe_order");
  const auto cfg = small_config(dir.path());
  try {
    run_stage(Stage::Train, cfg, quiet());
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::Train);
    EXPECT_NE(std::string(e.what()).find("missing embeddings; run `encode`"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, InvalidConfigRejected) {
  testing::TempDir dir("pipe_bad");
  auto cfg = small_config(dir.path());
  cfg.caption_tiers = {3};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = small_config(dir.path());
  cfg.explain.n_samples = 100;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = small_config(dir.path());
  cfg.encoder = "clip";
  EXPECT_THROW(run_stage(Stage::Synth, cfg, quiet()), ValidationError);
}

TEST(Pipeline, RunAllIsDeterministicAcrossDirectories) {
  testing::TempDir a("pipe_a"), b("pipe_b");
  std::vector<json> events;
  run_all(small_config(a.path()), [&](const json& e) { events.push_back(e); });
  run_all(small_config(b.path()), quiet());
  EXPECT_FALSE(events.empty());

  for (const char* rel : {"report/shap_report.json", "report/report.md", "report/top_dims.svg", "report/metrics.csv",
                          "model/model.json", "embeddings/embeddings.jsonl", "captioner/captions.jsonl",
                          "report/manifest.json", "model/manifest.json"}) {
    ASSERT_TRUE(fs::exists(a.path() / rel)) << rel;
    EXPECT_EQ(file(a.path() / rel), file(b.path() / rel)) << rel;
  }

  const auto report = json::parse(file(a.path() / "report/shap_report.json"));
  EXPECT_EQ(report.at("top_dims").size(), 4u);
  for (const auto& d : report.at("top_dims")) EXPECT_EQ(d.at("exemplars").size(), 3u);

  const auto manifest = json::parse(file(a.path() / "model/manifest.json"));
  EXPECT_EQ(manifest.at("stage"), "train");
  EXPECT_EQ(manifest.at("config_hash"), config_hash(small_config(a.path())));
  EXPECT_TRUE(manifest.at("outputs").contains("model/model.json"));
}

TEST(Pipeline, RerunReproducesOutputs) {
  testing::TempDir dir("pipe_rerun");
  const auto cfg = small_config(dir.path());
  run_all(cfg, quiet());
  const auto first = file(dir.path() / "report/manifest.json");
  const auto model = file(dir.path() / "model/model.json");
  run_all(cfg, quiet());
  EXPECT_EQ(file(dir.path() / "report/manifest.json"), first);
  EXPECT_EQ(file(dir.path() / "model/model.json"), model);
}

TEST(Pipeline, CaptionerDisabledStillRuns) {
  testing::TempDir dir("pipe_nocap");
  auto cfg = small_config(dir.path());
  cfg.captioner_enabled = false;
  run_all(cfg, quiet());
  EXPECT_TRUE(fs::exists(dir.path() / "report/report.md"));
}

TEST(PipelineConfig, JsonRoundTripAndHash) {
  auto c = small_config("out/x");
  c.fixture_dir = fs::path("fx");
  const json j = c;
  const auto back = j.get<PipelineConfig>();
  EXPECT_EQ(json(back).dump(), j.dump());
  EXPECT_EQ(back.synthetic.seed, 11u);
  EXPECT_EQ(back.train.seed, 11u);

  auto moved = c;
  moved.out_dir = "elsewhere";
  moved.cache_dir = fs::path("cache");
  EXPECT_EQ(config_hash(moved), config_hash(c));
  moved.seed = 12;
  moved.apply_seed();
  EXPECT_NE(config_hash(moved), config_hash(c));
}

TEST(PipelineConfig, LoadErrors) {
  testing::TempDir dir("cfg");
  EXPECT_THROW(load_pipeline_config(dir.path() / "none.json"), ValidationError);
  write_file(dir.path() / "bad.json", "{not json");
  EXPECT_THROW(load_pipeline_config(dir.path() / "bad.json"), ValidationError);
  write_file(dir.path() / "ok.json", R"({"seed": 3, "paths": {"out": "o"}})");
  const auto c = load_pipeline_config(dir.path() / "ok.json");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.captioner.seed, 3u);
}

TEST(Stage, NamesRoundTrip) {
  for (Stage s : kAllStages) EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_FALSE(stage_from_string("nope").has_value());
}

TEST(SyntheticCaptionTransport, TiersRenderExpectedFields) {
  SyntheticWorldConfig wc;
  wc.n_counties = 2;
  wc.tiles_per_county = 3;
  wc.caption_noise_rate = 0.0;
  const auto world = synth_world(wc);
  SyntheticCaptionTransport transport(world.tiles, wc.seed);
  const auto& tile = world.tiles[0];
  const auto ask = [&](int tier) {
    return transport.post(caption_request_body(tile, build_prompt(tier), ProviderConfig{})).at("caption").get<std::string>();
  };
  EXPECT_EQ(ask(2), render_caption(*tile.latent_attributes, wc.seed));
  EXPECT_EQ(parse_attributes(ask(2)), *tile.latent_attributes);

  const auto targets = build_prompt(3).attribute_targets;
  const auto tier3 = parse_attributes(ask(3));
  for (Field f : kAllFields) {
    const bool targeted = std::find(targets.begin(), targets.end(), f) != targets.end();
    if (targeted) {
      EXPECT_EQ(field_code(tier3, f), field_code(*tile.latent_attributes, f));
    } else {
      EXPECT_TRUE(field_absent(tier3, f));
    }
  }

  SatTile stranger = tile;
  stranger.image_uri = "synthetic://nope";
  EXPECT_THROW(transport.post(caption_request_body(stranger, build_prompt(2), ProviderConfig{})), ResponseError);
}

TEST(BuildPairs, SkipsTilesWithoutBothCaptions) {
  SyntheticWorldConfig wc;
  wc.n_counties = 1;
  wc.tiles_per_county = 3;
  const auto world = synth_world(wc);
  std::map<std::string, std::string> sc, llm;
  for (const auto& t : world.tiles) llm[t.tile_id] = "gable roof";
  sc[world.tiles[0].tile_id] = "flat roof";
  sc[world.tiles[2].tile_id] = "hip roof";
  const auto pairs = build_pairs(world.tiles, sc, llm, [](const std::string& s) { return encode_reference(s).values(); });
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[1].tile_id, world.tiles[2].tile_id);
  EXPECT_EQ(pairs[0].e_sc, encode_reference("flat roof").values());
}

TEST(ExplainFunction, AgreesWithPredict) {
  FusionTrainConfig tc;
  const auto model = TrainedModel{init_head(6, 4, 4), tc, {}};
  LabeledPair p{"t", "01001", encode_reference("gable roof").values(), encode_reference("flat roof").values()};
  const auto f = explain_function(model, p, "caption");
  EXPECT_NEAR(f(p.e_sc.transpose())[0], predict(model, p.e_sc, p.e_llm), 1e-12);
  const auto fused = fuse(p.e_sc, p.e_llm, attention_weights(p.e_sc, p.e_llm, model.head.fusion));
  const auto g = explain_function(model, p, "fused");
  EXPECT_NEAR(g(fused.vector.transpose())[0], predict(model, p.e_sc, p.e_llm), 1e-12);
  EXPECT_THROW(explain_function(model, p, "other"), std::invalid_argument);
}

TEST(NoiseVarianceRatio, NeedsEnoughTiles) {
  FusionTrainConfig tc;
  const auto model = TrainedModel{init_head(4, 4, 1), tc, {}};
  std::vector<LabeledPair> pairs;
  for (int i = 0; i < 3; ++i) {
    pairs.push_back({"t" + std::to_string(i), "01001", encode_reference("roof " + std::to_string(i)).values(),
                     encode_reference("x").values()});
  }
  EXPECT_THROW(noise_variance_ratio(model, pairs, 2), std::invalid_argument);
  EXPECT_THROW(noise_variance_ratio(model, pairs, 1), std::invalid_argument);
}

}  // namespace
}  // namespace satvl
