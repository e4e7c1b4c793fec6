#include "satvl/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include "satvl/attributes.hpp"
#include "satvl/caption_record.hpp"
#include "satvl/common.hpp"
#include "satvl/encode.hpp"
#include "satvl/prompting.hpp"

namespace satvl {
namespace {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

constexpr std::string_view kToolVersion = "0.1.0";
constexpr int kRegressionTier = 2;

std::string_view mode_name(Mode m) { return m == Mode::Synthetic ? "synthetic" : "real"; }

Mode mode_from_string(std::string_view s) {
  if (s == "synthetic") return Mode::Synthetic;
  if (s == "real") return Mode::Real;
  throw ValidationError("mode must be \"synthetic\" or \"real\", got \"" + std::string(s) + "\"");
}

json optional_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::optional<fs::path> path_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

// ---------------------------------------------------------------------------
// Artifact layout.

struct Layout {
  fs::path out;
  fs::path corpus;

  fs::path tiles() const { return corpus / "tiles.jsonl"; }
  fs::path svi() const { return corpus / "svi.csv"; }
  fs::path caption_dir() const { return out / "captions"; }
  fs::path captions(int tier) const { return caption_dir() / fmt::format("tier{}.jsonl", tier); }
  fs::path parse_dir() const { return out / "parsed"; }
  fs::path captioner_dir() const { return out / "captioner"; }
  fs::path sc_captions() const { return captioner_dir() / "captions.jsonl"; }
  fs::path embed_dir() const { return out / "embeddings"; }
  fs::path embeddings() const { return embed_dir() / "embeddings.jsonl"; }
  fs::path model_dir() const { return out / "model"; }
  fs::path model() const { return model_dir() / "model.json"; }
  fs::path split() const { return model_dir() / "split.json"; }
  fs::path predict_dir() const { return out / "predictions"; }
  fs::path predict_metrics() const { return predict_dir() / "metrics.json"; }
  fs::path explain_dir() const { return out / "explain"; }
  fs::path report_dir() const { return out / "report"; }
};

Layout layout_for(const PipelineConfig& cfg) {
  Layout l;
  l.out = cfg.out_dir;
  l.corpus = cfg.mode == Mode::Synthetic ? cfg.out_dir / "corpus" : cfg.corpus_dir;
  return l;
}

void require(Stage stage, const fs::path& p, std::string_view artifact, std::string_view producer) {
  if (!fs::exists(p)) {
    throw StageError(stage, fmt::format("missing {}; run `{}`", artifact, producer));
  }
}

std::string display_path(const fs::path& p, const Layout& l) {
  const auto rel = p.lexically_relative(l.out);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

void write_manifest(Stage stage, const PipelineConfig& cfg, const Layout& l, const fs::path& dir,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  json in = json::object(), out = json::object();
  for (const auto& p : inputs) in[display_path(p, l)] = file_sha256(p);
  for (const auto& p : outputs) out[display_path(p, l)] = file_sha256(p);
  const json m{{"stage", to_string(stage)},
               {"version", kToolVersion},
               {"config_hash", config_hash(cfg)},
               {"inputs", in},
               {"outputs", out}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  return s;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> rows;
  std::istringstream in(read_file(p));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw RecordError(line_no, p.string() + ": " + e.what());
    }
  }
  return rows;
}

std::map<std::string, std::string> caption_texts(const std::vector<CaptionRecord>& records) {
  std::map<std::string, std::string> out;
  for (const auto& r : records) out.emplace(r.tile_id, r.text);
  return out;
}

std::vector<std::string> distinct_fips(const std::vector<SatTile>& tiles) {
  std::set<std::string> s;
  for (const auto& t : tiles) s.insert(t.county_fips);
  return {s.begin(), s.end()};
}

json vector_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::vector<LabeledPair> load_pairs(const fs::path& p) {
  std::vector<LabeledPair> pairs;
  for (const auto& j : read_jsonl(p)) {
    pairs.push_back({j.at("tile_id").get<std::string>(), j.at("county_fips").get<std::string>(),
                     vector_from_json(j.at("e_sc")), vector_from_json(j.at("e_llm"))});
  }
  return pairs;
}

CountySplit load_split(const fs::path& p) {
  const json j = json::parse(read_file(p));
  return {j.at("train").get<std::vector<std::string>>(), j.at("holdout").get<std::vector<std::string>>()};
}

void log_event(const LogSink& log, std::string_view event, json fields = json::object()) {
  fields["event"] = event;
  if (!fields.contains("level")) fields["level"] = "info";
  log(fields);
}

// ---------------------------------------------------------------------------
// Stages.

void stage_synth(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  if (cfg.mode != Mode::Synthetic) throw StageError(Stage::Synth, "`synth` runs only in synthetic mode");
  const auto world = synth_world(cfg.synthetic);
  save_world(world, l.corpus);
  write_manifest(Stage::Synth, cfg, l, l.corpus, {},
                 {l.tiles(), l.svi(), l.corpus / "captions.jsonl", l.corpus / "config.json"});
  log_event(log, "synth.done", {{"tiles", world.tiles.size()}, {"counties", world.svi.size()}});
}

void stage_caption(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Caption, l.tiles(), "tile manifest", cfg.mode == Mode::Synthetic ? "synth" : "corpus");
  const auto tiles = load_tiles(l.tiles());
  ProviderConfig pc = cfg.caption_provider;
  if (cfg.fixture_dir) pc.fixture_dir = *cfg.fixture_dir / "captions";

  std::unique_ptr<JsonTransport> transport;
  if (cfg.mode == Mode::Synthetic) {
    transport = std::make_unique<SyntheticCaptionTransport>(tiles, cfg.synthetic.seed);
  } else if (!pc.endpoint.empty()) {
    transport = make_http_transport(pc);
  }

  std::vector<fs::path> outputs;
  std::vector<json> failures;
  for (int tier : cfg.caption_tiers) {
    const auto prompt = build_prompt(tier);
    auto batch = request_captions(tiles, prompt, pc, transport.get());
    for (auto& r : batch.records) {
      r.tier = tier;
      if (cfg.mode == Mode::Synthetic && r.source == CaptionSource::RemoteLlm) r.source = CaptionSource::Grammar;
    }
    for (const auto& f : batch.failures) {
      failures.push_back({{"tier", tier}, {"tile_id", f.tile_id}, {"kind", f.kind}, {"message", f.message}});
      log_event(log, "caption.failure", {{"level", "warning"}, {"tier", tier}, {"tile_id", f.tile_id},
                                         {"kind", f.kind}, {"message", f.message}});
    }
    if (batch.records.empty() && !tiles.empty()) {
      throw StageError(Stage::Caption, fmt::format("no captions obtained for tier {}", tier));
    }
    write_file(l.captions(tier), serialize_captions(batch.records));
    outputs.push_back(l.captions(tier));
    log_event(log, "caption.tier", {{"tier", tier}, {"records", batch.records.size()},
                                    {"failures", batch.failures.size()}});
  }
  write_file(l.caption_dir() / "failures.jsonl", to_jsonl(failures));
  outputs.push_back(l.caption_dir() / "failures.jsonl");
  write_manifest(Stage::Caption, cfg, l, l.caption_dir(), {l.tiles()}, outputs);
}

void stage_parse(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Parse, l.tiles(), "tile manifest", "synth");
  const auto tiles = load_tiles(l.tiles());
  std::map<std::string, const SatTile*> by_id;
  for (const auto& t : tiles) by_id[t.tile_id] = &t;

  std::vector<json> rows;
  std::vector<fs::path> inputs{l.tiles()};
  json summary = json::object();
  for (int tier : cfg.caption_tiers) {
    require(Stage::Parse, l.captions(tier), fmt::format("tier-{} captions", tier), "caption");
    inputs.push_back(l.captions(tier));
    std::size_t exact = 0, compared = 0;
    std::map<std::string, std::size_t> field_hits;
    for (const auto& r : load_captions(l.captions(tier))) {
      const auto attrs = parse_attributes(r.text);
      rows.push_back({{"tile_id", r.tile_id}, {"tier", tier}, {"attributes", attrs}});
      const auto it = by_id.find(r.tile_id);
      if (it == by_id.end() || !it->second->latent_attributes) continue;
      ++compared;
      if (attrs == *it->second->latent_attributes) ++exact;
      for (Field f : kAllFields) {
        if (field_code(attrs, f) == field_code(*it->second->latent_attributes, f)) ++field_hits[std::string(field_info(f).name)];
      }
    }
    if (compared > 0) {
      json fields = json::object();
      for (const auto& [name, hits] : field_hits) fields[name] = static_cast<double>(hits) / compared;
      summary[fmt::format("tier{}", tier)] = {
          {"compared", compared}, {"exact_match", static_cast<double>(exact) / compared}, {"field_match", fields}};
    }
  }
  write_file(l.parse_dir() / "attributes.jsonl", to_jsonl(rows));
  write_file(l.parse_dir() / "summary.json", summary.dump(2) + "\n");
  write_manifest(Stage::Parse, cfg, l, l.parse_dir(), inputs,
                 {l.parse_dir() / "attributes.jsonl", l.parse_dir() / "summary.json"});
  log_event(log, "parse.done", {{"records", rows.size()}});
}

void stage_train_captioner(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::TrainCaptioner, l.tiles(), "tile manifest", "synth");
  require(Stage::TrainCaptioner, l.captions(kRegressionTier), "LLM captions", "caption");
  const auto tiles = load_tiles(l.tiles());
  const auto llm = load_captions(l.captions(kRegressionTier));
  const fs::path dir = l.captioner_dir();
  const std::vector<fs::path> inputs{l.tiles(), l.captions(kRegressionTier)};

  if (!cfg.captioner_enabled) {
    // Without a trained captioner the satellite-caption slot reuses the LLM captions.
    write_file(l.sc_captions(), serialize_captions(llm));
    write_manifest(Stage::TrainCaptioner, cfg, l, dir, inputs, {l.sc_captions()});
    log_event(log, "train-captioner.skipped");
    return;
  }

  const auto split = split_counties(distinct_fips(tiles), cfg.holdout_fraction, cfg.seed);
  const std::set<std::string> train_counties(split.train.begin(), split.train.end());
  const auto texts = caption_texts(llm);
  std::vector<std::pair<SatTile, CaptionRecord>> pairs;
  for (const auto& t : tiles) {
    if (!train_counties.count(t.county_fips)) continue;
    for (const auto& r : llm) {
      if (r.tile_id == t.tile_id) {
        pairs.emplace_back(t, r);
        break;
      }
    }
  }
  const auto trained = train_captioner(pairs, cfg.captioner);

  std::string losses = "epoch,itc,decoder,total\n";
  for (std::size_t e = 0; e < trained.epoch_losses.size(); ++e) {
    const auto& x = trained.epoch_losses[e];
    losses += fmt::format("{},{},{},{}\n", e + 1, x.itc, x.decoder, x.total);
  }
  std::vector<CaptionRecord> generated;
  std::size_t correct_holdout = 0, holdout = 0;
  for (const auto& t : tiles) {
    generated.push_back(generate_caption(trained.model, t, cfg.max_caption_len));
    if (!train_counties.count(t.county_fips) && t.latent_attributes) {
      ++holdout;
      if (generated.back().attributes == *t.latent_attributes) ++correct_holdout;
    }
  }
  json summary{{"training_pairs", pairs.size()}};
  if (holdout > 0) summary["holdout_parse_accuracy"] = static_cast<double>(correct_holdout) / holdout;

  write_file(dir / "model.json", save_captioner(trained.model).dump() + "\n");
  write_file(dir / "losses.csv", losses);
  write_file(l.sc_captions(), serialize_captions(generated));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(Stage::TrainCaptioner, cfg, l, dir, inputs,
                 {dir / "model.json", dir / "losses.csv", l.sc_captions(), dir / "summary.json"});
  log_event(log, "train-captioner.done", summary);
}

void stage_encode(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Encode, l.tiles(), "tile manifest", "synth");
  require(Stage::Encode, l.captions(kRegressionTier), "LLM captions", "caption");
  require(Stage::Encode, l.sc_captions(), "satellite captions", "train-captioner");
  const auto tiles = load_tiles(l.tiles());
  const auto sc = caption_texts(load_captions(l.sc_captions()));
  const auto llm = caption_texts(load_captions(l.captions(kRegressionTier)));

  std::map<std::string, VectorXd> table;
  if (cfg.encoder == "reference") {
    std::optional<EmbeddingCache> cache;
    if (cfg.cache_dir) cache.emplace(*cfg.cache_dir, std::string(kReferenceEncoderId));
    auto encode_one = [&](const std::string& text) {
      if (cache) {
        if (auto hit = cache->get(text)) return *hit;
      }
      auto e = encode_reference(text, cfg.normalize_embeddings);
      if (cache) cache->put(text, e);
      return e;
    };
    for (const auto* m : {&sc, &llm}) {
      for (const auto& [id, text] : *m) {
        if (!table.count(text)) table.emplace(text, encode_one(text).values());
      }
    }
  } else {
    ProviderConfig pc = cfg.encoder_provider;
    if (cfg.fixture_dir) pc.fixture_dir = *cfg.fixture_dir / "embeddings";
    std::set<std::string> unique;
    for (const auto* m : {&sc, &llm}) {
      for (const auto& [id, text] : *m) unique.insert(text);
    }
    const std::vector<std::string> texts(unique.begin(), unique.end());
    std::unique_ptr<JsonTransport> transport;
    if (!pc.endpoint.empty()) transport = make_http_transport(pc);
    const auto embs = encode_remote(texts, pc, transport.get());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      VectorXd v = embs[i].values();
      if (cfg.normalize_embeddings && v.norm() > 0.0) v.normalize();
      table.emplace(texts[i], v);
    }
  }

  const auto pairs = build_pairs(tiles, sc, llm, [&](const std::string& text) { return table.at(text); });
  std::vector<json> rows;
  for (const auto& p : pairs) {
    rows.push_back({{"tile_id", p.tile_id},
                    {"county_fips", p.county_fips},
                    {"e_sc", vector_json(p.e_sc)},
                    {"e_llm", vector_json(p.e_llm)}});
  }
  write_file(l.embeddings(), to_jsonl(rows));
  write_manifest(Stage::Encode, cfg, l, l.embed_dir(), {l.tiles(), l.sc_captions(), l.captions(kRegressionTier)},
                 {l.embeddings()});
  log_event(log, "encode.done", {{"pairs", rows.size()}, {"distinct_texts", table.size()}});
}

void stage_train(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Train, l.embeddings(), "embeddings", "encode");
  require(Stage::Train, l.svi(), "SVI table", cfg.mode == Mode::Synthetic ? "synth" : "corpus");
  const auto pairs = load_pairs(l.embeddings());
  const auto svi = load_svi(l.svi());
  std::set<std::string> fips;
  for (const auto& p : pairs) fips.insert(p.county_fips);
  const auto split = split_counties({fips.begin(), fips.end()}, cfg.holdout_fraction, cfg.seed);
  const std::set<std::string> train_set(split.train.begin(), split.train.end());
  std::vector<LabeledPair> train_pairs;
  for (const auto& p : pairs) {
    if (train_set.count(p.county_fips)) train_pairs.push_back(p);
  }
  const auto model = train(train_pairs, svi, cfg.train);

  std::string metrics = "epoch,loss,split\n";
  for (const auto& m : model.metrics) metrics += fmt::format("{},{},{}\n", m.epoch, m.loss, m.split);
  write_file(l.model(), save_model(model).dump() + "\n");
  write_file(l.model_dir() / "metrics.csv", metrics);
  write_file(l.split(), json{{"train", split.train}, {"holdout", split.holdout}}.dump(2) + "\n");
  write_manifest(Stage::Train, cfg, l, l.model_dir(), {l.embeddings(), l.svi()},
                 {l.model(), l.model_dir() / "metrics.csv", l.split()});
  log_event(log, "train.done", {{"samples", train_pairs.size()},
                                {"final_loss", model.metrics.empty() ? 0.0 : model.metrics.back().loss}});
}

void stage_predict(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Predict, l.model(), "model", "train");
  require(Stage::Predict, l.embeddings(), "embeddings", "encode");
  const auto model = load_model(json::parse(read_file(l.model())));
  const auto pairs = load_pairs(l.embeddings());
  const auto svi = load_svi(l.svi());
  const auto split = load_split(l.split());
  const std::set<std::string> train_set(split.train.begin(), split.train.end());
  const std::set<std::string> holdout_set(split.holdout.begin(), split.holdout.end());

  std::string tiles_csv = "tile_id,county_fips,split,prediction,rho_sc,rho_llm\n";
  std::vector<std::pair<std::string, double>> tile_preds;
  double rho_sum = 0.0;
  for (const auto& p : pairs) {
    const auto w = attention_weights(p.e_sc, p.e_llm, model.head.fusion);
    const double y = predict(model, p.e_sc, p.e_llm);
    tile_preds.emplace_back(p.county_fips, y);
    rho_sum += w.rho_sc;
    tiles_csv += fmt::format("{},{},{},{},{},{}\n", p.tile_id, p.county_fips,
                             train_set.count(p.county_fips) ? "train" : "holdout", y, w.rho_sc, w.rho_llm);
  }
  std::string county_csv = "county_fips,split,prediction,svi\n";
  for (const auto& [fips, y] : aggregate_county(tile_preds)) {
    county_csv += fmt::format("{},{},{},{}\n", fips, train_set.count(fips) ? "train" : "holdout",
                              std::clamp(y, 0.0, 1.0), svi.count(fips) ? svi.at(fips).svi_overall : NAN);
  }

  const auto hold = evaluate_counties(model, pairs, svi, holdout_set);
  const auto fit = evaluate_counties(model, pairs, svi, train_set);

  // Ridge baseline on the equal-weight fusion, tile-level targets.
  std::vector<const LabeledPair*> train_rows;
  for (const auto& p : pairs) {
    if (train_set.count(p.county_fips)) train_rows.push_back(&p);
  }
  MatrixXd X(static_cast<Index>(train_rows.size()), static_cast<Index>(kEmbeddingDim));
  VectorXd y(X.rows());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    X.row(static_cast<Index>(i)) = (0.5 * (train_rows[i]->e_sc + train_rows[i]->e_llm)).transpose();
    y[static_cast<Index>(i)] = svi.at(train_rows[i]->county_fips).svi_overall;
  }
  double ridge_tile = 0.0, ridge_county = 0.0;
  std::size_t ridge_n = 0;
  if (X.rows() > 0) {
    const auto ridge = fit_ridge(X, y, cfg.ridge_lambda);
    std::vector<std::pair<std::string, double>> ridge_preds;
    for (const auto& p : pairs) {
      if (!holdout_set.count(p.county_fips)) continue;
      const double yh = predict_ridge(ridge, 0.5 * (p.e_sc + p.e_llm));
      ridge_preds.emplace_back(p.county_fips, yh);
      ridge_tile += std::pow(yh - svi.at(p.county_fips).svi_overall, 2);
      ++ridge_n;
    }
    const auto agg = aggregate_county(ridge_preds);
    for (const auto& [fips, yh] : agg) ridge_county += std::pow(yh - svi.at(fips).svi_overall, 2);
    if (ridge_n) ridge_tile /= static_cast<double>(ridge_n);
    if (!agg.empty()) ridge_county /= static_cast<double>(agg.size());
  }

  const json metrics{{"holdout_tile_mse", hold.tile_mse},
                     {"holdout_county_mse", hold.county_mse},
                     {"holdout_tiles", hold.n_tiles},
                     {"holdout_counties", hold.n_counties},
                     {"train_tile_mse", fit.tile_mse},
                     {"train_county_mse", fit.county_mse},
                     {"ridge_holdout_tile_mse", ridge_tile},
                     {"ridge_holdout_county_mse", ridge_county},
                     {"mean_rho_sc", pairs.empty() ? 0.0 : rho_sum / static_cast<double>(pairs.size())},
                     {"level", to_string(model.config.level)}};
  write_file(l.predict_dir() / "tiles.csv", tiles_csv);
  write_file(l.predict_dir() / "counties.csv", county_csv);
  write_file(l.predict_metrics(), metrics.dump(2) + "\n");
  write_manifest(Stage::Predict, cfg, l, l.predict_dir(), {l.model(), l.embeddings(), l.svi(), l.split()},
                 {l.predict_dir() / "tiles.csv", l.predict_dir() / "counties.csv", l.predict_metrics()});
  log_event(log, "predict.done", metrics);
}

void stage_explain(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Explain, l.model(), "model", "train");
  require(Stage::Explain, l.embeddings(), "embeddings", "encode");
  require(Stage::Explain, l.sc_captions(), "satellite captions", "train-captioner");
  const auto& ec = cfg.explain;
  const auto model = load_model(json::parse(read_file(l.model())));
  const auto pairs = load_pairs(l.embeddings());
  const auto captions = caption_texts(load_captions(l.sc_captions()));
  const auto split = load_split(l.split());
  const std::set<std::string> train_set(split.train.begin(), split.train.end());

  auto input_of = [&](const LabeledPair& p) -> VectorXd {
    if (ec.input == "caption") return p.e_sc;
    return fuse(p.e_sc, p.e_llm, attention_weights(p.e_sc, p.e_llm, model.head.fusion)).vector;
  };

  std::vector<std::size_t> train_idx, all_idx(pairs.size());
  std::iota(all_idx.begin(), all_idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (train_set.count(pairs[i].county_fips)) train_idx.push_back(i);
  }
  if (train_idx.empty()) throw StageError(Stage::Explain, "no training tiles for the background set");

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x6578706c));
  auto sample = [&](std::vector<std::size_t> idx, std::size_t n) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    idx.resize(std::min(n, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  const auto bg_idx = sample(train_idx, static_cast<std::size_t>(ec.background));
  const auto inst_idx = sample(all_idx, static_cast<std::size_t>(ec.max_instances));

  MatrixXd background(static_cast<Index>(bg_idx.size()), static_cast<Index>(kEmbeddingDim));
  for (std::size_t i = 0; i < bg_idx.size(); ++i) background.row(static_cast<Index>(i)) = input_of(pairs[bg_idx[i]]).transpose();

  std::vector<Attribution> attributions(inst_idx.size());
  std::vector<std::string> errors(inst_idx.size());
  bounded_parallel_for(inst_idx.size(), ec.max_parallel, [&](std::size_t i) {
    try {
      const auto& p = pairs[inst_idx[i]];
      attributions[i] = sampled_shap(explain_function(model, p, ec.input), background, input_of(p),
                                     ec.n_samples, mix_seed(cfg.seed, fnv1a64(p.tile_id)), p.tile_id);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw StageError(Stage::Explain, e);
  }

  std::map<std::string, std::string> instance_captions;
  for (auto i : inst_idx) instance_captions[pairs[i].tile_id] = captions.count(pairs[i].tile_id) ? captions.at(pairs[i].tile_id) : "";
  const auto report = build_report(attributions, instance_captions, ec.k, ec.m);
  for (const auto& w : report.warnings) log_event(log, "explain.warning", {{"level", "warning"}, {"message", w}});

  std::vector<json> rows;
  for (const auto& a : attributions) rows.push_back(attribution_to_json(a));
  const fs::path dir = l.explain_dir();
  write_file(dir / "attributions.jsonl", to_jsonl(rows));
  write_file(dir / "shap_report.json", report_to_json(report).dump(2) + "\n");
  write_file(dir / "shap_report.md", report_to_markdown(report));
  write_file(dir / "top_dims.svg", report_to_svg(report));
  write_manifest(Stage::Explain, cfg, l, dir, {l.model(), l.embeddings(), l.sc_captions(), l.split()},
                 {dir / "attributions.jsonl", dir / "shap_report.json", dir / "shap_report.md", dir / "top_dims.svg"});
  log_event(log, "explain.done", {{"instances", attributions.size()}, {"background", bg_idx.size()}});
}

void stage_report(const PipelineConfig& cfg, const Layout& l, const LogSink& log) {
  require(Stage::Report, l.predict_metrics(), "prediction metrics", "predict");
  require(Stage::Report, l.explain_dir() / "shap_report.json", "SHAP report", "explain");
  const json metrics = json::parse(read_file(l.predict_metrics()));
  const fs::path dir = l.report_dir();

  std::string csv = "metric,value\n";
  std::string md = "# Pipeline report\n\n| metric | value |\n|---|---:|\n";
  for (const auto& [key, value] : metrics.items()) {
    const std::string v = value.is_string() ? value.get<std::string>() : value.dump();
    csv += fmt::format("{},{}\n", key, v);
    md += fmt::format("| {} | {} |\n", key, v);
  }
  md += "\n" + read_file(l.explain_dir() / "shap_report.md");

  write_file(dir / "metrics.csv", csv);
  write_file(dir / "shap_report.json", read_file(l.explain_dir() / "shap_report.json"));
  write_file(dir / "report.md", md);
  write_file(dir / "top_dims.svg", read_file(l.explain_dir() / "top_dims.svg"));
  write_manifest(Stage::Report, cfg, l, dir, {l.predict_metrics(), l.explain_dir() / "shap_report.json"},
                 {dir / "metrics.csv", dir / "shap_report.json", dir / "report.md", dir / "top_dims.svg"});
  log_event(log, "report.done", {{"dir", dir.generic_string()}});
}

}  // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
  if (mode == Mode::Real && corpus_dir.empty()) throw ValidationError("real mode needs paths.corpus");
  if (out_dir.empty()) throw ValidationError("paths.out must be set");
  if (caption_tiers.empty() ||
      std::find(caption_tiers.begin(), caption_tiers.end(), kRegressionTier) == caption_tiers.end()) {
    throw ValidationError("caption.tiers must include tier 2");
  }
  for (int t : caption_tiers) {
    if (t < 1 || t > 5) throw ValidationError(fmt::format("caption tier {} outside 1..5", t));
  }
  if (encoder != "reference" && encoder != "remote") throw ValidationError("encoder.kind must be reference or remote");
  if (explain.input != "caption" && explain.input != "fused") {
    throw ValidationError("explain.input must be caption or fused");
  }
  if (explain.k < 1 || explain.m < 1 || explain.background < 1 || explain.max_instances < 1) {
    throw ValidationError("explain k, m, background and max_instances must be >= 1");
  }
  if (explain.n_samples < 2 * static_cast<int>(kEmbeddingDim) + 4) {
    throw ValidationError(fmt::format("explain.n_samples must be >= {}", 2 * kEmbeddingDim + 4));
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ValidationError("holdout_fraction must be in (0,1)");
  if (max_caption_len < 1) throw ValidationError("captioner.max_len must be >= 1");
  caption_provider.validate();
  if (encoder == "remote") encoder_provider.validate();
  try {
    synthetic.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

void PipelineConfig::apply_seed() {
  synthetic.seed = seed;
  captioner.seed = seed;
  train.seed = seed;
}

void to_json(json& j, const PipelineConfig& c) {
  json captioner = c.captioner;
  captioner["enabled"] = c.captioner_enabled;
  captioner["max_len"] = c.max_caption_len;
  json train = c.train;
  train["holdout_fraction"] = c.holdout_fraction;
  train["ridge_lambda"] = c.ridge_lambda;
  j = json{{"mode", mode_name(c.mode)},
           {"seed", c.seed},
           {"paths",
            {{"corpus", c.corpus_dir.generic_string()},
             {"out", c.out_dir.generic_string()},
             {"fixtures", optional_path(c.fixture_dir)},
             {"cache", optional_path(c.cache_dir)}}},
           {"synthetic", c.synthetic},
           {"caption", {{"tiers", c.caption_tiers}, {"provider", c.caption_provider}}},
           {"encoder", {{"kind", c.encoder}, {"normalize", c.normalize_embeddings}, {"provider", c.encoder_provider}}},
           {"captioner", captioner},
           {"train", train},
           {"explain",
            {{"k", c.explain.k},
             {"m", c.explain.m},
             {"n_samples", c.explain.n_samples},
             {"background", c.explain.background},
             {"input", c.explain.input},
             {"max_instances", c.explain.max_instances},
             {"max_parallel", c.explain.max_parallel}}}};
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  c.mode = mode_from_string(j.value("mode", "synthetic"));
  c.seed = j.value("seed", c.seed);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    c.corpus_dir = p.value("corpus", "");
    c.out_dir = p.value("out", "out");
    c.fixture_dir = path_or_null(p, "fixtures");
    c.cache_dir = path_or_null(p, "cache");
  }
  if (j.contains("synthetic")) c.synthetic = j.at("synthetic").get<SyntheticWorldConfig>();
  if (j.contains("caption")) {
    const auto& cap = j.at("caption");
    c.caption_tiers = cap.value("tiers", c.caption_tiers);
    if (cap.contains("provider")) c.caption_provider = cap.at("provider").get<ProviderConfig>();
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder = e.value("kind", c.encoder);
    c.normalize_embeddings = e.value("normalize", c.normalize_embeddings);
    if (e.contains("provider")) c.encoder_provider = e.at("provider").get<ProviderConfig>();
  }
  if (j.contains("captioner")) {
    const auto& cap = j.at("captioner");
    c.captioner = cap.get<CaptionerConfig>();
    c.captioner_enabled = cap.value("enabled", c.captioner_enabled);
    c.max_caption_len = cap.value("max_len", c.max_caption_len);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train = t.get<FusionTrainConfig>();
    c.holdout_fraction = t.value("holdout_fraction", c.holdout_fraction);
    c.ridge_lambda = t.value("ridge_lambda", c.ridge_lambda);
  }
  if (j.contains("explain")) {
    const auto& e = j.at("explain");
    c.explain.k = e.value("k", c.explain.k);
    c.explain.m = e.value("m", c.explain.m);
    c.explain.n_samples = e.value("n_samples", c.explain.n_samples);
    c.explain.background = e.value("background", c.explain.background);
    c.explain.input = e.value("input", c.explain.input);
    c.explain.max_instances = e.value("max_instances", c.explain.max_instances);
    c.explain.max_parallel = e.value("max_parallel", c.explain.max_parallel);
  }
  c.apply_seed();
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return j.get<PipelineConfig>();
}

std::string config_hash(const PipelineConfig& c) {
  json j = c;
  j["paths"].erase("out");
  j["paths"].erase("cache");
  return sha256_hex(j.dump());
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Synth: return "synth";
    case Stage::Caption: return "caption";
    case Stage::Parse: return "parse";
    case Stage::Encode: return "encode";
    case Stage::TrainCaptioner: return "train-captioner";
    case Stage::Train: return "train";
    case Stage::Predict: return "predict";
    case Stage::Explain: return "explain";
    case Stage::Report: return "report";
  }
  return "unknown";
}

std::optional<Stage> stage_from_string(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

LogSink stderr_log_sink() {
  static std::mutex mu;
  return [](const json& record) {
    json r = record;
    const auto now = std::chrono::system_clock::now();
    r["ts"] = std::chrono::duration<double>(now.time_since_epoch()).count();
    const std::lock_guard lock(mu);
    std::cerr << r.dump() << '\n';
  };
}

void run_stage(Stage stage, const PipelineConfig& cfg, const LogSink& log) {
  cfg.validate();
  const auto l = layout_for(cfg);
  log_event(log, "stage.start", {{"stage", to_string(stage)}});
  switch (stage) {
    case Stage::Synth: stage_synth(cfg, l, log); break;
    case Stage::Caption: stage_caption(cfg, l, log); break;
    case Stage::Parse: stage_parse(cfg, l, log); break;
    case Stage::Encode: stage_encode(cfg, l, log); break;
    case Stage::TrainCaptioner: stage_train_captioner(cfg, l, log); break;
    case Stage::Train: stage_train(cfg, l, log); break;
    case Stage::Predict: stage_predict(cfg, l, log); break;
    case Stage::Explain: stage_explain(cfg, l, log); break;
    case Stage::Report: stage_report(cfg, l, log); break;
  }
}

void run_all(const PipelineConfig& cfg, const LogSink& log) {
  for (Stage s : kAllStages) {
    if (s == Stage::Synth && cfg.mode != Mode::Synthetic) continue;
    run_stage(s, cfg, log);
  }
}

// ---------------------------------------------------------------------------

SyntheticCaptionTransport::SyntheticCaptionTransport(const std::vector<SatTile>& tiles, std::uint64_t render_seed)
    : render_seed_(render_seed) {
  for (const auto& t : tiles) {
    if (t.image_uri) by_uri_[*t.image_uri] = &t;
  }
  for (int tier = 1; tier <= 5; ++tier) tier_by_template_[build_prompt(tier).template_text] = tier;
}

json SyntheticCaptionTransport::post(const json& body) {
  const auto uri = body.value("image_uri", "");
  const auto it = by_uri_.find(uri);
  if (it == by_uri_.end() || !it->second->latent_attributes) {
    throw ResponseError("no synthetic tile for image_uri \"" + uri + "\"");
  }
  StructuredAttributes attrs = *it->second->latent_attributes;
  const auto tier = tier_by_template_.find(body.value("prompt", ""));
  if (tier != tier_by_template_.end()) {
    const auto targets = build_prompt(tier->second).attribute_targets;
    if (!targets.empty() && tier->second != kRegressionTier) {
      for (Field f : kAllFields) {
        if (std::find(targets.begin(), targets.end(), f) == targets.end()) {
          set_field_code(attrs, f, field_info(f).is_set ? 0u : static_cast<std::uint32_t>(field_info(f).values.size()));
        }
      }
    }
  }
  return json{{"tile_id", it->second->tile_id}, {"caption", render_caption(attrs, render_seed_)}};
}

// ---------------------------------------------------------------------------

CountySplit split_counties(std::vector<std::string> fips, double holdout_fraction, std::uint64_t seed) {
  std::sort(fips.begin(), fips.end());
  fips.erase(std::unique(fips.begin(), fips.end()), fips.end());
  std::mt19937_64 rng(mix_seed(seed, 0x686f6c64));
  std::vector<std::string> shuffled = fips;
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng() % i]);
  auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(fips.size())));
  if (fips.size() >= 2) n_hold = std::clamp<std::size_t>(n_hold, 1, fips.size() - 1);
  CountySplit s;
  s.holdout.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(std::min(n_hold, shuffled.size())));
  s.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(s.holdout.size()), shuffled.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<LabeledPair> build_pairs(const std::vector<SatTile>& tiles,
                                     const std::map<std::string, std::string>& sc_captions,
                                     const std::map<std::string, std::string>& llm_captions,
                                     const TextEncoder& encode) {
  std::vector<LabeledPair> pairs;
  for (const auto& t : tiles) {
    const auto sc = sc_captions.find(t.tile_id);
    const auto llm = llm_captions.find(t.tile_id);
    if (sc == sc_captions.end() || llm == llm_captions.end()) continue;
    pairs.push_back({t.tile_id, t.county_fips, encode(sc->second), encode(llm->second)});
  }
  return pairs;
}

HoldoutMetrics evaluate_counties(const TrainedModel& model, const std::vector<LabeledPair>& pairs,
                                 const SviTable& svi, const std::set<std::string>& counties) {
  HoldoutMetrics m;
  std::vector<std::pair<std::string, double>> preds;
  for (const auto& p : pairs) {
    if (!counties.count(p.county_fips)) continue;
    const double y = predict(model, p.e_sc, p.e_llm);
    preds.emplace_back(p.county_fips, y);
    m.tile_mse += std::pow(y - svi.at(p.county_fips).svi_overall, 2);
  }
  m.n_tiles = preds.size();
  if (m.n_tiles) m.tile_mse /= static_cast<double>(m.n_tiles);
  const auto agg = aggregate_county(preds);
  for (const auto& [fips, y] : agg) m.county_mse += std::pow(y - svi.at(fips).svi_overall, 2);
  m.n_counties = agg.size();
  if (m.n_counties) m.county_mse /= static_cast<double>(m.n_counties);
  return m;
}

double noise_variance_ratio(const TrainedModel& model, const std::vector<LabeledPair>& pairs, int m_large) {
  if (m_large < 2) throw std::invalid_argument("m_large must be >= 2");
  std::map<std::string, std::vector<double>> by_county;
  for (const auto& p : pairs) by_county[p.county_fips].push_back(predict(model, p.e_sc, p.e_llm));

  double ss_single = 0.0, df_single = 0.0, ss_group = 0.0, df_group = 0.0;
  for (const auto& [fips, preds] : by_county) {
    const auto n = preds.size();
    if (n < 2) continue;
    const double mean = std::accumulate(preds.begin(), preds.end(), 0.0) / static_cast<double>(n);
    for (double y : preds) ss_single += (y - mean) * (y - mean);
    df_single += static_cast<double>(n - 1);

    const std::size_t groups = n / static_cast<std::size_t>(m_large);
    if (groups < 2) continue;
    std::vector<double> means(groups);
    for (std::size_t g = 0; g < groups; ++g) {
      const auto first = preds.begin() + static_cast<std::ptrdiff_t>(g * m_large);
      means[g] = std::accumulate(first, first + m_large, 0.0) / m_large;
    }
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(groups);
    for (double g : means) ss_group += (g - grand) * (g - grand);
    df_group += static_cast<double>(groups - 1);
  }
  if (df_group == 0.0 || ss_single == 0.0) {
    throw std::invalid_argument("not enough tiles per county to estimate both variances");
  }
  return (ss_group / df_group) / (ss_single / df_single);
}

BatchModel explain_function(const TrainedModel& model, const LabeledPair& instance, const std::string& input) {
  MlpParams mlp = model.head.mlp;
  mlp.mode = BnMode::Inference;
  if (input == "fused") {
    return [mlp](const MatrixXd& rows) { return mlp_forward_batch(rows, mlp); };
  }
  if (input != "caption") throw std::invalid_argument("explain input must be caption or fused");
  const FusionParams fp = model.head.fusion;
  const VectorXd e_llm = instance.e_llm;
  const double logit_llm = attention_logit(e_llm, fp);
  return [mlp, fp, e_llm, logit_llm](const MatrixXd& rows) {
    const VectorXd logit_sc = (rows * fp.phi.transpose()).array().tanh().matrix() * fp.ups.transpose();
    MatrixXd fused(rows.rows(), rows.cols());
    for (Index r = 0; r < rows.rows(); ++r) {
      const auto w = softmax2(logit_sc[r], logit_llm);
      fused.row(r) = w.rho_sc * rows.row(r) + w.rho_llm * e_llm.transpose();
    }
    return mlp_forward_batch(fused, mlp);
  };
}

}  // namespace satvl
