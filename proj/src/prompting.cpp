#include "satvl/prompting.hpp"

#include <optional>

#include "satvl/embedded_data.hpp"

namespace satvl {
namespace {

using nlohmann::json;

const std::vector<PromptSpec>& prompt_table() {
  static const std::vector<PromptSpec> table = [] {
    const auto doc = json::parse(embedded::kPromptTemplatesJson);
    const int version = doc.at("version").get<int>();
    std::vector<PromptSpec> specs;
    for (const auto& t : doc.at("tiers")) {
      PromptSpec p;
      p.tier = t.at("tier").get<int>();
      p.name = t.at("name").get<std::string>();
      p.template_text = t.at("template").get<std::string>();
      p.version = version;
      for (const auto& f : t.at("attribute_targets")) {
        const auto field = field_from_name(f.get<std::string>());
        if (!field) throw ValidationError("prompt template names unknown field " + f.dump());
        p.attribute_targets.push_back(*field);
      }
      if (p.template_text.empty()) throw ValidationError("empty prompt template");
      specs.push_back(std::move(p));
    }
    return specs;
  }();
  return table;
}

struct Outcome {
  std::optional<CaptionRecord> record;
  std::optional<TileFailure> failure;
};

}  // namespace

PromptSpec build_prompt(int tier) {
  if (tier < 1 || tier > 5) {
    throw std::invalid_argument("prompt tier must be in 1..5, got " + std::to_string(tier));
  }
  for (const auto& p : prompt_table()) {
    if (p.tier == tier) return p;
  }
  throw ValidationError("prompt table has no tier " + std::to_string(tier));
}

std::string caption_fixture_key(const std::string& tile_id, const std::string& template_text) {
  return FixtureStore::key(tile_id + template_text);
}

json caption_request_body(const SatTile& tile, const PromptSpec& prompt, const ProviderConfig& cfg) {
  return json{{"model", cfg.model},
              {"prompt", prompt.template_text},
              {"image_uri", tile.image_uri.value_or("")}};
}

CaptionBatch request_captions(const std::vector<SatTile>& tiles, const PromptSpec& prompt,
                              const ProviderConfig& cfg, JsonTransport* transport,
                              const Sleeper& sleep) {
  cfg.validate();
  std::optional<FixtureStore> fixtures;
  if (cfg.fixture_dir) {
    std::filesystem::create_directories(*cfg.fixture_dir);
    fixtures.emplace(*cfg.fixture_dir);
  }

  std::vector<Outcome> outcomes(tiles.size());
  auto fail = [&](std::size_t i, std::string kind, std::string msg) {
    outcomes[i].failure = TileFailure{i, tiles[i].tile_id, std::move(kind), std::move(msg)};
  };
  auto accept = [&](std::size_t i, std::string text, CaptionSource source) {
    CaptionRecord r;
    r.tile_id = tiles[i].tile_id;
    r.tier = prompt.tier;
    r.source = source;
    r.attributes = parse_attributes(text);
    r.text = std::move(text);
    outcomes[i].record = std::move(r);
  };

  // Playback first; only tiles without a fixture go to the network.
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (fixtures) {
      const auto key = caption_fixture_key(tiles[i].tile_id, prompt.template_text);
      if (auto fx = fixtures->load(key)) {
        const auto caption = fx->value("caption", std::string());
        if (caption.empty()) {
          fail(i, "parse", "fixture has empty caption");
        } else {
          accept(i, caption, CaptionSource::Fixture);
        }
        continue;
      }
    }
    if (!transport) {
      fail(i, "unavailable", "no fixture and no provider configured");
      continue;
    }
    pending.push_back(i);
  }

  bounded_parallel_for(pending.size(), cfg.max_parallel, [&](std::size_t p) {
    const auto i = pending[p];
    const auto& tile = tiles[i];
    try {
      const auto body = caption_request_body(tile, prompt, cfg);
      const auto response = with_retry(cfg.retry, sleep, [&] { return transport->post(body); });
      if (!response.is_object() || !response.contains("caption") ||
          !response.at("caption").is_string()) {
        throw ResponseError("response lacks a string caption");
      }
      if (response.contains("tile_id") && response.at("tile_id") != tile.tile_id) {
        throw ResponseError("response tile_id " + response.at("tile_id").dump() +
                            " does not match request");
      }
      auto caption = response.at("caption").get<std::string>();
      if (caption.empty()) throw ResponseError("empty caption");
      if (fixtures) {
        fixtures->store(caption_fixture_key(tile.tile_id, prompt.template_text),
                        json{{"tile_id", tile.tile_id}, {"caption", caption}});
      }
      accept(i, std::move(caption), CaptionSource::RemoteLlm);
    } catch (const TransportError& e) {
      fail(i, "transport", e.what());
    } catch (const std::exception& e) {
      fail(i, "parse", e.what());
    }
  });

  CaptionBatch batch;
  for (auto& o : outcomes) {
    if (o.record) batch.records.push_back(std::move(*o.record));
    if (o.failure) batch.failures.push_back(std::move(*o.failure));
  }
  return batch;
}

}  // namespace satvl
