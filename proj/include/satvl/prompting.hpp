#pragma once

// Five-tier prompt set and caption acquisition from a remote LLM provider
// with content-addressed fixture playback.

#include <string>
#include <vector>

#include "satvl/caption_record.hpp"
#include "satvl/corpus.hpp"
#include "satvl/provider.hpp"

namespace satvl {

struct PromptSpec {
  int tier = 2;
  std::string name;
  std::string template_text;
  std::vector<Field> attribute_targets;  // tiers 2 and 3 only
  int version = 0;                       // version of the template data file
};

/// Canonical template for a tier (1..5). Throws std::invalid_argument
/// outside that range.
PromptSpec build_prompt(int tier);

/// Fixture key material for one tile under one prompt.
std::string caption_fixture_key(const std::string& tile_id, const std::string& template_text);

/// Request body sent to the provider: {model, prompt, image_uri}.
nlohmann::json caption_request_body(const SatTile& tile, const PromptSpec& prompt,
                                    const ProviderConfig& cfg);

struct TileFailure {
  std::size_t index = 0;
  std::string tile_id;
  std::string kind;  // "transport", "parse" or "unavailable"
  std::string message;
};

struct CaptionBatch {
  std::vector<CaptionRecord> records;  // input order, successes only
  std::vector<TileFailure> failures;   // input order
};

/// One caption per tile. Fixtures (when cfg.fixture_dir is set) are read
/// first and written after each live success; at most cfg.max_parallel
/// requests are in flight. transport may be null when fixtures are complete.
/// Parsed attributes are filled in on every record.
CaptionBatch request_captions(const std::vector<SatTile>& tiles, const PromptSpec& prompt,
                              const ProviderConfig& cfg, JsonTransport* transport,
                              const Sleeper& sleep = default_sleeper());

}  // namespace satvl
