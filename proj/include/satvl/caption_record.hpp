#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "satvl/attributes.hpp"

namespace satvl {

enum class CaptionSource { RemoteLlm, ToyCaptioner, Fixture, Grammar };

std::string_view to_string(CaptionSource source);
CaptionSource caption_source_from_string(std::string_view name);

/// A tier-tagged caption for one tile plus its parsed attributes.
struct CaptionRecord {
  std::string tile_id;
  int tier = 2;
  CaptionSource source = CaptionSource::Grammar;
  std::string text;
  StructuredAttributes attributes;
  bool truncated = false;  // decoder hit max_len before EOS

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

void to_json(nlohmann::json& j, const CaptionRecord& r);
void from_json(const nlohmann::json& j, CaptionRecord& r);

}  // namespace satvl
