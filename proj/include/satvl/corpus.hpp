#pragma once

// Tiles, county SVI ground truth, and the seeded synthetic world.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "satvl/attributes.hpp"
#include "satvl/caption_record.hpp"

namespace satvl {

struct SatTile {
  std::string tile_id;
  std::string county_fips;
  std::optional<std::string> image_uri;
  std::optional<double> lat;
  std::optional<double> lon;
  /// Hidden ground truth; only set in synthetic mode.
  std::optional<StructuredAttributes> latent_attributes;

  friend bool operator==(const SatTile&, const SatTile&) = default;
};

void to_json(nlohmann::json& j, const SatTile& t);

/// Fixed SVI theme enumeration.
inline constexpr std::array<std::string_view, 4> kSviThemes = {
    "socioeconomic_status", "household_composition", "minority_status_language",
    "housing_type_transportation"};

struct SviRecord {
  std::string county_fips;
  double svi_overall = 0.0;  // percentile in [0,1]
  std::map<std::string, double> theme_scores;

  friend bool operator==(const SviRecord&, const SviRecord&) = default;
};

using SviTable = std::map<std::string, SviRecord>;

/// Affine map from attribute values to SVI. Keys are "field.value".
struct SviLink {
  double intercept = 0.5;
  std::map<std::string, double> weights;

  /// Unclamped affine value.
  double affine(const StructuredAttributes& attrs) const;
  /// affine() clamped to [0,1].
  double svi(const StructuredAttributes& attrs) const;
};

SviLink default_svi_link();

struct SyntheticWorldConfig {
  std::uint64_t seed = 7;
  int n_counties = 20;
  int tiles_per_county = 8;
  double caption_noise_rate = 0.3;
  SviLink svi_link = default_svi_link();

  /// Throws std::invalid_argument on counts < 1, noise outside [0,1], or
  /// link keys that do not name a field value.
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticWorldConfig& c);
void from_json(const nlohmann::json& j, SyntheticWorldConfig& c);

struct SyntheticWorld {
  SyntheticWorldConfig config;
  std::vector<SatTile> tiles;
  SviTable svi;
  std::vector<CaptionRecord> captions;  // one tier-2 grammar caption per tile
  std::map<std::string, StructuredAttributes> county_profiles;
};

/// Line-delimited JSON tile manifest. Preserves file order; blank lines are
/// skipped. Throws RecordError (with line number) or DuplicateIdError.
std::vector<SatTile> load_tiles(const std::filesystem::path& manifest_path);
std::vector<SatTile> parse_tiles(std::string_view jsonl);
std::string serialize_tiles(const std::vector<SatTile>& tiles);

/// CSV with header FIPS,RPL_THEMES[,THEME_<name>...]. Throws ValidationError.
SviTable load_svi(const std::filesystem::path& csv_path);
SviTable parse_svi(std::string_view csv);
std::string serialize_svi(const SviTable& svi);

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);
std::string serialize_captions(const std::vector<CaptionRecord>& captions);

/// FIPS code assigned to the synthetic county with the given index.
std::string synthetic_fips(int county_index);

/// Draws a county profile per county, resamples each field per tile with
/// probability caption_noise_rate, renders captions with the world seed.
/// County streams do not depend on tiles_per_county, so growing the tile
/// count keeps every county profile and SVI value.
SyntheticWorld synth_world(const SyntheticWorldConfig& config);

/// Writes tiles.jsonl, svi.csv, captions.jsonl and config.json.
void save_world(const SyntheticWorld& world, const std::filesystem::path& dir);

}  // namespace satvl
