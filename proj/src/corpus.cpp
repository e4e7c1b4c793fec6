#include "satvl/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <random>
#include <set>
#include <sstream>

#include "satvl/common.hpp"

namespace satvl {
namespace {

using nlohmann::json;

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::vector<std::string> split_csv_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string link_key(Field f, std::uint32_t v) {
  return fmt::format("{}.{}", field_info(f).name, value_name(f, v));
}

// Uniform draw over the non-unknown vocabulary of a field; sets draw a
// uniformly random subset.
std::uint32_t draw_field(Field f, std::mt19937_64& rng) {
  const auto& info = field_info(f);
  const auto k = static_cast<std::uint64_t>(info.values.size());
  if (info.is_set) return static_cast<std::uint32_t>(rng() % (std::uint64_t{1} << k));
  return static_cast<std::uint32_t>(rng() % k);
}

}  // namespace

std::string_view to_string(CaptionSource source) {
  switch (source) {
    case CaptionSource::RemoteLlm: return "remote_llm";
    case CaptionSource::ToyCaptioner: return "toy_captioner";
    case CaptionSource::Fixture: return "fixture";
    case CaptionSource::Grammar: return "grammar";
  }
  return "grammar";
}

CaptionSource caption_source_from_string(std::string_view name) {
  if (name == "remote_llm") return CaptionSource::RemoteLlm;
  if (name == "toy_captioner") return CaptionSource::ToyCaptioner;
  if (name == "fixture") return CaptionSource::Fixture;
  if (name == "grammar") return CaptionSource::Grammar;
  throw ValidationError("unknown caption source " + std::string(name));
}

void to_json(json& j, const CaptionRecord& r) {
  j = json{{"tile_id", r.tile_id},
           {"tier", r.tier},
           {"source", to_string(r.source)},
           {"text", r.text},
           {"attributes", r.attributes}};
  if (r.truncated) j["truncated"] = true;
}

void from_json(const json& j, CaptionRecord& r) {
  r.tile_id = j.at("tile_id").get<std::string>();
  r.tier = j.value("tier", 2);
  r.source = caption_source_from_string(j.value("source", "grammar"));
  r.text = j.at("text").get<std::string>();
  if (r.text.empty()) throw ValidationError("caption for " + r.tile_id + " is empty");
  if (r.tier < 1 || r.tier > 5) throw ValidationError("caption tier out of range");
  r.attributes = j.contains("attributes") ? j.at("attributes").get<StructuredAttributes>()
                                          : StructuredAttributes{};
  r.truncated = j.value("truncated", false);
}

void to_json(json& j, const SatTile& t) {
  j = json{{"tile_id", t.tile_id}, {"county_fips", t.county_fips}};
  if (t.image_uri) j["image_uri"] = *t.image_uri;
  if (t.lat) j["lat"] = *t.lat;
  if (t.lon) j["lon"] = *t.lon;
  if (t.latent_attributes) j["latent_attributes"] = *t.latent_attributes;
}

// ---------------------------------------------------------------------------

double SviLink::affine(const StructuredAttributes& attrs) const {
  double y = intercept;
  for (Field f : kAllFields) {
    const auto& info = field_info(f);
    const auto code = field_code(attrs, f);
    for (std::uint32_t v = 0; v < info.values.size(); ++v) {
      const bool present = info.is_set ? (code & (1u << v)) != 0 : code == v;
      if (!present) continue;
      if (auto it = weights.find(link_key(f, v)); it != weights.end()) y += it->second;
    }
  }
  return y;
}

double SviLink::svi(const StructuredAttributes& attrs) const {
  return std::clamp(affine(attrs), 0.0, 1.0);
}

SviLink default_svi_link() {
  SviLink link;
  link.intercept = 0.5;
  link.weights = {
      {"roof_condition.damaged", 0.20}, {"roof_condition.old", 0.10},
      {"roof_condition.new", -0.10},    {"roof_condition.good", -0.05},
      {"house_size.small", 0.10},       {"house_size.large", -0.15},
      {"roof_type.metal", 0.05},        {"roof_type.hip", -0.05},
      {"road.gravel_road", 0.10},       {"road.dirt", 0.12},
      {"road.highway", -0.03},          {"road.wide_road", -0.05},
      {"environment.rural", 0.05},      {"environment.urban", -0.05},
      {"environment.greenery", -0.03},  {"environment.open_space", 0.03},
      {"yard.pool", -0.10},             {"yard.garden", -0.04},
      {"yard.patio", -0.03},            {"cars_present.none", 0.05},
      {"cars_present.several", -0.05},
  };
  return link;
}

void SyntheticWorldConfig::validate() const {
  if (n_counties < 1) throw std::invalid_argument("n_counties must be >= 1");
  if (tiles_per_county < 1) throw std::invalid_argument("tiles_per_county must be >= 1");
  if (!(caption_noise_rate >= 0.0 && caption_noise_rate <= 1.0)) {
    throw std::invalid_argument("caption_noise_rate must lie in [0,1]");
  }
  for (const auto& [key, w] : svi_link.weights) {
    const auto dot = key.find('.');
    const auto field = dot == std::string::npos ? std::nullopt : field_from_name(key.substr(0, dot));
    if (!field || !value_code(*field, key.substr(dot + 1))) {
      throw std::invalid_argument("svi_link key does not name a field value: " + key);
    }
    if (!std::isfinite(w)) throw std::invalid_argument("svi_link weight not finite: " + key);
  }
}

void to_json(json& j, const SyntheticWorldConfig& c) {
  j = json{{"seed", c.seed},
           {"n_counties", c.n_counties},
           {"tiles_per_county", c.tiles_per_county},
           {"caption_noise_rate", c.caption_noise_rate},
           {"svi_link", {{"intercept", c.svi_link.intercept}, {"weights", c.svi_link.weights}}}};
}

void from_json(const json& j, SyntheticWorldConfig& c) {
  c = SyntheticWorldConfig{};
  c.seed = j.value("seed", c.seed);
  c.n_counties = j.value("n_counties", c.n_counties);
  c.tiles_per_county = j.value("tiles_per_county", c.tiles_per_county);
  c.caption_noise_rate = j.value("caption_noise_rate", c.caption_noise_rate);
  if (j.contains("svi_link")) {
    const auto& l = j.at("svi_link");
    c.svi_link.intercept = l.value("intercept", 0.5);
    c.svi_link.weights = l.value("weights", std::map<std::string, double>{});
  }
}

// ---------------------------------------------------------------------------

std::vector<SatTile> parse_tiles(std::string_view jsonl) {
  std::vector<SatTile> tiles;
  std::set<std::string> ids;
  const auto lines = split_lines(jsonl);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line_no = i + 1;
    if (is_blank(lines[i])) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw RecordError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw RecordError(line_no, "record is not an object");
    for (const char* key : {"tile_id", "county_fips"}) {
      if (!j.contains(key) || !j.at(key).is_string()) {
        throw RecordError(line_no, std::string("missing required field ") + key);
      }
    }
    SatTile t;
    t.tile_id = j.at("tile_id").get<std::string>();
    t.county_fips = j.at("county_fips").get<std::string>();
    if (t.tile_id.empty()) throw RecordError(line_no, "empty tile_id");
    if (!is_valid_fips(t.county_fips)) {
      throw RecordError(line_no, "malformed county_fips \"" + t.county_fips + "\"");
    }
    try {
      if (j.contains("image_uri")) t.image_uri = j.at("image_uri").get<std::string>();
      if (j.contains("lat")) t.lat = j.at("lat").get<double>();
      if (j.contains("lon")) t.lon = j.at("lon").get<double>();
      if (j.contains("latent_attributes")) {
        t.latent_attributes = j.at("latent_attributes").get<StructuredAttributes>();
      }
    } catch (const std::exception& e) {
      throw RecordError(line_no, e.what());
    }
    if (!ids.insert(t.tile_id).second) throw DuplicateIdError(t.tile_id);
    tiles.push_back(std::move(t));
  }
  return tiles;
}

std::vector<SatTile> load_tiles(const std::filesystem::path& manifest_path) {
  return parse_tiles(read_file(manifest_path));
}

std::string serialize_tiles(const std::vector<SatTile>& tiles) {
  std::string out;
  for (const auto& t : tiles) {
    out += json(t).dump();
    out += '\n';
  }
  return out;
}

SviTable parse_svi(std::string_view csv) {
  const auto lines = split_lines(csv);
  std::size_t first = 0;
  while (first < lines.size() && is_blank(lines[first])) ++first;
  if (first == lines.size()) throw ValidationError("SVI file has no header");
  const auto header = split_csv_row(lines[first]);

  std::optional<std::size_t> fips_col, overall_col;
  std::vector<std::pair<std::size_t, std::string>> theme_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto h = upper(header[c]);
    if (h == "FIPS") {
      fips_col = c;
    } else if (h == "RPL_THEMES") {
      overall_col = c;
    } else if (h.rfind("THEME_", 0) == 0) {
      const auto name = lower(h.substr(6));
      if (std::find(kSviThemes.begin(), kSviThemes.end(), name) == kSviThemes.end()) {
        throw ValidationError("unknown SVI theme column " + header[c]);
      }
      theme_cols.emplace_back(c, name);
    }
  }
  if (!fips_col || !overall_col) throw ValidationError("SVI header needs FIPS and RPL_THEMES");

  SviTable table;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const auto line_no = std::to_string(i + 1);
    const auto cells = split_csv_row(lines[i]);
    if (cells.size() != header.size()) {
      throw ValidationError("line " + line_no + ": expected " + std::to_string(header.size()) +
                            " columns");
    }
    SviRecord r;
    r.county_fips = cells[*fips_col];
    if (!is_valid_fips(r.county_fips)) {
      throw ValidationError("line " + line_no + ": malformed FIPS \"" + r.county_fips + "\"");
    }
    const auto overall = parse_double(cells[*overall_col]);
    if (!overall) throw ValidationError("line " + line_no + ": RPL_THEMES is not a number");
    if (!(*overall >= 0.0 && *overall <= 1.0)) {
      throw ValidationError("line " + line_no + ": svi_overall " + cells[*overall_col] +
                            " outside [0,1]");
    }
    r.svi_overall = *overall;
    for (const auto& [col, name] : theme_cols) {
      if (cells[col].empty()) continue;
      const auto v = parse_double(cells[col]);
      if (!v || !(*v >= 0.0 && *v <= 1.0)) {
        throw ValidationError("line " + line_no + ": theme " + name + " outside [0,1]");
      }
      r.theme_scores[name] = *v;
    }
    if (!table.emplace(r.county_fips, r).second) {
      throw ValidationError("line " + line_no + ": duplicate county " + r.county_fips);
    }
  }
  return table;
}

SviTable load_svi(const std::filesystem::path& csv_path) { return parse_svi(read_file(csv_path)); }

std::string serialize_svi(const SviTable& svi) {
  std::set<std::string> themes;
  for (const auto& [fips, r] : svi) {
    for (const auto& [name, v] : r.theme_scores) themes.insert(name);
  }
  std::string out = "FIPS,RPL_THEMES";
  for (const auto& t : themes) out += ",THEME_" + upper(t);
  out += '\n';
  for (const auto& [fips, r] : svi) {
    out += fmt::format("{},{}", fips, r.svi_overall);
    for (const auto& t : themes) {
      out += ',';
      if (auto it = r.theme_scores.find(t); it != r.theme_scores.end()) {
        out += fmt::format("{}", it->second);
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
  std::vector<CaptionRecord> out;
  const auto text = read_file(path);
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    try {
      out.push_back(json::parse(lines[i]).get<CaptionRecord>());
    } catch (const std::exception& e) {
      throw RecordError(i + 1, e.what());
    }
  }
  return out;
}

std::string serialize_captions(const std::vector<CaptionRecord>& captions) {
  std::string out;
  for (const auto& c : captions) {
    out += json(c).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string synthetic_fips(int county_index) {
  const int state = 1 + county_index / 499;
  const int county = 2 * (county_index % 499) + 1;
  return fmt::format("{:02d}{:03d}", state, county);
}

SyntheticWorld synth_world(const SyntheticWorldConfig& config) {
  config.validate();
  SyntheticWorld world;
  world.config = config;
  for (int c = 0; c < config.n_counties; ++c) {
    const auto fips = synthetic_fips(c);
    const std::uint64_t stream = static_cast<std::uint64_t>(c) << 32;

    std::mt19937_64 county_rng(mix_seed(config.seed, stream));
    StructuredAttributes profile;
    for (Field f : kAllFields) set_field_code(profile, f, draw_field(f, county_rng));
    world.county_profiles[fips] = profile;
    world.svi[fips] = SviRecord{fips, config.svi_link.svi(profile), {}};

    for (int t = 0; t < config.tiles_per_county; ++t) {
      std::mt19937_64 tile_rng(mix_seed(config.seed, stream + 1 + static_cast<std::uint64_t>(t)));
      StructuredAttributes attrs = profile;
      for (Field f : kAllFields) {
        if (uniform01(tile_rng) < config.caption_noise_rate) {
          set_field_code(attrs, f, draw_field(f, tile_rng));
        }
      }
      SatTile tile;
      tile.tile_id = fmt::format("{}_{:04d}", fips, t);
      tile.county_fips = fips;
      tile.image_uri = "synthetic://" + tile.tile_id;
      tile.latent_attributes = attrs;

      CaptionRecord caption;
      caption.tile_id = tile.tile_id;
      caption.tier = 2;
      caption.source = CaptionSource::Grammar;
      caption.text = render_caption(attrs, config.seed);
      caption.attributes = parse_attributes(caption.text);

      world.tiles.push_back(std::move(tile));
      world.captions.push_back(std::move(caption));
    }
  }
  return world;
}

void save_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "tiles.jsonl", serialize_tiles(world.tiles));
  write_file(dir / "svi.csv", serialize_svi(world.svi));
  write_file(dir / "captions.jsonl", serialize_captions(world.captions));
  write_file(dir / "config.json", json(world.config).dump(2) + "\n");
}

}  // namespace satvl
