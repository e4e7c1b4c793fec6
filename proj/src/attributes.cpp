#include "satvl/attributes.hpp"

#include <algorithm>
#include <map>

#include "satvl/common.hpp"
#include "satvl/embedded_data.hpp"

namespace satvl {
namespace {

constexpr std::array<std::string_view, 5> kRoofTypeNames = {"metal", "shingle", "gable", "hip", "flat"};
constexpr std::array<std::string_view, 4> kRoofConditionNames = {"new", "good", "old", "damaged"};
constexpr std::array<std::string_view, 3> kHouseSizeNames = {"small", "medium", "large"};
constexpr std::array<std::string_view, 7> kEnvironmentNames = {
    "urban", "rural", "trees", "greenery", "desert", "snow", "open_space"};
constexpr std::array<std::string_view, 6> kYardNames = {
    "garden", "pool", "patio", "driveway", "front_yard", "backyard"};
constexpr std::array<std::string_view, 6> kRoadNames = {
    "wide_road", "narrow_street", "highway", "gravel_road", "paved", "dirt"};
constexpr std::array<std::string_view, 3> kCarsNames = {"none", "few", "several"};

const std::array<FieldInfo, kAllFields.size()> kFieldInfos = {{
    {"roof_type", false, kRoofTypeNames},
    {"roof_condition", false, kRoofConditionNames},
    {"house_size", false, kHouseSizeNames},
    {"environment", true, kEnvironmentNames},
    {"yard", true, kYardNames},
    {"road", false, kRoadNames},
    {"cars_present", false, kCarsNames},
}};

constexpr std::string_view kUnknown = "unknown";

std::size_t index_of(Field f) { return static_cast<std::size_t>(f); }

std::string replace_placeholder(const std::string& tmpl, const std::string& filler) {
  std::string out = tmpl;
  const auto pos = out.find("{}");
  out.replace(pos, 2, filler);
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

const FieldInfo& field_info(Field field) { return kFieldInfos.at(index_of(field)); }

std::optional<Field> field_from_name(std::string_view name) {
  for (Field f : kAllFields) {
    if (field_info(f).name == name) return f;
  }
  return std::nullopt;
}

std::optional<std::uint32_t> value_code(Field field, std::string_view name) {
  const auto& info = field_info(field);
  for (std::size_t i = 0; i < info.values.size(); ++i) {
    if (info.values[i] == name) return static_cast<std::uint32_t>(i);
  }
  if (!info.is_set && name == kUnknown) return static_cast<std::uint32_t>(info.values.size());
  return std::nullopt;
}

std::string_view value_name(Field field, std::uint32_t code) {
  const auto& info = field_info(field);
  if (code < info.values.size()) return info.values[code];
  return kUnknown;
}

std::uint32_t field_code(const StructuredAttributes& a, Field field) {
  switch (field) {
    case Field::RoofType: return static_cast<std::uint32_t>(a.roof_type);
    case Field::RoofCondition: return static_cast<std::uint32_t>(a.roof_condition);
    case Field::HouseSize: return static_cast<std::uint32_t>(a.house_size);
    case Field::Environment: return a.environment.bits();
    case Field::Yard: return a.yard.bits();
    case Field::Road: return static_cast<std::uint32_t>(a.road);
    case Field::CarsPresent: return static_cast<std::uint32_t>(a.cars_present);
  }
  return 0;
}

void set_field_code(StructuredAttributes& a, Field field, std::uint32_t code) {
  const auto& info = field_info(field);
  if (!info.is_set && code > info.values.size()) {
    throw std::invalid_argument("value code out of range for field " + std::string(info.name));
  }
  switch (field) {
    case Field::RoofType: a.roof_type = static_cast<RoofType>(code); break;
    case Field::RoofCondition: a.roof_condition = static_cast<RoofCondition>(code); break;
    case Field::HouseSize: a.house_size = static_cast<HouseSize>(code); break;
    case Field::Environment: a.environment = EnvironmentSet::from_bits(code); break;
    case Field::Yard: a.yard = YardSet::from_bits(code); break;
    case Field::Road: a.road = static_cast<RoadType>(code); break;
    case Field::CarsPresent: a.cars_present = static_cast<CarsPresent>(code); break;
  }
}

bool field_absent(const StructuredAttributes& a, Field field) {
  const auto& info = field_info(field);
  const auto code = field_code(a, field);
  return info.is_set ? code == 0 : code == info.values.size();
}

void to_json(nlohmann::json& j, const StructuredAttributes& a) {
  j = nlohmann::json::object();
  for (Field f : kAllFields) {
    const auto& info = field_info(f);
    const auto code = field_code(a, f);
    if (info.is_set) {
      auto members = nlohmann::json::array();
      for (std::uint32_t i = 0; i < info.values.size(); ++i) {
        if (code & (1u << i)) members.push_back(info.values[i]);
      }
      j[std::string(info.name)] = std::move(members);
    } else {
      j[std::string(info.name)] = value_name(f, code);
    }
  }
}

void from_json(const nlohmann::json& j, StructuredAttributes& a) {
  a = StructuredAttributes{};
  for (Field f : kAllFields) {
    const auto& info = field_info(f);
    const std::string key(info.name);
    if (!j.contains(key)) continue;
    if (info.is_set) {
      std::uint32_t bits = 0;
      for (const auto& member : j.at(key)) {
        const auto code = value_code(f, member.get<std::string>());
        if (!code) throw ValidationError("unknown " + key + " value " + member.dump());
        bits |= 1u << *code;
      }
      set_field_code(a, f, bits);
    } else {
      const auto code = value_code(f, j.at(key).get<std::string>());
      if (!code) throw ValidationError("unknown " + key + " value " + j.at(key).dump());
      set_field_code(a, f, *code);
    }
  }
}

// ---------------------------------------------------------------------------

PhraseTable PhraseTable::from_json(std::string_view json_text) {
  const auto doc = nlohmann::json::parse(json_text);
  PhraseTable table;
  table.version_ = doc.at("version").get<int>();
  table.empty_caption_ = doc.at("empty_caption").get<std::string>();

  std::array<bool, kAllFields.size()> seen{};
  for (const auto& field_doc : doc.at("fields")) {
    const auto name = field_doc.at("name").get<std::string>();
    const auto field = field_from_name(name);
    if (!field) throw ValidationError("unknown field " + name);
    const auto fi = index_of(*field);
    if (seen[fi]) throw ValidationError("field listed twice: " + name);
    seen[fi] = true;

    std::map<std::vector<std::string>, std::uint32_t> owner;
    for (const auto& p : field_doc.at("phrases")) {
      PhraseEntry e;
      e.phrase = p.at("phrase").get<std::string>();
      e.tokens = tokenize_words(e.phrase);
      e.field = *field;
      const auto vname = p.at("value").get<std::string>();
      const auto code = value_code(*field, vname);
      if (!code || vname == kUnknown) {
        throw ValidationError("field " + name + ": bad value " + vname);
      }
      e.value = *code;
      e.source = p.value("source", "artifact");
      e.render = p.value("render", false);
      if (e.tokens.empty()) throw ValidationError("field " + name + ": empty phrase");
      auto [it, inserted] = owner.emplace(e.tokens, e.value);
      if (!inserted && it->second != e.value) {
        throw ValidationError("field " + name + ": phrase \"" + e.phrase +
                              "\" maps to two values");
      }
      table.entries_[fi].push_back(std::move(e));
    }

    const auto& values = field_info(*field).values;
    for (std::uint32_t v = 0; v < values.size(); ++v) {
      const auto& es = table.entries_[fi];
      const bool any = std::any_of(es.begin(), es.end(), [&](const auto& e) { return e.value == v; });
      const bool renderable = std::any_of(es.begin(), es.end(),
                                          [&](const auto& e) { return e.value == v && e.render; });
      if (!any || !renderable) {
        throw ValidationError("field " + name + ": value " + std::string(values[v]) +
                              " lacks a (renderable) phrase");
      }
    }

    for (const auto& t : field_doc.at("templates")) {
      auto text = t.get<std::string>();
      if (text.find("{}") == std::string::npos) {
        throw ValidationError("field " + name + ": template without {} placeholder");
      }
      table.templates_[fi].push_back(std::move(text));
    }
    if (table.templates_[fi].empty()) throw ValidationError("field " + name + ": no templates");

    table.match_order_[fi] = table.entries_[fi];
    std::stable_sort(table.match_order_[fi].begin(), table.match_order_[fi].end(),
                     [](const PhraseEntry& a, const PhraseEntry& b) {
                       return a.tokens.size() > b.tokens.size();
                     });
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw ValidationError("missing field " + std::string(kFieldInfos[i].name));
    }
  }
  return table;
}

const PhraseTable& PhraseTable::builtin() {
  static const PhraseTable table = from_json(embedded::kPhraseTableJson);
  return table;
}

std::span<const PhraseEntry> PhraseTable::entries(Field field) const {
  return entries_[index_of(field)];
}

std::span<const PhraseEntry> PhraseTable::match_order(Field field) const {
  return match_order_[index_of(field)];
}

std::span<const std::string> PhraseTable::templates(Field field) const {
  return templates_[index_of(field)];
}

const PhraseTable& phrase_inventory() { return PhraseTable::builtin(); }

std::vector<PhraseMatch> match_phrases(std::string_view text, const PhraseTable& table) {
  const auto tokens = tokenize_words(text);
  std::vector<PhraseMatch> matches;
  for (Field f : kAllFields) {
    const auto candidates = table.match_order(f);
    std::size_t pos = 0;
    while (pos < tokens.size()) {
      const PhraseEntry* hit = nullptr;
      for (const auto& e : candidates) {
        if (pos + e.tokens.size() > tokens.size()) continue;
        if (std::equal(e.tokens.begin(), e.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
          hit = &e;
          break;
        }
      }
      if (hit) {
        matches.push_back({hit, pos, pos + hit->tokens.size()});
        pos += hit->tokens.size();
      } else {
        ++pos;
      }
    }
  }
  return matches;
}

StructuredAttributes parse_attributes(std::string_view text, const PhraseTable& table) {
  StructuredAttributes attrs;
  for (const auto& m : match_phrases(text, table)) {
    const Field f = m.entry->field;
    if (field_info(f).is_set) {
      set_field_code(attrs, f, field_code(attrs, f) | (1u << m.entry->value));
    } else if (field_absent(attrs, f)) {
      set_field_code(attrs, f, m.entry->value);
    }
  }
  return attrs;
}

std::string render_caption(const StructuredAttributes& attrs, std::uint64_t seed,
                           const PhraseTable& table) {
  std::string caption = table.empty_caption();
  for (Field f : kAllFields) {
    if (field_absent(attrs, f)) continue;
    const auto& info = field_info(f);
    const auto fi = index_of(f);
    const auto code = field_code(attrs, f);

    std::vector<std::uint32_t> values;
    if (info.is_set) {
      for (std::uint32_t v = 0; v < info.values.size(); ++v) {
        if (code & (1u << v)) values.push_back(v);
      }
    } else {
      values.push_back(code);
    }

    std::vector<std::string> phrases;
    for (auto v : values) {
      std::vector<const PhraseEntry*> options;
      for (const auto& e : table.entries(f)) {
        if (e.value == v && e.render) options.push_back(&e);
      }
      const auto pick = mix_seed(seed, 1000 + 16 * fi + v) % options.size();
      phrases.push_back(options[pick]->phrase);
    }
    const auto tmpls = table.templates(f);
    const auto& tmpl = tmpls[mix_seed(seed, fi) % tmpls.size()];
    caption += ' ';
    caption += replace_placeholder(tmpl, join_list(phrases));
  }
  return caption;
}

}  // namespace satvl
