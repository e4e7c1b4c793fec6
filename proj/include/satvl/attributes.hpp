#pragma once

// Structured caption attributes and the bidirectional attribute grammar:
// parse free-form captions into StructuredAttributes and render
// StructuredAttributes back into captions.

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace satvl {

enum class RoofType : std::uint8_t { Metal, Shingle, Gable, Hip, Flat, Unknown };
enum class RoofCondition : std::uint8_t { New, Good, Old, Damaged, Unknown };
enum class HouseSize : std::uint8_t { Small, Medium, Large, Unknown };
enum class EnvironmentTag : std::uint8_t { Urban, Rural, Trees, Greenery, Desert, Snow, OpenSpace };
enum class YardFeature : std::uint8_t { Garden, Pool, Patio, Driveway, FrontYard, Backyard };
enum class RoadType : std::uint8_t { WideRoad, NarrowStreet, Highway, GravelRoad, Paved, Dirt, Unknown };
enum class CarsPresent : std::uint8_t { None, Few, Several, Unknown };

/// Small typed bitset over an enumeration with N members.
template <typename Tag, std::size_t N>
class TagSet {
  static_assert(N <= 32);

 public:
  static constexpr std::size_t kSize = N;

  constexpr TagSet() = default;
  static constexpr TagSet from_bits(std::uint32_t bits) {
    TagSet s;
    s.bits_ = bits & kMask;
    return s;
  }

  constexpr void insert(Tag t) { bits_ |= bit(t); }
  constexpr void erase(Tag t) { bits_ &= ~bit(t); }
  constexpr bool contains(Tag t) const { return (bits_ & bit(t)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr std::uint32_t bits() const { return bits_; }

  friend constexpr bool operator==(const TagSet&, const TagSet&) = default;

 private:
  static constexpr std::uint32_t kMask = N == 32 ? ~0u : ((1u << N) - 1u);
  static constexpr std::uint32_t bit(Tag t) { return 1u << static_cast<unsigned>(t); }
  std::uint32_t bits_ = 0;
};

using EnvironmentSet = TagSet<EnvironmentTag, 7>;
using YardSet = TagSet<YardFeature, 6>;

/// Every enum field is always set; Unknown is the absorbing default.
struct StructuredAttributes {
  RoofType roof_type = RoofType::Unknown;
  RoofCondition roof_condition = RoofCondition::Unknown;
  HouseSize house_size = HouseSize::Unknown;
  EnvironmentSet environment;
  YardSet yard;
  RoadType road = RoadType::Unknown;
  CarsPresent cars_present = CarsPresent::Unknown;

  friend bool operator==(const StructuredAttributes&, const StructuredAttributes&) = default;
};

// ---------------------------------------------------------------------------
// Generic field access. Each field has a fixed list of value names; for enum
// fields the code equals the enumerator index and `unknown` is the code
// values.size(). For set fields the code is the membership bitmask.

enum class Field : std::uint8_t { RoofType, RoofCondition, HouseSize, Environment, Yard, Road, CarsPresent };

inline constexpr std::array<Field, 7> kAllFields = {
    Field::RoofType, Field::RoofCondition, Field::HouseSize, Field::Environment,
    Field::Yard,     Field::Road,          Field::CarsPresent};

struct FieldInfo {
  std::string_view name;
  bool is_set;
  std::span<const std::string_view> values;  // excludes "unknown"
};

const FieldInfo& field_info(Field field);
std::optional<Field> field_from_name(std::string_view name);
/// Value code for a value name; "unknown" maps to values.size() on enum fields.
std::optional<std::uint32_t> value_code(Field field, std::string_view value_name);
std::string_view value_name(Field field, std::uint32_t code);

std::uint32_t field_code(const StructuredAttributes& attrs, Field field);
void set_field_code(StructuredAttributes& attrs, Field field, std::uint32_t code);
/// True when an enum field is Unknown or a set field is empty.
bool field_absent(const StructuredAttributes& attrs, Field field);

void to_json(nlohmann::json& j, const StructuredAttributes& attrs);
void from_json(const nlohmann::json& j, StructuredAttributes& attrs);

// ---------------------------------------------------------------------------
// Phrase inventory (the frozen rule table).

struct PhraseEntry {
  std::string phrase;               // surface form as listed in the table
  std::vector<std::string> tokens;  // normalized tokens used for matching
  Field field;
  std::uint32_t value;  // enum index, or member index for set fields
  std::string source;   // provenance of the entry
  bool render = false;  // eligible for render_caption
};

class PhraseTable {
 public:
  /// Parses and validates a rule table. Throws ValidationError on
  /// non-injective phrases, values without phrases, or bad templates.
  static PhraseTable from_json(std::string_view json_text);
  /// The table compiled in from data/phrase_table.json.
  static const PhraseTable& builtin();

  int version() const { return version_; }
  /// Entries for one field in table order.
  std::span<const PhraseEntry> entries(Field field) const;
  /// Entries sorted by descending token length, table order within a length.
  std::span<const PhraseEntry> match_order(Field field) const;
  std::span<const std::string> templates(Field field) const;
  const std::string& empty_caption() const { return empty_caption_; }

 private:
  int version_ = 0;
  std::array<std::vector<PhraseEntry>, kAllFields.size()> entries_;
  std::array<std::vector<PhraseEntry>, kAllFields.size()> match_order_;
  std::array<std::vector<std::string>, kAllFields.size()> templates_;
  std::string empty_caption_;
};

/// The frozen rule table. Stable across runs.
const PhraseTable& phrase_inventory();

struct PhraseMatch {
  const PhraseEntry* entry;
  std::size_t token_begin;
  std::size_t token_end;
};

/// All phrase matches in `text`, per field leftmost-longest and
/// non-overlapping, ordered by field then position.
std::vector<PhraseMatch> match_phrases(std::string_view text,
                                       const PhraseTable& table = phrase_inventory());

/// Case-insensitive rule-table parse. Enum fields take their first match;
/// set fields accumulate every match. Unmatched fields stay unknown/empty.
StructuredAttributes parse_attributes(std::string_view text,
                                      const PhraseTable& table = phrase_inventory());

/// Templated caption with exactly one surface phrase per present value.
/// Template and phrase choices per field depend only on (seed, field, value).
std::string render_caption(const StructuredAttributes& attrs, std::uint64_t seed,
                           const PhraseTable& table = phrase_inventory());

}  // namespace satvl
