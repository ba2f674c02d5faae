#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace symx {

inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 4;
inline constexpr int kLevels = 5;

/// A five-point ordinal response scale. Numeric levels are always 0..4;
/// only the anchor wording differs between inventories.
class LikertScale {
 public:
  explicit LikertScale(std::vector<std::string> labels);

  const std::array<std::string, kLevels>& labels() const { return labels_; }
  const std::string& label(int level) const;

  friend bool operator==(const LikertScale&, const LikertScale&) = default;

 private:
  std::array<std::string, kLevels> labels_;
};

inline bool is_valid_score(int score) { return score >= kMinScore && score <= kMaxScore; }

struct Item {
  std::string item_id;
  std::string text;
  // Optional presentation grouping, passed through to API consumers.
  std::optional<std::string> group;

  friend bool operator==(const Item&, const Item&) = default;
};

/// An ordered questionnaire. Immutable once constructed.
class Inventory {
 public:
  Inventory(std::string inventory_id, std::string name, std::string reference_period,
            LikertScale scale, std::vector<Item> items);

  const std::string& id() const { return id_; }
  const std::string& name() const { return name_; }
  const std::string& reference_period() const { return reference_period_; }
  const LikertScale& scale() const { return scale_; }
  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::vector<std::string> item_ids() const;
  bool contains(std::string_view item_id) const;
  /// Position of item_id in file order; throws ValidationError if absent.
  std::size_t index_of(std::string_view item_id) const;
  const Item& item(std::string_view item_id) const { return items_[index_of(item_id)]; }

  friend bool operator==(const Inventory&, const Inventory&) = default;

 private:
  std::string id_;
  std::string name_;
  std::string reference_period_;
  LikertScale scale_;
  std::vector<Item> items_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

Inventory parse_inventory(const nlohmann::json& doc);
Inventory parse_inventory_text(std::string_view text);
Inventory load_inventory(const std::filesystem::path& path);
nlohmann::json serialize_inventory(const Inventory& inventory);

enum class Sex { kUnknown, kFemale, kMale };

std::string_view to_string(Sex sex);
/// Accepts female/F and male/M (case-insensitive); blank maps to unknown.
Sex parse_sex(std::string_view text);

using ResponseMap = std::map<std::string, int>;

/// One sitting of one inventory by one participant.
struct Administration {
  std::string inventory_id;
  std::optional<std::string> timestamp;
  ResponseMap scores;
  // Position of the administration's first row in the source file.
  std::size_t file_order = 0;
};

struct ParticipantRecord {
  std::string participant_id;
  std::optional<double> age;
  Sex sex = Sex::kUnknown;
  std::vector<Administration> administrations;

  /// First administration of the inventory, or nullptr.
  const Administration* find(std::string_view inventory_id) const;
  const ResponseMap* responses(std::string_view inventory_id) const;
  bool has(std::string_view inventory_id) const { return find(inventory_id) != nullptr; }
};

struct Cohort {
  std::vector<ParticipantRecord> records;
  std::string provenance;

  const ParticipantRecord* find(std::string_view participant_id) const;
  std::vector<std::string> participant_ids() const;
  /// Records that hold an administration of the inventory.
  std::size_t count_with(std::string_view inventory_id) const;
};

/// Parses the long-format score CSV. Rows for the same participant,
/// inventory and timestamp are grouped into one administration; a repeated
/// item id within such a group opens a new administration.
struct ScoreReadOptions {
  // Drop rows of inventories not passed in instead of rejecting them.
  bool skip_unknown_inventories = false;
};

Cohort parse_scores(std::istream& in, std::span<const Inventory> inventories,
                    std::string provenance = "<stream>", const ScoreReadOptions& options = {});
Cohort load_scores(const std::filesystem::path& path, std::span<const Inventory> inventories,
                   const ScoreReadOptions& options = {});

/// Writes a cohort back in the score CSV format.
void write_scores(std::ostream& out, const Cohort& cohort);

struct CompletenessResult {
  Cohort cohort;
  std::size_t excluded = 0;  // incomplete administrations removed
  std::size_t absent = 0;    // records that never took the inventory
};

/// Drops every administration of `inventory` that lacks at least one item.
/// Other inventories are left untouched; a record with no administrations
/// left is dropped.
CompletenessResult enforce_completeness(const Cohort& cohort, const Inventory& inventory);

/// Keeps one administration per (participant, inventory): the earliest
/// timestamp wins, timestamped sittings precede untimestamped ones, and
/// file order breaks remaining ties.
Cohort deduplicate(const Cohort& cohort);

}  // namespace symx
