#include "symx/inventory.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>

#include "symx/error.hpp"
#include "symx/io.hpp"

namespace symx {

using nlohmann::json;

LikertScale::LikertScale(std::vector<std::string> labels) {
  if (labels.size() != kLevels) {
    throw ValidationError("Likert scale needs exactly 5 labels, got " +
                          std::to_string(labels.size()));
  }
  std::move(labels.begin(), labels.end(), labels_.begin());
}

const std::string& LikertScale::label(int level) const {
  if (!is_valid_score(level)) throw ValidationError("scale level out of range");
  return labels_[static_cast<std::size_t>(level)];
}

Inventory::Inventory(std::string inventory_id, std::string name, std::string reference_period,
                     LikertScale scale, std::vector<Item> items)
    : id_(std::move(inventory_id)),
      name_(std::move(name)),
      reference_period_(std::move(reference_period)),
      scale_(std::move(scale)),
      items_(std::move(items)) {
  if (trim(id_).empty()) throw ValidationError("inventory_id must be non-empty");
  if (items_.size() < 2) {
    throw ValidationError("inventory " + id_ + " needs at least 2 items");
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Item& item = items_[i];
    if (trim(item.item_id).empty()) {
      throw ValidationError("inventory " + id_ + ": item #" + std::to_string(i + 1) +
                            " has an empty item_id");
    }
    if (trim(item.text).empty()) {
      throw ValidationError("inventory " + id_ + ": item " + item.item_id + " has empty text");
    }
    if (!index_.emplace(item.item_id, i).second) {
      throw ValidationError("inventory " + id_ + ": duplicate item_id " + item.item_id);
    }
  }
}

std::vector<std::string> Inventory::item_ids() const {
  std::vector<std::string> ids;
  ids.reserve(items_.size());
  for (const auto& item : items_) ids.push_back(item.item_id);
  return ids;
}

bool Inventory::contains(std::string_view item_id) const { return index_.find(item_id) != index_.end(); }

std::size_t Inventory::index_of(std::string_view item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) {
    throw ValidationError("inventory " + id_ + " has no item " + std::string(item_id));
  }
  return it->second;
}

namespace {

const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(std::string("inventory document missing '") + key + "'");
  return *it;
}

std::string require_string(const json& doc, const char* key) {
  const json& value = require(doc, key);
  if (!value.is_string()) throw ParseError(std::string("'") + key + "' must be a string");
  return value.get<std::string>();
}

}  // namespace

Inventory parse_inventory(const json& doc) {
  if (!doc.is_object()) throw ParseError("inventory document must be a JSON object");
  const json& scale = require(doc, "scale");
  if (!scale.is_object()) throw ParseError("'scale' must be an object");
  const json& labels = require(scale, "labels");
  if (!labels.is_array()) throw ParseError("'scale.labels' must be an array");
  std::vector<std::string> label_text;
  for (const auto& label : labels) {
    if (!label.is_string()) throw ParseError("scale labels must be strings");
    label_text.push_back(label.get<std::string>());
  }

  const json& items = require(doc, "items");
  if (!items.is_array()) throw ParseError("'items' must be an array");
  std::vector<Item> parsed;
  parsed.reserve(items.size());
  for (const auto& entry : items) {
    if (!entry.is_object()) throw ParseError("each item must be an object");
    Item item{require_string(entry, "item_id"), require_string(entry, "text"), std::nullopt};
    if (auto g = entry.find("group"); g != entry.end() && g->is_string()) {
      item.group = g->get<std::string>();
    }
    parsed.push_back(std::move(item));
  }

  std::string period;
  if (auto p = doc.find("reference_period"); p != doc.end() && p->is_string()) {
    period = p->get<std::string>();
  }
  return Inventory(require_string(doc, "inventory_id"), require_string(doc, "name"),
                   std::move(period), LikertScale(std::move(label_text)), std::move(parsed));
}

Inventory parse_inventory_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("inventory document: ") + e.what());
  }
  return parse_inventory(doc);
}

Inventory load_inventory(const std::filesystem::path& path) {
  try {
    return parse_inventory(read_json(path));
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json serialize_inventory(const Inventory& inventory) {
  json items = json::array();
  for (const auto& item : inventory.items()) {
    json entry = {{"item_id", item.item_id}, {"text", item.text}};
    if (item.group) entry["group"] = *item.group;
    items.push_back(std::move(entry));
  }
  json labels = json::array();
  for (const auto& label : inventory.scale().labels()) labels.push_back(label);
  return {{"inventory_id", inventory.id()},
          {"name", inventory.name()},
          {"reference_period", inventory.reference_period()},
          {"scale", {{"labels", std::move(labels)}}},
          {"items", std::move(items)}};
}

std::string_view to_string(Sex sex) {
  switch (sex) {
    case Sex::kFemale: return "female";
    case Sex::kMale: return "male";
    case Sex::kUnknown: break;
  }
  return "";
}

Sex parse_sex(std::string_view text) {
  std::string lowered = trim(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lowered.empty() || lowered == "unknown") return Sex::kUnknown;
  if (lowered == "female" || lowered == "f") return Sex::kFemale;
  if (lowered == "male" || lowered == "m") return Sex::kMale;
  throw ParseError("unrecognised sex value '" + std::string(text) + "'");
}

const Administration* ParticipantRecord::find(std::string_view inventory_id) const {
  for (const auto& admin : administrations) {
    if (admin.inventory_id == inventory_id) return &admin;
  }
  return nullptr;
}

const ResponseMap* ParticipantRecord::responses(std::string_view inventory_id) const {
  const Administration* admin = find(inventory_id);
  return admin ? &admin->scores : nullptr;
}

const ParticipantRecord* Cohort::find(std::string_view participant_id) const {
  for (const auto& record : records) {
    if (record.participant_id == participant_id) return &record;
  }
  return nullptr;
}

std::vector<std::string> Cohort::participant_ids() const {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& record : records) ids.push_back(record.participant_id);
  return ids;
}

std::size_t Cohort::count_with(std::string_view inventory_id) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const auto& r) { return r.has(inventory_id); }));
}

namespace {

constexpr std::string_view kScoreHeader = "participant_id,inventory_id,item_id,score,age,sex,timestamp";

int parse_score_field(std::string_view text, std::size_t line) {
  const std::string value = trim(text);
  int score = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, score);
  if (value.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("row " + std::to_string(line) + ": score '" + value + "' is not an integer");
  }
  if (!is_valid_score(score)) {
    throw ValidationError("row " + std::to_string(line) + ": score " + value +
                          " outside 0..4");
  }
  return score;
}

std::optional<double> parse_age_field(std::string_view text, std::size_t line) {
  const std::string value = trim(text);
  if (value.empty()) return std::nullopt;
  char* end = nullptr;
  const double age = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !(age >= 0.0)) {
    throw ParseError("row " + std::to_string(line) + ": invalid age '" + value + "'");
  }
  return age;
}

// Numeric timestamps compare by value, anything else (ISO-8601) lexically.
bool timestamp_less(const std::string& a, const std::string& b) {
  char* end_a = nullptr;
  char* end_b = nullptr;
  const double va = std::strtod(a.c_str(), &end_a);
  const double vb = std::strtod(b.c_str(), &end_b);
  if (end_a == a.c_str() + a.size() && end_b == b.c_str() + b.size()) return va < vb;
  return a < b;
}

}  // namespace

Cohort parse_scores(std::istream& in, std::span<const Inventory> inventories, std::string provenance,
                    const ScoreReadOptions& options) {
  std::unordered_map<std::string, const Inventory*> by_id;
  for (const auto& inv : inventories) by_id.emplace(inv.id(), &inv);

  Cohort cohort;
  cohort.provenance = std::move(provenance);
  std::unordered_map<std::string, std::size_t> record_index;
  // (participant, inventory, timestamp) -> index of the open administration
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> open;

  std::string line;
  std::size_t line_no = 0;
  std::size_t admin_counter = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (trim(line) != kScoreHeader) {
        throw ParseError(cohort.provenance + ": expected header '" + std::string(kScoreHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (trim(line).empty()) continue;

    std::vector<std::string> fields;
    try {
      fields = split_csv_line(line);
    } catch (const ParseError& e) {
      throw ParseError("row " + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() != 7) {
      throw ParseError("row " + std::to_string(line_no) + ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    }
    const std::string participant = trim(fields[0]);
    const std::string inventory_id = trim(fields[1]);
    const std::string item_id = trim(fields[2]);
    if (participant.empty()) throw ParseError("row " + std::to_string(line_no) + ": empty participant_id");
    auto inv = by_id.find(inventory_id);
    if (inv == by_id.end()) {
      if (options.skip_unknown_inventories) continue;
      throw ValidationError("row " + std::to_string(line_no) + ": unknown inventory '" +
                            inventory_id + "'");
    }
    if (!inv->second->contains(item_id)) {
      throw ValidationError("row " + std::to_string(line_no) + ": unknown item '" + item_id +
                            "' for inventory " + inventory_id);
    }
    const int score = parse_score_field(fields[3], line_no);
    const auto age = parse_age_field(fields[4], line_no);
    Sex sex;
    try {
      sex = parse_sex(fields[5]);
    } catch (const ParseError& e) {
      throw ParseError("row " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string timestamp = trim(fields[6]);

    auto [rit, inserted] = record_index.emplace(participant, cohort.records.size());
    if (inserted) cohort.records.push_back(ParticipantRecord{participant, std::nullopt, Sex::kUnknown, {}});
    ParticipantRecord& record = cohort.records[rit->second];
    if (!record.age && age) record.age = age;
    if (record.sex == Sex::kUnknown && sex != Sex::kUnknown) record.sex = sex;

    auto key = std::make_tuple(participant, inventory_id, timestamp);
    auto oit = open.find(key);
    if (oit == open.end() || record.administrations[oit->second].scores.contains(item_id)) {
      Administration admin;
      admin.inventory_id = inventory_id;
      if (!timestamp.empty()) admin.timestamp = timestamp;
      admin.file_order = admin_counter++;
      record.administrations.push_back(std::move(admin));
      open[key] = record.administrations.size() - 1;
      oit = open.find(key);
    }
    record.administrations[oit->second].scores.emplace(item_id, score);
  }
  if (!header_seen) throw ParseError(cohort.provenance + ": empty score file");
  return cohort;
}

Cohort load_scores(const std::filesystem::path& path, std::span<const Inventory> inventories,
                   const ScoreReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return parse_scores(in, inventories, path.string(), options);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_scores(std::ostream& out, const Cohort& cohort) {
  out << kScoreHeader << '\n';
  for (const auto& record : cohort.records) {
    std::string age;
    if (record.age) {
      age = format_fixed(*record.age, 6);
      age.erase(age.find_last_not_of('0') + 1);
      if (age.back() == '.') age.pop_back();
    }
    for (const auto& admin : record.administrations) {
      for (const auto& [item, score] : admin.scores) {
        out << csv_escape(record.participant_id) << ',' << csv_escape(admin.inventory_id) << ','
            << csv_escape(item) << ',' << score << ',' << age << ',' << to_string(record.sex) << ','
            << csv_escape(admin.timestamp.value_or("")) << '\n';
      }
    }
  }
}

CompletenessResult enforce_completeness(const Cohort& cohort, const Inventory& inventory) {
  CompletenessResult result;
  result.cohort.provenance = cohort.provenance;
  for (const auto& record : cohort.records) {
    ParticipantRecord kept = record;
    kept.administrations.clear();
    bool took = false;
    for (const auto& admin : record.administrations) {
      if (admin.inventory_id != inventory.id()) {
        kept.administrations.push_back(admin);
        continue;
      }
      took = true;
      const bool complete = admin.scores.size() == inventory.size() &&
                            std::all_of(inventory.items().begin(), inventory.items().end(),
                                        [&](const Item& item) { return admin.scores.contains(item.item_id); });
      if (complete) {
        kept.administrations.push_back(admin);
      } else {
        ++result.excluded;
      }
    }
    if (!took) ++result.absent;
    if (!kept.administrations.empty()) result.cohort.records.push_back(std::move(kept));
  }
  return result;
}

Cohort deduplicate(const Cohort& cohort) {
  Cohort out;
  out.provenance = cohort.provenance;
  std::set<std::string> seen_participants;
  for (const auto& record : cohort.records) {
    if (!seen_participants.insert(record.participant_id).second) {
      throw ValidationError("cohort lists participant " + record.participant_id + " twice");
    }
    ParticipantRecord kept = record;
    kept.administrations.clear();
    std::map<std::string, const Administration*> best;
    std::vector<std::string> inventory_order;
    for (const auto& admin : record.administrations) {
      auto [it, inserted] = best.emplace(admin.inventory_id, &admin);
      if (inserted) {
        inventory_order.push_back(admin.inventory_id);
        continue;
      }
      const Administration& current = *it->second;
      const bool earlier = [&] {
        if (admin.timestamp && current.timestamp) {
          if (timestamp_less(*admin.timestamp, *current.timestamp)) return true;
          if (timestamp_less(*current.timestamp, *admin.timestamp)) return false;
          return admin.file_order < current.file_order;
        }
        if (admin.timestamp != current.timestamp) return admin.timestamp.has_value();
        return admin.file_order < current.file_order;
      }();
      if (earlier) it->second = &admin;
    }
    for (const auto& id : inventory_order) kept.administrations.push_back(*best[id]);
    out.records.push_back(std::move(kept));
  }
  return out;
}

}  // namespace symx
