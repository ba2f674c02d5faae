#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "symx/inventory.hpp"

namespace symx::test {

inline std::filesystem::path fixture(const std::string& relative) {
  return std::filesystem::path(SYMX_FIXTURE_DIR) / relative;
}

inline LikertScale default_scale() {
  return LikertScale({"Not at all", "A little bit", "Moderately", "Quite a bit", "Extremely"});
}

/// Inventory whose items are `<prefix>1..<prefix>n` with generic texts.
inline Inventory make_inventory(const std::string& id, std::size_t n, const std::string& prefix = "q") {
  std::vector<Item> items;
  for (std::size_t i = 1; i <= n; ++i) {
    items.push_back({prefix + std::to_string(i), "Symptom text " + prefix + std::to_string(i), std::nullopt});
  }
  return Inventory(id, id + " inventory", "past 7 days", default_scale(), std::move(items));
}

inline Inventory make_inventory(const std::string& id, const std::vector<std::string>& item_ids) {
  std::vector<Item> items;
  for (const auto& item : item_ids) items.push_back({item, "Symptom text " + item, std::nullopt});
  return Inventory(id, id + " inventory", "past 7 days", default_scale(), std::move(items));
}

inline const char* kHeader = "participant_id,inventory_id,item_id,score,age,sex,timestamp\n";

/// Parses a score CSV body; the header is prepended.
inline Cohort parse_csv(const std::string& body, std::span<const Inventory> inventories) {
  std::istringstream in(std::string(kHeader) + body);
  return parse_scores(in, inventories, "test");
}

/// One administration per row of `scores`; participants are p0, p1, ...
inline void add_rows(Cohort& cohort, const Inventory& inventory, const std::vector<std::vector<int>>& scores,
                     const std::string& id_prefix = "p") {
  for (std::size_t r = 0; r < scores.size(); ++r) {
    const std::string pid = id_prefix + std::to_string(r);
    ParticipantRecord* rec = nullptr;
    for (auto& existing : cohort.records) {
      if (existing.participant_id == pid) rec = &existing;
    }
    if (!rec) {
      cohort.records.push_back({pid, std::nullopt, Sex::kUnknown, {}});
      rec = &cohort.records.back();
    }
    Administration admin;
    admin.inventory_id = inventory.id();
    for (std::size_t i = 0; i < scores[r].size(); ++i) admin.scores[inventory.items()[i].item_id] = scores[r][i];
    rec->administrations.push_back(std::move(admin));
  }
}

}  // namespace symx::test
