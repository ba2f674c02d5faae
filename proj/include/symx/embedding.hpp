#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/inventory.hpp"

namespace symx {

/// A finite, non-zero embedding with its Euclidean norm cached.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }
  double norm() const { return norm_; }

 private:
  std::vector<double> values_;
  double norm_;
};

/// max(0, cos(u, v)). Symmetric; throws ValidationError on dimension mismatch.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

/// One vector per item of an inventory, in inventory order.
class EmbeddingSet {
 public:
  EmbeddingSet(const Inventory& inventory, std::map<std::string, EmbeddingVector> vectors,
               std::string backend_tag);

  const std::string& inventory_id() const { return inventory_id_; }
  const std::string& backend_tag() const { return backend_tag_; }
  std::size_t dimension() const { return vectors_.front().dimension(); }
  std::size_t size() const { return vectors_.size(); }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const EmbeddingVector& at(std::size_t index) const { return vectors_[index]; }
  const EmbeddingVector& at(std::string_view item_id) const;

 private:
  std::string inventory_id_;
  std::string backend_tag_;
  std::vector<std::string> item_ids_;
  std::vector<EmbeddingVector> vectors_;
};

EmbeddingSet parse_embeddings(const nlohmann::json& doc, const Inventory& inventory);
EmbeddingSet load_embeddings(const std::filesystem::path& path, const Inventory& inventory);
nlohmann::json serialize_embeddings(const EmbeddingSet& set);

struct EmbeddingServiceOptions {
  std::size_t batch_size = 64;
  int timeout_seconds = 60;
};

/// Calls POST {endpoint}/embed with {"texts": [...]} in batches. Each call
/// opens its own connection, so concurrent use from several threads is fine.
EmbeddingSet fetch_embeddings(const std::string& endpoint, const Inventory& inventory,
                              const EmbeddingServiceOptions& options = {});

/// Source of item embeddings. Implementations never run a neural network
/// in-process: vectors come from a file or a remote service.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingSet embed(const Inventory& inventory) const = 0;
};

class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(std::filesystem::path path) : path_(std::move(path)) {}
  EmbeddingSet embed(const Inventory& inventory) const override {
    return load_embeddings(path_, inventory);
  }

 private:
  std::filesystem::path path_;
};

class ServiceEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit ServiceEmbeddingProvider(std::string endpoint, EmbeddingServiceOptions options = {})
      : endpoint_(std::move(endpoint)), options_(options) {}
  EmbeddingSet embed(const Inventory& inventory) const override {
    return fetch_embeddings(endpoint_, inventory, options_);
  }

 private:
  std::string endpoint_;
  EmbeddingServiceOptions options_;
};

/// Embeds a list of raw texts through the same service contract. Used for
/// ad-hoc sentence comparisons that do not belong to an inventory.
std::vector<EmbeddingVector> fetch_text_embeddings(const std::string& endpoint,
                                                   std::span<const std::string> texts,
                                                   std::string* model_name = nullptr,
                                                   const EmbeddingServiceOptions& options = {});

/// Similarities between every source item (rows) and target item (columns).
class SimilarityMatrix {
 public:
  SimilarityMatrix(std::string source_inventory_id, std::string target_inventory_id,
                   std::vector<std::string> source_items, std::vector<std::string> target_items,
                   std::vector<double> values, std::string backend_tag = {});

  const std::string& source_inventory_id() const { return source_id_; }
  const std::string& target_inventory_id() const { return target_id_; }
  const std::vector<std::string>& source_items() const { return source_items_; }
  const std::vector<std::string>& target_items() const { return target_items_; }
  const std::string& backend_tag() const { return backend_tag_; }
  std::size_t rows() const { return source_items_.size(); }
  std::size_t cols() const { return target_items_.size(); }
  double operator()(std::size_t source, std::size_t target) const {
    return values_[source * cols() + target];
  }

 private:
  std::string source_id_;
  std::string target_id_;
  std::vector<std::string> source_items_;
  std::vector<std::string> target_items_;
  std::vector<double> values_;
  std::string backend_tag_;
};

/// S[a][b] = cosine_similarity(source[a], target[b]); rows may be computed
/// on up to `jobs` threads.
SimilarityMatrix similarity_matrix(const EmbeddingSet& source, const EmbeddingSet& target,
                                   unsigned jobs = 1);

enum class Direction { kSourceToTarget, kTargetToSource };

struct ClosestPair {
  std::string item;       // the item being matched
  std::string best_item;  // its most similar counterpart
  double similarity = 0.0;
};

/// For each item on the receiving side of `direction`, its best counterpart:
/// kSourceToTarget takes column maxima (one entry per target item). Ties go
/// to the lowest index; output is stable-sorted by descending similarity.
std::vector<ClosestPair> closest_pairs(const SimilarityMatrix& m,
                                       Direction direction = Direction::kSourceToTarget);

struct PairRow {
  std::string pair_tag;
  std::string source_item;
  std::string target_item;
  double similarity = 0.0;
};

/// Every cell of every matrix, tagged "<source>-><target>", sorted by
/// descending similarity within each tag. Tags keep input order.
std::vector<PairRow> pair_report(std::span<const SimilarityMatrix> matrices);
void write_pair_report(std::ostream& out, std::span<const PairRow> rows);

}  // namespace symx
