#include "symx/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include <httplib.h>

#include "symx/error.hpp"
#include "symx/io.hpp"

namespace symx {

using nlohmann::json;

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw ValidationError("embedding dimension must be at least 2");
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("embedding contains a non-finite value");
    sum += v * v;
  }
  norm_ = std::sqrt(sum);
  if (!(norm_ > 0.0)) throw ValidationError("embedding is the zero vector");
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dimension() != v.dimension()) {
    throw ValidationError("embedding dimension mismatch: " + std::to_string(u.dimension()) +
                          " vs " + std::to_string(v.dimension()));
  }
  const auto a = u.values();
  const auto b = v.values();
  // Summing in index order keeps cos(u, v) == cos(v, u) bit for bit.
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double cosine = dot / (u.norm() * v.norm());
  return std::clamp(cosine, 0.0, 1.0);
}

EmbeddingSet::EmbeddingSet(const Inventory& inventory, std::map<std::string, EmbeddingVector> vectors,
                           std::string backend_tag)
    : inventory_id_(inventory.id()), backend_tag_(std::move(backend_tag)) {
  item_ids_ = inventory.item_ids();
  vectors_.reserve(item_ids_.size());
  for (const auto& id : item_ids_) {
    auto it = vectors.find(id);
    if (it == vectors.end()) {
      throw ValidationError("embeddings for " + inventory_id_ + " missing item " + id);
    }
    if (!vectors_.empty() && it->second.dimension() != vectors_.front().dimension()) {
      throw ValidationError("embedding for item " + id + " has dimension " +
                            std::to_string(it->second.dimension()) + ", expected " +
                            std::to_string(vectors_.front().dimension()));
    }
    vectors_.push_back(it->second);
  }
}

const EmbeddingVector& EmbeddingSet::at(std::string_view item_id) const {
  auto it = std::find(item_ids_.begin(), item_ids_.end(), item_id);
  if (it == item_ids_.end()) {
    throw ValidationError("no embedding for item " + std::string(item_id));
  }
  return vectors_[static_cast<std::size_t>(it - item_ids_.begin())];
}

namespace {

EmbeddingVector vector_from_json(const json& values, const std::string& context) {
  if (!values.is_array()) throw ParseError(context + ": vector must be an array");
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    // nlohmann parses NaN/Infinity tokens as errors, so a null stands in for them.
    if (!v.is_number()) throw ValidationError(context + ": non-finite or non-numeric value");
    out.push_back(v.get<double>());
  }
  try {
    return EmbeddingVector(std::move(out));
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  }
}

}  // namespace

EmbeddingSet parse_embeddings(const json& doc, const Inventory& inventory) {
  if (!doc.is_object()) throw ParseError("embedding document must be a JSON object");
  auto vectors = doc.find("vectors");
  if (vectors == doc.end() || !vectors->is_object()) {
    throw ParseError("embedding document missing 'vectors' object");
  }
  std::string tag;
  if (auto t = doc.find("backend_tag"); t != doc.end() && t->is_string()) tag = t->get<std::string>();
  std::optional<std::size_t> declared;
  if (auto d = doc.find("dimension"); d != doc.end()) {
    if (!d->is_number_integer() || d->get<std::int64_t>() <= 0) {
      throw ParseError("'dimension' must be a positive integer");
    }
    declared = d->get<std::size_t>();
  }

  std::map<std::string, EmbeddingVector> parsed;
  for (const auto& item : inventory.items()) {
    auto it = vectors->find(item.item_id);
    if (it == vectors->end()) {
      throw ValidationError("embeddings for " + inventory.id() + " missing item " + item.item_id);
    }
    EmbeddingVector v = vector_from_json(*it, "item " + item.item_id);
    if (declared && v.dimension() != *declared) {
      throw ValidationError("item " + item.item_id + " has dimension " +
                            std::to_string(v.dimension()) + ", header says " +
                            std::to_string(*declared));
    }
    parsed.emplace(item.item_id, std::move(v));
  }
  return EmbeddingSet(inventory, std::move(parsed), std::move(tag));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, const Inventory& inventory) {
  const json doc = read_json(path);
  try {
    return parse_embeddings(doc, inventory);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json serialize_embeddings(const EmbeddingSet& set) {
  json vectors = json::object();
  for (std::size_t i = 0; i < set.size(); ++i) {
    json values = json::array();
    for (double v : set.at(i).values()) values.push_back(round_sig12(v));
    vectors[set.item_ids()[i]] = std::move(values);
  }
  return {{"backend_tag", set.backend_tag()}, {"dimension", set.dimension()},
          {"vectors", std::move(vectors)}};
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path before /embed, without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw TransportError("embedding endpoint must be a URL: " + url);
  if (url.compare(0, scheme, "http") != 0) {
    throw TransportError("only http:// embedding endpoints are supported: " + url);
  }
  const auto path = url.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = url.substr(0, path);
  if (path != std::string::npos) ep.prefix = url.substr(path);
  while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  return ep;
}

std::vector<std::vector<double>> post_batch(httplib::Client& client, const std::string& path,
                                            std::span<const std::string> texts,
                                            std::string& model_name) {
  json request = {{"texts", json::array()}};
  for (const auto& t : texts) request["texts"].push_back(t);
  auto res = client.Post(path, request.dump(), "application/json");
  if (!res) {
    throw TransportError("embedding service request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("embedding service returned HTTP " + std::to_string(res->status));
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("embedding service sent invalid JSON: ") + e.what());
  }
  if (!body.is_object() || !body.contains("vectors") || !body["vectors"].is_array()) {
    throw TransportError("embedding service response lacks a 'vectors' array");
  }
  if (auto m = body.find("model"); m != body.end() && m->is_string()) model_name = m->get<std::string>();
  const json& vectors = body["vectors"];
  if (vectors.size() != texts.size()) {
    throw TransportError("partial response: sent " + std::to_string(texts.size()) +
                         " texts, received " + std::to_string(vectors.size()) + " vectors");
  }
  std::vector<std::vector<double>> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) {
    if (!v.is_array()) throw TransportError("embedding service vector is not an array");
    std::vector<double> values;
    values.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) throw ValidationError("embedding service sent a non-numeric value");
      values.push_back(x.get<double>());
    }
    out.push_back(std::move(values));
  }
  return out;
}

}  // namespace

std::vector<EmbeddingVector> fetch_text_embeddings(const std::string& endpoint,
                                                   std::span<const std::string> texts,
                                                   std::string* model_name,
                                                   const EmbeddingServiceOptions& options) {
  const Endpoint ep = split_endpoint(endpoint);
  httplib::Client client(ep.origin);
  client.set_connection_timeout(options.timeout_seconds);
  client.set_read_timeout(options.timeout_seconds);
  const std::string path = ep.prefix + "/embed";
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::string model;
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    const auto chunk = texts.subspan(start, std::min(batch, texts.size() - start));
    for (auto& values : post_batch(client, path, chunk, model)) {
      if (!out.empty() && values.size() != out.front().dimension()) {
        throw TransportError("dimension drift across batches: " +
                             std::to_string(out.front().dimension()) + " vs " +
                             std::to_string(values.size()));
      }
      out.emplace_back(std::move(values));
    }
  }
  if (model_name) *model_name = model;
  return out;
}

EmbeddingSet fetch_embeddings(const std::string& endpoint, const Inventory& inventory,
                              const EmbeddingServiceOptions& options) {
  std::vector<std::string> texts;
  texts.reserve(inventory.size());
  for (const auto& item : inventory.items()) texts.push_back(item.text);
  std::string model;
  auto vectors = fetch_text_embeddings(endpoint, texts, &model, options);
  std::map<std::string, EmbeddingVector> by_item;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    by_item.emplace(inventory.items()[i].item_id, std::move(vectors[i]));
  }
  return EmbeddingSet(inventory, std::move(by_item), model.empty() ? endpoint : model);
}

SimilarityMatrix::SimilarityMatrix(std::string source_inventory_id, std::string target_inventory_id,
                                   std::vector<std::string> source_items,
                                   std::vector<std::string> target_items, std::vector<double> values,
                                   std::string backend_tag)
    : source_id_(std::move(source_inventory_id)),
      target_id_(std::move(target_inventory_id)),
      source_items_(std::move(source_items)),
      target_items_(std::move(target_items)),
      values_(std::move(values)),
      backend_tag_(std::move(backend_tag)) {
  if (values_.size() != source_items_.size() * target_items_.size()) {
    throw ValidationError("similarity matrix is incomplete");
  }
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("similarity outside [0,1]");
  }
}

SimilarityMatrix similarity_matrix(const EmbeddingSet& source, const EmbeddingSet& target,
                                   unsigned jobs) {
  const std::size_t rows = source.size();
  const std::size_t cols = target.size();
  std::vector<double> values(rows * cols);
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t a = begin; a < end; ++a) {
      for (std::size_t b = 0; b < cols; ++b) {
        values[a * cols + b] = cosine_similarity(source.at(a), target.at(b));
      }
    }
  };
  if (source.dimension() != target.dimension()) {
    throw ValidationError("embedding dimension mismatch between " + source.inventory_id() +
                          " and " + target.inventory_id());
  }
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(rows, 1));
  if (workers == 1) {
    fill_rows(0, rows);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (rows + workers - 1) / workers;
    for (std::size_t begin = 0; begin < rows; begin += chunk) {
      pool.emplace_back(fill_rows, begin, std::min(rows, begin + chunk));
    }
  }
  std::string tag = source.backend_tag();
  if (target.backend_tag() != tag) tag += "|" + target.backend_tag();
  return SimilarityMatrix(source.inventory_id(), target.inventory_id(), source.item_ids(),
                          target.item_ids(), std::move(values), std::move(tag));
}

std::vector<ClosestPair> closest_pairs(const SimilarityMatrix& m, Direction direction) {
  std::vector<ClosestPair> out;
  const bool by_column = direction == Direction::kSourceToTarget;
  const std::size_t outer = by_column ? m.cols() : m.rows();
  const std::size_t inner = by_column ? m.rows() : m.cols();
  out.reserve(outer);
  for (std::size_t i = 0; i < outer; ++i) {
    std::size_t best = 0;
    double best_value = -1.0;
    for (std::size_t j = 0; j < inner; ++j) {
      const double v = by_column ? m(j, i) : m(i, j);
      if (v > best_value) {
        best_value = v;
        best = j;
      }
    }
    if (by_column) {
      out.push_back({m.target_items()[i], m.source_items()[best], best_value});
    } else {
      out.push_back({m.source_items()[i], m.target_items()[best], best_value});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ClosestPair& a, const ClosestPair& b) { return a.similarity > b.similarity; });
  return out;
}

std::vector<PairRow> pair_report(std::span<const SimilarityMatrix> matrices) {
  std::vector<PairRow> rows;
  for (const auto& m : matrices) {
    const std::string tag = m.source_inventory_id() + "->" + m.target_inventory_id();
    const auto first = rows.size();
    for (std::size_t a = 0; a < m.rows(); ++a) {
      for (std::size_t b = 0; b < m.cols(); ++b) {
        rows.push_back({tag, m.source_items()[a], m.target_items()[b], m(a, b)});
      }
    }
    std::stable_sort(rows.begin() + static_cast<std::ptrdiff_t>(first), rows.end(),
                     [](const PairRow& x, const PairRow& y) { return x.similarity > y.similarity; });
  }
  return rows;
}

void write_pair_report(std::ostream& out, std::span<const PairRow> rows) {
  out << "pair_tag,source_item,target_item,similarity\n";
  for (const auto& row : rows) {
    out << csv_escape(row.pair_tag) << ',' << csv_escape(row.source_item) << ','
        << csv_escape(row.target_item) << ',' << format_fixed(row.similarity, 4) << '\n';
  }
}

}  // namespace symx
