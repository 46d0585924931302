#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exactrag/graph.hpp"
#include "exactrag/http_client.hpp"

namespace exactrag {

using Vec = std::vector<double>;

enum class ProviderKind { kMock, kCountOracle, kRemote };

std::string_view to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(std::string_view name);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kCountOracle;
  std::size_t F = 16;
  std::uint64_t seed = 0;
  std::string endpoint;  // remote only
  HttpOptions http;
};

/// Maps labels to fixed-dimension vectors.
class LabelEmbedder {
 public:
  virtual ~LabelEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Vec embed(const std::string& label) = 0;
  /// Default implementation embeds one label at a time.
  virtual std::vector<Vec> embed_batch(const std::vector<std::string>& labels);
};

/// Seeded hash of the label expanded to F values and unit-normalized.
class MockEmbedder final : public LabelEmbedder {
 public:
  MockEmbedder(std::size_t F, std::uint64_t seed);
  std::size_t dim() const override { return F_; }
  Vec embed(const std::string& label) override;

 private:
  std::size_t F_;
  std::uint64_t seed_;
};

/// Append-only label→vector store persisted as JSON lines {label, vector}.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path file);

  std::optional<Vec> get(const std::string& label) const;
  /// Stores the vector and appends it to the backing file, if any.
  void put(const std::string& label, const Vec& v);
  std::size_t size() const;

  /// Cache file naming: `<index path>.emb-<kind>-<F>.jsonl`.
  static std::filesystem::path path_for(const std::filesystem::path& index_path,
                                        ProviderKind kind, std::size_t F);

 private:
  mutable std::mutex mu_;
  std::map<std::string, Vec, std::less<>> values_;
  std::optional<std::filesystem::path> file_;
};

/// HTTP embedding service client. Requests carry {"input": [labels]} and the
/// reply must be {"data": [{"embedding": [...]}, ...]} in input order.
class RemoteEmbedder final : public LabelEmbedder {
 public:
  RemoteEmbedder(std::string endpoint, std::size_t F, HttpOptions http,
                 std::shared_ptr<EmbeddingCache> cache = nullptr);
  std::size_t dim() const override { return F_; }
  Vec embed(const std::string& label) override;
  std::vector<Vec> embed_batch(const std::vector<std::string>& labels) override;

  std::size_t requests_sent() const { return requests_; }

 private:
  std::string endpoint_;
  std::size_t F_;
  HttpOptions http_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::size_t requests_ = 0;
};

/// Builds the label embedder for a provider config. The mock and count-oracle
/// kinds share the hashed embedder; remote requires `endpoint`.
std::unique_ptr<LabelEmbedder> make_label_embedder(const ProviderConfig& cfg,
                                                   std::shared_ptr<EmbeddingCache> cache = nullptr);

/// One-shot convenience wrapper around make_label_embedder.
Vec embed_label(const std::string& label, const ProviderConfig& cfg);

/// Vertex id → label embedding.
using EmbeddingTable = std::map<std::string, Vec, std::less<>>;

/// Embeds every vertex label of `g` (each distinct label once). UNK-labelled
/// vertices are skipped.
EmbeddingTable embed_graph_labels(const Graph& g, LabelEmbedder& embedder);

/// Position-ordered concatenation of per-vertex vectors. Throws InputError if
/// a vertex has no entry or dimensions disagree.
Vec concat_path_vectors(const Path& p, const EmbeddingTable& table);
Vec path_label_embedding(const Path& p, const EmbeddingTable& table);

double cosine_similarity(const Vec& a, const Vec& b);

struct NearestVertex {
  std::string id;
  double similarity = 0.0;
};

/// Exact cosine arg-max over the vertices in `table`; ties go to the smaller id.
/// Throws InputError for a zero-norm probe or an empty table.
NearestVertex nearest_label(const Vec& probe, const EmbeddingTable& table);

}  // namespace exactrag
