#include "exactrag/embeddings.hpp"

#include <cmath>
#include <fstream>

#include "exactrag/errors.hpp"
#include "exactrag/hashing.hpp"

namespace exactrag {

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kMock: return "mock";
    case ProviderKind::kCountOracle: return "count-oracle";
    case ProviderKind::kRemote: return "remote";
  }
  return "unknown";
}

ProviderKind provider_kind_from_string(std::string_view name) {
  if (name == "mock") return ProviderKind::kMock;
  if (name == "count-oracle") return ProviderKind::kCountOracle;
  if (name == "remote") return ProviderKind::kRemote;
  throw ConfigError("unknown provider kind: " + std::string(name));
}

std::vector<Vec> LabelEmbedder::embed_batch(const std::vector<std::string>& labels) {
  std::vector<Vec> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(embed(l));
  return out;
}

MockEmbedder::MockEmbedder(std::size_t F, std::uint64_t seed) : F_(F), seed_(seed) {
  if (F == 0) throw ConfigError("embedding dimension must be positive");
}

Vec MockEmbedder::embed(const std::string& label) {
  if (label.empty()) throw InputError("cannot embed an empty label");
  std::uint64_t state = mix64(seed_, fnv1a64(label));
  Vec v(F_);
  double norm = 0.0;
  for (auto& x : v) {
    // 53 random bits mapped onto [-1, 1).
    x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    return v;
  }
  for (auto& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      values_[j.at("label").get<std::string>()] = j.at("vector").get<Vec>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError("corrupt embedding cache " + file_->string() + " line " +
                       std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::optional<Vec> EmbeddingCache::get(const std::string& label) const {
  std::lock_guard lock(mu_);
  auto it = values_.find(label);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& label, const Vec& v) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = values_.insert_or_assign(label, v);
  if (!file_ || !inserted) return;
  std::ofstream out(*file_, std::ios::app);
  if (!out) throw InputError("cannot append to embedding cache " + file_->string());
  out << nlohmann::json{{"label", label}, {"vector", v}}.dump() << "\n";
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return values_.size();
}

std::filesystem::path EmbeddingCache::path_for(const std::filesystem::path& index_path,
                                               ProviderKind kind, std::size_t F) {
  auto p = index_path;
  p += ".emb-" + std::string(to_string(kind)) + "-" + std::to_string(F) + ".jsonl";
  return p;
}

// ---------------------------------------------------------------------------

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::size_t F, HttpOptions http,
                               std::shared_ptr<EmbeddingCache> cache)
    : endpoint_(std::move(endpoint)),
      F_(F),
      http_(std::move(http)),
      cache_(cache ? std::move(cache) : std::make_shared<EmbeddingCache>()) {
  if (endpoint_.empty()) throw ConfigError("remote embedding provider requires an endpoint");
}

Vec RemoteEmbedder::embed(const std::string& label) { return embed_batch({label}).front(); }

std::vector<Vec> RemoteEmbedder::embed_batch(const std::vector<std::string>& labels) {
  std::vector<Vec> out(labels.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw InputError("cannot embed an empty label");
    if (auto hit = cache_->get(labels[i])) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(labels[i]);
      slots.push_back(i);
    }
  }
  if (missing.empty()) return out;

  ++requests_;
  const auto reply = post_json(endpoint_, {{"input", missing}}, http_);
  const auto data = reply.find("data");
  if (data == reply.end() || !data->is_array() || data->size() != missing.size()) {
    throw ProviderError("embedding reply must carry one data item per input label", false);
  }
  for (std::size_t k = 0; k < missing.size(); ++k) {
    Vec v;
    try {
      v = (*data)[k].at("embedding").get<Vec>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding item: ") + e.what(), false);
    }
    if (v.size() != F_) {
      throw ConfigError("embedding service returned dimension " + std::to_string(v.size()) +
                        ", configured F = " + std::to_string(F_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw ProviderError("embedding service returned non-finite values", false);
    }
    cache_->put(missing[k], v);
    out[slots[k]] = std::move(v);
  }
  return out;
}

std::unique_ptr<LabelEmbedder> make_label_embedder(const ProviderConfig& cfg,
                                                   std::shared_ptr<EmbeddingCache> cache) {
  switch (cfg.kind) {
    case ProviderKind::kMock:
    case ProviderKind::kCountOracle:
      return std::make_unique<MockEmbedder>(cfg.F, cfg.seed);
    case ProviderKind::kRemote:
      return std::make_unique<RemoteEmbedder>(cfg.endpoint, cfg.F, cfg.http, std::move(cache));
  }
  throw ConfigError("unknown provider kind");
}

Vec embed_label(const std::string& label, const ProviderConfig& cfg) {
  if (is_unknown_label(label)) throw InputError("the UNK label has no embedding");
  return make_label_embedder(cfg)->embed(label);
}

EmbeddingTable embed_graph_labels(const Graph& g, LabelEmbedder& embedder) {
  std::vector<std::string> labels;
  std::map<std::string, std::size_t, std::less<>> slot;
  for (const auto& [id, v] : g.vertices()) {
    if (is_unknown_label(v.label)) continue;
    if (slot.emplace(v.label, labels.size()).second) labels.push_back(v.label);
  }
  const auto vectors = embedder.embed_batch(labels);
  EmbeddingTable table;
  for (const auto& [id, v] : g.vertices()) {
    if (is_unknown_label(v.label)) continue;
    table.emplace(id, vectors[slot.at(v.label)]);
  }
  return table;
}

Vec concat_path_vectors(const Path& p, const EmbeddingTable& table) {
  Vec out;
  std::size_t width = 0;
  for (const auto& id : p.vertices) {
    auto it = table.find(id);
    if (it == table.end()) throw InputError("no embedding for path vertex " + id);
    if (width == 0) width = it->second.size();
    if (it->second.size() != width) throw InputError("inconsistent embedding dimension at " + id);
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

Vec path_label_embedding(const Path& p, const EmbeddingTable& table) {
  return concat_path_vectors(p, table);
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InputError("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

NearestVertex nearest_label(const Vec& probe, const EmbeddingTable& table) {
  double norm = 0.0;
  for (double x : probe) norm += x * x;
  if (norm == 0.0) throw InputError("nearest-label probe has zero norm");
  if (table.empty()) throw InputError("nearest-label lookup over an empty graph");
  NearestVertex best;
  bool have = false;
  // Map order is ascending by id, so a strict comparison keeps the smaller id on ties.
  for (const auto& [id, v] : table) {
    const double sim = cosine_similarity(probe, v);
    if (!have || sim > best.similarity) {
      best = {id, sim};
      have = true;
    }
  }
  return best;
}

}  // namespace exactrag
