#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "exactrag/dominance.hpp"
#include "exactrag/embeddings.hpp"
#include "exactrag/generation.hpp"
#include "exactrag/matcher.hpp"
#include "exactrag/path_index.hpp"
#include "exactrag/query.hpp"
#include "json.hpp"

namespace exactrag {

struct EngineConfig {
  ProviderConfig provider;
  std::size_t dominance_dim = 8;
  TrainConfig train;
  IndexParams index_params;
  std::size_t completion_cap = kDefaultCompletionCap;
  MatchOptions match;
  std::size_t token_budget = kDefaultTokenBudget;
  std::optional<double> normalize_threshold;
};

/// Everything produced while answering one query.
struct QueryOutcome {
  NormalizedQuery query;
  std::size_t l = 0;  // 0 when no usable index length existed
  std::optional<QueryPlan> plan;
  LabelCompletion completion;
  std::size_t completion_count = 0;
  MatchResult match;
  AnswerRecord answer;
  std::string note;  // why the exact path was skipped, if it was
  double elapsed_ms = 0.0;

  nlohmann::json to_json() const;
};

/// A data graph with its label embeddings, dominance model and one path
/// index per configured length.
class Engine {
 public:
  /// Embeds labels, trains (or reuses) the dominance model and bulk-loads an
  /// index for every length in `lengths`.
  static Engine build(Graph g, const std::vector<std::size_t>& lengths, const EngineConfig& cfg,
                      std::optional<ModelParams> model = std::nullopt,
                      std::shared_ptr<EmbeddingCache> cache = nullptr);

  /// Wraps a persisted index. Throws StateMismatchError when the index does
  /// not belong to `g` or to this provider configuration.
  static Engine open(Graph g, PathIndex idx, const EngineConfig& cfg,
                     std::optional<ModelParams> model = std::nullopt,
                     std::shared_ptr<EmbeddingCache> cache = nullptr);

  /// Full retrieval and answer flow for an extracted query graph.
  /// `forced_l` must be a valid, indexed length when given.
  QueryOutcome answer(const Graph& query, const std::string& question, AnswerProvider& answerer,
                      std::optional<std::size_t> forced_l = std::nullopt) const;

  /// Extraction first: structured grammar when `extractor` is null.
  QueryOutcome answer_text(const std::string& question, TextProvider* extractor,
                           AnswerProvider& answerer,
                           std::optional<std::size_t> forced_l = std::nullopt) const;

  const Graph& graph() const { return graph_; }
  const EmbeddingTable& label_embeddings() const { return x_; }
  const std::map<std::size_t, PathIndex>& indexes() const { return indexes_; }
  const PathIndex& index(std::size_t l) const;
  const DominanceModel& dominance() const { return *model_; }
  LabelEmbedder& embedder() const { return *embedder_; }
  const std::optional<ModelParams>& trained_model() const { return params_; }
  const EngineConfig& config() const { return cfg_; }
  const nlohmann::json& build_report() const { return report_; }

 private:
  Engine() = default;
  void prepare(std::optional<ModelParams> model, bool allow_training);

  Graph graph_;
  EngineConfig cfg_;
  std::shared_ptr<LabelEmbedder> embedder_;
  std::shared_ptr<DominanceModel> model_;
  std::optional<ModelParams> params_;
  EmbeddingTable x_;
  std::map<std::size_t, PathIndex> indexes_;
  nlohmann::json report_ = nlohmann::json::object();
};

/// Hex digest of a model's JSON form; stored in index headers.
std::string model_digest(const ModelParams& p);

}  // namespace exactrag
