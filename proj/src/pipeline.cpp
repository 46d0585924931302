#include "exactrag/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <mutex>

#include "exactrag/errors.hpp"
#include "exactrag/hashing.hpp"

namespace exactrag {
namespace {

// Serializes access to an embedder shared by concurrent queries.
class LockedEmbedder final : public LabelEmbedder {
 public:
  explicit LockedEmbedder(std::unique_ptr<LabelEmbedder> inner) : inner_(std::move(inner)) {}
  std::size_t dim() const override { return inner_->dim(); }
  Vec embed(const std::string& label) override {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_->embed(label);
  }
  std::vector<Vec> embed_batch(const std::vector<std::string>& labels) override {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_->embed_batch(labels);
  }

 private:
  std::mutex mu_;
  std::unique_ptr<LabelEmbedder> inner_;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string model_digest(const ModelParams& p) {
  nlohmann::json j = model_to_json(p);
  j.erase("meta");
  return hex(fnv1a64(j.dump()));
}

nlohmann::json QueryOutcome::to_json() const {
  nlohmann::json j;
  j["query"] = query.to_json();
  j["l"] = l;
  j["plan"] = plan ? plan->to_json() : nlohmann::json(nullptr);
  j["label_completion"] = completion.to_json();
  j["completion_count"] = completion_count;
  j["match"] = match.to_json();
  j["answer"] = answer.to_json();
  if (!note.empty()) j["note"] = note;
  j["elapsed_ms"] = elapsed_ms;
  return j;
}

void Engine::prepare(std::optional<ModelParams> model, bool allow_training) {
  const auto t0 = std::chrono::steady_clock::now();
  x_ = embed_graph_labels(graph_, *embedder_);
  report_["label_embedding_ms"] = ms_since(t0);
  report_["distinct_labels"] = x_.size();

  if (cfg_.provider.kind == ProviderKind::kCountOracle) {
    model_ = std::make_shared<CountOracleModel>(cfg_.dominance_dim);
    return;
  }
  if (!model) {
    if (!allow_training) throw ConfigError("a trained dominance model is required for this provider");
    const auto t1 = std::chrono::steady_clock::now();
    TrainConfig tc = cfg_.train;
    tc.d = cfg_.dominance_dim;
    auto result = train(graph_, x_, tc);
    report_["training"] = {{"epochs", result.epochs},
                           {"final_loss", result.final_loss},
                           {"converged", result.converged},
                           {"pairs", result.pair_count},
                           {"ms", ms_since(t1)}};
    model = std::move(result.params);
  }
  if (model->F != cfg_.provider.F) {
    throw StateMismatchError("model expects F=" + std::to_string(model->F) + " but the provider has F=" +
                             std::to_string(cfg_.provider.F));
  }
  params_ = *model;
  model_ = std::make_shared<GatModel>(std::move(*model));
}

Engine Engine::build(Graph g, const std::vector<std::size_t>& lengths, const EngineConfig& cfg,
                     std::optional<ModelParams> model, std::shared_ptr<EmbeddingCache> cache) {
  if (lengths.empty()) throw ConfigError("at least one path length is required");
  Engine e;
  e.graph_ = std::move(g);
  e.cfg_ = cfg;
  e.embedder_ = std::make_shared<LockedEmbedder>(make_label_embedder(cfg.provider, std::move(cache)));
  e.prepare(std::move(model), true);

  const auto node_o = node_dominance_embeddings(e.graph_, e.x_, *e.model_);
  for (std::size_t l : lengths) {
    if (l == 0) throw ConfigError("path length must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    auto entries = make_index_entries(e.graph_, l, e.x_, node_o);
    auto idx = PathIndex::bulk_load(std::move(entries), l, e.embedder_->dim(), e.model_->dim(),
                                    cfg.index_params);
    idx.set_graph_fingerprint(e.graph_.fingerprint());
    auto& meta = idx.metadata();
    meta["provider"] = std::string(to_string(cfg.provider.kind));
    meta["seed"] = cfg.provider.seed;
    meta["dominance"] = std::string(e.model_->kind());
    if (e.params_) meta["model_digest"] = model_digest(*e.params_);
    e.report_["index"][std::to_string(l)] = {{"entries", idx.entries().size()},
                                             {"height", idx.height()},
                                             {"ms", ms_since(t0)}};
    e.indexes_.emplace(l, std::move(idx));
  }
  return e;
}

Engine Engine::open(Graph g, PathIndex idx, const EngineConfig& cfg, std::optional<ModelParams> model,
                    std::shared_ptr<EmbeddingCache> cache) {
  if (idx.graph_fingerprint() != g.fingerprint()) {
    throw StateMismatchError("index was built for a different graph (fingerprint mismatch)");
  }
  const auto& meta = idx.metadata();
  const std::string kind(to_string(cfg.provider.kind));
  if (meta.contains("provider") && meta["provider"] != kind) {
    throw StateMismatchError("index was built with provider '" + meta["provider"].get<std::string>() +
                             "', not '" + kind + "'");
  }
  if (meta.contains("seed") && cfg.provider.kind != ProviderKind::kRemote &&
      meta["seed"].get<std::uint64_t>() != cfg.provider.seed) {
    throw StateMismatchError("index was built with seed " + meta["seed"].dump());
  }
  if (idx.F() != cfg.provider.F) {
    throw StateMismatchError("index has F=" + std::to_string(idx.F()) + " but the provider has F=" +
                             std::to_string(cfg.provider.F));
  }
  Engine e;
  e.graph_ = std::move(g);
  e.cfg_ = cfg;
  e.cfg_.dominance_dim = idx.d();
  e.embedder_ = std::make_shared<LockedEmbedder>(make_label_embedder(cfg.provider, std::move(cache)));
  e.prepare(std::move(model), false);
  if (meta.contains("dominance") && meta["dominance"] != std::string(e.model_->kind())) {
    throw StateMismatchError("index dominance model is '" + meta["dominance"].get<std::string>() + "'");
  }
  if (e.params_ && meta.contains("model_digest") && meta["model_digest"] != model_digest(*e.params_)) {
    throw StateMismatchError("model file differs from the one used to build the index");
  }
  if (e.model_->dim() != idx.d()) throw StateMismatchError("dominance dimension differs from the index");
  const auto l = idx.l();
  e.indexes_.emplace(l, std::move(idx));
  return e;
}

const PathIndex& Engine::index(std::size_t l) const {
  auto it = indexes_.find(l);
  if (it == indexes_.end()) throw ConfigError("no index for l=" + std::to_string(l));
  return it->second;
}

QueryOutcome Engine::answer(const Graph& query, const std::string& question, AnswerProvider& answerer,
                            std::optional<std::size_t> forced_l) const {
  const auto t0 = std::chrono::steady_clock::now();
  QueryOutcome out;
  out.query = normalize_entities(query, graph_, x_, *embedder_, cfg_.normalize_threshold);
  const Graph& q = out.query.graph;

  const auto valid = valid_path_lengths(q);
  if (forced_l) {
    if (std::find(valid.begin(), valid.end(), *forced_l) == valid.end()) {
      throw InputError("l=" + std::to_string(*forced_l) + " cannot cover this query");
    }
    index(*forced_l);
    out.l = *forced_l;
  } else {
    for (auto it = valid.rbegin(); it != valid.rend(); ++it) {
      if (indexes_.count(*it)) {
        out.l = *it;
        break;
      }
    }
  }

  EncoderContext enc{*embedder_, *model_};
  if (out.l == 0) {
    out.note = "no index covers a valid path length for this query";
    out.match.fallback = fallback_subgraph(out.query, graph_, cfg_.match.fallback_cap);
  } else {
    const PathIndex& idx = index(out.l);
    out.plan = decompose_into_paths(q, out.l);
    const auto qx = embed_graph_labels(q, *embedder_);
    out.completion = complete_unknown_labels(q, *out.plan, idx, qx);
    out.completion_count = completion_count(out.completion);
    std::vector<CompletedPlan> completions;
    if (out.completion.complete()) completions = enumerate_completions(q, out.completion, cfg_.completion_cap);
    out.match = match_query(out.query, *out.plan, completions, idx, graph_, enc, cfg_.match);
    out.match.stats.unknown_without_candidates = !out.completion.complete();
    TraversalStats combined = out.completion.stats;
    combined.merge(out.match.stats.traversal);
    out.match.stats.traversal = combined;
  }

  AnswerContext ctx{&out.match, &q, &graph_};
  try {
    auto prompt = render_subgraph_prompt(graph_, out.match, question, cfg_.token_budget);
    out.answer = generate_answer(prompt, answerer, ctx);
  } catch (const InputError& e) {
    out.answer.answer = std::string(kUnableAnswer);
    out.answer.unable = true;
    out.answer.mode = out.match.exact.empty() ? "fallback" : "exact";
    if (out.note.empty()) out.note = e.what();
  }
  out.elapsed_ms = ms_since(t0);
  return out;
}

QueryOutcome Engine::answer_text(const std::string& question, TextProvider* extractor,
                                 AnswerProvider& answerer, std::optional<std::size_t> forced_l) const {
  const Graph q = extract_query_graph(question, extractor);
  return answer(q, question, answerer, forced_l);
}

}  // namespace exactrag
