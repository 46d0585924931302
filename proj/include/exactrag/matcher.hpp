#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "exactrag/dominance.hpp"
#include "exactrag/embeddings.hpp"
#include "exactrag/graph.hpp"
#include "exactrag/path_index.hpp"
#include "exactrag/query.hpp"
#include "json.hpp"

namespace exactrag {

using Binding = std::map<std::string, std::string>;  // query vertex -> data vertex

/// Sorted "q=v" pairs joined by ';'. Ordering by query vertex id.
std::string binding_signature(const Binding& b);

struct MatchedSubgraph {
  Binding binding;
  std::vector<std::string> edges;  // data edge ids, sorted

  std::string signature() const { return binding_signature(binding); }
};

struct FallbackSubgraph {
  std::vector<std::string> seeds;     // resolved known query vertices
  std::vector<std::string> vertices;  // kept vertices, seeds first
  std::vector<std::string> edges;     // every data edge among the kept vertices
  bool unresolved = false;            // no known vertex could be resolved
  bool truncated = false;

  nlohmann::json to_json() const;
};

struct MatchStats {
  std::size_t completions = 0;
  std::vector<std::size_t> candidates_per_path;  // summed over completions
  std::size_t combinations_tried = 0;
  std::size_t pruned = 0;  // partial joins rejected by a conflict or injectivity
  TraversalStats traversal;
  bool unknown_without_candidates = false;

  nlohmann::json to_json() const;
};

struct MatchResult {
  std::vector<MatchedSubgraph> exact;  // sorted by signature
  std::optional<FallbackSubgraph> fallback;
  MatchStats stats;

  nlohmann::json to_json() const;
};

struct MatchOptions {
  std::size_t assembly_cap = 100000;  // A_max
  std::size_t fallback_cap = 64;      // B_max
};

/// Label and dominance encoders that must agree with the ones used to build
/// the index.
struct EncoderContext {
  LabelEmbedder& labels;
  const DominanceModel& dominance;
};

/// Joins per-path candidates into injective, conflict-free bindings and
/// re-verifies every query edge against `g`. `q` must be fully labelled.
/// Throws CapacityError once more than `cap` join steps have been tried in
/// this call.
std::vector<MatchedSubgraph> assemble_subgraphs(const Graph& q, const QueryPlan& plan,
                                                const std::vector<std::vector<Candidate>>& candidates,
                                                const PathIndex& idx, const Graph& g,
                                                std::size_t cap, MatchStats* stats = nullptr);

/// Retrieves candidates for every completion, assembles exact subgraphs and,
/// when none exist, builds the fallback neighbourhood. Throws
/// StateMismatchError if `idx` was built for another graph.
MatchResult match_query(const NormalizedQuery& q, const QueryPlan& plan,
                        const std::vector<CompletedPlan>& completions, const PathIndex& idx,
                        const Graph& g, EncoderContext encoders, const MatchOptions& options = {});

/// 1-hop neighbourhood of the known query vertices. A vertex with an entity
/// mapping resolves to the mapped data vertex, otherwise to every data vertex
/// with the same label. Keeps at most `cap` vertices: seeds first, then
/// neighbours, each ordered by degree (descending) and id.
FallbackSubgraph fallback_subgraph(const NormalizedQuery& q, const Graph& g, std::size_t cap = 64);

/// Reference matcher: every injective label-consistent mapping of q into g
/// that maps query edges onto adjacent vertex pairs (UNK matches any label).
/// Throws CapacityError when g has more than `max_vertices` vertices.
std::vector<MatchedSubgraph> brute_force_match(const Graph& q, const Graph& g,
                                               std::size_t max_vertices = 50);

/// Independent check that `m` is an injective, label-consistent embedding of q.
bool verify_match(const Graph& q, const Graph& g, const Binding& binding);

}  // namespace exactrag
