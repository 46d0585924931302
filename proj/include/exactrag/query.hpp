#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "exactrag/embeddings.hpp"
#include "exactrag/graph.hpp"
#include "exactrag/path_index.hpp"
#include "exactrag/text_provider.hpp"
#include "json.hpp"

namespace exactrag {

/// Instruction sent to an LLM to turn a question into the query grammar.
std::string render_query_extraction_prompt(const std::string& question);

/// Parses query-grammar text: `(id<|>label<|>desc)` vertices and
/// `(id<|>src<|>dst<|>)` edges. Labels "UNK"/"unk"/"UNKNOWN" become the
/// reserved UNK label with an empty description. Throws ExtractionError,
/// carrying the raw text, when nothing usable is found.
Graph parse_query_graph(std::string_view text);

/// JSON query: {"vertices"|"nodes": [...], "edges": [...]}.
Graph query_graph_from_json(const nlohmann::json& doc);

/// With a provider, renders the extraction prompt and parses the reply;
/// without one, `text` must already be in the query grammar.
Graph extract_query_graph(const std::string& text, TextProvider* provider);

struct EntityMapping {
  std::string original_label;
  std::string vertex;  // matched data vertex
  double similarity = 0.0;
  bool low_confidence = false;

  friend bool operator==(const EntityMapping&, const EntityMapping&) = default;
};

struct NormalizedQuery {
  Graph graph;
  std::map<std::string, EntityMapping> mappings;  // query vertex id -> mapping

  nlohmann::json to_json() const;
};

/// Replaces every known query label by the label of its nearest data vertex
/// (exact cosine scan). UNK vertices are untouched. Mappings below `threshold`
/// are kept but flagged low-confidence. Re-normalizing keeps the first
/// pass's provenance.
NormalizedQuery normalize_entities(const NormalizedQuery& q, const Graph& g,
                                   const EmbeddingTable& data_x, LabelEmbedder& embedder,
                                   std::optional<double> threshold = std::nullopt);
NormalizedQuery normalize_entities(const Graph& q, const Graph& g, const EmbeddingTable& data_x,
                                   LabelEmbedder& embedder,
                                   std::optional<double> threshold = std::nullopt);

/// [ceil(d/2), d] for a connected query of diameter d.
std::pair<std::size_t, std::size_t> path_length_range(const Graph& q);

/// True when every edge of q lies on some simple path of length l.
bool can_cover(const Graph& q, std::size_t l);

/// Lengths in path_length_range(q) for which can_cover holds, ascending.
std::vector<std::size_t> valid_path_lengths(const Graph& q);

/// w(p) = -(sum of query-graph degrees along p).
long path_weight(const Graph& q, const Path& p);

struct QueryPlan {
  std::vector<Path> paths;
  std::size_t l = 0;
  long cost = 0;

  nlohmann::json to_json() const;
};

/// Greedy covering decomposition seeded at the highest-degree vertex; the
/// cheapest plan over all initial paths wins.
QueryPlan decompose_into_paths(const Graph& q, std::size_t l);

/// Default plan length: the largest valid l.
std::size_t default_path_length(const Graph& q);

struct LabelCompletion {
  std::map<std::string, std::vector<std::string>> candidates;  // UNK vertex -> labels
  std::vector<std::string> empty;                              // UNK vertices with no candidate
  TraversalStats stats;

  bool complete() const { return empty.empty(); }
  nlohmann::json to_json() const;
};

/// Candidate labels for every UNK vertex, read off index paths whose labels
/// agree with the known positions of plan paths (union over paths). An UNK
/// vertex whose plan paths have no known position gets every indexed label.
LabelCompletion complete_unknown_labels(const Graph& q, const QueryPlan& plan, const PathIndex& idx,
                                        const EmbeddingTable& query_x);

struct CompletedPlan {
  Graph query;                                 // UNK labels replaced
  std::map<std::string, std::string> assignment;  // UNK vertex -> label
};

inline constexpr std::size_t kDefaultCompletionCap = 10000;

/// Product size of the candidate lists (saturating).
std::size_t completion_count(const LabelCompletion& u);

/// One fully labelled copy of q per label combination, ordered
/// lexicographically with the last unknown vertex varying fastest. Returns
/// an empty list when some vertex has no candidates. Throws CapacityError
/// above `cap`.
std::vector<CompletedPlan> enumerate_completions(const Graph& q, const LabelCompletion& u,
                                                 std::size_t cap = kDefaultCompletionCap);

}  // namespace exactrag
