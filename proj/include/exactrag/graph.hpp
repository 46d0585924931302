#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace exactrag {

/// Reserved label for the query target ("UNK" in the extraction grammar).
inline constexpr std::string_view kUnknownLabel = "UNK";

inline bool is_unknown_label(std::string_view label) { return label == kUnknownLabel; }

struct Vertex {
  std::string id;
  std::string label;
  std::string description;

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

struct Edge {
  std::string id;
  std::string src;
  std::string dst;
  std::string description;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed edge records with an undirected adjacency view.
///
/// Vertices are kept ordered by id, so every iteration order derived from a
/// Graph is deterministic. At most one edge record is stored per ordered pair.
class Graph {
 public:
  enum class EdgeStatus { kAdded, kDuplicatePair, kDuplicateId, kDangling, kSelfLoop };

  /// Returns false (and leaves the graph unchanged) when the id already exists.
  bool add_vertex(Vertex v);
  EdgeStatus add_edge(Edge e);
  /// Drops the vertex and every incident edge. Unknown ids are ignored.
  void remove_vertex(const std::string& id);
  /// Drops the edge record with this id. Unknown ids are ignored.
  void remove_edge(const std::string& edge_id);
  void set_label(const std::string& id, std::string label);

  bool has_vertex(std::string_view id) const;
  const Vertex& vertex(std::string_view id) const;
  const std::map<std::string, Vertex, std::less<>>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Undirected neighbors, sorted by id.
  const std::vector<std::string>& neighbors(std::string_view id) const;
  std::size_t degree(std::string_view id) const { return neighbors(id).size(); }
  bool adjacent(std::string_view a, std::string_view b) const;
  /// Edge record joining a and b in either direction; the smaller edge id wins
  /// when both directions exist. nullptr when not adjacent.
  const Edge* edge_between(std::string_view a, std::string_view b) const;
  const Edge* edge_by_id(std::string_view edge_id) const;

  std::vector<std::string> vertices_with_label(std::string_view label) const;

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return vertices_.empty(); }

  /// Content hash over vertices (id, label) and edges (id, src, dst).
  std::uint64_t fingerprint() const;

 private:
  void rebuild_indexes();

  std::map<std::string, Vertex, std::less<>> vertices_;
  std::vector<Edge> edges_;
  std::map<std::string, std::vector<std::string>, std::less<>> adjacency_;
  std::map<std::pair<std::string, std::string>, std::size_t> directed_;
  std::map<std::string, std::size_t, std::less<>> edge_ids_;
};

/// A simple path: `vertices` has one more element than `edges`.
struct Path {
  std::vector<std::string> vertices;
  std::vector<std::string> edges;

  std::size_t length() const { return edges.size(); }
  Path reversed() const;

  friend bool operator==(const Path&, const Path&) = default;
  friend auto operator<=>(const Path&, const Path&) = default;
};

/// A center vertex with a subset of its 1-hop neighbors.
struct StarSubgraph {
  std::string center;
  std::vector<std::string> leaves;  // sorted
  std::vector<std::string> edges;   // incident edge ids, aligned with leaves

  friend bool operator==(const StarSubgraph&, const StarSubgraph&) = default;
};

struct ParseDiagnostics {
  std::size_t malformed = 0;
  std::size_t dangling = 0;
  std::size_t duplicates = 0;
  std::size_t self_loops = 0;
  std::vector<std::string> messages;

  std::size_t rejected() const { return malformed + dangling + duplicates + self_loops; }
};

/// One `(f1<|>f2<|>...)` record of the delimiter grammar.
using RawRecord = std::vector<std::string>;

/// Splits a delimiter-format document into records. Throws InputError when the
/// `<|COMPLETE|>` terminator is missing. Records that do not look like
/// `( ... )` are reported through `malformed`.
std::vector<RawRecord> split_records(std::string_view text, std::size_t* malformed = nullptr,
                                     std::vector<std::string>* messages = nullptr);

/// Parses the node/edge delimiter format. Malformed, dangling, duplicate and
/// self-loop records are skipped and counted in `diag`.
Graph parse_graph_document(std::string_view text, ParseDiagnostics* diag = nullptr);
std::string serialize_graph_document(const Graph& g);

nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& doc, ParseDiagnostics* diag = nullptr);

/// Reads either format; JSON is detected by a leading '{'.
Graph load_graph_file(const std::filesystem::path& path, ParseDiagnostics* diag = nullptr);
void save_graph_file(const Graph& g, const std::filesystem::path& path);

/// Every simple path with exactly `l` edges under the undirected view, each
/// emitted once with the lexicographically smaller endpoint id first.
std::vector<Path> enumerate_paths(const Graph& g, std::size_t l);

/// Paths of length `l` that contain `vertex`, in canonical orientation.
std::vector<Path> paths_through(const Graph& g, std::size_t l, std::string_view vertex);

/// Canonical orientation: smaller endpoint id first.
Path canonical(Path p);

StarSubgraph star_subgraph(const Graph& g, std::string_view v);

/// Proper substructures of a star (same center, strict leaf subset). When
/// 2^|leaves| - 1 exceeds `cap`, returns a seeded sample of exactly `cap`
/// stars that always contains the center-only star and every
/// single-leaf-removed star (truncated to `cap` if those alone exceed it).
std::vector<StarSubgraph> enumerate_substructures(const StarSubgraph& s, std::size_t cap = 32,
                                                  std::uint64_t seed = 0);

std::vector<std::vector<std::string>> connected_components(const Graph& g);

/// Longest shortest-path length (in edges). Throws InputError naming the
/// components when the graph is disconnected.
std::size_t graph_diameter(const Graph& g);

}  // namespace exactrag
