#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exactrag/embeddings.hpp"
#include "exactrag/graph.hpp"
#include "json.hpp"

namespace exactrag {

/// Slack used by every embedding comparison in the index.
inline constexpr double kIndexEpsilon = 1e-6;

struct Mbr {
  Vec low;
  Vec high;

  static Mbr of(const Vec& point) { return {point, point}; }
  void expand(const Vec& point);
  void expand(const Mbr& other);
  bool empty() const { return low.empty(); }
  double margin() const;
  double area() const;
  Vec center() const;

  friend bool operator==(const Mbr&, const Mbr&) = default;
};

double overlap_area(const Mbr& a, const Mbr& b);

/// One indexed path in canonical orientation.
struct IndexEntry {
  Path path;
  std::vector<std::string> labels;
  std::vector<std::uint64_t> label_keys;
  Vec o0;  // (l+1)*F label embedding
  Vec o;   // (l+1)*d dominance embedding
};

struct IndexNode {
  std::uint32_t level = 0;               // 0 for leaves
  std::vector<std::uint32_t> children;   // entry ids at leaves, node ids otherwise
  Mbr mbr0;                              // over label embeddings
  Mbr mbr;                               // over dominance embeddings
};

/// A query path as presented to the index. `labels[i]` is empty for a
/// wildcard position, whose `o0` segment is all zeros.
struct PathProbe {
  std::vector<std::string> vertices;
  std::vector<std::optional<std::string>> labels;
  Vec o0;
  Vec o;  // empty for label-completion probes

  std::size_t length() const { return vertices.empty() ? 0 : vertices.size() - 1; }
  std::size_t known_positions() const;
  PathProbe reversed(std::size_t F, std::size_t d) const;
};

/// `reversed` is true when the probe matched the entry back to front, i.e.
/// probe position i binds entry.path.vertices[l - i].
struct Candidate {
  std::uint32_t entry = 0;
  bool reversed = false;

  friend bool operator==(const Candidate&, const Candidate&) = default;
  friend auto operator<=>(const Candidate&, const Candidate&) = default;
};

struct TraversalStats {
  std::size_t nodes_visited = 0;
  std::size_t nodes_pruned_semantic = 0;
  std::size_t nodes_pruned_structural = 0;
  std::size_t entries_checked = 0;
  bool early_exit = false;
  std::vector<std::size_t> per_level_counts;  // visits by depth, root = 0
  std::size_t missed_candidates = 0;          // audit mode only

  void merge(const TraversalStats& other);
  nlohmann::json to_json() const;
};

struct IndexParams {
  std::size_t min_fanout = 4;
  std::size_t max_fanout = 16;
};

/// R*-tree over fixed-length paths with a label-embedding MBR and a
/// dominance-embedding MBR per node.
class PathIndex {
 public:
  PathIndex(std::size_t l, std::size_t F, std::size_t d, IndexParams params = {});

  /// Sort-tile-recursive packing. Throws InputError on mixed dimensions.
  static PathIndex bulk_load(std::vector<IndexEntry> entries, std::size_t l, std::size_t F,
                             std::size_t d, IndexParams params = {});

  /// R* insertion with forced reinsert and margin/overlap splits.
  void insert(IndexEntry entry);

  /// Exact candidates per probe: label identity at every position and
  /// o(probe) <= o(entry) within kIndexEpsilon. Both orientations are tried.
  std::vector<std::vector<Candidate>> retrieve_exact(const std::vector<PathProbe>& probes,
                                                     TraversalStats* stats = nullptr,
                                                     bool audit = false) const;

  /// Entries whose labels agree with every known probe position (both
  /// orientations). Throws InputError for a probe with no known position.
  std::vector<std::vector<Candidate>> retrieve_label_matches(const std::vector<PathProbe>& probes,
                                                             TraversalStats* stats = nullptr,
                                                             bool audit = false) const;

  std::size_t l() const { return l_; }
  std::size_t F() const { return F_; }
  std::size_t d() const { return d_; }
  const IndexParams& params() const { return params_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const std::vector<IndexNode>& nodes() const { return nodes_; }
  std::optional<std::uint32_t> root() const { return root_; }
  std::size_t height() const;
  std::size_t internal_node_count() const;

  /// Free-form build metadata persisted in the file header.
  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }
  std::uint64_t graph_fingerprint() const { return fingerprint_; }
  void set_graph_fingerprint(std::uint64_t fp) { fingerprint_ = fp; }

  /// Structural problems (fan-out, balance, MBR tightness, reachability);
  /// empty when the tree is well-formed.
  std::vector<std::string> validate() const;

  void save(const std::filesystem::path& path) const;
  static PathIndex load(const std::filesystem::path& path);
  nlohmann::json header() const;

 private:
  struct Probe;
  template <bool Exact>
  std::vector<std::vector<Candidate>> traverse(const std::vector<PathProbe>& probes,
                                               TraversalStats* stats, bool audit) const;

  void check_entry(const IndexEntry& e) const;
  void recompute_mbr(std::uint32_t node);
  Mbr child_mbr0(const IndexNode& n, std::uint32_t child) const;
  Mbr child_mbr(const IndexNode& n, std::uint32_t child) const;
  std::vector<std::uint32_t> choose_path(const Mbr& item_mbr, std::uint32_t level) const;
  void insert_item(std::uint32_t item, std::uint32_t level, std::vector<bool>& reinserted);
  void handle_overflow(std::vector<std::uint32_t> path, std::vector<bool>& reinserted);
  std::uint32_t split(std::uint32_t node);

  std::size_t l_, F_, d_;
  IndexParams params_;
  std::vector<IndexEntry> entries_;
  std::vector<IndexNode> nodes_;
  std::optional<std::uint32_t> root_;
  std::uint64_t fingerprint_ = 0;
  nlohmann::json metadata_ = nlohmann::json::object();
};

/// One entry per canonical path of length l in `g`.
std::vector<IndexEntry> make_index_entries(const Graph& g, std::size_t l, const EmbeddingTable& x,
                                           const EmbeddingTable& node_dominance);

/// Builds a probe for a query path; UNK vertices become wildcards.
/// `node_dominance` may be null for label-completion probes.
PathProbe make_probe(const Graph& q, const Path& p, const EmbeddingTable& x,
                     const EmbeddingTable* node_dominance, std::size_t F);

PathIndex build_index(const std::vector<IndexEntry>& entries, std::size_t l, IndexParams params = {});

/// Applies the leaf predicates of retrieve_exact to every entry.
std::vector<std::vector<Candidate>> linear_scan_reference(const std::vector<IndexEntry>& entries,
                                                          const std::vector<PathProbe>& probes,
                                                          std::size_t F, std::size_t d);

/// Leaf predicate of retrieve_label_matches applied to every entry.
std::vector<std::vector<Candidate>> linear_scan_labels(const std::vector<IndexEntry>& entries,
                                                       const std::vector<PathProbe>& probes,
                                                       std::size_t F, std::size_t d);

}  // namespace exactrag
