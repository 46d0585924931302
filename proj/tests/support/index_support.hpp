#pragma once

#include <set>
#include <vector>

#include "exactrag/dominance.hpp"
#include "exactrag/embeddings.hpp"
#include "exactrag/matcher.hpp"
#include "exactrag/path_index.hpp"
#include "exactrag/query.hpp"

namespace testsupport {

/// Data graph with mock label embeddings, count-oracle dominance and an index.
struct BuiltIndex {
  exactrag::Graph g;
  exactrag::EmbeddingTable x;
  exactrag::EmbeddingTable o;
  std::vector<exactrag::IndexEntry> entries;
  exactrag::PathIndex idx;
};

inline BuiltIndex build_oracle_index(exactrag::Graph g, std::size_t l, std::size_t F = 8, std::size_t d = 8,
                                     exactrag::IndexParams params = {}) {
  exactrag::MockEmbedder m(F, 1);
  exactrag::CountOracleModel model(d);
  auto x = exactrag::embed_graph_labels(g, m);
  auto o = exactrag::node_dominance_embeddings(g, x, model);
  auto entries = exactrag::make_index_entries(g, l, x, o);
  auto idx = exactrag::PathIndex::bulk_load(entries, l, F, d, params);
  idx.set_graph_fingerprint(g.fingerprint());
  return {std::move(g), std::move(x), std::move(o), std::move(entries), std::move(idx)};
}

/// Exact probes for every length-l path of a fully labelled query, encoded
/// the same way the index was.
inline std::vector<exactrag::PathProbe> exact_probes(const exactrag::Graph& q, std::size_t l, std::size_t F = 8,
                                                     std::size_t d = 8) {
  exactrag::MockEmbedder m(F, 1);
  exactrag::CountOracleModel model(d);
  const auto qx = exactrag::embed_graph_labels(q, m);
  const auto qo = exactrag::node_dominance_embeddings(q, qx, model);
  std::vector<exactrag::PathProbe> out;
  for (const auto& p : exactrag::enumerate_paths(q, l)) out.push_back(exactrag::make_probe(q, p, qx, &qo, F));
  return out;
}

/// Independent statement of the leaf predicate: labels equal position by
/// position and every dominance coordinate of the probe at most the entry's
/// (plus 1e-6), in either orientation.
inline std::vector<std::set<exactrag::Candidate>> oracle_exact(const std::vector<exactrag::IndexEntry>& entries,
                                                               const std::vector<exactrag::PathProbe>& probes,
                                                               std::size_t d) {
  std::vector<std::set<exactrag::Candidate>> out(probes.size());
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const auto& pr = probes[pi];
    const std::size_t n = pr.vertices.size();
    for (std::uint32_t ei = 0; ei < entries.size(); ++ei) {
      const auto& e = entries[ei];
      if (e.labels.size() != n) continue;
      for (bool rev : {false, true}) {
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
          const std::size_t j = rev ? n - 1 - i : i;
          ok = pr.labels[i].has_value() && *pr.labels[i] == e.labels[j];
          for (std::size_t k = 0; k < d && ok; ++k) ok = pr.o[i * d + k] <= e.o[j * d + k] + 1e-6;
        }
        if (ok) out[pi].insert({ei, rev});
      }
    }
  }
  return out;
}

inline std::vector<std::set<exactrag::Candidate>> as_sets(const std::vector<std::vector<exactrag::Candidate>>& v) {
  std::vector<std::set<exactrag::Candidate>> out;
  for (const auto& c : v) out.emplace_back(c.begin(), c.end());
  return out;
}

/// Plan, label completion and exact matching of q against an oracle index.
inline exactrag::MatchResult match_with_oracle(const BuiltIndex& b, const exactrag::Graph& q, std::size_t l,
                                               exactrag::MatchOptions opts = {}) {
  exactrag::MockEmbedder m(b.idx.F(), 1);
  exactrag::CountOracleModel model(b.idx.d());
  const auto plan = exactrag::decompose_into_paths(q, l);
  const auto u = exactrag::complete_unknown_labels(q, plan, b.idx, exactrag::embed_graph_labels(q, m));
  std::vector<exactrag::CompletedPlan> completions;
  if (u.complete()) completions = exactrag::enumerate_completions(q, u);
  return exactrag::match_query(exactrag::NormalizedQuery{q, {}}, plan, completions, b.idx, b.g, {m, model}, opts);
}

}  // namespace testsupport
