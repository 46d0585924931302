#include "exactrag/matcher.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "exactrag/errors.hpp"

namespace exactrag {

std::string binding_signature(const Binding& b) {
  std::string s;
  for (const auto& [qv, dv] : b) {
    if (!s.empty()) s += ';';
    s += qv + "=" + dv;
  }
  return s;
}

nlohmann::json FallbackSubgraph::to_json() const {
  return {{"seeds", seeds},
          {"vertices", vertices},
          {"edges", edges},
          {"unresolved", unresolved},
          {"truncated", truncated}};
}

nlohmann::json MatchStats::to_json() const {
  return {{"completions", completions},
          {"candidates_per_path", candidates_per_path},
          {"combinations_tried", combinations_tried},
          {"pruned", pruned},
          {"unknown_without_candidates", unknown_without_candidates},
          {"traversal", traversal.to_json()}};
}

nlohmann::json MatchResult::to_json() const {
  nlohmann::json bindings = nlohmann::json::array();
  for (const auto& m : exact) bindings.push_back({{"binding", m.binding}, {"edges", m.edges}});
  nlohmann::json j = {{"bindings", std::move(bindings)}, {"stats", stats.to_json()}};
  j["fallback"] = fallback ? fallback->to_json() : nlohmann::json(nullptr);
  return j;
}

bool verify_match(const Graph& q, const Graph& g, const Binding& binding) {
  if (binding.size() != q.vertex_count()) return false;
  std::set<std::string> used;
  for (const auto& [qv, v] : q.vertices()) {
    auto it = binding.find(qv);
    if (it == binding.end() || !g.has_vertex(it->second)) return false;
    if (!used.insert(it->second).second) return false;
    if (!is_unknown_label(v.label) && g.vertex(it->second).label != v.label) return false;
  }
  for (const auto& e : q.edges()) {
    if (!g.adjacent(binding.at(e.src), binding.at(e.dst))) return false;
  }
  return true;
}

namespace {

std::vector<std::string> edges_of(const Graph& q, const Graph& g, const Binding& b) {
  std::set<std::string> ids;
  for (const auto& e : q.edges()) ids.insert(g.edge_between(b.at(e.src), b.at(e.dst))->id);
  return {ids.begin(), ids.end()};
}

}  // namespace

std::vector<MatchedSubgraph> assemble_subgraphs(const Graph& q, const QueryPlan& plan,
                                                const std::vector<std::vector<Candidate>>& candidates,
                                                const PathIndex& idx, const Graph& g,
                                                std::size_t cap, MatchStats* stats) {
  MatchStats local;
  MatchStats& st = stats != nullptr ? *stats : local;
  if (candidates.size() != plan.paths.size()) {
    throw InputError("one candidate list is required per plan path");
  }
  // Join order: smallest candidate list first, then always a path touching
  // an already bound query vertex when one exists.
  std::vector<std::size_t> order;
  {
    std::vector<bool> used(plan.paths.size(), false);
    std::set<std::string> bound;
    for (std::size_t step = 0; step < plan.paths.size(); ++step) {
      std::optional<std::size_t> pick;
      bool pick_touches = false;
      for (std::size_t i = 0; i < plan.paths.size(); ++i) {
        if (used[i]) continue;
        const auto& vs = plan.paths[i].vertices;
        const bool touches =
            std::any_of(vs.begin(), vs.end(), [&](const std::string& v) { return bound.count(v) > 0; });
        if (!pick || (touches && !pick_touches) ||
            (touches == pick_touches && candidates[i].size() < candidates[*pick].size())) {
          pick = i;
          pick_touches = touches;
        }
      }
      used[*pick] = true;
      order.push_back(*pick);
      bound.insert(plan.paths[*pick].vertices.begin(), plan.paths[*pick].vertices.end());
    }
  }

  const std::size_t l = idx.l();
  auto data_at = [&](const Candidate& c, std::size_t j) -> const std::string& {
    return idx.entries()[c.entry].path.vertices[c.reversed ? l - j : j];
  };
  std::size_t steps = 0;
  std::set<std::string> bound;
  std::vector<Binding> partial{Binding{}};
  for (auto pi : order) {
    const Path& qp = plan.paths[pi];
    // Key the candidates on the first position whose query vertex is bound.
    std::optional<std::size_t> key_pos;
    for (std::size_t j = 0; j <= l && !key_pos; ++j) {
      if (bound.count(qp.vertices[j])) key_pos = j;
    }
    std::map<std::string, std::vector<const Candidate*>, std::less<>> keyed;
    std::vector<const Candidate*> all;
    for (const auto& c : candidates[pi]) {
      if (key_pos) {
        keyed[data_at(c, *key_pos)].push_back(&c);
      } else {
        all.push_back(&c);
      }
    }
    static const std::vector<const Candidate*> kNone;

    std::vector<Binding> next;
    for (const auto& b : partial) {
      const std::vector<const Candidate*>* pool = &all;
      if (key_pos) {
        auto it = keyed.find(b.at(qp.vertices[*key_pos]));
        pool = it == keyed.end() ? &kNone : &it->second;
        st.pruned += candidates[pi].size() - pool->size();
      }
      for (const Candidate* c : *pool) {
        ++st.combinations_tried;
        if (++steps > cap) {
          throw CapacityError("subgraph assembly exceeded the cap of " + std::to_string(cap) +
                              " join steps");
        }
        Binding merged = b;
        bool ok = true;
        for (std::size_t j = 0; j <= l && ok; ++j) {
          const auto& qv = qp.vertices[j];
          const auto& dv = data_at(*c, j);
          auto it = merged.find(qv);
          if (it != merged.end()) {
            ok = it->second == dv;
            continue;
          }
          for (const auto& [other_q, other_d] : merged) {
            if (other_d == dv) {
              ok = false;
              break;
            }
          }
          if (ok) merged.emplace(qv, dv);
        }
        if (!ok) {
          ++st.pruned;
          continue;
        }
        next.push_back(std::move(merged));
      }
    }
    bound.insert(qp.vertices.begin(), qp.vertices.end());
    partial = std::move(next);
    if (partial.empty()) break;
  }

  std::map<std::string, MatchedSubgraph> unique;
  for (auto& b : partial) {
    if (!verify_match(q, g, b)) {
      ++st.pruned;
      continue;
    }
    auto sig = binding_signature(b);
    auto edges = edges_of(q, g, b);
    unique.emplace(std::move(sig), MatchedSubgraph{std::move(b), std::move(edges)});
  }
  std::vector<MatchedSubgraph> out;
  for (auto& [sig, m] : unique) out.push_back(std::move(m));
  return out;
}

MatchResult match_query(const NormalizedQuery& q, const QueryPlan& plan,
                        const std::vector<CompletedPlan>& completions, const PathIndex& idx,
                        const Graph& g, EncoderContext encoders, const MatchOptions& options) {
  if (idx.graph_fingerprint() != g.fingerprint()) {
    throw StateMismatchError("index was built for a different graph (fingerprint mismatch)");
  }
  if (plan.l != idx.l()) {
    throw StateMismatchError("query plan uses l=" + std::to_string(plan.l) + " but the index has l=" +
                             std::to_string(idx.l()));
  }
  if (encoders.labels.dim() != idx.F() || encoders.dominance.dim() != idx.d()) {
    throw StateMismatchError("embedding dimensions differ from the index build");
  }

  MatchResult result;
  MatchStats& st = result.stats;
  st.completions = completions.size();
  st.candidates_per_path.assign(plan.paths.size(), 0);
  std::map<std::string, Vec, std::less<>> label_cache;
  std::map<std::string, MatchedSubgraph> found;

  for (const auto& cp : completions) {
    EmbeddingTable qx;
    for (const auto& [id, v] : cp.query.vertices()) {
      if (is_unknown_label(v.label)) throw InputError("completion leaves vertex " + id + " unlabelled");
      auto it = label_cache.find(v.label);
      if (it == label_cache.end()) it = label_cache.emplace(v.label, encoders.labels.embed(v.label)).first;
      qx.emplace(id, it->second);
    }
    EmbeddingTable qo;
    for (const auto& [id, v] : cp.query.vertices()) {
      qo.emplace(id, encoders.dominance.embed(make_star_input(cp.query, star_subgraph(cp.query, id), qx)));
    }
    std::vector<PathProbe> probes;
    for (const auto& p : plan.paths) probes.push_back(make_probe(cp.query, p, qx, &qo, idx.F()));
    const auto candidates = idx.retrieve_exact(probes, &st.traversal);
    for (std::size_t i = 0; i < candidates.size(); ++i) st.candidates_per_path[i] += candidates[i].size();

    for (auto& m : assemble_subgraphs(cp.query, plan, candidates, idx, g, options.assembly_cap, &st)) {
      auto sig = m.signature();
      found.emplace(std::move(sig), std::move(m));
    }
  }
  for (auto& [sig, m] : found) result.exact.push_back(std::move(m));
  if (result.exact.empty()) result.fallback = fallback_subgraph(q, g, options.fallback_cap);
  return result;
}

FallbackSubgraph fallback_subgraph(const NormalizedQuery& q, const Graph& g, std::size_t cap) {
  FallbackSubgraph out;
  std::set<std::string> seeds;
  for (const auto& [id, v] : q.graph.vertices()) {
    if (is_unknown_label(v.label)) continue;
    auto m = q.mappings.find(id);
    if (m != q.mappings.end() && g.has_vertex(m->second.vertex)) {
      seeds.insert(m->second.vertex);
      continue;
    }
    for (auto& dv : g.vertices_with_label(v.label)) seeds.insert(std::move(dv));
  }
  if (seeds.empty()) {
    out.unresolved = true;
    return out;
  }
  auto by_degree = [&](const std::string& a, const std::string& b) {
    const auto da = g.degree(a), db = g.degree(b);
    return da != db ? da > db : a < b;
  };
  out.seeds.assign(seeds.begin(), seeds.end());
  std::sort(out.seeds.begin(), out.seeds.end(), by_degree);
  std::set<std::string> around;
  for (const auto& s : seeds) {
    for (const auto& n : g.neighbors(s)) {
      if (!seeds.count(n)) around.insert(n);
    }
  }
  std::vector<std::string> neighbours(around.begin(), around.end());
  std::sort(neighbours.begin(), neighbours.end(), by_degree);

  out.vertices = out.seeds;
  out.vertices.insert(out.vertices.end(), neighbours.begin(), neighbours.end());
  if (out.vertices.size() > cap) {
    out.vertices.resize(cap);
    out.truncated = true;
  }
  const std::set<std::string> kept(out.vertices.begin(), out.vertices.end());
  for (const auto& e : g.edges()) {
    if (kept.count(e.src) && kept.count(e.dst)) out.edges.push_back(e.id);
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

std::vector<MatchedSubgraph> brute_force_match(const Graph& q, const Graph& g,
                                               std::size_t max_vertices) {
  if (g.vertex_count() > max_vertices) {
    throw CapacityError("brute-force matching is limited to " + std::to_string(max_vertices) +
                        " data vertices (got " + std::to_string(g.vertex_count()) + ")");
  }
  if (q.empty()) return {};

  // Connected-first vertex order: each later vertex has a bound neighbour
  // whenever its component allows it.
  std::vector<std::string> order;
  std::set<std::string> placed;
  while (order.size() < q.vertex_count()) {
    std::string start;
    for (const auto& [id, v] : q.vertices()) {
      if (placed.count(id)) continue;
      if (start.empty() || q.degree(id) > q.degree(start)) start = id;
    }
    std::deque<std::string> queue{start};
    placed.insert(start);
    while (!queue.empty()) {
      auto cur = queue.front();
      queue.pop_front();
      order.push_back(cur);
      for (const auto& n : q.neighbors(cur)) {
        if (placed.insert(n).second) queue.push_back(n);
      }
    }
  }

  std::vector<MatchedSubgraph> out;
  Binding binding;
  std::set<std::string> used;
  std::vector<std::string> all_vertices;
  for (const auto& [id, v] : g.vertices()) all_vertices.push_back(id);

  std::function<void(std::size_t)> extend = [&](std::size_t k) {
    if (k == order.size()) {
      out.push_back({binding, edges_of(q, g, binding)});
      return;
    }
    const auto& qv = order[k];
    const auto& label = q.vertex(qv).label;
    std::vector<std::string> bound_nbrs;
    for (const auto& n : q.neighbors(qv)) {
      if (binding.count(n)) bound_nbrs.push_back(binding.at(n));
    }
    const auto& pool = bound_nbrs.empty() ? all_vertices : g.neighbors(bound_nbrs.front());
    for (const auto& dv : pool) {
      if (used.count(dv)) continue;
      if (!is_unknown_label(label) && g.vertex(dv).label != label) continue;
      bool adjacent_to_all = true;
      for (const auto& bn : bound_nbrs) {
        if (!g.adjacent(dv, bn)) {
          adjacent_to_all = false;
          break;
        }
      }
      if (!adjacent_to_all) continue;
      binding[qv] = dv;
      used.insert(dv);
      extend(k + 1);
      used.erase(dv);
      binding.erase(qv);
    }
  };
  extend(0);
  std::sort(out.begin(), out.end(),
            [](const MatchedSubgraph& a, const MatchedSubgraph& b) { return a.signature() < b.signature(); });
  return out;
}

}  // namespace exactrag
