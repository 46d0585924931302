#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "exactrag/graph.hpp"

namespace testsupport {

inline std::string fixture(const std::string& name) { return std::string(EXACTRAG_FIXTURES) + "/" + name; }

inline std::string vid(std::size_t i) {
  std::string s = std::to_string(i);
  return "v" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

/// Random simple graph on n vertices with labels drawn from `alphabet`.
inline exactrag::Graph random_graph(std::mt19937_64& rng, std::size_t n, double p, std::size_t alphabet,
                                    bool connected = false) {
  exactrag::Graph g;
  for (std::size_t i = 0; i < n; ++i) {
    g.add_vertex({vid(i), "L" + std::to_string(rng() % alphabet), ""});
  }
  std::bernoulli_distribution coin(p);
  std::size_t e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (connected && i > 0) {
      const std::size_t j = rng() % i;
      g.add_edge({"e" + std::to_string(e++), vid(j), vid(i), ""});
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coin(rng) && !g.adjacent(vid(i), vid(j))) g.add_edge({"e" + std::to_string(e++), vid(i), vid(j), ""});
    }
  }
  return g;
}

/// Connected query obtained from a random walk-grown subgraph of g, so at
/// least one match exists. UNK replaces each label with probability p_unk.
inline exactrag::Graph sample_query(std::mt19937_64& rng, const exactrag::Graph& g, std::size_t max_vertices,
                                    double p_unk, double p_extra_edge = 0.5) {
  std::vector<std::string> ids;
  for (const auto& [id, v] : g.vertices()) {
    if (g.degree(id) > 0) ids.push_back(id);
  }
  exactrag::Graph q;
  if (ids.empty()) return q;
  std::vector<std::string> chosen{ids[rng() % ids.size()]};
  std::map<std::string, std::string> qname;
  std::vector<std::pair<std::string, std::string>> tree;
  const std::size_t target = 2 + rng() % (max_vertices - 1);
  for (int attempts = 0; chosen.size() < target && attempts < 200; ++attempts) {
    const std::string from = chosen[rng() % chosen.size()];
    const auto& nb = g.neighbors(from);
    const std::string to = nb[rng() % nb.size()];
    if (std::find(chosen.begin(), chosen.end(), to) != chosen.end()) continue;
    chosen.push_back(to);
    tree.emplace_back(from, to);
  }
  std::bernoulli_distribution unk(p_unk), extra(p_extra_edge);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    qname[chosen[i]] = "q" + std::to_string(i);
    std::string label = g.vertex(chosen[i]).label;
    if (unk(rng)) label = std::string(exactrag::kUnknownLabel);
    q.add_vertex({qname[chosen[i]], label, ""});
  }
  std::size_t e = 0;
  for (const auto& [a, b] : tree) q.add_edge({"f" + std::to_string(e++), qname[a], qname[b], ""});
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    for (std::size_t j = i + 1; j < chosen.size(); ++j) {
      if (g.adjacent(chosen[i], chosen[j]) && !q.adjacent(qname[chosen[i]], qname[chosen[j]]) && extra(rng)) {
        q.add_edge({"f" + std::to_string(e++), qname[chosen[i]], qname[chosen[j]], ""});
      }
    }
  }
  // Every query needs at least one known label to be answerable.
  bool known = false;
  for (const auto& [id, v] : q.vertices()) known = known || !exactrag::is_unknown_label(v.label);
  if (!known) {
    const auto& first = chosen.front();
    q.set_label(qname[first], g.vertex(first).label);
  }
  return q;
}

/// Independent DFS path oracle: vertex sequences of every simple path with l
/// edges, keeping one orientation per path (smaller endpoint first).
inline std::set<std::vector<std::string>> oracle_paths(const exactrag::Graph& g, std::size_t l) {
  std::set<std::vector<std::string>> out;
  std::vector<std::string> stack;
  std::function<void(const std::string&)> dfs = [&](const std::string& v) {
    stack.push_back(v);
    if (stack.size() == l + 1) {
      if (stack.front() < stack.back()) out.insert(stack);
    } else {
      for (const auto& n : g.neighbors(v)) {
        if (std::find(stack.begin(), stack.end(), n) == stack.end()) dfs(n);
      }
    }
    stack.pop_back();
  };
  for (const auto& [id, v] : g.vertices()) dfs(id);
  return out;
}

inline std::size_t oracle_diameter(const exactrag::Graph& g) {
  std::size_t best = 0;
  for (const auto& [s, v] : g.vertices()) {
    std::map<std::string, std::size_t> dist{{s, 0}};
    std::queue<std::string> todo;
    todo.push(s);
    while (!todo.empty()) {
      auto u = todo.front();
      todo.pop();
      for (const auto& n : g.neighbors(u)) {
        if (dist.emplace(n, dist[u] + 1).second) todo.push(n);
      }
    }
    for (const auto& [k, d] : dist) best = std::max(best, d);
  }
  return best;
}

/// Independent backtracking matcher: the set of "q=v;..." signatures of every
/// injective label-consistent mapping that sends query edges to data
/// adjacencies. UNK query vertices accept any label.
inline std::set<std::string> oracle_matches(const exactrag::Graph& q, const exactrag::Graph& g) {
  std::vector<std::string> order;
  for (const auto& [id, v] : q.vertices()) order.push_back(id);
  std::map<std::string, std::string> bind;
  std::set<std::string> used, out;
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (i == order.size()) {
      std::string sig;
      for (const auto& [k, v] : bind) sig += (sig.empty() ? "" : ";") + k + "=" + v;
      out.insert(sig);
      return;
    }
    const auto& qv = q.vertex(order[i]);
    for (const auto& [id, dv] : g.vertices()) {
      if (used.count(id)) continue;
      if (!exactrag::is_unknown_label(qv.label) && qv.label != dv.label) continue;
      bool ok = true;
      for (const auto& qn : q.neighbors(qv.id)) {
        auto it = bind.find(qn);
        if (it != bind.end() && !g.adjacent(id, it->second)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      bind[qv.id] = id;
      used.insert(id);
      go(i + 1);
      bind.erase(qv.id);
      used.erase(id);
    }
  };
  go(0);
  return out;
}

}  // namespace testsupport
