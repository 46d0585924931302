#include "exactrag/query.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <set>

#include "exactrag/errors.hpp"

namespace exactrag {
namespace {

bool is_unknown_token(std::string_view label) {
  std::string lower;
  for (char c : label) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "unk" || lower == "unknown";
}

Graph build_query(const std::vector<Vertex>& vertices, const std::vector<Edge>& edges,
                  const std::string& raw) {
  Graph q;
  for (auto v : vertices) {
    if (v.id.empty() || v.label.empty()) continue;
    if (is_unknown_token(v.label)) {
      v.label = std::string(kUnknownLabel);
      v.description.clear();
    }
    q.add_vertex(std::move(v));
  }
  for (const auto& e : edges) q.add_edge(e);
  if (q.empty()) throw ExtractionError("no query vertices could be extracted", raw);
  return q;
}

}  // namespace

std::string render_query_extraction_prompt(const std::string& question) {
  return "Convert the question below into a query graph.\n"
         "Vertices: one record per entity mentioned, written as (<id><|><label><|><description>).\n"
         "The entity the question asks for gets the label UNK and an empty description.\n"
         "Edges: one record per pair of related entities, written as (<id><|><source id><|><target id><|>).\n"
         "Separate records with # and finish with <|COMPLETE|>.\n"
         "Text: " +
         question + "\n";
}

Graph parse_query_graph(std::string_view text) {
  const std::string raw(text);
  std::vector<RawRecord> records;
  try {
    records = split_records(text);
  } catch (const InputError& e) {
    throw ExtractionError(std::string("unparseable query graph: ") + e.what(), raw);
  }
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  for (const auto& r : records) {
    if (r.size() == 3) {
      vertices.push_back({r[0], r[1], r[2]});
    } else if (r.size() == 4) {
      edges.push_back({r[0], r[1], r[2], r[3]});
    }
  }
  return build_query(vertices, edges, raw);
}

Graph query_graph_from_json(const nlohmann::json& doc) {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  try {
    const auto& vs = doc.contains("vertices") ? doc.at("vertices") : doc.at("nodes");
    for (const auto& v : vs) {
      vertices.push_back({v.at("id").get<std::string>(), v.at("label").get<std::string>(),
                          v.value("description", std::string())});
    }
    for (const auto& e : doc.value("edges", nlohmann::json::array())) {
      edges.push_back({e.at("id").get<std::string>(), e.at("src").get<std::string>(),
                       e.at("dst").get<std::string>(), e.value("description", std::string())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ExtractionError(std::string("malformed JSON query: ") + e.what(), doc.dump());
  }
  return build_query(vertices, edges, doc.dump());
}

Graph extract_query_graph(const std::string& text, TextProvider* provider) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ExtractionError("empty query text", text);
  }
  if (provider == nullptr) return parse_query_graph(text);
  const std::string reply = provider->complete(render_query_extraction_prompt(text));
  if (reply.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ExtractionError("query extraction returned no output", reply);
  }
  return parse_query_graph(reply);
}

// ---------------------------------------------------------------------------

nlohmann::json NormalizedQuery::to_json() const {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [id, mp] : mappings) {
    m[id] = {{"original_label", mp.original_label},
             {"vertex", mp.vertex},
             {"similarity", mp.similarity},
             {"low_confidence", mp.low_confidence}};
  }
  return {{"graph", graph_to_json(graph)}, {"mappings", std::move(m)}};
}

NormalizedQuery normalize_entities(const NormalizedQuery& q, const Graph& g,
                                   const EmbeddingTable& data_x, LabelEmbedder& embedder,
                                   std::optional<double> threshold) {
  if (g.empty() || data_x.empty()) throw InputError("cannot normalize against an empty data graph");
  NormalizedQuery out{q.graph, {}};
  for (const auto& [id, v] : q.graph.vertices()) {
    if (is_unknown_label(v.label)) continue;
    const auto nearest = nearest_label(embedder.embed(v.label), data_x);
    out.graph.set_label(id, g.vertex(nearest.id).label);
    auto prev = q.mappings.find(id);
    if (prev != q.mappings.end() && prev->second.vertex == nearest.id) {
      out.mappings[id] = prev->second;
      continue;
    }
    EntityMapping mapping{v.label, nearest.id, nearest.similarity, false};
    if (prev != q.mappings.end()) mapping.original_label = prev->second.original_label;
    if (threshold) mapping.low_confidence = nearest.similarity < *threshold;
    out.mappings[id] = mapping;
  }
  return out;
}

NormalizedQuery normalize_entities(const Graph& q, const Graph& g, const EmbeddingTable& data_x,
                                   LabelEmbedder& embedder, std::optional<double> threshold) {
  return normalize_entities(NormalizedQuery{q, {}}, g, data_x, embedder, threshold);
}

// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> path_length_range(const Graph& q) {
  if (q.edge_count() == 0) throw InputError("query graph has no edges");
  const std::size_t d = graph_diameter(q);
  return {(d + 1) / 2, d};
}

bool can_cover(const Graph& q, std::size_t l) {
  if (l == 0) return false;
  std::set<std::string> covered;
  for (const auto& p : enumerate_paths(q, l)) covered.insert(p.edges.begin(), p.edges.end());
  return covered.size() == q.edge_count();
}

std::vector<std::size_t> valid_path_lengths(const Graph& q) {
  const auto [lo, hi] = path_length_range(q);
  std::vector<std::size_t> out;
  for (std::size_t l = lo; l <= hi; ++l) {
    if (can_cover(q, l)) out.push_back(l);
  }
  return out;
}

std::size_t default_path_length(const Graph& q) {
  const auto valid = valid_path_lengths(q);
  if (valid.empty()) throw InputError("query graph admits no covering path length");
  return valid.back();
}

long path_weight(const Graph& q, const Path& p) {
  long w = 0;
  for (const auto& v : p.vertices) w -= static_cast<long>(q.degree(v));
  return w;
}

nlohmann::json QueryPlan::to_json() const {
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : paths) ps.push_back({{"vertices", p.vertices}, {"edges", p.edges}});
  return {{"l", l}, {"cost", cost}, {"paths", std::move(ps)}};
}

QueryPlan decompose_into_paths(const Graph& q, std::size_t l) {
  const auto [lo, hi] = path_length_range(q);
  if (l < lo || l > hi) {
    throw InputError("path length " + std::to_string(l) + " is outside the valid range [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  const auto all = enumerate_paths(q, l);
  {
    std::set<std::string> coverable;
    for (const auto& p : all) coverable.insert(p.edges.begin(), p.edges.end());
    if (coverable.size() != q.edge_count()) {
      throw InputError("paths of length " + std::to_string(l) +
                       " cannot cover every query edge; choose another length");
    }
  }

  std::string start;
  std::size_t best_degree = 0;
  for (const auto& [id, v] : q.vertices()) {
    if (start.empty() || q.degree(id) > best_degree) {
      start = id;
      best_degree = q.degree(id);
    }
  }

  std::vector<long> weights;
  weights.reserve(all.size());
  for (const auto& p : all) weights.push_back(path_weight(q, p));

  std::optional<QueryPlan> best;
  for (std::size_t init = 0; init < all.size(); ++init) {
    const auto& p0 = all[init];
    if (std::find(p0.vertices.begin(), p0.vertices.end(), start) == p0.vertices.end()) continue;

    QueryPlan plan;
    plan.l = l;
    plan.paths.push_back(p0);
    plan.cost = weights[init];
    std::set<std::string> covered(p0.edges.begin(), p0.edges.end());
    std::set<std::string> touched(p0.vertices.begin(), p0.vertices.end());

    while (covered.size() < q.edge_count()) {
      std::optional<std::size_t> pick;
      std::size_t pick_overlap = 0;
      for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& p = all[i];
        const bool connects = std::any_of(p.vertices.begin(), p.vertices.end(),
                                          [&](const std::string& v) { return touched.count(v) > 0; });
        if (!connects) continue;
        const auto overlap = static_cast<std::size_t>(std::count_if(
            p.edges.begin(), p.edges.end(), [&](const std::string& e) { return covered.count(e) > 0; }));
        if (overlap == p.edges.size()) continue;
        // Ties on (overlap, weight) fall to the earlier, lexicographically smaller path.
        if (!pick || overlap < pick_overlap ||
            (overlap == pick_overlap && weights[i] < weights[*pick])) {
          pick = i;
          pick_overlap = overlap;
        }
      }
      if (!pick) throw InputError("query graph is not connected; cannot extend the plan");
      const auto& p = all[*pick];
      plan.paths.push_back(p);
      plan.cost += weights[*pick];
      covered.insert(p.edges.begin(), p.edges.end());
      touched.insert(p.vertices.begin(), p.vertices.end());
    }
    if (!best || plan.cost < best->cost) best = std::move(plan);
  }
  if (!best) throw InputError("no path of length " + std::to_string(l) + " passes through " + start);
  return *best;
}

// ---------------------------------------------------------------------------

nlohmann::json LabelCompletion::to_json() const {
  return {{"candidates", candidates}, {"empty", empty}, {"traversal", stats.to_json()}};
}

LabelCompletion complete_unknown_labels(const Graph& q, const QueryPlan& plan, const PathIndex& idx,
                                        const EmbeddingTable& query_x) {
  LabelCompletion out;
  std::set<std::string> unknown;
  for (const auto& [id, v] : q.vertices()) {
    if (is_unknown_label(v.label)) unknown.insert(id);
  }
  if (unknown.empty()) return out;

  std::set<std::string> on_plan, constrained;
  std::vector<PathProbe> probes;
  for (const auto& p : plan.paths) {
    bool has_unknown = false;
    for (const auto& v : p.vertices) {
      if (unknown.count(v)) {
        has_unknown = true;
        on_plan.insert(v);
      }
    }
    if (!has_unknown) continue;
    auto probe = make_probe(q, p, query_x, nullptr, idx.F());
    if (probe.known_positions() == 0) continue;
    for (const auto& v : p.vertices) {
      if (unknown.count(v)) constrained.insert(v);
    }
    probes.push_back(std::move(probe));
  }
  for (const auto& v : unknown) {
    if (!on_plan.count(v)) throw InputError("unknown vertex " + v + " lies on no plan path");
  }

  const auto matches = idx.retrieve_label_matches(probes, &out.stats);
  std::map<std::string, std::set<std::string>> found;
  for (const auto& v : unknown) found[v];
  const std::size_t l = idx.l();
  for (std::size_t k = 0; k < probes.size(); ++k) {
    for (const auto& c : matches[k]) {
      const auto& entry = idx.entries()[c.entry];
      for (std::size_t i = 0; i <= l; ++i) {
        if (probes[k].labels[i]) continue;
        found[probes[k].vertices[i]].insert(entry.labels[c.reversed ? l - i : i]);
      }
    }
  }
  // Unknown vertices whose plan paths carry no known label accept any label
  // of the index; assembly keeps only the consistent ones.
  std::set<std::string> every_label;
  for (const auto& v : unknown) {
    if (constrained.count(v)) continue;
    if (every_label.empty()) {
      for (const auto& e : idx.entries()) every_label.insert(e.labels.begin(), e.labels.end());
    }
    found[v] = every_label;
  }
  for (auto& [v, labels] : found) {
    out.candidates[v] = {labels.begin(), labels.end()};
    if (labels.empty()) out.empty.push_back(v);
  }
  return out;
}

std::size_t completion_count(const LabelCompletion& u) {
  std::size_t total = 1;
  for (const auto& [v, labels] : u.candidates) {
    if (labels.empty()) return 0;
    if (total > std::numeric_limits<std::size_t>::max() / labels.size()) {
      return std::numeric_limits<std::size_t>::max();
    }
    total *= labels.size();
  }
  return total;
}

std::vector<CompletedPlan> enumerate_completions(const Graph& q, const LabelCompletion& u,
                                                 std::size_t cap) {
  for (const auto& [id, v] : q.vertices()) {
    if (is_unknown_label(v.label) && !u.candidates.count(id)) {
      throw InputError("no candidate list for unknown vertex " + id);
    }
  }
  const std::size_t total = completion_count(u);
  if (total == 0) return {};
  if (total > cap) {
    throw CapacityError(std::to_string(total) + " label combinations exceed the cap of " +
                        std::to_string(cap) + "; raise the cap or add constraints to the question");
  }
  std::vector<std::pair<std::string, const std::vector<std::string>*>> slots;
  for (const auto& [v, labels] : u.candidates) slots.emplace_back(v, &labels);

  std::vector<CompletedPlan> out;
  out.reserve(total);
  std::vector<std::size_t> digit(slots.size(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    CompletedPlan cp{q, {}};
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto& label = (*slots[s].second)[digit[s]];
      cp.query.set_label(slots[s].first, label);
      cp.assignment[slots[s].first] = label;
    }
    out.push_back(std::move(cp));
    for (std::size_t s = slots.size(); s-- > 0;) {
      if (++digit[s] < slots[s].second->size()) break;
      digit[s] = 0;
    }
  }
  return out;
}

}  // namespace exactrag
