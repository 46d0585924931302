#include "exactrag/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "exactrag/errors.hpp"
#include "exactrag/hashing.hpp"

namespace exactrag {
namespace {

constexpr std::string_view kFieldSep = "<|>";
constexpr std::string_view kTerminator = "<|COMPLETE|>";

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::vector<std::string> split_fields(std::string_view body) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto at = body.find(kFieldSep, start);
    if (at == std::string_view::npos) {
      fields.push_back(trim(body.substr(start)));
      break;
    }
    fields.push_back(trim(body.substr(start, at - start)));
    start = at + kFieldSep.size();
  }
  return fields;
}

// A ')' closes a record only when followed (modulo whitespace) by '#', the
// terminator, or the end of input. Descriptions may contain parentheses.
std::size_t find_record_end(std::string_view text, std::size_t open) {
  for (std::size_t j = text.find(')', open + 1); j != std::string_view::npos;
       j = text.find(')', j + 1)) {
    std::size_t k = j + 1;
    while (k < text.size() && is_space(text[k])) ++k;
    if (k == text.size() || text[k] == '#' || text.substr(k, kTerminator.size()) == kTerminator) {
      return j;
    }
  }
  return std::string_view::npos;
}

void check_serializable(std::string_view field) {
  if (field.find(kFieldSep) != std::string_view::npos ||
      field.find(kTerminator) != std::string_view::npos) {
    throw InputError("field contains a reserved delimiter: " + std::string(field));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

bool Graph::add_vertex(Vertex v) {
  if (vertices_.contains(v.id)) return false;
  adjacency_[v.id];
  const std::string id = v.id;
  vertices_.emplace(id, std::move(v));
  return true;
}

Graph::EdgeStatus Graph::add_edge(Edge e) {
  if (!vertices_.contains(e.src) || !vertices_.contains(e.dst)) return EdgeStatus::kDangling;
  if (e.src == e.dst) return EdgeStatus::kSelfLoop;
  if (edge_ids_.contains(e.id)) return EdgeStatus::kDuplicateId;
  auto key = std::make_pair(e.src, e.dst);
  if (directed_.contains(key)) return EdgeStatus::kDuplicatePair;

  auto insert_sorted = [](std::vector<std::string>& list, const std::string& id) {
    auto it = std::lower_bound(list.begin(), list.end(), id);
    if (it == list.end() || *it != id) list.insert(it, id);
  };
  insert_sorted(adjacency_[e.src], e.dst);
  insert_sorted(adjacency_[e.dst], e.src);
  directed_.emplace(std::move(key), edges_.size());
  edge_ids_.emplace(e.id, edges_.size());
  edges_.push_back(std::move(e));
  return EdgeStatus::kAdded;
}

void Graph::remove_vertex(const std::string& id) {
  if (!vertices_.contains(id)) return;
  vertices_.erase(id);
  std::erase_if(edges_, [&](const Edge& e) { return e.src == id || e.dst == id; });
  rebuild_indexes();
}

void Graph::remove_edge(const std::string& edge_id) {
  const auto before = edges_.size();
  std::erase_if(edges_, [&](const Edge& e) { return e.id == edge_id; });
  if (edges_.size() != before) rebuild_indexes();
}

void Graph::set_label(const std::string& id, std::string label) {
  auto it = vertices_.find(id);
  if (it == vertices_.end()) throw InputError("unknown vertex id: " + id);
  it->second.label = std::move(label);
}

void Graph::rebuild_indexes() {
  adjacency_.clear();
  directed_.clear();
  edge_ids_.clear();
  for (const auto& [id, v] : vertices_) adjacency_[id];
  std::vector<Edge> edges;
  edges.swap(edges_);
  for (auto& e : edges) add_edge(std::move(e));
}

bool Graph::has_vertex(std::string_view id) const { return vertices_.find(id) != vertices_.end(); }

const Vertex& Graph::vertex(std::string_view id) const {
  auto it = vertices_.find(id);
  if (it == vertices_.end()) throw InputError("unknown vertex id: " + std::string(id));
  return it->second;
}

const std::vector<std::string>& Graph::neighbors(std::string_view id) const {
  auto it = adjacency_.find(id);
  if (it == adjacency_.end()) throw InputError("unknown vertex id: " + std::string(id));
  return it->second;
}

bool Graph::adjacent(std::string_view a, std::string_view b) const {
  auto it = adjacency_.find(a);
  if (it == adjacency_.end()) return false;
  return std::binary_search(it->second.begin(), it->second.end(), b);
}

const Edge* Graph::edge_between(std::string_view a, std::string_view b) const {
  const Edge* best = nullptr;
  auto fwd = directed_.find({std::string(a), std::string(b)});
  if (fwd != directed_.end()) best = &edges_[fwd->second];
  auto bwd = directed_.find({std::string(b), std::string(a)});
  if (bwd != directed_.end()) {
    const Edge* other = &edges_[bwd->second];
    if (best == nullptr || other->id < best->id) best = other;
  }
  return best;
}

const Edge* Graph::edge_by_id(std::string_view edge_id) const {
  auto it = edge_ids_.find(edge_id);
  return it == edge_ids_.end() ? nullptr : &edges_[it->second];
}

std::vector<std::string> Graph::vertices_with_label(std::string_view label) const {
  std::vector<std::string> out;
  for (const auto& [id, v] : vertices_) {
    if (v.label == label) out.push_back(id);
  }
  return out;
}

std::uint64_t Graph::fingerprint() const {
  std::uint64_t h = fnv1a64("graph");
  for (const auto& [id, v] : vertices_) {
    h = mix64(h, fnv1a64(id));
    h = mix64(h, fnv1a64(v.label));
  }
  std::vector<const Edge*> sorted;
  sorted.reserve(edges_.size());
  for (const auto& e : edges_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const Edge* a, const Edge* b) { return a->id < b->id; });
  for (const Edge* e : sorted) {
    h = mix64(h, fnv1a64(e->id));
    h = mix64(h, fnv1a64(e->src));
    h = mix64(h, fnv1a64(e->dst));
  }
  return h;
}

Path Path::reversed() const {
  Path p{vertices, edges};
  std::reverse(p.vertices.begin(), p.vertices.end());
  std::reverse(p.edges.begin(), p.edges.end());
  return p;
}

Path canonical(Path p) {
  if (!p.vertices.empty() && p.vertices.back() < p.vertices.front()) return p.reversed();
  return p;
}

// ---------------------------------------------------------------------------
// Delimiter format

std::vector<RawRecord> split_records(std::string_view text, std::size_t* malformed,
                                     std::vector<std::string>* messages) {
  std::vector<RawRecord> records;
  bool terminated = false;
  std::size_t pos = 0;
  auto note = [&](const std::string& msg) {
    if (malformed != nullptr) ++*malformed;
    if (messages != nullptr) messages->push_back(msg);
  };
  while (pos < text.size()) {
    while (pos < text.size() && (is_space(text[pos]) || text[pos] == '#')) ++pos;
    if (pos >= text.size()) break;
    if (text.substr(pos, kTerminator.size()) == kTerminator) {
      terminated = true;
      break;
    }
    if (text[pos] == '(') {
      const auto end = find_record_end(text, pos);
      if (end == std::string_view::npos) {
        note("unterminated record at offset " + std::to_string(pos));
        break;
      }
      records.push_back(split_fields(text.substr(pos + 1, end - pos - 1)));
      pos = end + 1;
      continue;
    }
    // Garbage between records: skip to the next separator.
    const auto next = text.find('#', pos);
    note("unexpected text at offset " + std::to_string(pos));
    if (next == std::string_view::npos) {
      const auto term = text.find(kTerminator, pos);
      if (term == std::string_view::npos) break;
      pos = term;
    } else {
      pos = next;
    }
  }
  if (!terminated) throw InputError("document is missing the <|COMPLETE|> terminator");
  return records;
}

Graph parse_graph_document(std::string_view text, ParseDiagnostics* diag) {
  ParseDiagnostics local;
  ParseDiagnostics& d = diag != nullptr ? *diag : local;
  const auto records = split_records(text, &d.malformed, &d.messages);

  Graph g;
  std::vector<const RawRecord*> edge_records;
  for (const auto& r : records) {
    if (r.size() == 3) {
      if (r[0].empty() || r[1].empty()) {
        ++d.malformed;
        d.messages.push_back("node record with empty id or label");
        continue;
      }
      if (!g.add_vertex(Vertex{r[0], r[1], r[2]})) {
        ++d.duplicates;
        d.messages.push_back("duplicate node id " + r[0]);
      }
    } else if (r.size() == 4) {
      edge_records.push_back(&r);
    } else {
      ++d.malformed;
      d.messages.push_back("record with " + std::to_string(r.size()) + " fields");
    }
  }
  for (const RawRecord* r : edge_records) {
    const auto& f = *r;
    if (f[0].empty()) {
      ++d.malformed;
      d.messages.push_back("edge record with empty id");
      continue;
    }
    switch (g.add_edge(Edge{f[0], f[1], f[2], f[3]})) {
      case Graph::EdgeStatus::kAdded:
        break;
      case Graph::EdgeStatus::kDangling:
        ++d.dangling;
        d.messages.push_back("edge " + f[0] + " references unknown vertex (" + f[1] + ", " + f[2] + ")");
        break;
      case Graph::EdgeStatus::kSelfLoop:
        ++d.self_loops;
        d.messages.push_back("edge " + f[0] + " is a self-loop");
        break;
      case Graph::EdgeStatus::kDuplicateId:
      case Graph::EdgeStatus::kDuplicatePair:
        ++d.duplicates;
        d.messages.push_back("duplicate edge " + f[0]);
        break;
    }
  }
  return g;
}

std::string serialize_graph_document(const Graph& g) {
  std::string out;
  for (const auto& [id, v] : g.vertices()) {
    check_serializable(v.id);
    check_serializable(v.label);
    check_serializable(v.description);
    out += "(" + v.id + "<|>" + v.label + "<|>" + v.description + ")#";
  }
  for (const auto& e : g.edges()) {
    check_serializable(e.id);
    check_serializable(e.description);
    out += "(" + e.id + "<|>" + e.src + "<|>" + e.dst + "<|>" + e.description + ")#";
  }
  out += kTerminator;
  return out;
}

nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, v] : g.vertices()) {
    nodes.push_back({{"id", v.id}, {"label", v.label}, {"description", v.description}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges()) {
    edges.push_back({{"id", e.id}, {"src", e.src}, {"dst", e.dst}, {"description", e.description}});
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

Graph graph_from_json(const nlohmann::json& doc, ParseDiagnostics* diag) {
  ParseDiagnostics local;
  ParseDiagnostics& d = diag != nullptr ? *diag : local;
  if (!doc.is_object()) throw InputError("graph JSON must be an object");
  Graph g;
  auto text = [](const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    return (it != obj.end() && it->is_string()) ? it->get<std::string>() : std::string();
  };
  for (const auto& n : doc.value("nodes", nlohmann::json::array())) {
    Vertex v{text(n, "id"), text(n, "label"), text(n, "description")};
    if (v.id.empty() || v.label.empty()) {
      ++d.malformed;
      continue;
    }
    if (!g.add_vertex(std::move(v))) ++d.duplicates;
  }
  for (const auto& e : doc.value("edges", nlohmann::json::array())) {
    Edge edge{text(e, "id"), text(e, "src"), text(e, "dst"), text(e, "description")};
    if (edge.id.empty()) {
      ++d.malformed;
      continue;
    }
    switch (g.add_edge(std::move(edge))) {
      case Graph::EdgeStatus::kAdded: break;
      case Graph::EdgeStatus::kDangling: ++d.dangling; break;
      case Graph::EdgeStatus::kSelfLoop: ++d.self_loops; break;
      default: ++d.duplicates; break;
    }
  }
  return g;
}

Graph load_graph_file(const std::filesystem::path& path, ParseDiagnostics* diag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open graph file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return graph_from_json(nlohmann::json::parse(text), diag);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("invalid graph JSON in " + path.string() + ": " + e.what());
    }
  }
  return parse_graph_document(text, diag);
}

void save_graph_file(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write graph file: " + path.string());
  if (path.extension() == ".json") {
    out << graph_to_json(g).dump(2) << "\n";
  } else {
    out << serialize_graph_document(g) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Paths, stars, diameter

namespace {

void extend_paths(const Graph& g, std::size_t l, std::vector<std::string>& stack,
                  std::vector<std::string>& edge_stack, std::set<std::string, std::less<>>& on_path,
                  const std::function<void(const Path&)>& emit) {
  if (edge_stack.size() == l) {
    if (stack.front() < stack.back()) emit(Path{stack, edge_stack});
    return;
  }
  for (const auto& next : g.neighbors(stack.back())) {
    if (on_path.contains(next)) continue;
    const Edge* e = g.edge_between(stack.back(), next);
    stack.push_back(next);
    edge_stack.push_back(e->id);
    on_path.insert(next);
    extend_paths(g, l, stack, edge_stack, on_path, emit);
    on_path.erase(next);
    edge_stack.pop_back();
    stack.pop_back();
  }
}

}  // namespace

std::vector<Path> enumerate_paths(const Graph& g, std::size_t l) {
  std::vector<Path> out;
  if (l == 0) throw InputError("path length must be at least 1");
  for (const auto& [id, v] : g.vertices()) {
    std::vector<std::string> stack{id};
    std::vector<std::string> edge_stack;
    std::set<std::string, std::less<>> on_path{id};
    extend_paths(g, l, stack, edge_stack, on_path, [&](const Path& p) { out.push_back(p); });
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Path> paths_through(const Graph& g, std::size_t l, std::string_view vertex) {
  std::vector<Path> out;
  for (auto& p : enumerate_paths(g, l)) {
    if (std::find(p.vertices.begin(), p.vertices.end(), vertex) != p.vertices.end()) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

StarSubgraph star_subgraph(const Graph& g, std::string_view v) {
  StarSubgraph s;
  s.center = g.vertex(v).id;
  for (const auto& n : g.neighbors(v)) {
    s.leaves.push_back(n);
    s.edges.push_back(g.edge_between(v, n)->id);
  }
  return s;
}

std::vector<StarSubgraph> enumerate_substructures(const StarSubgraph& s, std::size_t cap,
                                                  std::uint64_t seed) {
  const std::size_t k = s.leaves.size();
  auto make = [&](const std::vector<bool>& keep) {
    StarSubgraph sub;
    sub.center = s.center;
    for (std::size_t i = 0; i < k; ++i) {
      if (keep[i]) {
        sub.leaves.push_back(s.leaves[i]);
        if (i < s.edges.size()) sub.edges.push_back(s.edges[i]);
      }
    }
    return sub;
  };

  std::vector<StarSubgraph> out;
  if (k == 0 || cap == 0) return out;

  const bool enumerate_all = k < 63 && ((std::uint64_t{1} << k) - 1) <= cap;
  if (enumerate_all) {
    const std::uint64_t full = (std::uint64_t{1} << k) - 1;
    for (std::uint64_t mask = 0; mask < full; ++mask) {
      std::vector<bool> keep(k);
      for (std::size_t i = 0; i < k; ++i) keep[i] = ((mask >> i) & 1U) != 0;
      out.push_back(make(keep));
    }
    return out;
  }

  std::set<std::vector<bool>> seen;
  auto add = [&](const std::vector<bool>& keep) {
    if (out.size() < cap && seen.insert(keep).second) out.push_back(make(keep));
  };
  add(std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<bool> keep(k, true);
    keep[i] = false;
    add(keep);
  }
  std::uint64_t state = mix64(seed, fnv1a64(s.center));
  std::mt19937_64 rng(splitmix64(state));
  while (out.size() < cap) {
    std::vector<bool> keep(k);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < k; ++i) {
      keep[i] = (rng() & 1U) != 0;
      kept += keep[i] ? 1 : 0;
    }
    if (kept == k) continue;  // not a proper substructure
    add(keep);
  }
  return out;
}

std::vector<std::vector<std::string>> connected_components(const Graph& g) {
  std::vector<std::vector<std::string>> comps;
  std::set<std::string, std::less<>> seen;
  for (const auto& [id, v] : g.vertices()) {
    if (seen.contains(id)) continue;
    std::vector<std::string> comp;
    std::deque<std::string> queue{id};
    seen.insert(id);
    while (!queue.empty()) {
      auto cur = queue.front();
      queue.pop_front();
      comp.push_back(cur);
      for (const auto& n : g.neighbors(cur)) {
        if (seen.insert(n).second) queue.push_back(n);
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

std::size_t graph_diameter(const Graph& g) {
  const auto comps = connected_components(g);
  if (comps.size() > 1) {
    std::string msg = "graph is disconnected; components:";
    for (const auto& c : comps) {
      msg += " {";
      for (std::size_t i = 0; i < c.size(); ++i) msg += (i ? "," : "") + c[i];
      msg += "}";
    }
    throw InputError(msg);
  }
  std::size_t diameter = 0;
  for (const auto& [src, v] : g.vertices()) {
    std::map<std::string, std::size_t, std::less<>> dist{{src, 0}};
    std::deque<std::string> queue{src};
    while (!queue.empty()) {
      auto cur = queue.front();
      queue.pop_front();
      const std::size_t dc = dist[cur];
      diameter = std::max(diameter, dc);
      for (const auto& n : g.neighbors(cur)) {
        if (dist.emplace(n, dc + 1).second) queue.push_back(n);
      }
    }
  }
  return diameter;
}

}  // namespace exactrag
