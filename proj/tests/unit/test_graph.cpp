#include <random>

#include "doctest.h"
#include "exactrag/errors.hpp"
#include "exactrag/graph.hpp"
#include "test_support.hpp"

using namespace exactrag;

namespace {

Graph triangle() {
  Graph g;
  for (const char* id : {"a", "b", "c"}) g.add_vertex({id, std::string("L") + id, ""});
  g.add_edge({"e1", "a", "b", ""});
  g.add_edge({"e2", "b", "c", ""});
  g.add_edge({"e3", "c", "a", ""});
  return g;
}

Graph line(std::size_t n) {
  Graph g;
  for (std::size_t i = 0; i < n; ++i) g.add_vertex({testsupport::vid(i), "x", ""});
  for (std::size_t i = 1; i < n; ++i) g.add_edge({"e" + std::to_string(i), testsupport::vid(i - 1), testsupport::vid(i), ""});
  return g;
}

}  // namespace

TEST_CASE("parse two vertices and one edge") {
  ParseDiagnostics diag;
  const auto g = parse_graph_document(
      "(n1<|>Magnesium<|>element)#(n2<|>Bone<|>tissue)#(e1<|>n1<|>n2<|>promotes)#<|COMPLETE|>", &diag);
  CHECK(g.vertex_count() == 2);
  CHECK(g.edge_count() == 1);
  CHECK(g.vertex("n1").label == "Magnesium");
  CHECK(g.edges()[0].description == "promotes");
  CHECK(diag.rejected() == 0);
}

TEST_CASE("terminator alone is an empty graph") {
  CHECK(parse_graph_document("<|COMPLETE|>").empty());
}

TEST_CASE("missing terminator is an input error") {
  CHECK_THROWS_AS(parse_graph_document("(n1<|>A<|>)#"), InputError);
}

TEST_CASE("dangling edges are dropped with one diagnostic") {
  ParseDiagnostics diag;
  const auto g = parse_graph_document(
      "(n1<|>A<|>)#(n2<|>B<|>)#(e1<|>n1<|>n2<|>)#(e2<|>n1<|>n9<|>)#<|COMPLETE|>", &diag);
  CHECK(g.edge_count() == 1);
  CHECK(diag.dangling == 1);
  CHECK(diag.rejected() == 1);
}

TEST_CASE("duplicates, self-loops and garbage are counted") {
  ParseDiagnostics diag;
  const auto g = parse_graph_document(
      "(n1<|>A<|>)#(n2<|>B<|>)#garbage#(e1<|>n1<|>n2<|>)#(e2<|>n1<|>n2<|>again)#(e3<|>n1<|>n1<|>)#"
      "(n1<|>A<|>dup)#<|COMPLETE|>",
      &diag);
  CHECK(g.vertex_count() == 2);
  CHECK(g.edge_count() == 1);
  CHECK(diag.self_loops == 1);
  CHECK(diag.duplicates == 2);
  CHECK(diag.malformed == 1);
}

TEST_CASE("labels may contain parentheses") {
  const auto g = parse_graph_document("(n1<|>Vitamin D (calciferol)<|>a (b) c)#<|COMPLETE|>");
  CHECK(g.vertex("n1").label == "Vitamin D (calciferol)");
  CHECK(g.vertex("n1").description == "a (b) c");
}

TEST_CASE("serialize then parse round-trips") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto g = testsupport::random_graph(rng, 12, 0.3, 5);
    const auto back = parse_graph_document(serialize_graph_document(g));
    CHECK(back.vertices() == g.vertices());
    CHECK(back.edges().size() == g.edges().size());
    CHECK(back.fingerprint() == g.fingerprint());
    CHECK(graph_from_json(graph_to_json(g)).fingerprint() == g.fingerprint());
  }
}

TEST_CASE("serializing a reserved delimiter fails") {
  Graph g;
  g.add_vertex({"n1", "bad<|>label", ""});
  CHECK_THROWS_AS(serialize_graph_document(g), InputError);
}

TEST_CASE("adjacency is the undirected view") {
  Graph g;
  g.add_vertex({"a", "A", ""});
  g.add_vertex({"b", "B", ""});
  CHECK(g.add_edge({"e1", "b", "a", ""}) == Graph::EdgeStatus::kAdded);
  CHECK(g.add_edge({"e2", "a", "b", ""}) == Graph::EdgeStatus::kAdded);
  CHECK(g.add_edge({"e3", "a", "b", ""}) == Graph::EdgeStatus::kDuplicatePair);
  CHECK(g.add_edge({"e4", "a", "a", ""}) == Graph::EdgeStatus::kSelfLoop);
  CHECK(g.neighbors("a") == std::vector<std::string>{"b"});
  CHECK(g.edge_between("b", "a")->id == "e1");
  g.remove_vertex("b");
  CHECK(g.edge_count() == 0);
  CHECK(g.degree("a") == 0);
}

TEST_CASE("triangle paths") {
  const auto g = triangle();
  CHECK(enumerate_paths(g, 1).size() == 3);
  const auto p2 = enumerate_paths(g, 2);
  REQUIRE(p2.size() == 3);
  for (const auto& p : p2) {
    CHECK(p.vertices.size() == 3);
    CHECK(p.vertices.front() < p.vertices.back());
  }
  Graph single;
  single.add_vertex({"a", "A", ""});
  CHECK(enumerate_paths(single, 1).empty());
}

TEST_CASE("enumerate_paths matches a DFS oracle") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 40; ++t) {
    const auto g = testsupport::random_graph(rng, 1 + rng() % 12, 0.3, 3);
    for (std::size_t l = 1; l <= 4; ++l) {
      std::set<std::vector<std::string>> got;
      for (const auto& p : enumerate_paths(g, l)) {
        REQUIRE(p.edges.size() == l);
        for (std::size_t i = 0; i < l; ++i) {
          const Edge* e = g.edge_by_id(p.edges[i]);
          REQUIRE(e != nullptr);
          CHECK(g.edge_between(p.vertices[i], p.vertices[i + 1]) == e);
        }
        got.insert(p.vertices);
      }
      CHECK(got == testsupport::oracle_paths(g, l));
    }
  }
}

TEST_CASE("paths_through keeps only paths containing the vertex") {
  std::mt19937_64 rng(5);
  const auto g = testsupport::random_graph(rng, 10, 0.35, 3);
  for (const auto& p : paths_through(g, 2, "v003")) {
    CHECK(std::find(p.vertices.begin(), p.vertices.end(), "v003") != p.vertices.end());
  }
}

TEST_CASE("star subgraphs") {
  const auto g = triangle();
  const auto s = star_subgraph(g, "a");
  CHECK(s.center == "a");
  CHECK(s.leaves == std::vector<std::string>{"b", "c"});
  CHECK(s.edges == std::vector<std::string>{"e1", "e3"});
  Graph iso;
  iso.add_vertex({"z", "Z", ""});
  CHECK(star_subgraph(iso, "z").leaves.empty());
  CHECK_THROWS_AS(star_subgraph(iso, "nope"), InputError);
}

TEST_CASE("bridge-star fixture star for Magnesium") {
  const auto g = load_graph_file(testsupport::fixture("bridge_star.graph"));
  std::set<std::string> labels;
  for (const auto& leaf : star_subgraph(g, "m01").leaves) labels.insert(g.vertex(leaf).label);
  CHECK(labels.count("Bone Formation"));
  CHECK(labels.count("Thyroid Health"));
  CHECK(labels.count("Hormone Metabolism"));
}

TEST_CASE("substructures of small stars are complete") {
  const auto g = triangle();
  const auto subs = enumerate_substructures(star_subgraph(g, "a"));
  REQUIRE(subs.size() == 3);
  std::set<std::vector<std::string>> sets;
  for (const auto& s : subs) sets.insert(s.leaves);
  CHECK(sets == std::set<std::vector<std::string>>{{"b"}, {"c"}, {}});

  StarSubgraph one{"a", {"b"}, {"e1"}};
  CHECK(enumerate_substructures(one).size() == 1);
}

TEST_CASE("substructure sampling above the cap") {
  StarSubgraph s{"c", {}, {}};
  for (int i = 0; i < 10; ++i) {
    s.leaves.push_back("l" + std::to_string(i));
    s.edges.push_back("e" + std::to_string(i));
  }
  const auto a = enumerate_substructures(s, 32, 9);
  const auto b = enumerate_substructures(s, 32, 9);
  REQUIRE(a.size() == 32);
  CHECK(a == b);
  std::set<std::vector<std::string>> sets;
  for (const auto& sub : a) {
    CHECK(sub.center == "c");
    CHECK(sub.leaves.size() < s.leaves.size());
    CHECK(std::includes(s.leaves.begin(), s.leaves.end(), sub.leaves.begin(), sub.leaves.end()));
    CHECK(sub.edges.size() == sub.leaves.size());
    sets.insert(sub.leaves);
  }
  CHECK(sets.size() == 32);
  CHECK(sets.count({}));
  for (std::size_t drop = 0; drop < s.leaves.size(); ++drop) {
    auto leaves = s.leaves;
    leaves.erase(leaves.begin() + static_cast<long>(drop));
    CHECK(sets.count(leaves));
  }
}

TEST_CASE("diameter") {
  Graph star;
  star.add_vertex({"c", "C", ""});
  for (int i = 0; i < 4; ++i) {
    star.add_vertex({"l" + std::to_string(i), "L", ""});
    star.add_edge({"e" + std::to_string(i), "c", "l" + std::to_string(i), ""});
  }
  CHECK(graph_diameter(star) == 2);
  CHECK(graph_diameter(line(2)) == 1);
  CHECK(graph_diameter(line(4)) == 3);

  Graph split = line(2);
  split.add_vertex({"w", "W", ""});
  try {
    graph_diameter(split);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
}

TEST_CASE("diameter matches all-pairs BFS on random connected graphs") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 30; ++t) {
    const auto g = testsupport::random_graph(rng, 2 + rng() % 29, 0.08, 4, true);
    CHECK(graph_diameter(g) == testsupport::oracle_diameter(g));
  }
}

TEST_CASE("connected components are sorted and disjoint") {
  auto g = line(3);
  g.add_vertex({"z", "Z", ""});
  const auto cc = connected_components(g);
  REQUIRE(cc.size() == 2);
  CHECK(cc[0].size() + cc[1].size() == 4);
}
