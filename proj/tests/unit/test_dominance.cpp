#include <cmath>
#include <limits>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "exactrag/dominance.hpp"
#include "exactrag/errors.hpp"
#include "test_support.hpp"

using namespace exactrag;

namespace {

Vec random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

struct OwnedStar {
  Vec center;
  std::vector<Vec> leaves;
  StarInput view(std::size_t keep) const {
    StarInput s;
    s.center = &center;
    s.center_key = 1;
    for (std::size_t i = 0; i < keep && i < leaves.size(); ++i) {
      s.leaves.push_back(&leaves[i]);
      s.leaf_keys.push_back(10 + i);
    }
    return s;
  }
};

OwnedStar random_star(std::mt19937_64& rng, std::size_t F, std::size_t k) {
  OwnedStar s{random_vec(rng, F), {}};
  for (std::size_t i = 0; i < k; ++i) s.leaves.push_back(random_vec(rng, F));
  return s;
}

bool dominated(const Vec& lo, const Vec& hi, double eps) {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i] + eps) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("single neighbor gets all the attention") {
  std::mt19937_64 rng(1);
  const auto p = init_params(4, 8, 3, 2);
  const auto star = random_star(rng, 4, 1);
  const auto upd = gat_node_update(p, star.view(1));
  REQUIRE(upd.alpha.size() == 1);
  CHECK(upd.alpha[0] == 1.0);
  CHECK(upd.center.size() == 8);
  CHECK(upd.leaves.size() == 1);
}

TEST_CASE("identical neighbors split attention evenly") {
  std::mt19937_64 rng(2);
  const auto p = init_params(4, 8, 3, 2);
  OwnedStar star = random_star(rng, 4, 1);
  star.leaves.push_back(star.leaves[0]);
  const auto upd = gat_node_update(p, star.view(2));
  REQUIRE(upd.alpha.size() == 2);
  CHECK(upd.alpha[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(upd.alpha[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("attention weights sum to one") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto p = init_params(6, 8, 4, t);
    const auto star = random_star(rng, 6, 1 + t % 5);
    const auto f = gat_forward(p, star.view(star.leaves.size()));
    double s = 0;
    for (double a : f.alpha) s += a;
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  std::mt19937_64 rng(4);
  const auto p = init_params(4, 8, 3, 2);
  const auto star = random_star(rng, 5, 2);
  CHECK_THROWS(gat_forward(p, star.view(2)));
}

TEST_CASE("star embeddings are non-negative and deterministic") {
  std::mt19937_64 rng(5);
  const auto p = init_params(6, 16, 5, 9);
  for (int t = 0; t < 30; ++t) {
    const auto star = random_star(rng, 6, t % 4);
    const auto a = star_embedding(p, star.view(star.leaves.size()));
    const auto b = star_embedding(p, star.view(star.leaves.size()));
    CHECK(a == b);
    CHECK(a.size() == 5);
    for (double x : a) CHECK(x >= 0.0);
  }
  const auto leafless = random_star(rng, 6, 0);
  const auto f = gat_forward(p, leafless.view(0));
  CHECK(f.alpha == Vec{1.0});
}

TEST_CASE("adding a leaf changes the embedding") {
  std::mt19937_64 rng(6);
  int changed = 0;
  for (int t = 0; t < 20; ++t) {
    const auto p = init_params(6, 16, 5, 100 + t);
    const auto star = random_star(rng, 6, 3);
    if (star_embedding(p, star.view(2)) != star_embedding(p, star.view(3))) ++changed;
  }
  CHECK(changed >= 18);
}

TEST_CASE("hinge arithmetic") {
  CHECK(hinge_loss({1, 2}, {1, 2}) == 0.0);
  CHECK(hinge_loss({2}, {1}) == 1.0);
  CHECK(hinge_loss({0.5, 3}, {1, 1}) == 4.0);
  CHECK(hinge_loss({0, 0}, {5, 5}) == 0.0);
}

TEST_CASE("dominance loss rejects pairs that are not substructures") {
  Graph g;
  for (const char* v : {"a", "b", "c"}) g.add_vertex({v, v, ""});
  g.add_edge({"e1", "a", "b", ""});
  g.add_edge({"e2", "a", "c", ""});
  MockEmbedder m(4, 1);
  const auto x = embed_graph_labels(g, m);
  const auto p = init_params(4, 8, 3, 1);
  const auto star = star_subgraph(g, "a");
  std::vector<TrainingPair> bad{{star, star}};
  CHECK_THROWS_AS(dominance_loss(g, bad, p, x), InputError);
  std::vector<TrainingPair> wrong_center{{star, StarSubgraph{"b", {}, {}}}};
  CHECK_THROWS_AS(dominance_loss(g, wrong_center, p, x), InputError);
  const auto pairs = training_pairs(g, 32, 0);
  CHECK(pairs.size() == 3 + 1 + 1);
  CHECK(dominance_loss(g, pairs, p, x) >= 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(7);
  const std::size_t F = 5;
  std::vector<OwnedStar> stars;
  for (int i = 0; i < 6; ++i) stars.push_back(random_star(rng, F, 1 + i % 4));
  auto p = init_params(F, 8, 4, 77);
  // Push the readout so that violations exist in every coordinate.
  for (auto& w : p.W_out) w += 0.3;
  std::vector<PairInput> batch;
  for (std::size_t i = 0; i < stars.size(); ++i) {
    const auto& s = stars[i];
    batch.push_back({s.view(s.leaves.size()), s.view(s.leaves.size() - 1)});
    batch.push_back({s.view(s.leaves.size()), s.view(0)});
  }
  Gradients grad;
  const double loss = batch_loss_and_gradient(p, batch, &grad);
  REQUIRE(loss > 0.0);

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  auto probe = [&](Vec& theta, const Vec& analytic) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double keep = theta[i];
      theta[i] = keep + h;
      const double up = batch_loss_and_gradient(p, batch, nullptr);
      theta[i] = keep - h;
      const double down = batch_loss_and_gradient(p, batch, nullptr);
      theta[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
      if (scale < 1e-7) continue;  // both vanish; nothing to compare
      worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
      ++checked;
    }
  };
  probe(p.W_in, grad.W_in);
  probe(p.a, grad.a);
  probe(p.W_out, grad.W_out);
  MESSAGE("max relative error " << worst << " over " << checked << " coordinates");
  CHECK(checked > p.parameter_count() / 2);
  CHECK(worst < 1e-4);
}

TEST_CASE("two-vertex graph trains to zero loss") {
  Graph g;
  g.add_vertex({"a", "Alpha", ""});
  g.add_vertex({"b", "Beta", ""});
  g.add_edge({"e", "a", "b", ""});
  MockEmbedder m(16, 0);
  const auto x = embed_graph_labels(g, m);
  TrainConfig cfg;
  cfg.max_epochs = 500;
  const auto r = train(g, x, cfg);
  CHECK(r.converged);
  CHECK(r.final_loss <= 1e-6);
  CHECK(r.pair_count == 2);
  const auto pairs = training_pairs(g, 32, 0);
  for (const auto& pr : pairs) {
    const auto o_g = star_embedding(r.params, make_star_input(g, pr.star, x));
    const auto o_s = star_embedding(r.params, make_star_input(g, pr.sub, x));
    CHECK(dominated(o_s, o_g, 1e-6));
  }
}

TEST_CASE("training is deterministic under a seed") {
  std::mt19937_64 rng(8);
  const auto g = testsupport::random_graph(rng, 12, 0.25, 6);
  MockEmbedder m(16, 3);
  const auto x = embed_graph_labels(g, m);
  TrainConfig cfg;
  cfg.seed = 42;
  cfg.max_epochs = 30;
  const auto a = train(g, x, cfg);
  const auto b = train(g, x, cfg);
  CHECK(a.params.W_in == b.params.W_in);
  CHECK(a.params.a == b.params.a);
  CHECK(a.params.W_out == b.params.W_out);
  CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("trained model dominates its training pairs on a small graph") {
  std::mt19937_64 rng(9);
  const auto g = testsupport::random_graph(rng, 20, 0.2, 8);
  MockEmbedder m(16, 2);
  const auto x = embed_graph_labels(g, m);
  TrainConfig cfg;
  cfg.seed = 1;
  const auto r = train(g, x, cfg);
  CHECK(r.converged);
  for (const auto& pr : training_pairs(g, cfg.substructure_cap, cfg.seed)) {
    const auto o_g = star_embedding(r.params, make_star_input(g, pr.star, x));
    const auto o_s = star_embedding(r.params, make_star_input(g, pr.sub, x));
    CHECK(dominated(o_s, o_g, 1e-6));
  }
}

TEST_CASE("invalid training configuration") {
  Graph g;
  g.add_vertex({"a", "A", ""});
  MockEmbedder m(4, 0);
  const auto x = embed_graph_labels(g, m);
  TrainConfig cfg;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(train(g, x, cfg), ConfigError);
  CHECK_THROWS_AS(train(Graph{}, x, TrainConfig{}), InputError);
}

TEST_CASE("gradient clipping keeps large steps finite") {
  std::mt19937_64 rng(1003);
  const auto g = testsupport::random_graph(rng, 80, 3.0 / 79, 40);
  MockEmbedder m(16, 2);
  const auto x = embed_graph_labels(g, m);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.grad_clip = 0.0;
  CHECK_THROWS_AS(train(g, x, cfg), NumericError);
  cfg.grad_clip = 1.0;
  const auto r = train(g, x, cfg);
  CHECK(r.converged);
  cfg.grad_clip = -1.0;
  CHECK_THROWS_AS(train(g, x, cfg), ConfigError);
}

TEST_CASE("divergence is reported with the epoch") {
  std::mt19937_64 rng(10);
  const auto g = testsupport::random_graph(rng, 10, 0.4, 5);
  MockEmbedder m(16, 0);
  auto x = embed_graph_labels(g, m);
  x.begin()->second[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(g, x, TrainConfig{});
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("model files round-trip") {
  const auto p = init_params(4, 6, 3, 11);
  const auto file = std::filesystem::temp_directory_path() / "exactrag_test_model.json";
  save_model(p, file);
  const auto back = load_model(file);
  CHECK(back.W_in == p.W_in);
  CHECK(back.a == p.a);
  CHECK(back.W_out == p.W_out);
  CHECK(back.F == 4);
  CHECK(back.F_hidden == 6);
  CHECK(back.d == 3);
  std::filesystem::remove(file);
  nlohmann::json broken = model_to_json(p);
  broken["W_in"].erase(0);
  CHECK_THROWS(model_from_json(broken));
}

TEST_CASE("path dominance concatenates per position") {
  EmbeddingTable o{{"v1", {1, 2}}, {"v2", {3, 4}}};
  CHECK(path_dominance_embedding(Path{{"v1", "v2"}, {"e"}}, o) == Vec{1, 2, 3, 4});
  CHECK_THROWS_AS(path_dominance_embedding(Path{{"v1", "v9"}, {"e"}}, o), InputError);
}

TEST_CASE("count oracle buckets") {
  Graph g;
  g.add_vertex({"c", "Center", ""});
  const auto lone = count_oracle_embedding(g, "c", 8);
  CHECK(lone == Vec{0, 0, 0, 0, 0, 0, 0, 1});

  g.add_vertex({"x", "X", ""});
  g.add_vertex({"y", "Y", ""});
  g.add_edge({"e1", "c", "x", ""});
  g.add_edge({"e2", "c", "y", ""});
  const auto full = count_oracle_embedding(g, "c", 8);
  double total = 0;
  for (std::size_t i = 0; i + 1 < full.size(); ++i) total += full[i];
  CHECK(total == 2.0);
  CHECK(full[7] == 1.0);

  g.remove_edge("e2");
  const auto less = count_oracle_embedding(g, "c", 8);
  int dropped = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(less[i] <= full[i]);
    if (less[i] + 1.0 == full[i]) ++dropped;
  }
  CHECK(dropped == 1);
}

TEST_CASE("count oracle dominance holds for every substructure") {
  std::mt19937_64 rng(12);
  CountOracleModel model(8);
  MockEmbedder m(4, 0);
  for (int t = 0; t < 60; ++t) {
    const auto g = testsupport::random_graph(rng, 1 + rng() % 12, 0.35, 6);
    const auto x = embed_graph_labels(g, m);
    for (const auto& [id, v] : g.vertices()) {
      const auto star = star_subgraph(g, id);
      if (star.leaves.empty()) continue;
      const auto o_g = model.embed(make_star_input(g, star, x));
      for (const auto& sub : enumerate_substructures(star, 1u << 12)) {
        CHECK(dominated(model.embed(make_star_input(g, sub, x)), o_g, 0.0));
      }
    }
  }
}

TEST_CASE("node dominance embeddings use full stars") {
  std::mt19937_64 rng(13);
  const auto g = testsupport::random_graph(rng, 10, 0.3, 4);
  MockEmbedder m(4, 0);
  const auto x = embed_graph_labels(g, m);
  CountOracleModel model(8);
  const auto o = node_dominance_embeddings(g, x, model);
  CHECK(o.size() == g.vertex_count());
  for (const auto& [id, v] : g.vertices()) CHECK(o.at(id) == count_oracle_embedding(g, id, 8));
}
