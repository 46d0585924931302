// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "exactrag/benchkit.hpp"
#include "exactrag/dominance.hpp"
#include "exactrag/matcher.hpp"
#include "exactrag/path_index.hpp"
#include "exactrag/pipeline.hpp"
#include "exactrag/query.hpp"
#include "index_support.hpp"
#include "test_support.hpp"

using namespace exactrag;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int n, const char* name, const Verdict& v) {
  std::printf("AC%d %s %s: %s\n", n, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

std::set<std::string> signatures(const std::vector<MatchedSubgraph>& ms) {
  std::set<std::string> out;
  for (const auto& m : ms) out.insert(m.signature());
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EngineConfig oracle_engine_config() {
  EngineConfig cfg;
  cfg.provider.kind = ProviderKind::kCountOracle;
  cfg.provider.F = 8;
  return cfg;
}

// ---------------------------------------------------------------------------
// AC1, AC2 (first two parts) and AC5 share the 200 random trials.

struct TrialTotals {
  int trials = 0;
  int agree = 0;
  int scan_checks = 0;
  int scan_agree = 0;
  std::size_t missed = 0;
  int invariance_queries = 0;
  int invariant = 0;
  double seconds = 0.0;
};

TrialTotals run_random_trials() {
  TrialTotals t;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  MockEmbedder m(8, 1);
  CountOracleModel model(8);
  while (t.trials < 200) {
    const auto g = testsupport::random_graph(rng, 10 + rng() % 41, 0.08 + 0.1 * (rng() % 3) / 2, 4 + rng() % 4);
    const auto q = testsupport::sample_query(rng, g, 6, 0.25);
    if (q.edge_count() == 0) continue;
    ++t.trials;
    const auto expected = signatures(brute_force_match(q, g));
    const auto lengths = valid_path_lengths(q);
    const bool small_diameter = testsupport::oracle_diameter(q) <= 3;
    bool all_agree = !lengths.empty();
    std::optional<std::set<std::string>> first;
    bool invariant = true;
    for (const auto l : lengths) {
      const auto b = testsupport::build_oracle_index(g, l);
      const auto got = signatures(testsupport::match_with_oracle(b, q, l).exact);
      all_agree = all_agree && got == expected;
      if (first && got != *first) invariant = false;
      first = got;

      // Index completeness on the probes this trial actually issues.
      const auto plan = decompose_into_paths(q, l);
      const auto u = complete_unknown_labels(q, plan, b.idx, embed_graph_labels(q, m));
      if (!u.complete()) continue;
      for (const auto& c : enumerate_completions(q, u)) {
        const auto cx = embed_graph_labels(c.query, m);
        const auto co = node_dominance_embeddings(c.query, cx, model);
        std::vector<PathProbe> probes;
        for (const auto& p : plan.paths) probes.push_back(make_probe(c.query, p, cx, &co, 8));
        TraversalStats st;
        const auto fast = testsupport::as_sets(b.idx.retrieve_exact(probes, &st, true));
        ++t.scan_checks;
        if (fast == testsupport::as_sets(linear_scan_reference(b.entries, probes, 8, 8))) ++t.scan_agree;
        t.missed += st.missed_candidates;
      }
    }
    if (all_agree) ++t.agree;
    if (small_diameter) {
      ++t.invariance_queries;
      if (invariant) ++t.invariant;
    }
  }
  t.seconds = seconds_since(t0);
  return t;
}

// AC2 third part: single-probe traversals on clustered fixtures against a
// full scan (every node visited, every entry checked).
Verdict clustered_pruning() {
  int below = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SyntheticGraphConfig cfg;
    cfg.vertices = 400;
    cfg.communities = 20;
    cfg.p_in = 0.2;
    cfg.p_out = 0.002;
    cfg.seed = seed;
    const auto b = testsupport::build_oracle_index(synthetic_graph(cfg), 2);
    std::mt19937_64 rng(seed * 7919);
    bool fixture_below = true;
    int probes = 0;
    for (int k = 0; k < 20; ++k) {
      const auto q = testsupport::sample_query(rng, b.g, 4, 0.0);
      for (const auto& probe : testsupport::exact_probes(q, 2)) {
        TraversalStats st;
        b.idx.retrieve_exact({probe}, &st);
        ++probes;
        fixture_below = fixture_below && st.nodes_visited < b.idx.nodes().size() &&
                        st.entries_checked < b.idx.entries().size();
      }
    }
    if (fixture_below && probes > 0) ++below;
  }
  return {below >= 8, fmt("%d/10 clustered fixtures strictly below full scan on every probe (need >= 8)", below)};
}

// ---------------------------------------------------------------------------

Verdict dominance_training() {
  const auto t0 = Clock::now();
  int converged = 0;
  std::size_t pairs = 0, satisfied = 0;
  for (int s = 0; s < 10; ++s) {
    std::mt19937_64 rng(1000 + s);
    const std::size_t n = 20 + 20 * s;
    const auto g = testsupport::random_graph(rng, n, 3.0 / static_cast<double>(n - 1), 40);
    MockEmbedder m(16, 2);
    const auto x = embed_graph_labels(g, m);
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.substructure_cap = 32;
    cfg.max_epochs = 5000;
    const auto r = train(g, x, cfg);
    if (r.converged && r.final_loss <= 1e-6) ++converged;
    for (const auto& pr : training_pairs(g, cfg.substructure_cap, cfg.seed)) {
      const auto o_g = star_embedding(r.params, make_star_input(g, pr.star, x));
      const auto o_s = star_embedding(r.params, make_star_input(g, pr.sub, x));
      bool ok = true;
      for (std::size_t i = 0; i < o_g.size(); ++i) ok = ok && o_s[i] <= o_g[i] + 1e-6;
      ++pairs;
      if (ok) ++satisfied;
    }
  }

  // Central differences on a batch that has violations in every coordinate.
  std::mt19937_64 rng(77);
  const auto g = testsupport::random_graph(rng, 30, 0.15, 10);
  MockEmbedder m(6, 3);
  const auto x = embed_graph_labels(g, m);
  auto p = init_params(6, 8, 4, 77);
  for (auto& w : p.W_out) w += 0.3;
  std::vector<PairInput> batch;
  for (const auto& pr : training_pairs(g, 32, 0)) {
    if (batch.size() == 16) break;
    batch.push_back({make_star_input(g, pr.star, x), make_star_input(g, pr.sub, x)});
  }
  Gradients grad;
  batch_loss_and_gradient(p, batch, &grad);
  const double h = 1e-5;
  double worst = 0.0;
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
      if (scale < 1e-7) continue;
      worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
  };
  probe(p.W_in, grad.W_in);
  probe(p.a, grad.a);
  probe(p.W_out, grad.W_out);

  const double secs = seconds_since(t0);
  const bool pass = converged >= 8 && satisfied == pairs && worst < 1e-4 && secs < 600.0;
  return {pass, fmt("%d/10 converged (need >= 8), %zu/%zu pairs dominated within 1e-6, gradient max rel error "
                    "%.2e (need < 1e-4), %.1f s (budget 600 s)",
                    converged, satisfied, pairs, worst, secs)};
}

// ---------------------------------------------------------------------------

Verdict case_studies() {
  const auto t0 = Clock::now();
  struct Case {
    const char* graph;
    const char* query;
    const char* gold;
  };
  const Case cases[] = {{"multi_condition.graph", "multi_condition.query", "Type 2 diabetes"},
                        {"complication_case.graph", "complication_case.query", "Neurovascular injury"}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto engine =
        Engine::build(load_graph_file(testsupport::fixture(c.graph)), {1, 2}, oracle_engine_config());
    ExactBindingMock mock;
    const auto out = engine.answer_text(read_text(testsupport::fixture(c.query)), nullptr, mock);
    const bool ok = out.answer.answer == c.gold && out.answer.mode == "exact";
    pass = pass && ok;
    detail += fmt("'%s' mode=%s; ", out.answer.answer.c_str(), out.answer.mode.c_str());
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 5.0;
  return {pass, detail + fmt("%.2f s (budget 5 s)", secs)};
}

// ---------------------------------------------------------------------------

Verdict benchmark_soundness() {
  const auto t0 = Clock::now();
  const auto g = synthetic_graph(SyntheticGraphConfig{});
  const auto records = generate_dataset(g, 100, 1);
  std::size_t verified = 0;
  for (const auto& r : records) {
    for (const auto& m : brute_force_match(qa_query_graph(r), g, 200)) {
      if (m.binding.at("q0") == r.gold_id) {
        ++verified;
        break;
      }
    }
  }
  const auto engine = Engine::build(g, {1, 2}, oracle_engine_config());
  const auto rep = run_end_to_end(engine, records, EndToEndConfig{});
  const double secs = seconds_since(t0);
  const bool pass = g.vertex_count() == 200 && records.size() == 100 && verified == records.size() &&
                    rep.hit1 == 1.0 && secs < 120.0;
  return {pass, fmt("%zu records on a %zu-vertex graph, %zu brute-force verified with the gold binding, hit1 %.3f, "
                    "%.1f s (budget 120 s)",
                    records.size(), g.vertex_count(), verified, rep.hit1, secs)};
}

Verdict robustness_shape() {
  SyntheticGraphConfig sc;
  sc.seed = 1;
  const auto g = synthetic_graph(sc);
  const auto records = generate_dataset(g, 100, 1);
  const auto engine = Engine::build(g, {1, 2}, oracle_engine_config());
  EndToEndConfig cfg;
  cfg.seed = 1;
  const auto curve = robustness_curve(engine, records, {1, 2, 3}, cfg, 10);
  const double h1 = curve[0].hit1, h2 = curve[1].hit1, h3 = curve[2].hit1;
  const double d12 = h1 - h2, d23 = h2 - h3;
  const bool pass = h2 <= h1 && h3 <= h2 && d23 > d12;
  return {pass, fmt("hit1 x=1 %.3f, x=2 %.3f, x=3 %.3f over %zu perturbed queries each; drop 1->2 %.3f, 2->3 %.3f",
                    h1, h2, h3, curve[0].queries, d12, d23)};
}

// ---------------------------------------------------------------------------

Verdict complexity_scaling() {
  // Clustered graphs sized for roughly 1e3, 1e4 and 1e5 length-2 paths.
  const std::size_t vertex_counts[] = {160, 1600, 16000};
  std::vector<double> xs, ys;
  std::string detail;
  bool levels = true;
  for (const auto n : vertex_counts) {
    SyntheticGraphConfig cfg;
    cfg.vertices = n;
    cfg.communities = n / 20;
    cfg.p_in = 0.15;
    cfg.p_out = 0.0;
    cfg.seed = 11;
    const auto b = testsupport::build_oracle_index(synthetic_graph(cfg), 2);
    std::mt19937_64 rng(n);
    std::size_t visits = 0, probes = 0;
    for (int k = 0; k < 60; ++k) {
      const auto q = testsupport::sample_query(rng, b.g, 4, 0.0);
      for (const auto& probe : testsupport::exact_probes(q, 2)) {
        TraversalStats st;
        b.idx.retrieve_exact({probe}, &st);
        levels = levels && st.per_level_counts.size() == b.idx.height();
        visits += st.nodes_visited;
        ++probes;
      }
    }
    const double mean = static_cast<double>(visits) / static_cast<double>(std::max<std::size_t>(probes, 1));
    xs.push_back(std::log(static_cast<double>(b.entries.size())));
    ys.push_back(std::log(mean));
    detail += fmt("%zu paths -> %.1f visits; ", b.entries.size(), mean);
  }
  const double mx = (xs[0] + xs[1] + xs[2]) / 3, my = (ys[0] + ys[1] + ys[2]) / 3;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = num / den;
  const bool sizes_ok = std::exp(xs[0]) >= 500 && std::exp(xs[0]) <= 2000 && std::exp(xs[1]) >= 5000 &&
                        std::exp(xs[1]) <= 20000 && std::exp(xs[2]) >= 50000 && std::exp(xs[2]) <= 200000;
  return {slope < 1.0 && levels && sizes_ok,
          detail + fmt("log-log slope %.3f (need < 1.0), per-level counts %s", slope, levels ? "emitted" : "missing")};
}

// ---------------------------------------------------------------------------

// Independent coverage check: every plan path is a simple path of exactly l
// query edges and the union of plan edges equals E(q).
bool covers_exactly(const Graph& q, const QueryPlan& plan, std::size_t l) {
  std::set<std::string> covered;
  for (const auto& p : plan.paths) {
    if (p.edges.size() != l || p.vertices.size() != l + 1) return false;
    if (std::set<std::string>(p.vertices.begin(), p.vertices.end()).size() != p.vertices.size()) return false;
    for (std::size_t i = 0; i < l; ++i) {
      const Edge* e = q.edge_between(p.vertices[i], p.vertices[i + 1]);
      if (e == nullptr || e->id != p.edges[i]) return false;
      covered.insert(e->id);
    }
  }
  std::set<std::string> all;
  for (const auto& e : q.edges()) all.insert(e.id);
  return covered == all;
}

Verdict decomposition_coverage() {
  std::mt19937_64 rng(500);
  int queries = 0, covered = 0, plans = 0;
  while (queries < 500) {
    const std::size_t n = 2 + rng() % 9;
    const auto q = testsupport::random_graph(rng, n, 0.1 + 0.3 * static_cast<double>(rng() % 4) / 3, 3, true);
    ++queries;
    bool all = true;
    const auto lengths = valid_path_lengths(q);
    if (lengths.empty()) all = false;
    for (const auto l : lengths) {
      ++plans;
      all = all && covers_exactly(q, decompose_into_paths(q, l), l);
    }
    if (all) ++covered;
  }
  return {covered == queries, fmt("%d/%d connected queries (<= 10 vertices) covered exactly over %d plans", covered,
                                  queries, plans)};
}

}  // namespace

int main() {
  const auto trials = run_random_trials();
  report(1, "oracle equivalence",
         {trials.agree == trials.trials && trials.seconds < 60.0,
          fmt("%d/%d trials agree with brute force at every valid l, %.1f s (budget 60 s)", trials.agree,
              trials.trials, trials.seconds)});

  const auto pruning = clustered_pruning();
  report(2, "index completeness",
         {trials.scan_agree == trials.scan_checks && trials.missed == 0 && pruning.pass,
          fmt("%d/%d retrievals equal the linear scan, %zu missed candidates; ", trials.scan_agree,
              trials.scan_checks, trials.missed) +
              pruning.detail});

  report(3, "dominance training", dominance_training());
  report(4, "case studies", case_studies());
  report(5, "l-invariance",
         {trials.invariant == trials.invariance_queries && trials.invariance_queries > 0,
          fmt("%d/%d queries with diameter <= 3 give identical binding sets at every valid l", trials.invariant,
              trials.invariance_queries)});
  report(6, "benchmark soundness", benchmark_soundness());
  report(7, "robustness shape", robustness_shape());
  report(8, "complexity scaling", complexity_scaling());
  report(9, "decomposition coverage", decomposition_coverage());

  std::printf("%s: %d of 9 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
