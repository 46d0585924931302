#include "exactrag/benchkit.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "exactrag/errors.hpp"
#include "exactrag/hashing.hpp"

namespace exactrag {
namespace {

constexpr const char* kTypes[] = {"Element", "Condition", "Process", "Tissue",  "Nutrient",
                                  "Pathway", "Enzyme",    "Organ",   "Symptom", "Compound"};

double unit_draw(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

std::string padded(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
  return buf;
}

std::vector<std::string> sorted_difference(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::string core_type(const Vertex& v) {
  std::istringstream words(v.description);
  std::vector<std::string> ws;
  for (std::string w; words >> w;) ws.push_back(w);
  if (ws.empty() || ws.size() > 3) return "entity";
  std::string t;
  for (std::size_t i = 0; i < ws.size(); ++i) t += (i ? " " : "") + ws[i];
  return t;
}

std::string trim_fold(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> unique_b_excluding(const Graph& g, const std::string& a, const std::string& b,
                                            const std::vector<std::string>& bridges) {
  auto own = sorted_difference(g.neighbors(a), bridges);
  own.erase(std::remove(own.begin(), own.end(), b), own.end());
  return own;
}

}  // namespace

Graph synthetic_graph(const SyntheticGraphConfig& cfg) {
  if (cfg.vertices == 0 || cfg.communities == 0) throw ConfigError("synthetic graph needs vertices and communities");
  const int width = cfg.vertices < 10000 ? 4 : 7;
  Graph g;
  std::vector<std::size_t> community(cfg.vertices);
  for (std::size_t i = 0; i < cfg.vertices; ++i) {
    community[i] = i * cfg.communities / cfg.vertices;
    const std::string type = kTypes[community[i] % std::size(kTypes)];
    std::string lower = type;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    g.add_vertex({"n" + padded(i, width), type + " " + padded(i, width), lower});
  }
  std::uint64_t state = mix64(cfg.seed, 0x5eed);
  std::size_t next_edge = 0;
  for (std::size_t i = 0; i < cfg.vertices; ++i) {
    for (std::size_t j = i + 1; j < cfg.vertices; ++j) {
      const double p = community[i] == community[j] ? cfg.p_in : cfg.p_out;
      if (unit_draw(state) < p) {
        g.add_edge({"e" + padded(next_edge++, width + 1), "n" + padded(i, width), "n" + padded(j, width),
                    "associated with"});
      }
    }
  }
  return g;
}

std::vector<BridgeStar> bridge_star_candidates(const Graph& g, std::size_t min_degree) {
  std::vector<std::string> centers;
  for (const auto& [id, v] : g.vertices()) {
    if (g.degree(id) >= min_degree) centers.push_back(id);
  }
  std::vector<BridgeStar> out;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const auto& a = centers[i];
      const auto& b = centers[j];
      if (g.adjacent(a, b)) continue;
      std::vector<std::string> bridges;
      const auto& na = g.neighbors(a);
      const auto& nb = g.neighbors(b);
      std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(bridges));
      if (bridges.empty()) continue;
      auto ua = unique_b_excluding(g, a, b, bridges);
      auto ub = unique_b_excluding(g, b, a, bridges);
      if (ua.empty() || ub.empty()) continue;
      out.push_back({a, b, std::move(bridges), std::move(ua), std::move(ub)});
    }
  }
  return out;
}

BridgeStar sample_bridge_star(const Graph& g, std::uint64_t seed, std::size_t min_degree) {
  auto all = bridge_star_candidates(g, min_degree);
  if (all.empty()) {
    throw InputError("no pair of degree-" + std::to_string(min_degree) +
                     " centers shares a neighbor while keeping a unique neighbor each");
  }
  std::uint64_t state = seed;
  return all[splitmix64(state) % all.size()];
}

nlohmann::json QaRecord::to_json() const {
  return {{"id", id},
          {"question", question},
          {"constraints", constraints},
          {"gold", gold},
          {"provenance",
           {{"hidden", hidden}, {"visible", visible}, {"bridges", bridges}, {"gold_id", gold_id},
            {"constraint_ids", constraint_ids}}},
          {"constraint_count", constraint_count}};
}

QaRecord QaRecord::from_json(const nlohmann::json& j) {
  try {
    QaRecord r;
    r.id = j.at("id").get<std::string>();
    r.question = j.value("question", std::string());
    r.constraints = j.at("constraints").get<std::vector<std::string>>();
    r.gold = j.at("gold").get<std::string>();
    const auto& p = j.at("provenance");
    r.hidden = p.at("hidden").get<std::string>();
    r.visible = p.value("visible", std::string());
    r.bridges = p.value("bridges", std::vector<std::string>{});
    r.gold_id = p.value("gold_id", r.hidden);
    r.constraint_ids = p.value("constraint_ids", std::vector<std::string>{});
    r.constraint_count = j.value("constraint_count", r.constraints.size());
    if (r.constraint_count != r.constraints.size()) throw InputError("constraint_count disagrees with constraints");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed QA record: ") + e.what());
  }
}

std::string template_question(const std::string& type, const std::vector<std::string>& constraints) {
  std::string list;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    if (i > 0) list += constraints.size() == 2 ? " and " : (i + 1 == constraints.size() ? ", and " : ", ");
    list += constraints[i];
  }
  return "Which " + type + " is associated with " + list + "?";
}

std::vector<QaRecord> make_qa(const Graph& g, const BridgeStar& bs, TextProvider* provider) {
  std::vector<QaRecord> out;
  for (int side = 0; side < 2; ++side) {
    const auto& hidden = side == 0 ? bs.center_a : bs.center_b;
    const auto& visible = side == 0 ? bs.center_b : bs.center_a;
    const auto& unique = side == 0 ? bs.unique_a : bs.unique_b;
    QaRecord r;
    r.id = hidden + "|" + visible;
    r.hidden = hidden;
    r.visible = visible;
    r.gold_id = hidden;
    r.gold = g.vertex(hidden).label;
    r.bridges = bs.bridges;
    std::vector<std::string> unique_desc, common_desc;
    for (const auto& v : unique) {
      r.constraint_ids.push_back(v);
      r.constraints.push_back(g.vertex(v).label);
      unique_desc.push_back(g.vertex(v).label);
    }
    for (const auto& v : bs.bridges) {
      r.constraint_ids.push_back(v);
      r.constraints.push_back(g.vertex(v).label);
      common_desc.push_back(g.vertex(v).label);
    }
    r.constraint_count = r.constraints.size();
    const auto type = core_type(g.vertex(hidden));
    if (provider != nullptr) r.question = provider->complete(render_question_prompt(type, unique_desc, common_desc));
    if (trim_fold(r.question).empty()) r.question = template_question(type, r.constraints);
    out.push_back(std::move(r));
  }
  return out;
}

bool is_ambiguous(const Graph& g, const QaRecord& r) {
  std::set<std::string> wanted(r.constraints.begin(), r.constraints.end());
  for (const auto& [id, v] : g.vertices()) {
    if (id == r.hidden || g.degree(id) < wanted.size()) continue;
    std::set<std::string> seen;
    for (const auto& n : g.neighbors(id)) {
      const auto& label = g.vertex(n).label;
      if (wanted.count(label)) seen.insert(label);
    }
    if (seen.size() == wanted.size()) return true;
  }
  return false;
}

Graph qa_query_graph(const QaRecord& r) {
  Graph q;
  q.add_vertex({"q0", std::string(kUnknownLabel), ""});
  for (std::size_t i = 0; i < r.constraints.size(); ++i) {
    const auto id = "q" + std::to_string(i + 1);
    q.add_vertex({id, r.constraints[i], ""});
    q.add_edge({"e" + std::to_string(i + 1), "q0", id, ""});
  }
  return q;
}

std::string qa_structured_text(const QaRecord& r) { return serialize_graph_document(qa_query_graph(r)); }

std::vector<QaRecord> generate_dataset(const Graph& g, std::size_t n, std::uint64_t seed,
                                       std::size_t min_degree, TextProvider* provider) {
  auto pool = bridge_star_candidates(g, min_degree);
  std::uint64_t state = mix64(seed, 0xda7a);
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[splitmix64(state) % i]);
  }
  std::vector<QaRecord> out;
  std::set<std::string> seen;
  for (const auto& bs : pool) {
    if (out.size() >= n) break;
    for (auto& r : make_qa(g, bs, provider)) {
      if (out.size() >= n) break;
      if (seen.count(r.id) || is_ambiguous(g, r)) continue;
      seen.insert(r.id);
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_records(const std::vector<QaRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write records to " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << "\n";
}

std::vector<QaRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read records from " + path.string());
  std::vector<QaRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim_fold(line).empty()) continue;
    try {
      out.push_back(QaRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

bool same_entity(const std::string& a, const std::string& b) { return trim_fold(a) == trim_fold(b); }

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j = {{"id", r.id},        {"gold", r.gold},     {"answer", r.answer},
                        {"hit", r.hit},      {"precision", r.precision}, {"recall", r.recall},
                        {"f1", r.f1},        {"mode", r.mode},     {"exact_matches", r.exact_matches},
                        {"constraints_used", r.constraints_used},  {"elapsed_ms", r.elapsed_ms}};
    if (!r.traversal.is_null()) j["traversal"] = r.traversal;
    if (!r.error.empty()) j["error"] = r.error;
    rs.push_back(std::move(j));
  }
  return {{"count", records.size()}, {"hit1", hit1},   {"precision", precision}, {"recall", recall},
          {"f1", f1},                {"records", rs},  {"runtime", runtime}};
}

std::string EvalReport::to_csv() const {
  std::string out = "id,gold,answer,hit,precision,recall,f1,mode,exact_matches,nodes_visited,elapsed_ms,error\n";
  char num[64];
  for (const auto& r : records) {
    const std::size_t visited = r.traversal.is_object() ? r.traversal.value("nodes_visited", std::size_t{0}) : 0;
    std::snprintf(num, sizeof(num), "%.6f,%.6f,%.6f", r.precision, r.recall, r.f1);
    out += csv_field(r.id) + "," + csv_field(r.gold) + "," + csv_field(r.answer) + "," + (r.hit ? "1" : "0") + "," +
           num + "," + r.mode + "," + std::to_string(r.exact_matches) + "," + std::to_string(visited) + ",";
    std::snprintf(num, sizeof(num), "%.3f", r.elapsed_ms);
    out += std::string(num) + "," + csv_field(r.error) + "\n";
  }
  return out;
}

EvalReport evaluate(const std::vector<QaRecord>& records, const std::vector<std::string>& answers) {
  if (records.size() != answers.size()) {
    throw InputError("got " + std::to_string(answers.size()) + " answers for " + std::to_string(records.size()) +
                     " records");
  }
  EvalReport rep;
  for (std::size_t i = 0; i < records.size(); ++i) {
    RecordResult r;
    r.id = records[i].id;
    r.gold = records[i].gold;
    r.answer = answers[i];
    const bool empty = trim_fold(r.answer).empty() || same_entity(r.answer, std::string(kUnableAnswer));
    r.hit = !empty && same_entity(r.answer, r.gold);
    r.precision = empty ? 0.0 : (r.hit ? 1.0 : 0.0);
    r.recall = r.hit ? 1.0 : 0.0;
    r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    rep.hit1 += r.hit ? 1.0 : 0.0;
    rep.precision += r.precision;
    rep.recall += r.recall;
    rep.f1 += r.f1;
    rep.records.push_back(std::move(r));
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    rep.hit1 /= n;
    rep.precision /= n;
    rep.recall /= n;
    rep.f1 /= n;
  }
  return rep;
}

Graph perturbed_query(const Graph& g, const QaRecord& r, const EndToEndConfig& cfg) {
  Graph q = qa_query_graph(r);
  const std::size_t k = r.constraints.size();
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i + 1;
  std::uint64_t state = mix64(cfg.seed, fnv1a64(r.id));
  for (std::size_t i = k; i > 1; --i) std::swap(order[i - 1], order[splitmix64(state) % i]);
  const std::size_t drop = k == 0 ? 0 : std::min(cfg.deletions, k - 1);
  for (std::size_t i = 0; i < drop; ++i) q.remove_vertex("q" + std::to_string(order[i]));

  if (cfg.spurious_fraction > 0.0) {
    std::uint64_t s = mix64(cfg.seed ^ 0x5b0de, fnv1a64(r.id));
    if (unit_draw(s) < cfg.spurious_fraction) {
      std::vector<std::string> pool;
      for (const auto& [id, v] : g.vertices()) {
        if (id != r.gold_id && !g.adjacent(id, r.gold_id)) pool.push_back(id);
      }
      if (!pool.empty()) {
        const auto& pick = pool[splitmix64(s) % pool.size()];
        q.add_vertex({"qs", g.vertex(pick).label, ""});
        q.add_edge({"es", "q0", "qs", ""});
      }
    }
  }
  return q;
}

EvalReport run_end_to_end(const Engine& engine, const std::vector<QaRecord>& records, const EndToEndConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExactBindingMock mock;
  AnswerProvider& answerer = cfg.answerer ? *cfg.answerer : mock;
  std::mutex answer_mu;

  // Serializes a caller-supplied answerer across workers.
  struct Locked final : AnswerProvider {
    AnswerProvider& inner;
    std::mutex& mu;
    Locked(AnswerProvider& i, std::mutex& m) : inner(i), mu(m) {}
    std::string respond(const PromptDocument& p, const AnswerContext& c) override {
      std::lock_guard lock(mu);
      return inner.respond(p, c);
    }
  } locked(answerer, answer_mu);

  std::vector<std::string> answers(records.size());
  std::vector<RecordResult> details(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const auto& rec = records[i];
      auto& d = details[i];
      const auto s0 = std::chrono::steady_clock::now();
      try {
        Graph q = cfg.extractor ? extract_query_graph(rec.question, cfg.extractor)
                                : perturbed_query(engine.graph(), rec, cfg);
        d.constraints_used = q.vertex_count() > 0 ? q.vertex_count() - 1 : 0;
        auto outcome = engine.answer(q, rec.question, locked);
        answers[i] = outcome.answer.answer;
        d.mode = outcome.answer.mode;
        d.exact_matches = outcome.match.exact.size();
        d.traversal = outcome.match.stats.traversal.to_json();
      } catch (const std::exception& e) {
        answers[i] = std::string(kUnableAnswer);
        d.error = e.what();
        d.mode = "error";
      }
      d.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - s0).count();
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, records.size()));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  EvalReport rep = evaluate(records, answers);
  std::size_t visited = 0, errors = 0;
  std::vector<std::size_t> per_level;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = rep.records[i];
    const auto& d = details[i];
    r.mode = d.mode;
    r.error = d.error;
    r.exact_matches = d.exact_matches;
    r.constraints_used = d.constraints_used;
    r.traversal = d.traversal;
    r.elapsed_ms = d.elapsed_ms;
    if (!d.error.empty()) ++errors;
    if (d.traversal.is_object()) {
      visited += d.traversal.value("nodes_visited", std::size_t{0});
      const auto levels = d.traversal.value("per_level_counts", std::vector<std::size_t>{});
      if (levels.size() > per_level.size()) per_level.resize(levels.size(), 0);
      for (std::size_t k = 0; k < levels.size(); ++k) per_level[k] += levels[k];
    }
  }
  const double total = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  rep.runtime = {{"total_ms", total},
                 {"mean_ms", records.empty() ? 0.0 : total / static_cast<double>(records.size())},
                 {"jobs", jobs},
                 {"errors", errors},
                 {"nodes_visited", visited},
                 {"per_level_counts", per_level},
                 {"deletions", cfg.deletions},
                 {"spurious_fraction", cfg.spurious_fraction}};
  return rep;
}

std::vector<CurvePoint> robustness_curve(const Engine& engine, const std::vector<QaRecord>& records,
                                         const std::vector<std::size_t>& deletions, EndToEndConfig cfg,
                                         std::size_t draws) {
  if (draws == 0) throw InputError("robustness curve needs at least one perturbation draw");
  const std::uint64_t base = cfg.seed;
  std::vector<CurvePoint> out;
  for (std::size_t x : deletions) {
    CurvePoint point{x, 0.0, 0.0, 0};
    cfg.deletions = x;
    for (std::size_t k = 0; k < draws; ++k) {
      cfg.seed = base + k;
      const auto rep = run_end_to_end(engine, records, cfg);
      point.hit1 += rep.hit1;
      point.f1 += rep.f1;
      point.queries += rep.records.size();
    }
    point.hit1 /= static_cast<double>(draws);
    point.f1 /= static_cast<double>(draws);
    out.push_back(point);
  }
  return out;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "deletions,hit1,f1,queries\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%zu\n", p.deletions, p.hit1, p.f1, p.queries);
    out += buf;
  }
  return out;
}

}  // namespace exactrag
