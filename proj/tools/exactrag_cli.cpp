#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exactrag/benchkit.hpp"
#include "exactrag/config.hpp"
#include "exactrag/errors.hpp"
#include "exactrag/generation.hpp"
#include "exactrag/pipeline.hpp"

namespace fs = std::filesystem;
using namespace exactrag;

namespace {

// Flags shared by every subcommand; each one maps onto a config key.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string graph, index, model, provider, l, seed, jobs, token_budget, embedding_endpoint,
      generation_endpoint;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value settings file");
  cmd->add_option("--graph", f.graph, "graph file (delimiter format or JSON)");
  cmd->add_option("--index", f.index, "index file");
  cmd->add_option("--model", f.model, "dominance model file");
  cmd->add_option("--provider", f.provider, "mock | count-oracle | remote");
  cmd->add_option("--l", f.l, "path length");
  cmd->add_option("--seed", f.seed, "seed");
  cmd->add_option("--jobs", f.jobs, "worker threads");
  cmd->add_option("--token-budget", f.token_budget, "prompt context budget in tokens");
  cmd->add_option("--embedding-endpoint", f.embedding_endpoint, "remote embedding URL");
  cmd->add_option("--generation-endpoint", f.generation_endpoint, "remote text generation URL");
  cmd->add_option("--set", f.sets, "extra setting as key=value (repeatable)");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = load_run_config(f.config);
  const std::pair<const char*, const std::string*> flags[] = {
      {"graph", &f.graph},
      {"index", &f.index},
      {"model", &f.model},
      {"provider", &f.provider},
      {"l", &f.l},
      {"seed", &f.seed},
      {"jobs", &f.jobs},
      {"token_budget", &f.token_budget},
      {"embedding_endpoint", &f.embedding_endpoint},
      {"generation_endpoint", &f.generation_endpoint}};
  for (const auto& [key, value] : flags) {
    if (!value->empty()) apply_setting(cfg, key, *value);
  }
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

const std::string& require(const std::string& value, const char* what) {
  if (value.empty()) throw InputError(std::string("missing required setting: ") + what);
  return value;
}

Graph load_graph(const RunConfig& cfg) {
  ParseDiagnostics diag;
  auto g = load_graph_file(require(cfg.graph, "graph"), &diag);
  if (diag.rejected() > 0) {
    std::cerr << "warning: " << diag.rejected() << " graph records skipped";
    if (!diag.messages.empty()) std::cerr << " (first: " << diag.messages.front() << ")";
    std::cerr << "\n";
  }
  if (g.empty()) throw InputError("graph file " + cfg.graph + " has no vertices");
  return g;
}

fs::path model_path(const RunConfig& cfg) {
  if (!cfg.model.empty()) return cfg.model;
  return fs::path(require(cfg.index, "index")).string() + ".model.json";
}

std::shared_ptr<EmbeddingCache> cache_for(const RunConfig& cfg, const EngineConfig& e) {
  if (cfg.index.empty() || e.provider.kind != ProviderKind::kRemote) return nullptr;
  return std::make_shared<EmbeddingCache>(EmbeddingCache::path_for(cfg.index, e.provider.kind, e.provider.F));
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw InputError("cannot write " + out);
  f << j.dump(2) << "\n";
}

std::string read_all(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InputError("expected a comma-separated list of counts, got '" + text + "'");
    }
  }
  return out;
}

// Engine for read commands: the persisted index when given, else an
// in-memory build.
Engine engine_for(const RunConfig& cfg, Graph g, const std::vector<std::size_t>& lengths) {
  const auto e = cfg.resolved_engine();
  const auto cache = cache_for(cfg, e);
  const bool needs_model = e.provider.kind != ProviderKind::kCountOracle;
  if (!cfg.index.empty() && fs::exists(cfg.index)) {
    std::optional<ModelParams> model;
    if (needs_model) {
      const auto mp = model_path(cfg);
      if (!fs::exists(mp)) throw InputError("model file not found: " + mp.string());
      model = load_model(mp);
    }
    return Engine::open(std::move(g), PathIndex::load(cfg.index), e, std::move(model), cache);
  }
  if (!cfg.index.empty()) throw InputError("index file not found: " + cfg.index);
  std::optional<ModelParams> model;
  if (needs_model && !cfg.model.empty() && fs::exists(cfg.model)) model = load_model(cfg.model);
  return Engine::build(std::move(g), lengths, e, std::move(model), cache);
}

struct Answerers {
  std::unique_ptr<RemoteTextProvider> remote;
  std::unique_ptr<TextAnswerProvider> text;
  ExactBindingMock mock;

  explicit Answerers(const RunConfig& cfg) {
    if (cfg.generation_endpoint.empty()) return;
    remote = std::make_unique<RemoteTextProvider>(cfg.generation_endpoint, cfg.resolved_engine().provider.http);
    text = std::make_unique<TextAnswerProvider>(*remote);
  }
  AnswerProvider& answerer() { return text ? static_cast<AnswerProvider&>(*text) : mock; }
};

// ---------------------------------------------------------------------------

int cmd_build_index(const RunConfig& cfg, const std::string& out) {
  auto g = load_graph(cfg);
  const auto& index = require(cfg.index, "index");
  const auto e = cfg.resolved_engine();
  const std::size_t l = cfg.l == 0 ? 2 : cfg.l;

  std::optional<ModelParams> model;
  const bool needs_model = e.provider.kind != ProviderKind::kCountOracle;
  if (needs_model && !cfg.model.empty() && fs::exists(cfg.model)) model = load_model(cfg.model);
  const auto engine = Engine::build(g, {l}, e, model, cache_for(cfg, e));
  engine.index(l).save(index);

  nlohmann::json report;
  report["graph"] = {{"path", cfg.graph},
                     {"vertices", g.vertex_count()},
                     {"edges", g.edge_count()},
                     {"fingerprint", g.fingerprint()}};
  report["index"] = engine.index(l).header();
  report["index"]["path"] = index;
  report["build"] = engine.build_report();
  if (engine.trained_model() && !model) {
    const auto mp = model_path(cfg);
    save_model(*engine.trained_model(), mp);
    report["model"] = mp.string();
  }
  emit(report, out);
  return 0;
}

int cmd_query(const RunConfig& cfg, std::string question, bool structured, const std::string& log,
              const std::string& out) {
  if (question.empty()) question = read_all(std::cin);
  if (question.find_first_not_of(" \t\r\n") == std::string::npos) throw InputError("empty question");
  auto g = load_graph(cfg);
  require(cfg.index, "index");
  const auto engine = engine_for(cfg, std::move(g), {});
  Answerers answerers(cfg);
  std::optional<std::size_t> forced;
  if (cfg.l != 0) forced = cfg.l;
  const auto outcome =
      engine.answer_text(question, structured ? nullptr : answerers.remote.get(), answerers.answerer(), forced);

  nlohmann::json bindings = nlohmann::json::array();
  for (const auto& m : outcome.match.exact) bindings.push_back(m.binding);
  nlohmann::json j{{"answer", outcome.answer.answer},
                   {"mode", outcome.answer.mode},
                   {"unable", outcome.answer.unable},
                   {"bindings", std::move(bindings)},
                   {"stats", outcome.match.stats.to_json()},
                   {"details", outcome.to_json()}};
  if (!log.empty()) {
    append_jsonl(log, {{"question", question},
                       {"prompt", outcome.answer.prompt.rendered},
                       {"raw", outcome.answer.raw},
                       {"answer", outcome.answer.answer},
                       {"mode", outcome.answer.mode}});
  }
  emit(j, out);
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out) {
  const auto g = load_graph(cfg);
  const auto e = cfg.resolved_engine();
  auto embedder = make_label_embedder(e.provider, cache_for(cfg, e));
  const auto x = embed_graph_labels(g, *embedder);
  TrainConfig tc = e.train;
  tc.d = e.dominance_dim;
  const auto result = train(g, x, tc);
  const fs::path target = out.empty() ? fs::path(require(cfg.model, "model or --out")) : fs::path(out);
  save_model(result.params, target);
  if (!result.converged) std::cerr << "warning: training stopped before convergence\n";
  nlohmann::json report{{"model", target.string()},
                        {"epochs", result.epochs},
                        {"final_loss", result.final_loss},
                        {"converged", result.converged},
                        {"pairs", result.pair_count}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_gen_graph(const SyntheticGraphConfig& sc, const std::string& out) {
  const auto g = synthetic_graph(sc);
  save_graph_file(g, require(out, "--out"));
  std::cout << nlohmann::json{{"graph", out}, {"vertices", g.vertex_count()}, {"edges", g.edge_count()}}.dump(2)
            << "\n";
  return 0;
}

int cmd_gen_dataset(const RunConfig& cfg, std::size_t n, std::size_t min_degree, const std::string& out) {
  const auto g = load_graph(cfg);
  std::unique_ptr<RemoteTextProvider> polish;
  if (!cfg.generation_endpoint.empty()) {
    polish = std::make_unique<RemoteTextProvider>(cfg.generation_endpoint, cfg.resolved_engine().provider.http);
  }
  const auto records = generate_dataset(g, n, cfg.engine.provider.seed, min_degree, polish.get());
  write_records(records, require(out, "--out"));
  if (records.size() < n) std::cerr << "warning: only " << records.size() << " unambiguous records found\n";
  std::cout << nlohmann::json{{"records", records.size()}, {"requested", n}, {"path", out}}.dump(2) << "\n";
  return 0;
}

struct EvalFlags {
  std::string records;
  std::size_t perturb = 0;
  double spurious = 0.0;
  std::string curve;
  std::size_t draws = 10;
  std::string csv;
  bool natural = false;
};

int cmd_eval(const RunConfig& cfg, const EvalFlags& f, const std::string& out) {
  auto g = load_graph(cfg);
  const auto records = read_records(require(f.records, "--records"));
  std::vector<std::size_t> lengths{1, 2};
  if (cfg.l != 0) lengths = {cfg.l};
  const auto engine = engine_for(cfg, std::move(g), lengths);
  Answerers answerers(cfg);

  EndToEndConfig e2e;
  e2e.deletions = f.perturb;
  e2e.spurious_fraction = f.spurious;
  e2e.seed = cfg.engine.provider.seed;
  e2e.jobs = cfg.jobs;
  e2e.extractor = f.natural ? answerers.remote.get() : nullptr;
  if (f.natural && !e2e.extractor) throw ConfigError("--natural needs a generation endpoint");
  e2e.answerer = answerers.text ? answerers.text.get() : nullptr;

  const auto rep = run_end_to_end(engine, records, e2e);
  auto j = rep.to_json();
  if (!f.curve.empty()) {
    const auto curve = robustness_curve(engine, records, parse_list(f.curve), e2e, f.draws);
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : curve) {
      points.push_back({{"deletions", p.deletions}, {"hit1", p.hit1}, {"f1", p.f1}, {"queries", p.queries}});
    }
    j["curve"] = std::move(points);
  }
  if (!f.csv.empty()) {
    std::ofstream csv(f.csv, std::ios::binary);
    if (!csv) throw InputError("cannot write " + f.csv);
    csv << rep.to_csv();
  }
  emit(j, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact-match retrieval over knowledge graphs"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string out;

  auto* build = app.add_subcommand("build-index", "embed, train if needed, and persist a path index");
  add_common(build, common);
  build->add_option("--out", out, "build report path (stdout when omitted)");

  std::string question, log;
  bool structured = false;
  auto* query = app.add_subcommand("query", "answer one question against a persisted index");
  add_common(query, common);
  query->add_option("--question", question, "question text (stdin when omitted)");
  query->add_flag("--structured", structured, "question is already in the query grammar");
  query->add_option("--log", log, "append prompt and answer as a JSON line");
  query->add_option("--out", out, "result path (stdout when omitted)");

  auto* trainc = app.add_subcommand("train", "train a dominance model");
  add_common(trainc, common);
  trainc->add_option("--out", out, "model path (defaults to --model)");

  SyntheticGraphConfig sc;
  auto* gen_graph = app.add_subcommand("gen-graph", "write a synthetic community graph");
  gen_graph->add_option("--vertices", sc.vertices, "vertex count")->check(CLI::PositiveNumber);
  gen_graph->add_option("--communities", sc.communities, "community count")->check(CLI::PositiveNumber);
  gen_graph->add_option("--p-in", sc.p_in, "edge probability inside a community")->check(CLI::Range(0.0, 1.0));
  gen_graph->add_option("--p-out", sc.p_out, "edge probability across communities")->check(CLI::Range(0.0, 1.0));
  gen_graph->add_option("--seed", sc.seed, "seed");
  gen_graph->add_option("--out", out, "graph path")->required();

  std::size_t n = 100, min_degree = 3;
  auto* gen_data = app.add_subcommand("gen-dataset", "generate bridge-star QA records");
  add_common(gen_data, common);
  gen_data->add_option("--n", n, "record count");
  gen_data->add_option("--min-degree", min_degree, "minimum star-center degree")->check(CLI::PositiveNumber);
  gen_data->add_option("--out", out, "records path (JSON lines)")->required();

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "run QA records end to end and score them");
  add_common(eval, common);
  eval->add_option("--records", ef.records, "records file (JSON lines)");
  eval->add_option("--perturb", ef.perturb, "constraint leaves deleted per query");
  eval->add_option("--spurious", ef.spurious, "share of queries given an unsatisfiable leaf")
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--curve", ef.curve, "deletion counts for a robustness curve, e.g. 1,2,3");
  eval->add_option("--draws", ef.draws, "perturbation seeds per record for the curve")
      ->check(CLI::PositiveNumber);
  eval->add_option("--csv", ef.csv, "per-record CSV path");
  eval->add_flag("--natural", ef.natural, "extract queries from question text via the generation endpoint");
  eval->add_option("--out", out, "report path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_graph) return cmd_gen_graph(sc, out);
    const RunConfig cfg = resolve(common);
    if (*build) return cmd_build_index(cfg, out);
    if (*query) return cmd_query(cfg, question, structured, log, out);
    if (*trainc) return cmd_train(cfg, out);
    if (*gen_data) return cmd_gen_dataset(cfg, n, min_degree, out);
    if (*eval) return cmd_eval(cfg, ef, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
