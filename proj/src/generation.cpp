#include "exactrag/generation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>

#include "exactrag/errors.hpp"

namespace exactrag {

// ---------------------------------------------------------------------------
// Text providers

RemoteTextProvider::RemoteTextProvider(std::string endpoint, HttpOptions http)
    : endpoint_(std::move(endpoint)), http_(std::move(http)) {
  if (endpoint_.empty()) throw ConfigError("remote text provider requires an endpoint");
}

std::string RemoteTextProvider::complete(const std::string& prompt) {
  const auto reply = post_json(endpoint_, {{"prompt", prompt}}, http_);
  auto it = reply.find("text");
  if (it == reply.end() || !it->is_string()) {
    throw ProviderError("generation reply has no \"text\" string", false);
  }
  return it->get<std::string>();
}

std::string ScriptedTextProvider::complete(const std::string& prompt) {
  ++calls_;
  for (const auto& [key, response] : script_) {
    if (prompt.find(key) != std::string::npos) return response;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Prompt rendering

namespace {

constexpr const char* kInstruction =
    "The paragraph below lists relations taken from a knowledge graph.\n"
    "One of the entities it mentions answers the question that follows; work it out from the "
    "relations.\n"
    "Your answer must be exactly one entity label that appears in the paragraph.";

constexpr const char* kAnswerConstraint = "Answer: [Entity] or \"Unable to determine\"";

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Relation {
  std::string src, dst, sentence;
};

std::vector<Relation> relations_for(const Graph& g, const std::vector<std::string>& edge_ids) {
  std::vector<Relation> out;
  for (const auto& id : edge_ids) {
    const Edge* e = g.edge_by_id(id);
    if (e == nullptr) throw InputError("subgraph references unknown edge " + id);
    const std::string rel = e->description.empty() ? "related to" : e->description;
    out.push_back({e->src, e->dst,
                   g.vertex(e->src).label + " is related to " + g.vertex(e->dst).label + " via: " + rel + "."});
  }
  std::sort(out.begin(), out.end(), [](const Relation& a, const Relation& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });
  return out;
}

std::string omission_marker(std::size_t omitted) {
  return "[" + std::to_string(omitted) + " more relations omitted]";
}

std::string compose(const PromptDocument& doc) {
  std::string s = doc.instruction + "\n---\nKnown Relations:\n";
  for (const auto& r : doc.relations) s += r + "\n";
  if (doc.omitted > 0) s += omission_marker(doc.omitted) + "\n";
  s += "---\nUser Question: " + doc.question + "\n" + doc.answer_constraint + "\n";
  return s;
}

}  // namespace

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

nlohmann::json PromptDocument::to_json() const {
  return {{"instruction", instruction}, {"relations", relations}, {"question", question},
          {"answer_constraint", answer_constraint}, {"entities", entities}, {"omitted", omitted},
          {"rendered", rendered}};
}

PromptDocument render_subgraph_prompt(const Graph& g, const MatchResult& match,
                                      const std::string& question, std::size_t token_budget) {
  std::set<std::string> exact_ids;
  for (const auto& m : match.exact) exact_ids.insert(m.edges.begin(), m.edges.end());
  std::vector<std::string> fallback_ids;
  if (match.fallback) {
    for (const auto& id : match.fallback->edges) {
      if (!exact_ids.count(id)) fallback_ids.push_back(id);
    }
  }
  if (exact_ids.empty() && fallback_ids.empty()) {
    throw InputError("no matched or fallback subgraph edges to render");
  }
  auto ordered = relations_for(g, {exact_ids.begin(), exact_ids.end()});
  auto tail = relations_for(g, fallback_ids);
  ordered.insert(ordered.end(), tail.begin(), tail.end());

  PromptDocument doc;
  doc.instruction = kInstruction;
  doc.question = question;
  doc.answer_constraint = kAnswerConstraint;
  for (const auto& r : ordered) doc.relations.push_back(r.sentence);
  auto context_tokens = [&] {
    std::size_t n = 0;
    for (const auto& r : doc.relations) n += count_tokens(r);
    return n + (doc.omitted > 0 ? count_tokens(omission_marker(doc.omitted)) : 0);
  };
  while (!doc.relations.empty() && context_tokens() > token_budget) {
    doc.relations.pop_back();
    ++doc.omitted;
  }
  doc.rendered = compose(doc);
  std::set<std::string> entities;
  for (std::size_t i = 0; i < doc.relations.size(); ++i) {
    entities.insert(g.vertex(ordered[i].src).label);
    entities.insert(g.vertex(ordered[i].dst).label);
  }
  doc.entities.assign(entities.begin(), entities.end());
  return doc;
}

// ---------------------------------------------------------------------------
// Answers

std::string ExactBindingMock::respond(const PromptDocument&, const AnswerContext& ctx) {
  if (ctx.match == nullptr || ctx.match->exact.empty() || ctx.query == nullptr || ctx.data == nullptr) {
    return std::string(kUnableAnswer);
  }
  const auto& binding = ctx.match->exact.front().binding;
  for (const auto& [id, v] : ctx.query->vertices()) {
    if (!is_unknown_label(v.label)) continue;
    auto it = binding.find(id);
    if (it != binding.end()) return ctx.data->vertex(it->second).label;
  }
  return std::string(kUnableAnswer);
}

std::string TextAnswerProvider::respond(const PromptDocument& prompt, const AnswerContext&) {
  return provider_.complete(prompt.rendered);
}

std::string extract_answer(std::string_view text, const std::vector<std::string>& entities) {
  const std::string hay = lower(text);
  std::string best;
  for (const auto& e : entities) {
    if (e.empty() || e.size() <= best.size()) continue;
    if (hay.find(lower(e)) != std::string::npos) best = e;
  }
  return best;
}

nlohmann::json AnswerRecord::to_json() const {
  return {{"answer", answer}, {"unable", unable}, {"raw", raw}, {"mode", mode}};
}

AnswerRecord generate_answer(const PromptDocument& prompt, AnswerProvider& provider,
                             const AnswerContext& ctx) {
  AnswerRecord rec;
  rec.prompt = prompt;
  rec.mode = (ctx.match != nullptr && !ctx.match->exact.empty()) ? "exact" : "fallback";
  rec.raw = provider.respond(prompt, ctx);
  const auto hit = extract_answer(rec.raw, prompt.entities);
  rec.unable = hit.empty();
  rec.answer = rec.unable ? std::string(kUnableAnswer) : hit;
  return rec;
}

// ---------------------------------------------------------------------------
// Auxiliary prompts

PromptDocument render_empowerment_prompt(
    const std::string& question, const std::string& gold,
    const std::vector<std::pair<std::string, std::string>>& method_answers) {
  if (method_answers.empty()) throw InputError("at least one candidate answer is required");
  PromptDocument doc;
  doc.instruction =
      "Act as a reviewer. Read the question, the reference answer and every candidate answer, "
      "then score each candidate on its own.";
  doc.question = question;
  std::string s = doc.instruction + "\n\nQuestion: " + question + "\nGold Answer: " + gold + "\nAnswer List:\n";
  for (const auto& [method, answer] : method_answers) s += "  [" + method + "] " + answer + "\n";
  s +=
      "\nScoring Criteria:\n"
      "- Logical Coherence (0-2): clarity, completeness and ordering of the reasoning.\n"
      "- Insight (0-1): whether the answer adds a useful insight or suggestion.\n"
      "\nReturn JSON only, in this shape:\n{\n";
  for (std::size_t i = 0; i < method_answers.size(); ++i) {
    const auto n = std::to_string(i + 1);
    s += "  \"" + method_answers[i].first + "\": {\"logic\": L" + n + ", \"insight\": I" + n +
         ", \"total\": T" + n + "}" + (i + 1 < method_answers.size() ? "," : "") + "\n";
  }
  s += "}\n";
  doc.answer_constraint = "JSON scores per method";
  doc.rendered = std::move(s);
  return doc;
}

std::string render_question_prompt(const std::string& core_type,
                                   const std::vector<std::string>& unique_desc,
                                   const std::vector<std::string>& common_desc) {
  auto join = [](const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + xs[i];
    return s;
  };
  return "Write one fluent question that begins with \"Which " + core_type +
         "\" and refers to every item below, without revealing the answer.\n"
         "Features specific to the answer: " +
         join(unique_desc) + "\nContext it shares with a similar entity: " + join(common_desc) +
         "\nReturn the question sentence only.\n";
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::ofstream out(path, std::ios::app);
  if (!out) throw InputError("cannot append to log file " + path.string());
  out << record.dump() << "\n";
}

}  // namespace exactrag
