#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exactrag/graph.hpp"
#include "exactrag/matcher.hpp"
#include "exactrag/text_provider.hpp"
#include "json.hpp"

namespace exactrag {

inline constexpr std::string_view kUnableAnswer = "Unable to determine";
inline constexpr std::size_t kDefaultTokenBudget = 1200;

struct PromptDocument {
  std::string instruction;
  std::vector<std::string> relations;  // kept relation sentences, in order
  std::string question;
  std::string answer_constraint;
  std::vector<std::string> entities;  // labels mentioned by the kept relations
  std::size_t omitted = 0;            // relations dropped to fit the budget
  std::string rendered;

  nlohmann::json to_json() const;
};

/// Whitespace-delimited token count.
std::size_t count_tokens(std::string_view text);

/// Renders the answer prompt from the exact subgraphs of `match` (or its
/// fallback). Relation sentences are sorted by (source id, target id), exact
/// edges ahead of fallback edges; sentences are dropped from the tail until
/// the relation paragraph, omission marker included, fits `token_budget`.
/// Throws InputError if there is nothing to render.
PromptDocument render_subgraph_prompt(const Graph& g, const MatchResult& match,
                                      const std::string& question,
                                      std::size_t token_budget = kDefaultTokenBudget);

struct AnswerContext {
  const MatchResult* match = nullptr;
  const Graph* query = nullptr;  // query graph that still carries UNK labels
  const Graph* data = nullptr;
};

class AnswerProvider {
 public:
  virtual ~AnswerProvider() = default;
  virtual std::string respond(const PromptDocument& prompt, const AnswerContext& ctx) = 0;
};

/// Offline answerer: the data label bound to the first UNK query vertex in
/// the first exact binding (by signature); "Unable to determine" otherwise.
class ExactBindingMock final : public AnswerProvider {
 public:
  std::string respond(const PromptDocument& prompt, const AnswerContext& ctx) override;
};

/// Sends the rendered prompt to a text provider.
class TextAnswerProvider final : public AnswerProvider {
 public:
  explicit TextAnswerProvider(TextProvider& provider) : provider_(provider) {}
  std::string respond(const PromptDocument& prompt, const AnswerContext& ctx) override;

 private:
  TextProvider& provider_;
};

/// Longest case-insensitive occurrence of an entity label in `text`; empty
/// when none occurs.
std::string extract_answer(std::string_view text, const std::vector<std::string>& entities);

struct AnswerRecord {
  std::string answer;  // entity label, or "Unable to determine"
  bool unable = true;
  std::string raw;
  std::string mode;  // "exact" or "fallback"
  PromptDocument prompt;

  nlohmann::json to_json() const;
};

AnswerRecord generate_answer(const PromptDocument& prompt, AnswerProvider& provider,
                             const AnswerContext& ctx);

/// Reviewer prompt that scores candidate answers against a gold answer.
/// Throws InputError without candidates.
PromptDocument render_empowerment_prompt(
    const std::string& question, const std::string& gold,
    const std::vector<std::pair<std::string, std::string>>& method_answers);

/// Prompt asking an LLM to phrase a bridge-star question.
std::string render_question_prompt(const std::string& core_type,
                                   const std::vector<std::string>& unique_desc,
                                   const std::vector<std::string>& common_desc);

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);

}  // namespace exactrag
