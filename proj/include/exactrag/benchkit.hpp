#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exactrag/generation.hpp"
#include "exactrag/graph.hpp"
#include "exactrag/pipeline.hpp"
#include "exactrag/text_provider.hpp"
#include "json.hpp"

namespace exactrag {

struct SyntheticGraphConfig {
  std::size_t vertices = 200;
  std::size_t communities = 10;
  double p_in = 0.2;
  double p_out = 0.004;
  std::uint64_t seed = 1;
};

/// Planted-partition graph with unique labels ("<Type> <n>") and one entity
/// type per community.
Graph synthetic_graph(const SyntheticGraphConfig& cfg);

/// Two star centers that share at least one neighbor.
struct BridgeStar {
  std::string center_a;
  std::string center_b;
  std::vector<std::string> bridges;   // common neighbors, sorted
  std::vector<std::string> unique_a;  // neighbors of a only (b excluded), sorted
  std::vector<std::string> unique_b;

  friend bool operator==(const BridgeStar&, const BridgeStar&) = default;
};

/// Every qualifying center pair (a < b), in id order: both of degree >=
/// `min_degree`, non-adjacent, at least one bridge and one unique neighbor
/// each.
std::vector<BridgeStar> bridge_star_candidates(const Graph& g, std::size_t min_degree = 3);

/// Seeded pick among bridge_star_candidates. Throws InputError when there is
/// no qualifying pair.
BridgeStar sample_bridge_star(const Graph& g, std::uint64_t seed, std::size_t min_degree = 3);

struct QaRecord {
  std::string id;
  std::string question;
  std::vector<std::string> constraints;     // labels: hidden center's unique neighbors, then bridges
  std::vector<std::string> constraint_ids;  // data vertex ids aligned with constraints
  std::string gold;                         // hidden center label
  std::string gold_id;
  std::string hidden;   // hidden center id
  std::string visible;  // distractor center id
  std::vector<std::string> bridges;
  std::size_t constraint_count = 0;

  nlohmann::json to_json() const;
  static QaRecord from_json(const nlohmann::json& j);
};

/// Templated question: "Which <type> is associated with a, b, and c?".
std::string template_question(const std::string& core_type, const std::vector<std::string>& constraints);

/// Two records, hiding each center in turn. With a provider the question text
/// is requested through the question prompt; otherwise it is templated.
std::vector<QaRecord> make_qa(const Graph& g, const BridgeStar& bs, TextProvider* provider = nullptr);

/// True when some vertex other than the hidden center also neighbors every
/// constraint label.
bool is_ambiguous(const Graph& g, const QaRecord& r);

/// Star query for a record: UNK center "q0" and leaves "q1".."qk".
Graph qa_query_graph(const QaRecord& r);

/// Same query in the extraction grammar.
std::string qa_structured_text(const QaRecord& r);

/// Up to `n` unambiguous records from seeded-shuffled bridge stars.
std::vector<QaRecord> generate_dataset(const Graph& g, std::size_t n, std::uint64_t seed,
                                       std::size_t min_degree = 3, TextProvider* provider = nullptr);

void write_records(const std::vector<QaRecord>& records, const std::filesystem::path& path);
std::vector<QaRecord> read_records(const std::filesystem::path& path);

struct RecordResult {
  std::string id;
  std::string gold;
  std::string answer;
  bool hit = false;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::string mode;
  std::string error;
  std::size_t exact_matches = 0;
  std::size_t constraints_used = 0;
  nlohmann::json traversal;
  double elapsed_ms = 0.0;
};

struct EvalReport {
  double hit1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<RecordResult> records;
  nlohmann::json runtime = nlohmann::json::object();

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Case-folded, whitespace-trimmed label equality.
bool same_entity(const std::string& a, const std::string& b);

/// Scores aligned answers. An answer of "Unable to determine" (or empty) is
/// an empty prediction. Throws InputError on a length mismatch.
EvalReport evaluate(const std::vector<QaRecord>& records, const std::vector<std::string>& answers);

struct EndToEndConfig {
  std::size_t deletions = 0;         // constraint leaves removed per query
  double spurious_fraction = 0.0;    // share of queries given an unsatisfiable extra leaf
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  TextProvider* extractor = nullptr;  // NL extraction; structured queries when null
  AnswerProvider* answerer = nullptr;  // ExactBindingMock when null
};

/// Applies the configured perturbation to a record's query. Deleted leaves
/// are a prefix of a permutation seeded by (seed, record id), so a larger
/// `deletions` removes a superset. At least one leaf is kept.
Graph perturbed_query(const Graph& g, const QaRecord& r, const EndToEndConfig& cfg);

/// Answers every record through the engine. Per-record failures are recorded
/// as UNABLE with the error message.
EvalReport run_end_to_end(const Engine& engine, const std::vector<QaRecord>& records,
                          const EndToEndConfig& cfg = {});

struct CurvePoint {
  std::size_t deletions = 0;
  double hit1 = 0.0;
  double f1 = 0.0;
  std::size_t queries = 0;  // perturbed queries behind the averages
};

/// Mean hit1 and f1 for each deletion count over `draws` perturbation seeds
/// (cfg.seed, cfg.seed + 1, ...), every record once per draw.
std::vector<CurvePoint> robustness_curve(const Engine& engine, const std::vector<QaRecord>& records,
                                         const std::vector<std::size_t>& deletions,
                                         EndToEndConfig cfg = {}, std::size_t draws = 10);
std::string curve_to_csv(const std::vector<CurvePoint>& curve);

}  // namespace exactrag
