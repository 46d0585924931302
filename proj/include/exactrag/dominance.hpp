#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include "exactrag/embeddings.hpp"
#include "exactrag/graph.hpp"
#include "json.hpp"

namespace exactrag {

/// A star as seen by a dominance model: label embeddings plus label keys of
/// the center and its leaves. Pointers must outlive the call that uses them.
struct StarInput {
  const Vec* center = nullptr;
  std::uint64_t center_key = 0;
  std::vector<const Vec*> leaves;
  std::vector<std::uint64_t> leaf_keys;
};

/// Resolves a StarSubgraph against a graph's labels and an embedding table.
StarInput make_star_input(const Graph& g, const StarSubgraph& s, const EmbeddingTable& x);

struct ModelParams {
  std::size_t F = 16;
  std::size_t F_hidden = 32;
  std::size_t d = 8;
  Vec W_in;   // F_hidden x F, row-major
  Vec a;      // 2 * F_hidden: [a_center | a_neighbor]
  Vec W_out;  // d x F_hidden, row-major

  struct Meta {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double final_loss = 0.0;
    bool converged = false;
  } meta;

  std::size_t parameter_count() const { return W_in.size() + a.size() + W_out.size(); }
};

ModelParams init_params(std::size_t F, std::size_t F_hidden, std::size_t d, std::uint64_t seed);

/// Intermediate values of one star forward pass (kept for backprop).
struct GatForward {
  Vec h_center;
  std::vector<Vec> h_leaves;
  Vec scores;  // pre-activation attention logits, one per attended vertex
  Vec alpha;   // attention weights; a single 1.0 for a leafless center
  Vec z;       // attention-weighted center aggregate
  Vec y;       // star readout input
  Vec u;       // W_out * y
  Vec o;       // ReLU(u)
};

GatForward gat_forward(const ModelParams& p, const StarInput& star);

struct NodeUpdate {
  Vec center;
  std::vector<Vec> leaves;
  Vec alpha;
};

/// Attention-weighted update of every star vertex. The center attends over its
/// leaves (over itself when it has none); each leaf attends to the center only.
NodeUpdate gat_node_update(const ModelParams& p, const StarInput& star);

/// Non-negative d-dimensional embedding of a star.
Vec star_embedding(const ModelParams& p, const StarInput& star);

/// Squared hinge: sum_i max(0, o_sub[i] - o_star[i])^2.
double hinge_loss(const Vec& o_sub, const Vec& o_star);

struct TrainingPair {
  StarSubgraph star;
  StarSubgraph sub;
};

/// Full star of every non-isolated vertex paired with each of its (capped)
/// proper substructures.
std::vector<TrainingPair> training_pairs(const Graph& g, std::size_t cap, std::uint64_t seed);

/// Total hinge loss over the pairs. Throws InputError if a `sub` is not a
/// proper substructure of its `star`.
double dominance_loss(const Graph& g, const std::vector<TrainingPair>& pairs,
                      const ModelParams& p, const EmbeddingTable& x);

struct PairInput {
  StarInput star;
  StarInput sub;
};

struct Gradients {
  Vec W_in, a, W_out;
};

/// Summed loss over the batch; accumulates analytic gradients into `grad`
/// when non-null (the buffers are resized and zeroed first). `max_violation`
/// receives the largest o_sub[i] - o_star[i] seen (0 when none is positive).
double batch_loss_and_gradient(const ModelParams& p, const std::vector<PairInput>& batch,
                               Gradients* grad, double* max_violation = nullptr);

struct TrainConfig {
  double learning_rate = 0.5;
  std::size_t max_epochs = 5000;
  std::size_t batch_size = 16;
  double tolerance = 1e-6;            // epoch loss bound
  double violation_tolerance = 1e-6;  // largest allowed o_sub[i] - o_star[i]
  double grad_clip = 1.0;             // max global gradient L2 norm per step, 0 = off
  std::uint64_t seed = 0;
  std::size_t substructure_cap = 32;
  std::size_t F_hidden = 32;
  std::size_t d = 8;
};

struct TrainResult {
  ModelParams params;
  std::size_t epochs = 0;
  double final_loss = 0.0;
  bool converged = false;
  std::size_t pair_count = 0;
  std::vector<double> epoch_losses;
};

/// Mini-batch gradient descent (step = learning_rate * summed batch
/// gradient, rescaled to L2 norm grad_clip when larger) until the epoch loss and the largest per-coordinate violation
/// are both within tolerance. Returns the converged parameters, else the
/// lowest-loss ones. Throws NumericError on a NaN loss.
TrainResult train(const Graph& g, const EmbeddingTable& x, const TrainConfig& cfg);

nlohmann::json model_to_json(const ModelParams& p);
ModelParams model_from_json(const nlohmann::json& j);
void save_model(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

/// Count-oracle embedding: bucket k < d-1 counts leaves whose label key is k
/// mod (d-1); bucket d-1 marks the center.
Vec count_oracle_embedding(const StarInput& star, std::size_t d);
Vec count_oracle_embedding(const Graph& g, std::string_view v, std::size_t d);

/// Star-level dominance encoder shared by index build and query matching.
class DominanceModel {
 public:
  virtual ~DominanceModel() = default;
  virtual std::size_t dim() const = 0;
  virtual Vec embed(const StarInput& star) const = 0;
  virtual std::string_view kind() const = 0;
};

class CountOracleModel final : public DominanceModel {
 public:
  explicit CountOracleModel(std::size_t d = 8);
  std::size_t dim() const override { return d_; }
  Vec embed(const StarInput& star) const override { return count_oracle_embedding(star, d_); }
  std::string_view kind() const override { return "count-oracle"; }

 private:
  std::size_t d_;
};

class GatModel final : public DominanceModel {
 public:
  explicit GatModel(ModelParams params) : params_(std::move(params)) {}
  std::size_t dim() const override { return params_.d; }
  Vec embed(const StarInput& star) const override { return star_embedding(params_, star); }
  std::string_view kind() const override { return "gat"; }
  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
};

/// o(v) for every vertex: the embedding of v's full star.
EmbeddingTable node_dominance_embeddings(const Graph& g, const EmbeddingTable& x,
                                         const DominanceModel& model);

Vec path_dominance_embedding(const Path& p, const EmbeddingTable& node_embeddings);

}  // namespace exactrag
