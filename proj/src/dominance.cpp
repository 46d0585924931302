#include "exactrag/dominance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "exactrag/errors.hpp"
#include "exactrag/hashing.hpp"

namespace exactrag {
namespace {

constexpr double kLeakySlope = 0.2;

// Written so that NaN propagates instead of being clamped away.
double leaky(double s) { return s < 0.0 ? kLeakySlope * s : s; }
double relu(double s) { return s <= 0.0 ? 0.0 : s; }

Vec project(const Vec& W, std::size_t rows, std::size_t cols, const Vec& x) {
  Vec out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = W.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void check_input(const ModelParams& p, const StarInput& star) {
  if (star.center == nullptr) throw InputError("star input has no center embedding");
  if (star.center->size() != p.F) {
    throw InputError("star embedding dimension " + std::to_string(star.center->size()) +
                     " does not match model F = " + std::to_string(p.F));
  }
  for (const Vec* leaf : star.leaves) {
    if (leaf == nullptr || leaf->size() != p.F) throw InputError("leaf embedding dimension mismatch");
  }
}

bool is_proper_substructure(const StarSubgraph& sub, const StarSubgraph& star) {
  if (sub.center != star.center || sub.leaves.size() >= star.leaves.size()) return false;
  return std::includes(star.leaves.begin(), star.leaves.end(), sub.leaves.begin(), sub.leaves.end());
}

void backward(const ModelParams& p, const StarInput& star, const GatForward& f, const Vec& d_o,
              Gradients& g) {
  const std::size_t Fh = p.F_hidden, F = p.F, d = p.d;
  const std::size_t k = star.leaves.size();

  Vec du(d);
  for (std::size_t i = 0; i < d; ++i) du[i] = f.u[i] > 0.0 ? d_o[i] : 0.0;

  Vec dy(Fh, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (du[i] == 0.0) continue;
    double* gw = g.W_out.data() + i * Fh;
    const double* w = p.W_out.data() + i * Fh;
    for (std::size_t j = 0; j < Fh; ++j) {
      gw[j] += du[i] * f.y[j];
      dy[j] += w[j] * du[i];
    }
  }

  Vec dz(Fh);
  for (std::size_t j = 0; j < Fh; ++j) dz[j] = f.z[j] > 0.0 ? dy[j] : 0.0;

  Vec dh_c(Fh, 0.0);
  const double leaf_count = static_cast<double>(k);
  for (std::size_t j = 0; j < Fh; ++j) {
    if (f.h_center[j] > 0.0) dh_c[j] += leaf_count * dy[j];
  }

  std::vector<Vec> dh_leaf(k, Vec(Fh, 0.0));
  if (k == 0) {
    for (std::size_t j = 0; j < Fh; ++j) dh_c[j] += dz[j];
  } else {
    Vec dalpha(k);
    double weighted = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      dalpha[m] = dot(dz.data(), f.h_leaves[m].data(), Fh);
      weighted += f.alpha[m] * dalpha[m];
    }
    const double* a1 = p.a.data();
    const double* a2 = p.a.data() + Fh;
    double* ga1 = g.a.data();
    double* ga2 = g.a.data() + Fh;
    for (std::size_t m = 0; m < k; ++m) {
      const double de = f.alpha[m] * (dalpha[m] - weighted);
      const double ds = de * (f.scores[m] > 0.0 ? 1.0 : kLeakySlope);
      const Vec& hm = f.h_leaves[m];
      Vec& dhm = dh_leaf[m];
      for (std::size_t j = 0; j < Fh; ++j) {
        dhm[j] += f.alpha[m] * dz[j] + ds * a2[j];
        dh_c[j] += ds * a1[j];
        ga1[j] += ds * f.h_center[j];
        ga2[j] += ds * hm[j];
      }
    }
  }

  auto accumulate_in = [&](const Vec& dh, const Vec& x) {
    for (std::size_t r = 0; r < Fh; ++r) {
      if (dh[r] == 0.0) continue;
      double* gw = g.W_in.data() + r * F;
      for (std::size_t c = 0; c < F; ++c) gw[c] += dh[r] * x[c];
    }
  };
  accumulate_in(dh_c, *star.center);
  for (std::size_t m = 0; m < k; ++m) accumulate_in(dh_leaf[m], *star.leaves[m]);
}

}  // namespace

StarInput make_star_input(const Graph& g, const StarSubgraph& s, const EmbeddingTable& x) {
  auto lookup = [&](const std::string& id) -> const Vec* {
    auto it = x.find(id);
    if (it == x.end()) throw InputError("no label embedding for vertex " + id);
    return &it->second;
  };
  StarInput in;
  in.center = lookup(s.center);
  in.center_key = label_key(g.vertex(s.center).label);
  for (const auto& leaf : s.leaves) {
    in.leaves.push_back(lookup(leaf));
    in.leaf_keys.push_back(label_key(g.vertex(leaf).label));
  }
  return in;
}

ModelParams init_params(std::size_t F, std::size_t F_hidden, std::size_t d, std::uint64_t seed) {
  if (F == 0 || F_hidden == 0 || d == 0) throw ConfigError("model dimensions must be positive");
  ModelParams p;
  p.F = F;
  p.F_hidden = F_hidden;
  p.d = d;
  p.meta.seed = seed;
  std::mt19937_64 rng(seed);
  auto fill = [&](Vec& v, std::size_t n, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    v.resize(n);
    for (auto& w : v) w = dist(rng);
  };
  fill(p.W_in, F_hidden * F, std::sqrt(6.0 / static_cast<double>(F + F_hidden)));
  fill(p.a, 2 * F_hidden, std::sqrt(6.0 / static_cast<double>(2 * F_hidden + 1)));
  fill(p.W_out, d * F_hidden, std::sqrt(6.0 / static_cast<double>(F_hidden + d)));
  return p;
}

GatForward gat_forward(const ModelParams& p, const StarInput& star) {
  check_input(p, star);
  const std::size_t Fh = p.F_hidden;
  const std::size_t k = star.leaves.size();
  GatForward f;
  f.h_center = project(p.W_in, Fh, p.F, *star.center);
  f.h_leaves.reserve(k);
  for (const Vec* leaf : star.leaves) f.h_leaves.push_back(project(p.W_in, Fh, p.F, *leaf));

  const double* a1 = p.a.data();
  const double* a2 = p.a.data() + Fh;
  const double center_term = dot(a1, f.h_center.data(), Fh);
  if (k == 0) {
    f.scores = {center_term + dot(a2, f.h_center.data(), Fh)};
    f.alpha = {1.0};
    f.z = f.h_center;
  } else {
    f.scores.resize(k);
    Vec e(k);
    double max_e = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < k; ++m) {
      f.scores[m] = center_term + dot(a2, f.h_leaves[m].data(), Fh);
      e[m] = leaky(f.scores[m]);
      max_e = std::max(max_e, e[m]);
    }
    f.alpha.resize(k);
    double total = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      f.alpha[m] = std::exp(e[m] - max_e);
      total += f.alpha[m];
    }
    for (auto& w : f.alpha) w /= total;
    f.z.assign(Fh, 0.0);
    for (std::size_t m = 0; m < k; ++m) {
      for (std::size_t j = 0; j < Fh; ++j) f.z[j] += f.alpha[m] * f.h_leaves[m][j];
    }
  }

  f.y.resize(Fh);
  const double leaf_count = static_cast<double>(k);
  for (std::size_t j = 0; j < Fh; ++j) f.y[j] = relu(f.z[j]) + leaf_count * relu(f.h_center[j]);
  f.u = project(p.W_out, p.d, Fh, f.y);
  f.o.resize(p.d);
  for (std::size_t i = 0; i < p.d; ++i) f.o[i] = relu(f.u[i]);
  return f;
}

NodeUpdate gat_node_update(const ModelParams& p, const StarInput& star) {
  const auto f = gat_forward(p, star);
  NodeUpdate out;
  out.alpha = f.alpha;
  out.center.resize(p.F_hidden);
  for (std::size_t j = 0; j < p.F_hidden; ++j) out.center[j] = relu(f.z[j]);
  Vec leaf(p.F_hidden);
  for (std::size_t j = 0; j < p.F_hidden; ++j) leaf[j] = relu(f.h_center[j]);
  out.leaves.assign(star.leaves.size(), leaf);
  return out;
}

Vec star_embedding(const ModelParams& p, const StarInput& star) { return gat_forward(p, star).o; }

double hinge_loss(const Vec& o_sub, const Vec& o_star) {
  if (o_sub.size() != o_star.size()) throw InputError("hinge loss over vectors of different size");
  double loss = 0.0;
  for (std::size_t i = 0; i < o_sub.size(); ++i) {
    const double v = o_sub[i] - o_star[i];
    if (v > 0.0) loss += v * v;
  }
  return loss;
}

std::vector<TrainingPair> training_pairs(const Graph& g, std::size_t cap, std::uint64_t seed) {
  std::vector<TrainingPair> pairs;
  for (const auto& [id, v] : g.vertices()) {
    auto star = star_subgraph(g, id);
    if (star.leaves.empty()) continue;
    for (auto& sub : enumerate_substructures(star, cap, seed)) {
      pairs.push_back({star, std::move(sub)});
    }
  }
  return pairs;
}

double dominance_loss(const Graph& g, const std::vector<TrainingPair>& pairs,
                      const ModelParams& p, const EmbeddingTable& x) {
  double loss = 0.0;
  for (const auto& pair : pairs) {
    if (!is_proper_substructure(pair.sub, pair.star)) {
      throw InputError("training pair at center " + pair.star.center +
                       " is not a proper substructure");
    }
    loss += hinge_loss(star_embedding(p, make_star_input(g, pair.sub, x)),
                       star_embedding(p, make_star_input(g, pair.star, x)));
  }
  return loss;
}

double batch_loss_and_gradient(const ModelParams& p, const std::vector<PairInput>& batch,
                               Gradients* grad, double* max_violation) {
  if (max_violation != nullptr) *max_violation = 0.0;
  if (grad != nullptr) {
    grad->W_in.assign(p.W_in.size(), 0.0);
    grad->a.assign(p.a.size(), 0.0);
    grad->W_out.assign(p.W_out.size(), 0.0);
  }
  double loss = 0.0;
  Vec d_sub(p.d), d_star(p.d);
  for (const auto& pair : batch) {
    const auto fs = gat_forward(p, pair.sub);
    const auto fg = gat_forward(p, pair.star);
    bool violated = false;
    for (std::size_t i = 0; i < p.d; ++i) {
      const double v = fs.o[i] - fg.o[i];
      if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
      if (v > 0.0) {
        loss += v * v;
        if (max_violation != nullptr && v > *max_violation) *max_violation = v;
        d_sub[i] = 2.0 * v;
        d_star[i] = -2.0 * v;
        violated = true;
      } else {
        d_sub[i] = 0.0;
        d_star[i] = 0.0;
      }
    }
    if (grad != nullptr && violated) {
      backward(p, pair.sub, fs, d_sub, *grad);
      backward(p, pair.star, fg, d_star, *grad);
    }
  }
  return loss;
}

TrainResult train(const Graph& g, const EmbeddingTable& x, const TrainConfig& cfg) {
  if (g.empty()) throw InputError("cannot train on an empty graph");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.tolerance < 0.0) throw ConfigError("loss tolerance must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (cfg.grad_clip < 0.0) throw ConfigError("gradient clip must be non-negative");
  if (x.empty()) throw InputError("no label embeddings to train on");

  const std::size_t F = x.begin()->second.size();
  TrainResult result;
  result.params = init_params(F, cfg.F_hidden, cfg.d, cfg.seed);

  const auto pairs = training_pairs(g, cfg.substructure_cap, cfg.seed);
  result.pair_count = pairs.size();
  std::vector<PairInput> inputs;
  inputs.reserve(pairs.size());
  for (const auto& pr : pairs) {
    inputs.push_back({make_star_input(g, pr.star, x), make_star_input(g, pr.sub, x)});
  }

  ModelParams& params = result.params;
  double worst = 0.0;
  double best_loss = batch_loss_and_gradient(params, inputs, nullptr, &worst);
  ModelParams best = params;
  if (best_loss <= cfg.tolerance && worst <= cfg.violation_tolerance) result.converged = true;

  std::mt19937_64 rng(cfg.seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  Gradients grad;
  std::vector<PairInput> batch;

  std::size_t epoch = 0;
  while (!result.converged && epoch < cfg.max_epochs) {
    ++epoch;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(inputs[order[i]]);
      const double loss = batch_loss_and_gradient(params, batch, &grad);
      if (std::isnan(loss)) throw NumericError("training loss became NaN in epoch " + std::to_string(epoch));
      if (loss == 0.0) continue;
      double step = cfg.learning_rate;
      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (double v : grad.W_in) sq += v * v;
        for (double v : grad.a) sq += v * v;
        for (double v : grad.W_out) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) step *= cfg.grad_clip / norm;
      }
      for (std::size_t i = 0; i < params.W_in.size(); ++i) params.W_in[i] -= step * grad.W_in[i];
      for (std::size_t i = 0; i < params.a.size(); ++i) params.a[i] -= step * grad.a[i];
      for (std::size_t i = 0; i < params.W_out.size(); ++i) params.W_out[i] -= step * grad.W_out[i];
    }
    const double epoch_loss = batch_loss_and_gradient(params, inputs, nullptr, &worst);
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch));
    }
    result.epoch_losses.push_back(epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best = params;
    }
    if (epoch_loss <= cfg.tolerance && worst <= cfg.violation_tolerance) {
      result.converged = true;
      best_loss = epoch_loss;
      best = params;
    }
  }

  result.params = std::move(best);
  result.epochs = epoch;
  result.final_loss = best_loss;
  result.params.meta = {cfg.seed, epoch, best_loss, result.converged};
  return result;
}

nlohmann::json model_to_json(const ModelParams& p) {
  return {{"F", p.F},
          {"F_hidden", p.F_hidden},
          {"d", p.d},
          {"W_in", p.W_in},
          {"a", p.a},
          {"W_out", p.W_out},
          {"meta",
           {{"seed", p.meta.seed},
            {"epochs", p.meta.epochs},
            {"final_loss", p.meta.final_loss},
            {"converged", p.meta.converged}}}};
}

ModelParams model_from_json(const nlohmann::json& j) {
  ModelParams p;
  try {
    p.F = j.at("F").get<std::size_t>();
    p.F_hidden = j.at("F_hidden").get<std::size_t>();
    p.d = j.at("d").get<std::size_t>();
    p.W_in = j.at("W_in").get<Vec>();
    p.a = j.at("a").get<Vec>();
    p.W_out = j.at("W_out").get<Vec>();
    if (auto m = j.find("meta"); m != j.end()) {
      p.meta.seed = m->value("seed", std::uint64_t{0});
      p.meta.epochs = m->value("epochs", std::size_t{0});
      p.meta.final_loss = m->value("final_loss", 0.0);
      p.meta.converged = m->value("converged", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model JSON: ") + e.what());
  }
  if (p.W_in.size() != p.F_hidden * p.F || p.a.size() != 2 * p.F_hidden ||
      p.W_out.size() != p.d * p.F_hidden) {
    throw InputError("model matrices do not match the declared dimensions");
  }
  return p;
}

void save_model(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file: " + path.string());
  out << model_to_json(p).dump() << "\n";
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file: " + path.string());
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("model file " + path.string() + " is not JSON: " + e.what());
  }
}

Vec count_oracle_embedding(const StarInput& star, std::size_t d) {
  if (d < 2) throw ConfigError("count-oracle dimension must be at least 2");
  Vec o(d, 0.0);
  for (std::uint64_t key : star.leaf_keys) o[key % (d - 1)] += 1.0;
  o[d - 1] = 1.0;
  return o;
}

Vec count_oracle_embedding(const Graph& g, std::string_view v, std::size_t d) {
  StarInput in;
  for (const auto& n : g.neighbors(v)) in.leaf_keys.push_back(label_key(g.vertex(n).label));
  in.center_key = label_key(g.vertex(v).label);
  return count_oracle_embedding(in, d);
}

CountOracleModel::CountOracleModel(std::size_t d) : d_(d) {
  if (d < 2) throw ConfigError("count-oracle dimension must be at least 2");
}

EmbeddingTable node_dominance_embeddings(const Graph& g, const EmbeddingTable& x,
                                         const DominanceModel& model) {
  EmbeddingTable out;
  for (const auto& [id, v] : g.vertices()) {
    out.emplace(id, model.embed(make_star_input(g, star_subgraph(g, id), x)));
  }
  return out;
}

Vec path_dominance_embedding(const Path& p, const EmbeddingTable& node_embeddings) {
  return concat_path_vectors(p, node_embeddings);
}

}  // namespace exactrag
