#include "exactrag/path_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "exactrag/errors.hpp"
#include "exactrag/hashing.hpp"

namespace exactrag {

// ---------------------------------------------------------------------------
// Mbr

void Mbr::expand(const Vec& point) {
  if (low.empty()) {
    low = point;
    high = point;
    return;
  }
  for (std::size_t i = 0; i < point.size(); ++i) {
    low[i] = std::min(low[i], point[i]);
    high[i] = std::max(high[i], point[i]);
  }
}

void Mbr::expand(const Mbr& other) {
  if (other.empty()) return;
  if (low.empty()) {
    *this = other;
    return;
  }
  for (std::size_t i = 0; i < low.size(); ++i) {
    low[i] = std::min(low[i], other.low[i]);
    high[i] = std::max(high[i], other.high[i]);
  }
}

double Mbr::margin() const {
  double m = 0.0;
  for (std::size_t i = 0; i < low.size(); ++i) m += high[i] - low[i];
  return m;
}

double Mbr::area() const {
  double a = 1.0;
  for (std::size_t i = 0; i < low.size(); ++i) a *= high[i] - low[i];
  return a;
}

Vec Mbr::center() const {
  Vec c(low.size());
  for (std::size_t i = 0; i < low.size(); ++i) c[i] = 0.5 * (low[i] + high[i]);
  return c;
}

double overlap_area(const Mbr& a, const Mbr& b) {
  double v = 1.0;
  for (std::size_t i = 0; i < a.low.size(); ++i) {
    const double ext = std::min(a.high[i], b.high[i]) - std::max(a.low[i], b.low[i]);
    if (ext < 0.0) return 0.0;
    v *= ext;
  }
  return v;
}

namespace {

// Sum of intersection extents, or -1 when the boxes are disjoint. Separates
// candidates when every box is flat in some dimension and areas are all zero.
double overlap_margin(const Mbr& a, const Mbr& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.low.size(); ++i) {
    const double ext = std::min(a.high[i], b.high[i]) - std::max(a.low[i], b.low[i]);
    if (ext < 0.0) return -1.0;
    m += ext;
  }
  return m;
}

Mbr merged(Mbr a, const Mbr& b) {
  a.expand(b);
  return a;
}

double l1(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Probes and stats

std::size_t PathProbe::known_positions() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

PathProbe PathProbe::reversed(std::size_t F, std::size_t d) const {
  PathProbe r;
  r.vertices.assign(vertices.rbegin(), vertices.rend());
  r.labels.assign(labels.rbegin(), labels.rend());
  const std::size_t n = vertices.size();
  auto flip = [n](const Vec& v, std::size_t w) {
    if (v.empty()) return v;
    Vec out(v.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((n - 1 - i) * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(i * w));
    }
    return out;
  };
  r.o0 = flip(o0, F);
  r.o = flip(o, d);
  return r;
}

void TraversalStats::merge(const TraversalStats& other) {
  nodes_visited += other.nodes_visited;
  nodes_pruned_semantic += other.nodes_pruned_semantic;
  nodes_pruned_structural += other.nodes_pruned_structural;
  entries_checked += other.entries_checked;
  early_exit = early_exit || other.early_exit;
  missed_candidates += other.missed_candidates;
  if (per_level_counts.size() < other.per_level_counts.size()) {
    per_level_counts.resize(other.per_level_counts.size(), 0);
  }
  for (std::size_t i = 0; i < other.per_level_counts.size(); ++i) {
    per_level_counts[i] += other.per_level_counts[i];
  }
}

nlohmann::json TraversalStats::to_json() const {
  return {{"nodes_visited", nodes_visited},
          {"nodes_pruned_semantic", nodes_pruned_semantic},
          {"nodes_pruned_structural", nodes_pruned_structural},
          {"entries_checked", entries_checked},
          {"early_exit", early_exit},
          {"per_level_counts", per_level_counts}};
}

// ---------------------------------------------------------------------------
// Leaf predicates

namespace {

bool labels_agree(const IndexEntry& e, const PathProbe& p) {
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    if (p.labels[i] && *p.labels[i] != e.labels[i]) return false;
  }
  return true;
}

bool dominated(const Vec& q, const Vec& z) {
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] > z[k] + kIndexEpsilon) return false;
  }
  return true;
}

bool exact_match(const IndexEntry& e, const PathProbe& p) {
  return labels_agree(e, p) && dominated(p.o, e.o);
}

void validate_probe(const PathProbe& p, std::size_t l, std::size_t F, std::size_t d, bool exact) {
  if (p.vertices.size() != l + 1 || p.labels.size() != l + 1) {
    throw InputError("query path length " + std::to_string(p.length()) +
                     " does not match index path length " + std::to_string(l));
  }
  if (p.o0.size() != (l + 1) * F) throw InputError("probe label embedding has the wrong dimension");
  if (exact) {
    if (p.known_positions() != l + 1) throw InputError("exact retrieval needs a fully labeled path");
    if (p.o.size() != (l + 1) * d) throw InputError("probe dominance embedding has the wrong dimension");
  } else if (p.known_positions() == 0) {
    throw InputError("query path has no known position; its wildcards cannot be completed");
  }
}

template <typename Pred>
std::vector<std::vector<Candidate>> scan(const std::vector<IndexEntry>& entries,
                                         const std::vector<PathProbe>& probes, std::size_t F,
                                         std::size_t d, Pred pred) {
  std::vector<std::vector<Candidate>> out(probes.size());
  for (std::size_t q = 0; q < probes.size(); ++q) {
    const PathProbe rev = probes[q].reversed(F, d);
    for (std::uint32_t i = 0; i < entries.size(); ++i) {
      if (pred(entries[i], probes[q])) out[q].push_back({i, false});
      if (pred(entries[i], rev)) out[q].push_back({i, true});
    }
    std::sort(out[q].begin(), out[q].end());
  }
  return out;
}

}  // namespace

std::vector<std::vector<Candidate>> linear_scan_reference(const std::vector<IndexEntry>& entries,
                                                          const std::vector<PathProbe>& probes,
                                                          std::size_t F, std::size_t d) {
  return scan(entries, probes, F, d, exact_match);
}

std::vector<std::vector<Candidate>> linear_scan_labels(const std::vector<IndexEntry>& entries,
                                                       const std::vector<PathProbe>& probes,
                                                       std::size_t F, std::size_t d) {
  return scan(entries, probes, F, d, labels_agree);
}

// ---------------------------------------------------------------------------
// PathIndex basics

PathIndex::PathIndex(std::size_t l, std::size_t F, std::size_t d, IndexParams params)
    : l_(l), F_(F), d_(d), params_(params) {
  if (l == 0) throw ConfigError("index path length must be at least 1");
  if (params.min_fanout < 2 || params.max_fanout < 2 * params.min_fanout) {
    throw ConfigError("fan-out bounds need 2 <= m and 2m <= M");
  }
}

void PathIndex::check_entry(const IndexEntry& e) const {
  const std::size_t n = l_ + 1;
  if (e.path.vertices.size() != n || e.labels.size() != n || e.label_keys.size() != n ||
      e.o0.size() != n * F_ || e.o.size() != n * d_) {
    throw InputError("index entry dimensions do not match (l=" + std::to_string(l_) +
                     ", F=" + std::to_string(F_) + ", d=" + std::to_string(d_) + ")");
  }
}

std::size_t PathIndex::height() const { return root_ ? nodes_[*root_].level + 1 : 0; }

std::size_t PathIndex::internal_node_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const IndexNode& n) { return n.level > 0; }));
}

Mbr PathIndex::child_mbr0(const IndexNode& n, std::uint32_t child) const {
  return n.level == 0 ? Mbr::of(entries_[child].o0) : nodes_[child].mbr0;
}

Mbr PathIndex::child_mbr(const IndexNode& n, std::uint32_t child) const {
  return n.level == 0 ? Mbr::of(entries_[child].o) : nodes_[child].mbr;
}

void PathIndex::recompute_mbr(std::uint32_t id) {
  IndexNode& n = nodes_[id];
  Mbr m0, m;
  for (auto c : n.children) {
    if (n.level == 0) {
      m0.expand(entries_[c].o0);
      m.expand(entries_[c].o);
    } else {
      m0.expand(nodes_[c].mbr0);
      m.expand(nodes_[c].mbr);
    }
  }
  n.mbr0 = std::move(m0);
  n.mbr = std::move(m);
}

// ---------------------------------------------------------------------------
// Bulk load (sort-tile-recursive)

namespace {

void str_order(std::vector<std::uint32_t>& ids, std::size_t begin, std::size_t end, std::size_t dim,
               std::size_t dims, std::size_t M,
               const std::function<double(std::uint32_t, std::size_t)>& coord) {
  auto first = ids.begin() + static_cast<std::ptrdiff_t>(begin);
  auto last = ids.begin() + static_cast<std::ptrdiff_t>(end);
  std::sort(first, last, [&](std::uint32_t a, std::uint32_t b) {
    const double ca = coord(a, dim), cb = coord(b, dim);
    return ca != cb ? ca < cb : a < b;
  });
  const std::size_t n = end - begin;
  if (dim + 1 >= dims || n <= M) return;
  const std::size_t pages = (n + M - 1) / M;
  const std::size_t remaining = dims - dim;
  const auto slabs = static_cast<std::size_t>(
      std::ceil(std::pow(static_cast<double>(pages), 1.0 / static_cast<double>(remaining)) - 1e-9));
  const std::size_t slab_size = ((pages + slabs - 1) / slabs) * M;
  for (std::size_t s = begin; s < end; s += slab_size) {
    str_order(ids, s, std::min(end, s + slab_size), dim + 1, dims, M, coord);
  }
}

std::vector<std::vector<std::uint32_t>> even_chunks(const std::vector<std::uint32_t>& ids,
                                                    std::size_t M) {
  const std::size_t n = ids.size();
  const std::size_t groups = (n + M - 1) / M;
  const std::size_t base = n / groups, extra = n % groups;
  std::vector<std::vector<std::uint32_t>> out;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                     ids.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

}  // namespace

PathIndex PathIndex::bulk_load(std::vector<IndexEntry> entries, std::size_t l, std::size_t F,
                               std::size_t d, IndexParams params) {
  PathIndex idx(l, F, d, params);
  for (const auto& e : entries) idx.check_entry(e);
  if (entries.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw CapacityError("too many index entries");
  }
  idx.entries_ = std::move(entries);
  if (idx.entries_.empty()) return idx;

  const std::size_t M = params.max_fanout;
  const std::size_t dims = l + 1;  // one sort key per path position
  std::vector<std::uint32_t> ids(idx.entries_.size());
  std::iota(ids.begin(), ids.end(), 0U);
  std::uint32_t level = 0;
  while (true) {
    std::function<double(std::uint32_t, std::size_t)> coord;
    if (level == 0) {
      coord = [&](std::uint32_t id, std::size_t k) { return idx.entries_[id].o0[k * F]; };
    } else {
      coord = [&](std::uint32_t id, std::size_t k) {
        const auto& m = idx.nodes_[id].mbr0;
        return 0.5 * (m.low[k * F] + m.high[k * F]);
      };
    }
    if (ids.size() <= M) {
      std::sort(ids.begin(), ids.end());
      str_order(ids, 0, ids.size(), 0, dims, M, coord);
      IndexNode root;
      root.level = level;
      root.children = ids;
      idx.nodes_.push_back(std::move(root));
      idx.root_ = static_cast<std::uint32_t>(idx.nodes_.size() - 1);
      idx.recompute_mbr(*idx.root_);
      break;
    }
    str_order(ids, 0, ids.size(), 0, dims, M, coord);
    std::vector<std::uint32_t> parents;
    for (auto& group : even_chunks(ids, M)) {
      IndexNode n;
      n.level = level;
      n.children = std::move(group);
      idx.nodes_.push_back(std::move(n));
      const auto nid = static_cast<std::uint32_t>(idx.nodes_.size() - 1);
      idx.recompute_mbr(nid);
      parents.push_back(nid);
    }
    ids = std::move(parents);
    ++level;
  }
  return idx;
}

PathIndex build_index(const std::vector<IndexEntry>& entries, std::size_t l, IndexParams params) {
  std::size_t F = 0, d = 0;
  if (!entries.empty()) {
    F = entries.front().o0.size() / (l + 1);
    d = entries.front().o.size() / (l + 1);
  }
  return PathIndex::bulk_load(entries, l, F, d, params);
}

// ---------------------------------------------------------------------------
// R* insertion

std::vector<std::uint32_t> PathIndex::choose_path(const Mbr& item, std::uint32_t level) const {
  std::vector<std::uint32_t> path{*root_};
  while (nodes_[path.back()].level > level) {
    const IndexNode& n = nodes_[path.back()];
    const bool children_are_leaves = n.level == 1;
    std::uint32_t best = n.children.front();
    double best_key[4] = {std::numeric_limits<double>::infinity(), 0, 0, 0};
    for (std::size_t ci = 0; ci < n.children.size(); ++ci) {
      const auto c = n.children[ci];
      const Mbr& cm = nodes_[c].mbr;
      const Mbr grown = merged(cm, item);
      double overlap_growth = 0.0;
      if (children_are_leaves) {
        for (auto other : n.children) {
          if (other == c) continue;
          overlap_growth += overlap_area(grown, nodes_[other].mbr) - overlap_area(cm, nodes_[other].mbr);
          overlap_growth += overlap_margin(grown, nodes_[other].mbr) - overlap_margin(cm, nodes_[other].mbr);
        }
      }
      const double key[4] = {overlap_growth, grown.area() - cm.area(), grown.margin() - cm.margin(),
                             cm.area()};
      if (std::lexicographical_compare(key, key + 4, best_key, best_key + 4)) {
        std::copy(key, key + 4, best_key);
        best = c;
      }
    }
    path.push_back(best);
  }
  return path;
}

void PathIndex::insert(IndexEntry entry) {
  check_entry(entry);
  const auto id = static_cast<std::uint32_t>(entries_.size());
  entries_.push_back(std::move(entry));
  if (!root_) {
    IndexNode leaf;
    leaf.children = {id};
    nodes_.push_back(std::move(leaf));
    root_ = static_cast<std::uint32_t>(nodes_.size() - 1);
    recompute_mbr(*root_);
    return;
  }
  std::vector<bool> reinserted(height(), false);
  insert_item(id, 0, reinserted);
}

void PathIndex::insert_item(std::uint32_t item, std::uint32_t level, std::vector<bool>& reinserted) {
  const Mbr m = level == 0 ? Mbr::of(entries_[item].o) : nodes_[item].mbr;
  const Mbr m0 = level == 0 ? Mbr::of(entries_[item].o0) : nodes_[item].mbr0;
  auto path = choose_path(m, level);
  nodes_[path.back()].children.push_back(item);
  for (auto nid : path) {
    nodes_[nid].mbr.expand(m);
    nodes_[nid].mbr0.expand(m0);
  }
  handle_overflow(std::move(path), reinserted);
}

void PathIndex::handle_overflow(std::vector<std::uint32_t> path, std::vector<bool>& reinserted) {
  const std::size_t M = params_.max_fanout;
  for (std::size_t i = path.size(); i-- > 0;) {
    const auto nid = path[i];
    if (nodes_[nid].children.size() <= M) return;
    const std::uint32_t level = nodes_[nid].level;
    if (reinserted.size() <= level) reinserted.resize(level + 1, false);

    if (nid != *root_ && !reinserted[level]) {
      reinserted[level] = true;
      IndexNode& n = nodes_[nid];
      const Vec center = n.mbr.center();
      std::vector<std::pair<double, std::uint32_t>> by_distance;
      for (auto c : n.children) {
        const Vec cc = child_mbr(n, c).center();
        double dist = 0.0;
        for (std::size_t k = 0; k < cc.size(); ++k) dist += (cc[k] - center[k]) * (cc[k] - center[k]);
        by_distance.emplace_back(dist, c);
      }
      std::sort(by_distance.begin(), by_distance.end());
      const std::size_t p = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.3 * M)));
      std::vector<std::uint32_t> removed;
      for (std::size_t k = by_distance.size() - p; k < by_distance.size(); ++k) {
        removed.push_back(by_distance[k].second);
      }
      std::vector<std::uint32_t> kept;
      for (std::size_t k = 0; k < by_distance.size() - p; ++k) kept.push_back(by_distance[k].second);
      std::sort(kept.begin(), kept.end());
      n.children = std::move(kept);
      for (std::size_t k = i + 1; k-- > 0;) recompute_mbr(path[k]);
      for (auto c : removed) insert_item(c, level, reinserted);
      return;
    }

    const auto sibling = split(nid);
    if (nid == *root_) {
      IndexNode top;
      top.level = level + 1;
      top.children = {nid, sibling};
      nodes_.push_back(std::move(top));
      root_ = static_cast<std::uint32_t>(nodes_.size() - 1);
      recompute_mbr(*root_);
      reinserted.resize(level + 2, false);
      return;
    }
    nodes_[path[i - 1]].children.push_back(sibling);
    recompute_mbr(path[i - 1]);
  }
}

std::uint32_t PathIndex::split(std::uint32_t nid) {
  const std::size_t m = params_.min_fanout;
  const IndexNode& n = nodes_[nid];
  const std::size_t count = n.children.size();
  std::vector<std::uint32_t> kids = n.children;
  std::vector<Mbr> boxes;
  for (auto c : kids) boxes.push_back(child_mbr(n, c));
  const std::size_t dims = boxes.front().low.size();

  auto sorted_order = [&](std::size_t axis, bool by_high) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ka = by_high ? boxes[a].high[axis] : boxes[a].low[axis];
      const double kb = by_high ? boxes[b].high[axis] : boxes[b].low[axis];
      if (ka != kb) return ka < kb;
      const double sa = by_high ? boxes[a].low[axis] : boxes[a].high[axis];
      const double sb = by_high ? boxes[b].low[axis] : boxes[b].high[axis];
      if (sa != sb) return sa < sb;
      return kids[a] < kids[b];
    });
    return order;
  };
  auto prefix_suffix = [&](const std::vector<std::size_t>& order) {
    std::vector<Mbr> prefix(count), suffix(count);
    Mbr acc;
    for (std::size_t i = 0; i < count; ++i) {
      acc.expand(boxes[order[i]]);
      prefix[i] = acc;
    }
    acc = Mbr{};
    for (std::size_t i = count; i-- > 0;) {
      acc.expand(boxes[order[i]]);
      suffix[i] = acc;
    }
    return std::make_pair(prefix, suffix);
  };

  // Axis with the smallest summed margin over all legal distributions.
  std::size_t best_axis = 0;
  double best_margin = std::numeric_limits<double>::infinity();
  for (std::size_t axis = 0; axis < dims; ++axis) {
    double total = 0.0;
    for (bool by_high : {false, true}) {
      const auto [pre, suf] = prefix_suffix(sorted_order(axis, by_high));
      for (std::size_t k = m; k + m <= count; ++k) total += pre[k - 1].margin() + suf[k].margin();
    }
    if (total < best_margin) {
      best_margin = total;
      best_axis = axis;
    }
  }

  std::vector<std::size_t> best_order;
  std::size_t best_k = m;
  double best_key[4] = {std::numeric_limits<double>::infinity(), 0, 0, 0};
  for (bool by_high : {false, true}) {
    const auto order = sorted_order(best_axis, by_high);
    const auto [pre, suf] = prefix_suffix(order);
    for (std::size_t k = m; k + m <= count; ++k) {
      const double balance = std::abs(static_cast<double>(k) - static_cast<double>(count) / 2.0);
      const double key[4] = {overlap_area(pre[k - 1], suf[k]), overlap_margin(pre[k - 1], suf[k]),
                             pre[k - 1].area() + suf[k].area(), balance};
      if (std::lexicographical_compare(key, key + 4, best_key, best_key + 4)) {
        std::copy(key, key + 4, best_key);
        best_order = order;
        best_k = k;
      }
    }
  }

  std::vector<std::uint32_t> first, second;
  for (std::size_t i = 0; i < count; ++i) {
    (i < best_k ? first : second).push_back(kids[best_order[i]]);
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());

  IndexNode sibling;
  sibling.level = n.level;
  sibling.children = std::move(second);
  nodes_[nid].children = std::move(first);
  nodes_.push_back(std::move(sibling));
  const auto sid = static_cast<std::uint32_t>(nodes_.size() - 1);
  recompute_mbr(nid);
  recompute_mbr(sid);
  return sid;
}

// ---------------------------------------------------------------------------
// Best-first traversal

template <bool Exact>
std::vector<std::vector<Candidate>> PathIndex::traverse(const std::vector<PathProbe>& probes,
                                                        TraversalStats* stats, bool audit) const {
  std::vector<std::vector<Candidate>> out(probes.size());
  TraversalStats local;
  TraversalStats& st = stats != nullptr ? *stats : local;
  if (st.per_level_counts.size() < height()) st.per_level_counts.resize(height(), 0);
  if (probes.empty() || !root_) return out;

  struct Oriented {
    PathProbe probe;
    std::size_t origin;
    bool reversed;
    double norm;
  };
  std::vector<Oriented> all;
  double min_norm = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < probes.size(); ++q) {
    validate_probe(probes[q], l_, F_, d_, Exact);
    const double norm = Exact ? l1(probes[q].o) : l1(probes[q].o0);
    min_norm = std::min(min_norm, norm);
    all.push_back({probes[q], q, false, norm});
    all.push_back({probes[q].reversed(F_, d_), q, true, norm});
  }
  const double slack = static_cast<double>(Exact ? (l_ + 1) * d_ : (l_ + 1) * F_) * kIndexEpsilon;

  auto semantic_ok = [&](const Mbr& m0, const PathProbe& p) {
    for (std::size_t pos = 0; pos <= l_; ++pos) {
      if (!p.labels[pos]) continue;
      for (std::size_t k = pos * F_; k < (pos + 1) * F_; ++k) {
        if (p.o0[k] < m0.low[k] - kIndexEpsilon || p.o0[k] > m0.high[k] + kIndexEpsilon) return false;
      }
    }
    return true;
  };
  auto structural_ok = [&](const Mbr& m, const PathProbe& p) {
    if constexpr (!Exact) return true;
    for (std::size_t k = 0; k < p.o.size(); ++k) {
      if (p.o[k] > m.high[k] + kIndexEpsilon) return false;
    }
    return true;
  };
  auto leaf_ok = [&](const IndexEntry& e, const PathProbe& p) {
    if constexpr (Exact) {
      return exact_match(e, p);
    } else {
      return labels_agree(e, p);
    }
  };
  auto key_of = [&](const IndexNode& n) {
    if constexpr (Exact) {
      double s = 0.0;
      for (double h : n.mbr.high) s += h;
      return s;
    } else {
      double s = 0.0;
      for (std::size_t k = 0; k < n.mbr0.low.size(); ++k) {
        s += std::max(std::abs(n.mbr0.low[k]), std::abs(n.mbr0.high[k]));
      }
      return s;
    }
  };
  // Audit helper: matches below `nid` for the given oriented probes.
  std::function<std::size_t(std::uint32_t, const std::vector<std::uint32_t>&)> count_below =
      [&](std::uint32_t nid, const std::vector<std::uint32_t>& list) -> std::size_t {
    const IndexNode& n = nodes_[nid];
    std::size_t found = 0;
    for (auto c : n.children) {
      if (n.level == 0) {
        for (auto pi : list) found += leaf_ok(entries_[c], all[pi].probe) ? 1 : 0;
      } else {
        found += count_below(c, list);
      }
    }
    return found;
  };

  struct Item {
    double key;
    std::uint32_t node;
    std::uint32_t depth;
    std::vector<std::uint32_t> list;
  };
  auto cmp = [](const Item& a, const Item& b) {
    return a.key != b.key ? a.key < b.key : a.node > b.node;
  };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);

  // Filters `list` against node `nid`; returns survivors and records pruning.
  auto filter = [&](std::uint32_t nid, const std::vector<std::uint32_t>& list) {
    const IndexNode& n = nodes_[nid];
    std::vector<std::uint32_t> keep, dropped;
    bool any_semantic_pass = false;
    for (auto pi : list) {
      if (!semantic_ok(n.mbr0, all[pi].probe)) {
        dropped.push_back(pi);
        continue;
      }
      any_semantic_pass = true;
      if (!structural_ok(n.mbr, all[pi].probe)) {
        dropped.push_back(pi);
        continue;
      }
      keep.push_back(pi);
    }
    if (keep.empty()) {
      (any_semantic_pass ? st.nodes_pruned_structural : st.nodes_pruned_semantic) += 1;
    }
    if (audit && !dropped.empty()) st.missed_candidates += count_below(nid, dropped);
    return keep;
  };

  std::vector<std::uint32_t> everything(all.size());
  std::iota(everything.begin(), everything.end(), 0U);
  if (auto keep = filter(*root_, everything); !keep.empty()) {
    heap.push({key_of(nodes_[*root_]), *root_, 0, std::move(keep)});
  }

  while (!heap.empty()) {
    Item item = heap.top();
    heap.pop();
    if (item.key + slack < min_norm) {
      st.early_exit = true;
      if (audit) {
        st.missed_candidates += count_below(item.node, item.list);
        while (!heap.empty()) {
          st.missed_candidates += count_below(heap.top().node, heap.top().list);
          heap.pop();
        }
      }
      break;
    }
    const IndexNode& n = nodes_[item.node];
    ++st.nodes_visited;
    ++st.per_level_counts[item.depth];
    if (n.level == 0) {
      for (auto c : n.children) {
        for (auto pi : item.list) {
          ++st.entries_checked;
          if (leaf_ok(entries_[c], all[pi].probe)) out[all[pi].origin].push_back({c, all[pi].reversed});
        }
      }
      continue;
    }
    for (auto c : n.children) {
      auto keep = filter(c, item.list);
      if (!keep.empty()) heap.push({key_of(nodes_[c]), c, item.depth + 1, std::move(keep)});
    }
  }
  for (auto& list : out) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return out;
}

std::vector<std::vector<Candidate>> PathIndex::retrieve_exact(const std::vector<PathProbe>& probes,
                                                              TraversalStats* stats,
                                                              bool audit) const {
  return traverse<true>(probes, stats, audit);
}

std::vector<std::vector<Candidate>> PathIndex::retrieve_label_matches(
    const std::vector<PathProbe>& probes, TraversalStats* stats, bool audit) const {
  return traverse<false>(probes, stats, audit);
}

// ---------------------------------------------------------------------------
// Validation

std::vector<std::string> PathIndex::validate() const {
  std::vector<std::string> problems;
  if (!root_) {
    if (!entries_.empty()) problems.push_back("entries present but no root");
    return problems;
  }
  std::vector<int> seen(entries_.size(), 0);
  std::function<void(std::uint32_t, bool)> visit = [&](std::uint32_t nid, bool is_root) {
    const IndexNode& n = nodes_[nid];
    const std::string where = "node " + std::to_string(nid);
    if (!is_root && (n.children.size() < params_.min_fanout || n.children.size() > params_.max_fanout)) {
      problems.push_back(where + " fan-out " + std::to_string(n.children.size()));
    }
    if (is_root && n.children.size() > params_.max_fanout) problems.push_back(where + " root overflow");
    if (is_root && n.level > 0 && n.children.size() < 2) problems.push_back(where + " root has one child");
    Mbr m0, m;
    for (auto c : n.children) {
      if (n.level == 0) {
        if (c >= entries_.size()) {
          problems.push_back(where + " bad entry id");
          continue;
        }
        ++seen[c];
      } else {
        if (nodes_[c].level + 1 != n.level) problems.push_back(where + " unbalanced child");
        visit(c, false);
      }
      m0.expand(child_mbr0(n, c));
      m.expand(child_mbr(n, c));
    }
    if (!(m0 == n.mbr0) || !(m == n.mbr)) problems.push_back(where + " MBR not tight");
  };
  visit(*root_, true);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1) problems.push_back("entry " + std::to_string(i) + " reachable " +
                                         std::to_string(seen[i]) + " times");
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'E', 'X', 'R', 'I', 'D', 'X', '0', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void vec(const Vec& v) {
    for (double x : v) f64(x);
  }
  const std::string& data() const { return buf_; }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Vec vec(std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw InputError("index file is truncated");
  }
  std::uint64_t get(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

nlohmann::json PathIndex::header() const {
  nlohmann::json h = metadata_;
  h["format_version"] = 1;
  h["l"] = l_;
  h["F"] = F_;
  h["d"] = d_;
  h["m"] = params_.min_fanout;
  h["M"] = params_.max_fanout;
  h["entry_count"] = entries_.size();
  h["node_count"] = nodes_.size();
  h["height"] = height();
  h["fingerprint"] = hex64(fingerprint_);
  return h;
}

void PathIndex::save(const std::filesystem::path& path) const {
  Writer w;
  w.u64(entries_.size());
  for (const auto& e : entries_) {
    for (const auto& v : e.path.vertices) w.str(v);
    for (const auto& id : e.path.edges) w.str(id);
    for (const auto& lab : e.labels) w.str(lab);
    for (auto k : e.label_keys) w.u64(k);
    w.vec(e.o0);
    w.vec(e.o);
  }
  w.u64(nodes_.size());
  w.u32(root_ ? *root_ : std::numeric_limits<std::uint32_t>::max());
  for (const auto& n : nodes_) {
    w.u32(n.level);
    w.u32(static_cast<std::uint32_t>(n.children.size()));
    for (auto c : n.children) w.u32(c);
    w.vec(n.mbr0.low);
    w.vec(n.mbr0.high);
    w.vec(n.mbr.low);
    w.vec(n.mbr.high);
  }

  const std::string head = header().dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write index file: " + path.string());
  out.write(kMagic, sizeof kMagic);
  Writer len;
  len.u64(head.size());
  out.write(len.data().data(), static_cast<std::streamsize>(len.data().size()));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw InputError("failed writing index file: " + path.string());
}

PathIndex PathIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open index file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw InputError("not an index file: " + path.string());
  }
  Reader r(std::string_view(data).substr(8));
  const auto head_len = r.u64();
  if (16 + head_len > data.size()) throw InputError("index file header is truncated");
  nlohmann::json head;
  try {
    head = nlohmann::json::parse(data.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("index header is not JSON: ") + e.what());
  }
  if (head.value("format_version", 0) != 1) throw InputError("unsupported index format version");

  const auto l = head.at("l").get<std::size_t>();
  const auto F = head.at("F").get<std::size_t>();
  const auto d = head.at("d").get<std::size_t>();
  PathIndex idx(l, F, d, {head.at("m").get<std::size_t>(), head.at("M").get<std::size_t>()});
  idx.fingerprint_ = std::stoull(head.at("fingerprint").get<std::string>(), nullptr, 16);
  idx.metadata_ = head;
  for (const char* k : {"format_version", "l", "F", "d", "m", "M", "entry_count", "node_count",
                        "height", "fingerprint"}) {
    idx.metadata_.erase(k);
  }

  Reader body(std::string_view(data).substr(16 + head_len));
  const auto n_entries = body.u64();
  if (n_entries != head.at("entry_count").get<std::uint64_t>()) {
    throw InputError("index entry count does not match its header");
  }
  idx.entries_.reserve(n_entries);
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    IndexEntry e;
    for (std::size_t k = 0; k <= l; ++k) e.path.vertices.push_back(body.str());
    for (std::size_t k = 0; k < l; ++k) e.path.edges.push_back(body.str());
    for (std::size_t k = 0; k <= l; ++k) e.labels.push_back(body.str());
    for (std::size_t k = 0; k <= l; ++k) e.label_keys.push_back(body.u64());
    e.o0 = body.vec((l + 1) * F);
    e.o = body.vec((l + 1) * d);
    idx.entries_.push_back(std::move(e));
  }
  const auto n_nodes = body.u64();
  const auto root = body.u32();
  if (root != std::numeric_limits<std::uint32_t>::max()) idx.root_ = root;
  const std::size_t D0 = (l + 1) * F, D = (l + 1) * d;
  for (std::uint64_t i = 0; i < n_nodes; ++i) {
    IndexNode n;
    n.level = body.u32();
    const auto count = body.u32();
    for (std::uint32_t k = 0; k < count; ++k) n.children.push_back(body.u32());
    n.mbr0.low = body.vec(D0);
    n.mbr0.high = body.vec(D0);
    n.mbr.low = body.vec(D);
    n.mbr.high = body.vec(D);
    idx.nodes_.push_back(std::move(n));
  }
  if (!body.done()) throw InputError("index file has trailing bytes");
  if (idx.root_ && *idx.root_ >= idx.nodes_.size()) throw InputError("index root is out of range");
  return idx;
}

// ---------------------------------------------------------------------------
// Entry and probe construction

std::vector<IndexEntry> make_index_entries(const Graph& g, std::size_t l, const EmbeddingTable& x,
                                           const EmbeddingTable& node_dominance) {
  std::vector<IndexEntry> entries;
  for (auto& p : enumerate_paths(g, l)) {
    IndexEntry e;
    for (const auto& v : p.vertices) {
      const auto& label = g.vertex(v).label;
      if (is_unknown_label(label)) throw InputError("data vertex " + v + " carries the reserved UNK label");
      e.labels.push_back(label);
      e.label_keys.push_back(label_key(label));
    }
    e.o0 = concat_path_vectors(p, x);
    e.o = concat_path_vectors(p, node_dominance);
    e.path = std::move(p);
    entries.push_back(std::move(e));
  }
  return entries;
}

PathProbe make_probe(const Graph& q, const Path& p, const EmbeddingTable& x,
                     const EmbeddingTable* node_dominance, std::size_t F) {
  PathProbe probe;
  probe.vertices = p.vertices;
  for (const auto& v : p.vertices) {
    const auto& label = q.vertex(v).label;
    if (is_unknown_label(label)) {
      probe.labels.emplace_back(std::nullopt);
      probe.o0.insert(probe.o0.end(), F, 0.0);
      continue;
    }
    probe.labels.emplace_back(label);
    auto it = x.find(v);
    if (it == x.end()) throw InputError("no label embedding for query vertex " + v);
    if (it->second.size() != F) throw InputError("query label embedding has the wrong dimension");
    probe.o0.insert(probe.o0.end(), it->second.begin(), it->second.end());
  }
  if (node_dominance != nullptr) probe.o = concat_path_vectors(p, *node_dominance);
  return probe;
}

}  // namespace exactrag
