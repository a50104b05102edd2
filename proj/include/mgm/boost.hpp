#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mgm/consistency.hpp"
#include "mgm/core.hpp"
#include "mgm/pairwise.hpp"
#include "mgm/parallel.hpp"

namespace mgm {

enum class BoostMode { isb, isb_cst, isb_2nd, isb_gc, isb_gc_inv, isb_gc_u, isb_gc_p };

inline std::string_view to_string(BoostMode m) {
  switch (m) {
    case BoostMode::isb: return "isb";
    case BoostMode::isb_cst: return "isb_cst";
    case BoostMode::isb_2nd: return "isb_2nd";
    case BoostMode::isb_gc: return "isb_gc";
    case BoostMode::isb_gc_inv: return "isb_gc_inv";
    case BoostMode::isb_gc_u: return "isb_gc_u";
    case BoostMode::isb_gc_p: return "isb_gc_p";
  }
  return "?";
}

inline BoostMode parse_boost_mode(std::string_view s) {
  for (auto m : {BoostMode::isb, BoostMode::isb_cst, BoostMode::isb_2nd, BoostMode::isb_gc, BoostMode::isb_gc_inv,
                 BoostMode::isb_gc_u, BoostMode::isb_gc_p}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown boost mode: " + std::string(s));
}

struct BoostParams {
  int t0 = 2;
  int t_max = 6;
  double lambda0 = 0.2;
  double beta = 1.1;
  double gamma = 0.3;
  // Stop when sum of ||X^(t-1) - X^(t)|| falls below delta. Matchings are
  // discrete, so any delta in (0, 2] means "no pair changed".
  double delta = 1.0;
  double sample_rate = 1.0;
  BoostMode mode = BoostMode::isb_gc;
  std::optional<InlierEstimate> elicit;
  bool enforce_final_consistency = false;
  std::uint64_t seed = 0;
  int threads = 1;  // 0: take MGM_THREADS

  void validate() const {
    if (t0 < 0 || t_max < t0) throw std::invalid_argument("BoostParams: need 0 <= t0 <= t_max");
    if (!(lambda0 >= 0.0 && lambda0 <= 1.0)) throw std::invalid_argument("BoostParams: lambda0 must be in [0,1]");
    if (!(beta >= 1.0)) throw std::invalid_argument("BoostParams: beta must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("BoostParams: gamma must be in (0,1)");
    if (!(sample_rate > 0.0 && sample_rate <= 1.0)) throw std::invalid_argument("BoostParams: sample_rate must be in (0,1]");
  }
};

// Evaluation functions for a candidate Y = X_ik X_kj.
enum class Evaluation {
  score,                 // J(Y)
  consistency,           // C_p(Y)
  score_consistency,     // (1-l) J(Y) + l C_p(Y)
  consistency_score,     // l J(Y) + (1-l) C_p(Y)
  score_unary,           // (1-l) J(Y) + l C_u(k)
  score_pairwise_proxy,  // (1-l) J(Y) + l sqrt(C_p(X_ik) C_p(X_kj))
};

// Per-iteration data computed once from the frozen snapshot X^(t-1).
// Holds non-owning pointers; the snapshot and affinities must outlive it.
struct IterationTables {
  const MatchConfig* cfg = nullptr;
  const AffinitySet* ks = nullptr;
  double norm = 1.0;
  std::optional<InlierMasks> masks;
  std::vector<double> unary;     // C_u(k), filled for score_unary
  std::vector<double> pairwise;  // C_p(X_ik) for ordered (i, k), filled for the proxy

  double cp(int i, int k) const { return pairwise[static_cast<std::size_t>(i) * cfg->graph_count() + k]; }
};

inline IterationTables prepare_iteration(const MatchConfig& cfg, const AffinitySet& ks, Evaluation eval,
                                         double norm, const std::optional<InlierEstimate>& est) {
  IterationTables t;
  t.cfg = &cfg;
  t.ks = &ks;
  t.norm = norm;
  if (est) t.masks = compute_inlier_masks(cfg, *est, &ks);
  const int n_graphs = cfg.graph_count();
  if (eval == Evaluation::score_unary) {
    t.unary.resize(n_graphs);
    for (int k = 0; k < n_graphs; ++k) {
      t.unary[k] = t.masks ? elicited_unary_consistency(k, cfg, *t.masks) : unary_consistency(k, cfg);
    }
  }
  if (eval == Evaluation::score_pairwise_proxy) {
    t.pairwise.assign(static_cast<std::size_t>(n_graphs) * n_graphs, 1.0);
    for (int i = 0; i < n_graphs; ++i) {
      for (int k = 0; k < n_graphs; ++k) {
        if (i == k) continue;
        if (t.masks) {
          t.pairwise[i * n_graphs + k] = elicited_pairwise_consistency(cfg.map(i, k), cfg, *t.masks, i, k);
        } else if (i < k) {
          const double v = pairwise_consistency(cfg.map(i, k), cfg, i, k);
          t.pairwise[i * n_graphs + k] = t.pairwise[k * n_graphs + i] = v;
        }
      }
    }
  }
  return t;
}

struct AnchorChoice {
  int anchor = -1;  // -1: incumbent kept
  PermutationMatrix candidate;
  double value = 0.0;
};

namespace detail {

// Scores each distinct candidate matrix once.
class CandidateCache {
 public:
  struct Entry {
    std::uint64_t hash;
    std::vector<int> map;
    double score = std::numeric_limits<double>::quiet_NaN();
    double consistency = std::numeric_limits<double>::quiet_NaN();
  };

  Entry& lookup(std::span<const int> m) {
    const auto h = hash_map(m);
    for (auto& e : entries_) {
      if (e.hash == h && std::equal(e.map.begin(), e.map.end(), m.begin())) return e;
    }
    entries_.push_back({h, {m.begin(), m.end()}});
    return entries_.back();
  }

 private:
  std::vector<Entry> entries_;
};

class Evaluator {
 public:
  Evaluator(const IterationTables& t, Evaluation eval, double lambda, int i, int j)
      : t_(t), eval_(eval), lambda_(lambda), i_(i), j_(j) {}

  double operator()(std::span<const int> y, int anchor) {
    auto& e = cache_.lookup(y);
    switch (eval_) {
      case Evaluation::score: return score(e);
      case Evaluation::consistency: return consistency(e);
      case Evaluation::score_consistency: return (1.0 - lambda_) * score(e) + lambda_ * consistency(e);
      case Evaluation::consistency_score: return lambda_ * score(e) + (1.0 - lambda_) * consistency(e);
      case Evaluation::score_unary: return (1.0 - lambda_) * score(e) + lambda_ * t_.unary[anchor];
      case Evaluation::score_pairwise_proxy:
        return (1.0 - lambda_) * score(e) + lambda_ * std::sqrt(t_.cp(i_, anchor) * t_.cp(anchor, j_));
    }
    return 0.0;
  }

 private:
  double score(CandidateCache::Entry& e) {
    if (std::isnan(e.score)) {
      const double raw = t_.masks ? elicited_score(e.map, i_, j_, *t_.ks, *t_.masks) : t_.ks->score(i_, j_, e.map);
      e.score = raw / t_.norm;
    }
    return e.score;
  }

  double consistency(CandidateCache::Entry& e) {
    if (std::isnan(e.consistency)) {
      e.consistency = t_.masks ? elicited_pairwise_consistency(e.map, *t_.cfg, *t_.masks, i_, j_)
                               : pairwise_consistency(e.map, *t_.cfg, i_, j_);
    }
    return e.consistency;
  }

  const IterationTables& t_;
  Evaluation eval_;
  double lambda_;
  int i_, j_;
  CandidateCache cache_;
};

inline std::vector<int> sample_anchors(int graphs, int i, int j, double rate, std::uint64_t seed) {
  std::vector<int> all;
  for (int k = 0; k < graphs; ++k) {
    if (k != i && k != j) all.push_back(k);
  }
  if (rate >= 1.0) return all;
  const auto m = static_cast<std::size_t>(std::lround(static_cast<double>(all.size()) * rate));
  std::vector<int> picked;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), m, rng);
  return picked;
}

}  // namespace detail

// First-order anchor search for pair (i, j) over the given anchors
// (ascending, excluding i and j). The incumbent X_ij competes as the
// anchors k = i and k = j; it is kept on ties, otherwise the smallest
// anchor index wins.
inline AnchorChoice best_anchor(int i, int j, const IterationTables& t, Evaluation eval, double lambda,
                                std::span<const int> anchors) {
  const MatchConfig& cfg = *t.cfg;
  detail::Evaluator evaluate(t, eval, lambda, i, j);
  const auto incumbent = cfg.map(i, j);
  AnchorChoice best;
  best.value = std::max(evaluate(incumbent, i), evaluate(incumbent, j));
  std::vector<int> y(cfg.node_count());
  for (int k : anchors) {
    compose_into(cfg.map(i, k), cfg.map(k, j), y);
    const double v = evaluate(y, k);
    if (v > best.value) {
      best.value = v;
      best.anchor = k;
      best.candidate = PermutationMatrix(y);
    }
  }
  if (best.anchor < 0) best.candidate = PermutationMatrix(std::vector<int>(incumbent.begin(), incumbent.end()));
  return best;
}

// Convenience form that prepares the tables and samples anchors itself.
inline AnchorChoice best_anchor(int i, int j, const MatchConfig& prev, const AffinitySet& ks, Evaluation eval,
                                double lambda, const ScoreNormalizer& norm,
                                const std::optional<InlierEstimate>& est = std::nullopt, double sample_rate = 1.0,
                                std::uint64_t seed = 0) {
  if (i == j) throw std::invalid_argument("best_anchor: need i != j");
  const auto t = prepare_iteration(prev, ks, eval, norm.value, est);
  const auto anchors = detail::sample_anchors(prev.graph_count(), i, j, sample_rate, seed);
  return best_anchor(i, j, t, eval, lambda, anchors);
}

struct SecondOrderChoice {
  int first = -1;   // v in X_iv X_vu X_uj; -1 when the incumbent is kept
  int second = -1;  // u
  PermutationMatrix candidate;
  double value = 0.0;
};

// Second-order search: argmax over (v, u) of J(X_iv X_vu X_uj). The
// candidate set covers every v, u in {i, j} and the anchors, so the
// incumbent and all first-order paths compete as well.
inline SecondOrderChoice best_anchor_2nd(int i, int j, const IterationTables& t, std::span<const int> anchors) {
  const MatchConfig& cfg = *t.cfg;
  detail::Evaluator evaluate(t, Evaluation::score, 0.0, i, j);
  std::vector<int> nodes(anchors.begin(), anchors.end());
  nodes.push_back(i);
  nodes.push_back(j);
  std::sort(nodes.begin(), nodes.end());
  const auto incumbent = cfg.map(i, j);
  SecondOrderChoice best;
  best.value = evaluate(incumbent, i);
  const int n = cfg.node_count();
  std::vector<int> iv_vu(n), y(n);
  for (int v : nodes) {
    for (int u : nodes) {
      compose_into(cfg.map(i, v), cfg.map(v, u), iv_vu);
      compose_into(iv_vu, cfg.map(u, j), y);
      const double val = evaluate(y, i);
      if (val > best.value) {
        best = {v, u, PermutationMatrix(y), val};
      }
    }
  }
  if (best.first < 0) best.candidate = PermutationMatrix(std::vector<int>(incumbent.begin(), incumbent.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Full-consistency post-processing

// Maximum spanning tree (Kruskal). Edges are visited by descending weight,
// ties in lexicographic (i, j) order.
inline std::vector<std::pair<int, int>> mst(const Eigen::MatrixXd& weights) {
  const int n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw std::invalid_argument("mst: weights must be square");
  auto edges = graph_pairs(n);
  std::stable_sort(edges.begin(), edges.end(),
                   [&](auto a, auto b) { return weights(a.first, a.second) > weights(b.first, b.second); });
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::pair<int, int>> tree;
  for (auto e : edges) {
    const int a = find(e.first), b = find(e.second);
    if (a == b) continue;
    parent[a] = b;
    tree.push_back(e);
    if (static_cast<int>(tree.size()) == n - 1) break;
  }
  return tree;
}

// Keeps the matchings on the tree edges and derives every other pair by
// composing along tree paths, giving a fully consistent configuration.
inline MatchConfig config_from_tree(const MatchConfig& cfg, const std::vector<std::pair<int, int>>& tree) {
  const int n_graphs = cfg.graph_count();
  std::vector<std::vector<int>> adj(n_graphs);
  for (auto [a, b] : tree) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  // to_root[k] = X_0k along the tree.
  std::vector<std::optional<PermutationMatrix>> to_root(n_graphs);
  to_root[0] = PermutationMatrix::identity(cfg.node_count());
  std::queue<int> q;
  q.push(0);
  while (!q.empty()) {
    const int p = q.front();
    q.pop();
    for (int c : adj[p]) {
      if (to_root[c]) continue;
      to_root[c] = compose(*to_root[p], cfg.get(p, c));
      q.push(c);
    }
  }
  for (const auto& r : to_root) {
    if (!r) throw std::invalid_argument("config_from_tree: tree does not span all graphs");
  }
  MatchConfig out(n_graphs, cfg.node_count());
  const int n = cfg.node_count();
  for (auto [i, j] : graph_pairs(n_graphs)) {
    std::vector<int> m(n);
    for (int u = 0; u < n; ++u) m[u] = (*to_root[j])[to_root[i]->row_of(u)];
    out.set(i, j, PermutationMatrix(std::move(m)));
  }
  return out;
}

// Spectral synchronisation: leading n eigenvectors U of the nN x nN block
// matrix [X_ij]; block i is rounded from U_i U_0^T with the Hungarian method
// (graph 0 anchored to the identity) and X_ij := Q_i Q_j^T.
inline MatchConfig spectral_sync(const MatchConfig& cfg) {
  const int n_graphs = cfg.graph_count();
  const int n = cfg.node_count();
  const int d = n * n_graphs;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n_graphs; ++i) {
    for (int j = 0; j < n_graphs; ++j) {
      const auto m = cfg.map(i, j);
      for (int u = 0; u < n; ++u) w(i * n + u, j * n + m[u]) = 1.0;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  const Eigen::MatrixXd u = es.eigenvectors().rightCols(n);
  const Eigen::MatrixXd u0 = u.topRows(n);
  std::vector<PermutationMatrix> q(n_graphs);
  q[0] = PermutationMatrix::identity(n);
  for (int i = 1; i < n_graphs; ++i) q[i] = hungarian(u.middleRows(i * n, n) * u0.transpose());
  MatchConfig out(n_graphs, n);
  for (auto [i, j] : graph_pairs(n_graphs)) {
    std::vector<int> m(n);
    for (int x = 0; x < n; ++x) m[x] = q[j].row_of(q[i][x]);
    out.set(i, j, PermutationMatrix(std::move(m)));
  }
  return out;
}

enum class SyncBranch { none, affinity_tree, consistency_tree, spectral };

inline SyncBranch choose_sync_branch(const MatchConfig& cfg, double gamma) {
  const double c = overall_consistency(cfg);
  if (c == 1.0) return SyncBranch::none;
  if (c < gamma) return SyncBranch::affinity_tree;
  return cfg.node_count() >= cfg.graph_count() ? SyncBranch::consistency_tree : SyncBranch::spectral;
}

inline MatchConfig enforce_full_consistency(const MatchConfig& cfg, const AffinitySet& ks, double gamma) {
  const int n_graphs = cfg.graph_count();
  switch (choose_sync_branch(cfg, gamma)) {
    case SyncBranch::none: return cfg;
    case SyncBranch::affinity_tree: {
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_graphs, n_graphs);
      for (auto [i, j] : graph_pairs(n_graphs)) w(i, j) = w(j, i) = ks.at(i, j).score(cfg.map(i, j));
      return config_from_tree(cfg, mst(w));
    }
    case SyncBranch::consistency_tree: {
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_graphs, n_graphs);
      for (auto [i, j] : graph_pairs(n_graphs)) w(i, j) = w(j, i) = pairwise_consistency(cfg.map(i, j), cfg, i, j);
      return config_from_tree(cfg, mst(w));
    }
    case SyncBranch::spectral: return spectral_sync(cfg);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Boosting driver

struct BoostSnapshot {
  int iteration = 0;
  double lambda = 0.0;
  double total_score = 0.0;  // sum over pairs of normalised J
  double consistency = 0.0;  // C(X^(t))
  int changes = 0;           // pairs updated in this iteration
  double seconds = 0.0;      // wall time since the run started
};

struct BoostTrace {
  std::vector<BoostSnapshot> snapshots;
  bool converged = false;
  bool post_processed = false;
  int returned_iteration = 0;  // snapshot index of the returned iterate
};

struct BoostResult {
  MatchConfig config;
  BoostTrace trace;
};

inline Evaluation evaluation_for(BoostMode mode, bool pure_phase) {
  switch (mode) {
    case BoostMode::isb:
    case BoostMode::isb_2nd: return Evaluation::score;
    case BoostMode::isb_cst: return Evaluation::consistency;
    case BoostMode::isb_gc: return pure_phase ? Evaluation::score : Evaluation::score_consistency;
    case BoostMode::isb_gc_inv: return pure_phase ? Evaluation::consistency : Evaluation::consistency_score;
    case BoostMode::isb_gc_u: return pure_phase ? Evaluation::score : Evaluation::score_unary;
    case BoostMode::isb_gc_p: return pure_phase ? Evaluation::score : Evaluation::score_pairwise_proxy;
  }
  return Evaluation::score;
}

inline bool is_graduated(BoostMode m) {
  return m == BoostMode::isb_gc || m == BoostMode::isb_gc_inv || m == BoostMode::isb_gc_u || m == BoostMode::isb_gc_p;
}

inline double total_normalized_score(const MatchConfig& cfg, const AffinitySet& ks, const ScoreNormalizer& norm) {
  double total = 0.0;
  for (auto [i, j] : graph_pairs(cfg.graph_count())) total += ks.at(i, j).score(cfg.map(i, j));
  return total / norm.value;
}

// Runs the selected boosting schedule from cfg0. All pair updates within an
// iteration read the previous snapshot only.
inline BoostResult run_boost(const MatchConfig& cfg0, const AffinitySet& ks, const BoostParams& p) {
  p.validate();
  if (!ks.complete() || ks.graph_count() != cfg0.graph_count()) {
    throw std::invalid_argument("run_boost: affinity set does not cover the configuration");
  }
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const int threads = p.threads > 0 ? p.threads : thread_count_from_env();
  const int n_graphs = cfg0.graph_count();
  const auto pairs = graph_pairs(n_graphs);

  const ScoreNormalizer norm = ScoreNormalizer::from_config(cfg0, ks);
  double eval_norm = norm.value;
  if (p.elicit) {
    const auto masks0 = compute_inlier_masks(cfg0, *p.elicit, &ks);
    double best = 0.0;
    for (auto [i, j] : pairs) best = std::max(best, elicited_score(cfg0.map(i, j), i, j, ks, masks0));
    eval_norm = ScoreNormalizer(best).value;
  }

  BoostResult res{cfg0, {}};
  auto snapshot = [&](int t, double lambda, int changes) {
    res.trace.snapshots.push_back({t, lambda, total_normalized_score(res.config, ks, norm),
                                   overall_consistency(res.config), changes,
                                   std::chrono::duration<double>(clock::now() - start).count()});
  };
  snapshot(0, p.lambda0, 0);

  const bool graduated = is_graduated(p.mode);
  const bool may_loop = p.mode == BoostMode::isb_cst || p.mode == BoostMode::isb_gc_p;
  std::vector<MatchConfig> history;
  if (may_loop) history.push_back(cfg0);

  double lambda = p.lambda0;
  for (int t = 1; t <= p.t_max; ++t) {
    const bool pure = graduated && t <= p.t0;
    const Evaluation eval = evaluation_for(p.mode, pure);
    const MatchConfig& prev = res.config;
    const auto tables = prepare_iteration(prev, ks, eval, eval_norm, p.elicit);

    std::vector<PermutationMatrix> updated(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t idx) {
      const auto [i, j] = pairs[idx];
      const auto anchors = detail::sample_anchors(n_graphs, i, j, p.sample_rate, derive_seed(p.seed, t, i, j));
      if (p.mode == BoostMode::isb_2nd) {
        updated[idx] = best_anchor_2nd(i, j, tables, anchors).candidate;
      } else {
        updated[idx] = best_anchor(i, j, tables, eval, lambda, anchors).candidate;
      }
    });

    MatchConfig next = prev;
    int changes = 0;
    long moved_rows = 0;
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
      const auto [i, j] = pairs[idx];
      const int d = row_mismatches(prev.map(i, j), updated[idx].map());
      if (d > 0) {
        ++changes;
        moved_rows += d;
        next.set(i, j, std::move(updated[idx]));
      }
    }
    res.config = std::move(next);
    snapshot(t, lambda, changes);
    if (may_loop) history.push_back(res.config);

    if (!pure && 2.0 * static_cast<double>(moved_rows) < p.delta) {
      res.trace.converged = true;
      break;
    }
    if (graduated && !pure) lambda = std::min(1.0, p.beta * lambda);
  }
  res.trace.returned_iteration = static_cast<int>(res.trace.snapshots.size()) - 1;

  // Modes without a convergence guarantee may cycle; when capped, return the
  // best iterate seen (consistency for isb_cst, normalised score otherwise).
  if (may_loop && !res.trace.converged && p.t_max > 0) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < res.trace.snapshots.size(); ++s) {
      const auto& a = res.trace.snapshots[s];
      const auto& b = res.trace.snapshots[best];
      const bool better = p.mode == BoostMode::isb_cst ? a.consistency > b.consistency : a.total_score > b.total_score;
      if (better) best = s;
    }
    res.config = history[best];
    res.trace.returned_iteration = static_cast<int>(best);
  }

  if (p.enforce_final_consistency) {
    res.config = enforce_full_consistency(res.config, ks, p.gamma);
    res.trace.post_processed = true;
  }
  return res;
}

// Accuracy-driven boosting: the ISB loop with the evaluation function
// replaced by the true inlier accuracy. Needs ground truth, so it only
// serves as an upper-bound reference in experiments.
inline MatchConfig run_isb_acc_oracle(const MatchConfig& cfg0, const GroundTruth& truth, int t_max) {
  const int n_graphs = cfg0.graph_count();
  const auto pairs = graph_pairs(n_graphs);
  MatchConfig cfg = cfg0;
  std::vector<int> y(cfg.node_count());
  for (int t = 1; t <= t_max; ++t) {
    MatchConfig next = cfg;
    int changes = 0;
    for (auto [i, j] : pairs) {
      double best = pair_accuracy(cfg.map(i, j), truth, i, j);
      std::optional<PermutationMatrix> pick;
      for (int k = 0; k < n_graphs; ++k) {
        if (k == i || k == j) continue;
        compose_into(cfg.map(i, k), cfg.map(k, j), y);
        const double a = pair_accuracy(y, truth, i, j);
        if (a > best) {
          best = a;
          pick = PermutationMatrix(y);
        }
      }
      if (pick) {
        next.set(i, j, std::move(*pick));
        ++changes;
      }
    }
    cfg = std::move(next);
    if (changes == 0) break;
  }
  return cfg;
}

}  // namespace mgm
