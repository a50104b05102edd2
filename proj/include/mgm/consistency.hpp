#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "mgm/core.hpp"

namespace mgm {

// Norms follow ||A||_F = tr(A^T A). For permutation residuals this makes
// ||X - Y||_F / 2 the number of rows on which X and Y disagree.

namespace detail {

inline void check_graph(const MatchConfig& cfg, int k) {
  if (k < 0 || k >= cfg.graph_count()) throw std::out_of_range("graph index out of range");
}

inline void check_size(const MatchConfig& cfg, std::span<const int> x) {
  if (static_cast<int>(x.size()) != cfg.node_count()) {
    throw std::invalid_argument("matching size does not match the configuration");
  }
}

// Rows u (restricted to keep, if given) where x[u] != X_kj[X_ik[u]].
inline int composed_mismatch(std::span<const int> x, std::span<const int> xik, std::span<const int> xkj,
                             const char* keep = nullptr) {
  int d = 0;
  for (std::size_t u = 0; u < x.size(); ++u) {
    if (keep && !keep[u]) continue;
    d += (x[u] != xkj[xik[u]]);
  }
  return d;
}

}  // namespace detail

inline double unary_consistency(int k, const MatchConfig& cfg) {
  detail::check_graph(cfg, k);
  const int n_graphs = cfg.graph_count();
  if (n_graphs < 2) return 1.0;
  long residual = 0;
  for (int i = 0; i < n_graphs; ++i) {
    const auto xik = cfg.map(i, k);
    for (int j = i + 1; j < n_graphs; ++j) {
      residual += detail::composed_mismatch(cfg.map(i, j), xik, cfg.map(k, j));
    }
  }
  const double denom = static_cast<double>(cfg.node_count()) * n_graphs * (n_graphs - 1) / 2.0;
  return 1.0 - residual / denom;
}

// C_p of an arbitrary matching x for the pair (i, j); x need not be X_ij.
inline double pairwise_consistency(std::span<const int> x, const MatchConfig& cfg, int i, int j) {
  detail::check_graph(cfg, i);
  detail::check_graph(cfg, j);
  detail::check_size(cfg, x);
  const int n_graphs = cfg.graph_count();
  long residual = 0;
  for (int k = 0; k < n_graphs; ++k) {
    residual += detail::composed_mismatch(x, cfg.map(i, k), cfg.map(k, j));
  }
  return 1.0 - residual / (static_cast<double>(cfg.node_count()) * n_graphs);
}

inline double pairwise_consistency(const PermutationMatrix& x, const MatchConfig& cfg, int i, int j) {
  return pairwise_consistency(x.map(), cfg, i, j);
}

inline double overall_consistency(const MatchConfig& cfg) {
  double total = 0.0;
  for (int k = 0; k < cfg.graph_count(); ++k) total += unary_consistency(k, cfg);
  return total / cfg.graph_count();
}

inline double node_consistency(int u, int k, const MatchConfig& cfg) {
  detail::check_graph(cfg, k);
  if (u < 0 || u >= cfg.node_count()) throw std::out_of_range("node index out of range");
  const int n_graphs = cfg.graph_count();
  if (n_graphs < 2) return 1.0;
  long residual = 0;
  for (int i = 0; i < n_graphs; ++i) {
    const int via = cfg.map(k, i)[u];
    for (int j = i + 1; j < n_graphs; ++j) {
      residual += (cfg.map(k, j)[u] != cfg.map(i, j)[via]);
    }
  }
  return 1.0 - residual / (n_graphs * (n_graphs - 1) / 2.0);
}

// table[k][u] = C_n(u, k). O(N^3 n).
inline std::vector<std::vector<double>> node_consistency_table(const MatchConfig& cfg) {
  const int n_graphs = cfg.graph_count();
  const int n = cfg.node_count();
  std::vector<std::vector<double>> table(n_graphs, std::vector<double>(n, 1.0));
  if (n_graphs < 2) return table;
  const double denom = n_graphs * (n_graphs - 1) / 2.0;
  std::vector<long> residual(n);
  for (int k = 0; k < n_graphs; ++k) {
    std::fill(residual.begin(), residual.end(), 0);
    for (int i = 0; i < n_graphs; ++i) {
      const auto xki = cfg.map(k, i);
      for (int j = i + 1; j < n_graphs; ++j) {
        const auto xkj = cfg.map(k, j);
        const auto xij = cfg.map(i, j);
        for (int u = 0; u < n; ++u) residual[u] += (xkj[u] != xij[xki[u]]);
      }
    }
    for (int u = 0; u < n; ++u) table[k][u] = 1.0 - residual[u] / denom;
  }
  return table;
}

// S_n(u, k): sum over i != k of vec(X_ki^u)^T K_ki vec(X_ki).
inline double node_affinity(int u, int k, const MatchConfig& cfg, const AffinitySet& ks) {
  detail::check_graph(cfg, k);
  if (u < 0 || u >= cfg.node_count()) throw std::out_of_range("node index out of range");
  double total = 0.0;
  for (int i = 0; i < cfg.graph_count(); ++i) {
    if (i != k) total += ks.row_score(cfg, k, i, u);
  }
  return total;
}

inline std::vector<std::vector<double>> node_affinity_table(const MatchConfig& cfg, const AffinitySet& ks) {
  std::vector<std::vector<double>> table(cfg.graph_count(), std::vector<double>(cfg.node_count()));
  for (int k = 0; k < cfg.graph_count(); ++k) {
    for (int u = 0; u < cfg.node_count(); ++u) table[k][u] = node_affinity(u, k, cfg, ks);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Inlier eliciting

enum class InlierMode { consistency, affinity };

struct InlierEstimate {
  int n_est = 1;
  InlierMode mode = InlierMode::consistency;

  void validate(int n) const {
    if (n_est < 1 || n_est > n) throw std::invalid_argument("InlierEstimate: need 1 <= n_est <= n");
  }
};

// keep[k][u] != 0 for the n_est top-ranked nodes of graph k.
struct InlierMasks {
  int n_est = 0;
  std::vector<std::vector<char>> keep;

  std::span<const char> row_mask(int k) const { return keep.at(k); }
};

// Node indices sorted by descending score, ties by ascending index.
inline std::vector<int> rank_nodes(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

inline InlierMasks compute_inlier_masks(const MatchConfig& cfg, const InlierEstimate& est,
                                        const AffinitySet* ks = nullptr) {
  est.validate(cfg.node_count());
  std::vector<std::vector<double>> scores;
  if (est.mode == InlierMode::affinity) {
    if (!ks) throw std::invalid_argument("inlier mask: affinity mode requires the affinity set");
    scores = node_affinity_table(cfg, *ks);
  } else {
    scores = node_consistency_table(cfg);
  }
  InlierMasks masks;
  masks.n_est = est.n_est;
  masks.keep.assign(cfg.graph_count(), std::vector<char>(cfg.node_count(), 0));
  for (int k = 0; k < cfg.graph_count(); ++k) {
    const auto order = rank_nodes(scores[k]);
    for (int r = 0; r < est.n_est; ++r) masks.keep[k][order[r]] = 1;
  }
  return masks;
}

// Assignment matrix with some rows zeroed; map[u] == -1 marks a zero row.
struct MaskedMatch {
  std::vector<int> map;

  int kept_rows() const {
    return static_cast<int>(std::count_if(map.begin(), map.end(), [](int c) { return c >= 0; }));
  }
  friend bool operator==(const MaskedMatch&, const MaskedMatch&) = default;
};

inline MaskedMatch inlier_mask(const MaskedMatch& x, int row_graph, const InlierMasks& masks) {
  const auto keep = masks.row_mask(row_graph);
  if (keep.size() != x.map.size()) throw std::invalid_argument("inlier mask: size mismatch");
  MaskedMatch out = x;
  for (std::size_t u = 0; u < keep.size(); ++u) {
    if (!keep[u]) out.map[u] = -1;
  }
  return out;
}

inline MaskedMatch inlier_mask(const PermutationMatrix& x, int row_graph, const InlierMasks& masks) {
  return inlier_mask(MaskedMatch{{x.map().begin(), x.map().end()}}, row_graph, masks);
}

// psi_c / psi_a of X whose rows belong to row_graph.
inline MaskedMatch inlier_mask(const PermutationMatrix& x, int row_graph, const MatchConfig& cfg,
                               const InlierEstimate& est, const AffinitySet* ks = nullptr) {
  return inlier_mask(x, row_graph, compute_inlier_masks(cfg, est, ks));
}

inline double elicited_unary_consistency(int k, const MatchConfig& cfg, const InlierMasks& masks) {
  detail::check_graph(cfg, k);
  const int n_graphs = cfg.graph_count();
  if (n_graphs < 2) return 1.0;
  long residual = 0;
  for (int i = 0; i < n_graphs; ++i) {
    const auto xik = cfg.map(i, k);
    const char* keep = masks.keep.at(i).data();
    for (int j = i + 1; j < n_graphs; ++j) {
      residual += detail::composed_mismatch(cfg.map(i, j), xik, cfg.map(k, j), keep);
    }
  }
  // tr-norm of a masked residual is twice its differing kept rows.
  return 1.0 - 2.0 * residual / (static_cast<double>(masks.n_est) * n_graphs * (n_graphs - 1));
}

inline double elicited_pairwise_consistency(std::span<const int> x, const MatchConfig& cfg,
                                            const InlierMasks& masks, int i, int j) {
  detail::check_graph(cfg, i);
  detail::check_graph(cfg, j);
  detail::check_size(cfg, x);
  const int n_graphs = cfg.graph_count();
  const char* keep = masks.keep.at(i).data();
  long residual = 0;
  for (int k = 0; k < n_graphs; ++k) {
    residual += detail::composed_mismatch(x, cfg.map(i, k), cfg.map(k, j), keep);
  }
  return 1.0 - 2.0 * residual / (2.0 * masks.n_est * n_graphs);
}

// J^psi: quadratic form of the row-masked matching of pair (i, j).
inline double elicited_score(std::span<const int> x, int i, int j, const AffinitySet& ks, const InlierMasks& masks) {
  const auto keep = masks.row_mask(i);
  if (i < j) return ks.at(i, j).masked_score(x, keep);
  const int n = static_cast<int>(x.size());
  std::vector<int> inv(n);
  std::vector<char> keep_cols(n);
  for (int u = 0; u < n; ++u) {
    inv[x[u]] = u;
    keep_cols[x[u]] = keep[u];
  }
  return ks.at(j, i).masked_score(inv, keep_cols);
}

}  // namespace mgm
