#pragma once

#include <cmath>
#include <span>

#include "mgm/boost.hpp"
#include "test_util.hpp"

namespace mgm::testing {

// Dense references for J, C_p and C_u.
inline double ref_score(const MatchConfig& cfg, const AffinitySet& ks, int i, int j, const Eigen::MatrixXd& x) {
  (void)cfg;
  return dense_score(x, ks.at(i, j).to_dense());
}

inline Eigen::MatrixXd dmap(const MatchConfig& cfg, int i, int j) {
  if (i == j) return Eigen::MatrixXd::Identity(cfg.node_count(), cfg.node_count());
  return dense(cfg, i, j);
}

inline double ref_cp(const MatchConfig& cfg, int i, int j, const Eigen::MatrixXd& x) {
  const int n = cfg.node_count(), g = cfg.graph_count();
  double r = 0.0;
  for (int k = 0; k < g; ++k) r += tr_norm(x - dmap(cfg, i, k) * dmap(cfg, k, j)) / 2.0;
  return 1.0 - r / (n * g);
}

inline double ref_cu(const MatchConfig& cfg, int k) {
  const int n = cfg.node_count(), g = cfg.graph_count();
  double r = 0.0;
  for (int i = 0; i < g; ++i)
    for (int j = i + 1; j < g; ++j) r += tr_norm(dmap(cfg, i, j) - dmap(cfg, i, k) * dmap(cfg, k, j)) / 2.0;
  return 1.0 - r / (n * g * (g - 1) / 2.0);
}

inline double ref_norm(const MatchConfig& cfg, const AffinitySet& ks) {
  double best = 0.0;
  for (auto [i, j] : graph_pairs(cfg.graph_count())) best = std::max(best, ref_score(cfg, ks, i, j, dense(cfg, i, j)));
  return best;
}

// Evaluation value of Y = X_ik X_kj (k = i or j: the incumbent), plain metrics.
inline double ref_eval(const MatchConfig& cfg, const AffinitySet& ks, Evaluation e, double lambda, double norm, int i, int j,
                int k, const Eigen::MatrixXd& y) {
  const double jv = ref_score(cfg, ks, i, j, y) / norm;
  switch (e) {
    case Evaluation::score: return jv;
    case Evaluation::consistency: return ref_cp(cfg, i, j, y);
    case Evaluation::score_consistency: return (1 - lambda) * jv + lambda * ref_cp(cfg, i, j, y);
    case Evaluation::consistency_score: return lambda * jv + (1 - lambda) * ref_cp(cfg, i, j, y);
    case Evaluation::score_unary: return (1 - lambda) * jv + lambda * ref_cu(cfg, k);
    case Evaluation::score_pairwise_proxy: {
      const double a = ref_cp(cfg, i, k, dmap(cfg, i, k)), b = ref_cp(cfg, k, j, dmap(cfg, k, j));
      return (1 - lambda) * jv + lambda * std::sqrt(a * b);
    }
  }
  return 0.0;
}

// Same with elicited metrics built from already-tested library pieces.
inline double ref_eval_elicited(const MatchConfig& cfg, const AffinitySet& ks, const InlierMasks& m, Evaluation e,
                         double lambda, double norm, int i, int j, int k, std::span<const int> y) {
  const double jv = elicited_score(y, i, j, ks, m) / norm;
  auto cp = [&](std::span<const int> x, int a, int b) {
    if (a == b) return 1.0;
    return elicited_pairwise_consistency(x, cfg, m, a, b);
  };
  switch (e) {
    case Evaluation::score: return jv;
    case Evaluation::consistency: return cp(y, i, j);
    case Evaluation::score_consistency: return (1 - lambda) * jv + lambda * cp(y, i, j);
    case Evaluation::consistency_score: return lambda * jv + (1 - lambda) * cp(y, i, j);
    case Evaluation::score_unary: return (1 - lambda) * jv + lambda * elicited_unary_consistency(k, cfg, m);
    case Evaluation::score_pairwise_proxy:
      return (1 - lambda) * jv + lambda * std::sqrt(cp(cfg.map(i, k), i, k) * cp(cfg.map(k, j), k, j));
  }
  return 0.0;
}

// Best value over the incumbent and every single-anchor composition.
inline double exhaustive_best(const MatchConfig& cfg, const AffinitySet& ks, Evaluation e, double lambda, double norm,
                              int i, int j) {
  const Eigen::MatrixXd inc = dense(cfg, i, j);
  double best = std::max(ref_eval(cfg, ks, e, lambda, norm, i, j, i, inc), ref_eval(cfg, ks, e, lambda, norm, i, j, j, inc));
  for (int k = 0; k < cfg.graph_count(); ++k) {
    if (k == i || k == j) continue;
    best = std::max(best, ref_eval(cfg, ks, e, lambda, norm, i, j, k, dense(cfg, i, k) * dmap(cfg, k, j)));
  }
  return best;
}

inline double exhaustive_best_elicited(const MatchConfig& cfg, const AffinitySet& ks, const InlierMasks& m,
                                       Evaluation e, double lambda, double norm, int i, int j) {
  const auto inc = cfg.map(i, j);
  double best = std::max(ref_eval_elicited(cfg, ks, m, e, lambda, norm, i, j, i, inc),
                         ref_eval_elicited(cfg, ks, m, e, lambda, norm, i, j, j, inc));
  for (int k = 0; k < cfg.graph_count(); ++k) {
    if (k == i || k == j) continue;
    const auto y = compose(cfg.get(i, k), cfg.get(k, j));
    best = std::max(best, ref_eval_elicited(cfg, ks, m, e, lambda, norm, i, j, k, y.map()));
  }
  return best;
}

// Second-order: max over all (v, u) of J(X_iv X_vu X_uj) / norm.
inline double exhaustive_best_2nd(const MatchConfig& cfg, const AffinitySet& ks, double norm, int i, int j) {
  double best = -1.0;
  for (int v = 0; v < cfg.graph_count(); ++v)
    for (int u = 0; u < cfg.graph_count(); ++u) {
      const Eigen::MatrixXd y = dmap(cfg, i, v) * dmap(cfg, v, u) * dmap(cfg, u, j);
      best = std::max(best, ref_score(cfg, ks, i, j, y) / norm);
    }
  return best;
}

inline constexpr Evaluation kEvals[] = {Evaluation::score,         Evaluation::consistency,
                                        Evaluation::score_consistency, Evaluation::consistency_score,
                                        Evaluation::score_unary,   Evaluation::score_pairwise_proxy};

}  // namespace mgm::testing
