#include <gtest/gtest.h>

#include "mgm/consistency.hpp"
#include "test_util.hpp"

using namespace mgm;
using mgm::testing::dense;
using mgm::testing::tr_norm;

namespace {

// Reference implementations straight from the matrix definitions.
double naive_unary(int k, const MatchConfig& cfg) {
  const int N = cfg.graph_count(), n = cfg.node_count();
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) s += tr_norm(dense(cfg, i, j) - dense(cfg, i, k) * dense(cfg, k, j)) / 2.0;
  return 1.0 - s / (n * N * (N - 1) / 2.0);
}

double naive_pairwise(const Eigen::MatrixXd& x, const MatchConfig& cfg, int i, int j) {
  const int N = cfg.graph_count(), n = cfg.node_count();
  double s = 0.0;
  for (int k = 0; k < N; ++k) s += tr_norm(x - dense(cfg, i, k) * dense(cfg, k, j)) / 2.0;
  return 1.0 - s / (n * N);
}

double naive_node(int u, int k, const MatchConfig& cfg) {
  const int N = cfg.graph_count();
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) {
      const Eigen::MatrixXd y = dense(cfg, k, j) - dense(cfg, k, i) * dense(cfg, i, j);
      s += y.row(u).squaredNorm() / 2.0;
    }
  return 1.0 - s / (N * (N - 1) / 2.0);
}

Eigen::MatrixXd mask_rows(Eigen::MatrixXd y, std::span<const char> keep) {
  for (int u = 0; u < y.rows(); ++u)
    if (!keep[u]) y.row(u).setZero();
  return y;
}

double naive_elicited_unary(int k, const MatchConfig& cfg, const InlierMasks& m) {
  const int N = cfg.graph_count();
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      s += tr_norm(mask_rows(dense(cfg, i, j) - dense(cfg, i, k) * dense(cfg, k, j), m.row_mask(i)));
  return 1.0 - s / (m.n_est * N * (N - 1.0));
}

double naive_elicited_pairwise(const Eigen::MatrixXd& x, const MatchConfig& cfg, const InlierMasks& m, int i, int j) {
  const int N = cfg.graph_count();
  double s = 0.0;
  for (int k = 0; k < N; ++k) s += tr_norm(mask_rows(x - dense(cfg, i, k) * dense(cfg, k, j), m.row_mask(i)));
  return 1.0 - s / (2.0 * m.n_est * N);
}

MatchConfig three_graph_example() {
  MatchConfig cfg(3, 2);
  cfg.set(0, 2, PermutationMatrix({1, 0}));
  return cfg;
}

}  // namespace

TEST(Unary, ConsistentConfigIsOne) {
  std::mt19937_64 rng(31);
  MatchConfig ident(4, 3);
  const auto cons = mgm::testing::consistent_config(5, 4, rng);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(unary_consistency(k, ident), 1.0);
  for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(unary_consistency(k, cons), 1.0);
}

TEST(Unary, ThreeGraphHandExample) {
  // X12 = X23 = I, X13 = swap (graphs 1..3 map to 0..2).
  const auto cfg = three_graph_example();
  // k = 1: (1,2): X12 - X11 X12 = 0; (1,3): X13 - X11 X13 = 0;
  // (2,3): X23 - X21 X13 = I - swap -> 2 rows. Sum 2 over n*3 = 6.
  EXPECT_DOUBLE_EQ(unary_consistency(0, cfg), 1.0 - 2.0 / 6.0);
  EXPECT_NEAR(unary_consistency(0, cfg), naive_unary(0, cfg), 1e-15);
  // Every k sees exactly one inconsistent pair in a 3-cycle with one flip.
  EXPECT_DOUBLE_EQ(unary_consistency(1, cfg), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(unary_consistency(2, cfg), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(overall_consistency(cfg), (2.0 / 3.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0);
}

TEST(Pairwise, ThreeGraphHandExample) {
  const auto cfg = three_graph_example();
  // X = X13: k=1 -> X11 X13 = X13 (0), k=3 -> X13 X33 (0),
  // k=2 -> X12 X23 = I vs swap (2 rows). 1 - 2/(2*3).
  EXPECT_DOUBLE_EQ(pairwise_consistency(cfg.get(0, 2), cfg, 0, 2), 1.0 - 2.0 / 6.0);
  EXPECT_NEAR(pairwise_consistency(cfg.get(0, 2), cfg, 0, 2), naive_pairwise(dense(cfg, 0, 2), cfg, 0, 2), 1e-15);
}

TEST(Pairwise, ForeignMatrixAndSymmetry) {
  std::mt19937_64 rng(32);
  for (int rep = 0; rep < 50; ++rep) {
    const auto cfg = mgm::testing::random_config(5, 4, rng);
    const auto x = PermutationMatrix::random(4, rng);
    EXPECT_NEAR(pairwise_consistency(x, cfg, 1, 3), naive_pairwise(x.to_dense(), cfg, 1, 3), 1e-12);
    for (auto [i, j] : graph_pairs(5)) {
      EXPECT_NEAR(pairwise_consistency(cfg.get(i, j), cfg, i, j), pairwise_consistency(cfg.get(j, i), cfg, j, i),
                  1e-15);
    }
  }
  const auto cfg = mgm::testing::random_config(3, 3, rng);
  EXPECT_THROW(pairwise_consistency(std::vector<int>{0, 1}, cfg, 0, 1), std::invalid_argument);
  EXPECT_THROW(unary_consistency(3, cfg), std::out_of_range);
}

TEST(Consistency, OptimizedMatchesNaive) {
  std::mt19937_64 rng(33);
  for (int rep = 0; rep < 60; ++rep) {
    const int N = 2 + rep % 5, n = 1 + rep % 5;
    const auto cfg = mgm::testing::random_config(N, n, rng);
    for (int k = 0; k < N; ++k) {
      const double u = unary_consistency(k, cfg);
      EXPECT_NEAR(u, naive_unary(k, cfg), 1e-12);
      EXPECT_GT(u, 0.0);
      EXPECT_LE(u, 1.0);
      for (int v = 0; v < n; ++v) EXPECT_NEAR(node_consistency(v, k, cfg), naive_node(v, k, cfg), 1e-12);
    }
    for (auto [i, j] : graph_pairs(N)) {
      const double p = pairwise_consistency(cfg.get(i, j), cfg, i, j);
      EXPECT_NEAR(p, naive_pairwise(dense(cfg, i, j), cfg, i, j), 1e-12);
      EXPECT_GT(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
}

TEST(Consistency, OneExactlyWhenResidualsVanish) {
  // Exhaustive over all configurations with N = 3, n = 3: C = 1 iff every
  // triple composes.
  const auto perms = mgm::testing::all_permutations(3);
  for (const auto& a : perms)
    for (const auto& b : perms)
      for (const auto& c : perms) {
        MatchConfig cfg(3, 3);
        cfg.set(0, 1, PermutationMatrix(a));
        cfg.set(0, 2, PermutationMatrix(b));
        cfg.set(1, 2, PermutationMatrix(c));
        const bool closed = compose(cfg.get(0, 1), cfg.get(1, 2)) == cfg.get(0, 2);
        EXPECT_EQ(overall_consistency(cfg) == 1.0, closed);
        for (int k = 0; k < 3; ++k) EXPECT_EQ(unary_consistency(k, cfg) == 1.0, closed);
        EXPECT_EQ(pairwise_consistency(cfg.get(0, 2), cfg, 0, 2) == 1.0, closed);
      }
}

TEST(Consistency, DefinitionThreeIdentity) {
  std::mt19937_64 rng(34);
  for (int rep = 0; rep < 200; ++rep) {
    const int N = 2 + rep % 5, n = 1 + (rep / 5) % 5;
    const auto cfg = mgm::testing::random_config(N, n, rng);
    double pmean = 0.0;
    for (auto [i, j] : graph_pairs(N)) pmean += pairwise_consistency(cfg.get(i, j), cfg, i, j);
    pmean /= N * (N - 1) / 2.0;
    EXPECT_NEAR(overall_consistency(cfg), pmean, 1e-12);
  }
}

TEST(Node, MeanOverNodesEqualsUnary) {
  std::mt19937_64 rng(35);
  for (int rep = 0; rep < 40; ++rep) {
    const int N = 2 + rep % 3, n = 1 + rep % 4;
    const auto cfg = mgm::testing::random_config(N, n, rng);
    const auto table = node_consistency_table(cfg);
    for (int k = 0; k < N; ++k) {
      double mean = 0.0;
      for (int u = 0; u < n; ++u) {
        EXPECT_DOUBLE_EQ(table[k][u], node_consistency(u, k, cfg));
        mean += table[k][u];
      }
      EXPECT_NEAR(mean / n, unary_consistency(k, cfg), 1e-12);
    }
  }
}

TEST(Node, SinglePlantedContradiction) {
  std::mt19937_64 rng(36);
  const int N = 5, n = 4;
  auto cfg = mgm::testing::consistent_config(N, n, rng);
  // Swap two columns of X_23: rows u and w of graph 2 now disagree with
  // every path through graph 2 and 3.
  auto m = std::vector<int>(cfg.map(2, 3).begin(), cfg.map(2, 3).end());
  std::swap(m[0], m[1]);
  cfg.set(2, 3, PermutationMatrix(m));
  // From graph 0's view, node u = X_20^{-1}... node of graph 0 whose image
  // in graph 2 is row 0: it sees exactly one bad pair (2,3).
  const int u0 = cfg.map(2, 0)[0];
  EXPECT_DOUBLE_EQ(node_consistency(u0, 0, cfg), 1.0 - 1.0 / (N * (N - 1) / 2.0));
  EXPECT_DOUBLE_EQ(node_consistency(u0, 0, cfg), naive_node(u0, 0, cfg));
  EXPECT_DOUBLE_EQ(node_consistency(cfg.map(2, 0)[2], 0, cfg), 1.0);
  EXPECT_THROW(node_consistency(n, 0, cfg), std::out_of_range);
}

TEST(NodeAffinity, ZeroAffinitiesGiveZero) {
  std::mt19937_64 rng(37);
  const auto cfg = mgm::testing::random_config(4, 3, rng);
  AffinitySet ks(4);
  for (auto [i, j] : graph_pairs(4)) ks.set(i, j, AffinityMatrix::zero(3));
  for (int k = 0; k < 4; ++k)
    for (int u = 0; u < 3; ++u) EXPECT_EQ(node_affinity(u, k, cfg, ks), 0.0);
}

TEST(NodeAffinity, MatchesMaskedQuadraticFormAndIsBoundedByFull) {
  std::mt19937_64 rng(38);
  for (int rep = 0; rep < 20; ++rep) {
    const int N = 4, n = 4;
    const auto cfg = mgm::testing::random_config(N, n, rng);
    const auto ks = mgm::testing::random_affinities(N, n, 0.5, rng);
    for (int k = 0; k < N; ++k) {
      for (int u = 0; u < n; ++u) {
        double ref = 0.0, full = 0.0;
        for (int i = 0; i < N; ++i) {
          if (i == k) continue;
          // K_ki for k > i is K_ik re-indexed by swapping graph roles.
          const Eigen::MatrixXd kik = ks.at(std::min(i, k), std::max(i, k)).to_dense();
          Eigen::MatrixXd kki(n * n, n * n);
          if (k < i) {
            kki = kik;
          } else {
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                  for (int d = 0; d < n; ++d) kki(b * n + a, d * n + c) = kik(a * n + b, c * n + d);
          }
          const Eigen::MatrixXd x = dense(cfg, k, i);
          Eigen::MatrixXd xu = Eigen::MatrixXd::Zero(n, n);
          xu.row(u) = x.row(u);
          ref += mgm::testing::vec(xu).dot(kki * mgm::testing::vec(x));
          full += mgm::testing::dense_score(x, kki);
        }
        const double s = node_affinity(u, k, cfg, ks);
        EXPECT_NEAR(s, ref, 1e-10);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, full + 1e-12);
      }
    }
  }
}

TEST(NodeAffinity, StrongNodeBeatsIsolatedNode) {
  // Node 0 is matched through a rewarded edge pair in every pair; node 2
  // has no incident affinity at all.
  const int N = 3, n = 3;
  MatchConfig cfg(N, n);
  AffinitySet ks(N);
  for (auto [i, j] : graph_pairs(N)) {
    std::vector<AffinityMatrix::Triplet> t{{0, 4, 1.0}, {4, 0, 1.0}};  // (0,0)<->(1,1)
    ks.set(i, j, AffinityMatrix::from_triplets(n, t));
  }
  for (int k = 0; k < N; ++k) {
    EXPECT_GT(node_affinity(0, k, cfg, ks), node_affinity(2, k, cfg, ks));
    EXPECT_EQ(node_affinity(2, k, cfg, ks), 0.0);
  }
}

TEST(Mask, KeepAllAndKeepOne) {
  std::mt19937_64 rng(39);
  const auto cfg = mgm::testing::random_config(4, 5, rng);
  const auto x = cfg.get(0, 1);
  const auto all = inlier_mask(x, 0, cfg, InlierEstimate{5, InlierMode::consistency});
  EXPECT_EQ(all.map, std::vector<int>(x.map().begin(), x.map().end()));
  const auto one = inlier_mask(x, 0, cfg, InlierEstimate{1, InlierMode::consistency});
  EXPECT_EQ(one.kept_rows(), 1);
  EXPECT_THROW(InlierEstimate({0}).validate(5), std::invalid_argument);
  EXPECT_THROW(InlierEstimate({6}).validate(5), std::invalid_argument);
  EXPECT_THROW(compute_inlier_masks(cfg, InlierEstimate{2, InlierMode::affinity}), std::invalid_argument);
}

TEST(Mask, Idempotent) {
  std::mt19937_64 rng(40);
  for (int rep = 0; rep < 20; ++rep) {
    const auto cfg = mgm::testing::random_config(5, 6, rng);
    const auto ks = mgm::testing::random_affinities(5, 6, 0.3, rng);
    for (auto mode : {InlierMode::consistency, InlierMode::affinity}) {
      const auto masks = compute_inlier_masks(cfg, InlierEstimate{3, mode}, &ks);
      const auto once = inlier_mask(cfg.get(2, 4), 2, masks);
      EXPECT_EQ(inlier_mask(once, 2, masks), once);
      EXPECT_EQ(once.kept_rows(), 3);
    }
  }
}

TEST(Mask, RankingTiesByAscendingIndex) {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.9, 0.1};
  EXPECT_EQ(rank_nodes(s), (std::vector<int>{1, 3, 0, 2, 4}));
}

namespace {

// Inliers (reference labels 0..ni-1) are matched consistently; each
// outlier row is scrambled so that outliers contradict every path.
MatchConfig planted_outliers(int N, int ni, int no, std::mt19937_64& rng) {
  const int n = ni + no;
  std::vector<PermutationMatrix> truth;
  for (int k = 0; k < N; ++k) truth.push_back(PermutationMatrix::random(n, rng));
  MatchConfig cfg(N, n);
  for (auto [i, j] : graph_pairs(N)) {
    std::vector<int> m(n);
    for (int u = 0; u < n; ++u) m[u] = truth[j].row_of(truth[i][u]);
    // Derange the outlier block by a pair-dependent cyclic shift.
    std::vector<int> outl_rows;
    for (int u = 0; u < n; ++u)
      if (truth[i][u] >= ni) outl_rows.push_back(u);
    const int shift = 1 + (i + 2 * j) % (no - 1);
    std::vector<int> old(m);
    for (int s = 0; s < no; ++s) m[outl_rows[s]] = old[outl_rows[(s + shift) % no]];
    cfg.set(i, j, PermutationMatrix(m));
  }
  return cfg;
}

}  // namespace

TEST(Mask, PlantedOutliersAreExactlyTheZeroedRows) {
  std::mt19937_64 rng(41);
  const int N = 6, ni = 4, no = 3;
  for (int rep = 0; rep < 10; ++rep) {
    // Rebuild truth alongside to know which rows are outliers.
    std::mt19937_64 copy = rng;
    const auto cfg = planted_outliers(N, ni, no, rng);
    std::vector<PermutationMatrix> truth;
    for (int k = 0; k < N; ++k) truth.push_back(PermutationMatrix::random(ni + no, copy));
    const auto masks = compute_inlier_masks(cfg, InlierEstimate{ni, InlierMode::consistency});
    const auto table = node_consistency_table(cfg);
    for (int k = 0; k < N; ++k)
      for (int u = 0; u < ni + no; ++u) {
        const bool inlier = truth[k][u] < ni;
        EXPECT_EQ(masks.keep[k][u] != 0, inlier) << "graph " << k << " node " << u;
        if (inlier) {
          EXPECT_DOUBLE_EQ(table[k][u], 1.0);
        } else {
          EXPECT_LT(table[k][u], 1.0);
        }
      }
  }
}

TEST(Elicited, KeepAllReducesToPlain) {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 30; ++rep) {
    const int N = 3 + rep % 3, n = 2 + rep % 4;
    const auto cfg = mgm::testing::random_config(N, n, rng);
    const auto ks = mgm::testing::random_affinities(N, n, 0.5, rng);
    const auto masks = compute_inlier_masks(cfg, InlierEstimate{n, InlierMode::consistency});
    for (int k = 0; k < N; ++k) {
      EXPECT_NEAR(elicited_unary_consistency(k, cfg, masks), unary_consistency(k, cfg), 1e-12);
    }
    for (auto [i, j] : graph_pairs(N)) {
      EXPECT_NEAR(elicited_pairwise_consistency(cfg.map(i, j), cfg, masks, i, j),
                  pairwise_consistency(cfg.map(i, j), cfg, i, j), 1e-12);
      EXPECT_NEAR(elicited_score(cfg.map(i, j), i, j, ks, masks), ks.at(i, j).score(cfg.map(i, j)), 1e-12);
      EXPECT_NEAR(elicited_score(cfg.map(j, i), j, i, ks, masks), ks.at(i, j).score(cfg.map(i, j)), 1e-12);
    }
  }
  MatchConfig ident(4, 3);
  const auto masks = compute_inlier_masks(ident, InlierEstimate{3, InlierMode::consistency});
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(elicited_unary_consistency(k, ident, masks), 1.0);
}

TEST(Elicited, MatchesMaskedReferences) {
  std::mt19937_64 rng(43);
  for (int rep = 0; rep < 30; ++rep) {
    const int N = 4, n = 5;
    const auto cfg = mgm::testing::random_config(N, n, rng);
    const auto ks = mgm::testing::random_affinities(N, n, 0.4, rng);
    const auto masks = compute_inlier_masks(cfg, InlierEstimate{3, InlierMode::affinity}, &ks);
    for (int k = 0; k < N; ++k) EXPECT_NEAR(elicited_unary_consistency(k, cfg, masks), naive_elicited_unary(k, cfg, masks), 1e-12);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        EXPECT_NEAR(elicited_pairwise_consistency(cfg.map(i, j), cfg, masks, i, j),
                    naive_elicited_pairwise(dense(cfg, i, j), cfg, masks, i, j), 1e-12);
      }
    // J^psi against the dense masked quadratic form, and bounded by J.
    for (auto [i, j] : graph_pairs(N)) {
      const Eigen::MatrixXd xm = mask_rows(dense(cfg, i, j), masks.row_mask(i));
      const double js = elicited_score(cfg.map(i, j), i, j, ks, masks);
      EXPECT_NEAR(js, mgm::testing::dense_score(xm, ks.at(i, j).to_dense()), 1e-10);
      EXPECT_LE(js, ks.at(i, j).score(cfg.map(i, j)) + 1e-12);
    }
  }
}

TEST(Elicited, OutlierOnlyContradictionsAreInvisible) {
  std::mt19937_64 rng(44);
  const int N = 6, ni = 4, no = 3;
  const auto cfg = planted_outliers(N, ni, no, rng);
  const auto masks = compute_inlier_masks(cfg, InlierEstimate{ni, InlierMode::consistency});
  for (int k = 0; k < N; ++k) {
    EXPECT_LT(unary_consistency(k, cfg), 1.0);
    EXPECT_DOUBLE_EQ(elicited_unary_consistency(k, cfg, masks), 1.0);
  }
  for (auto [i, j] : graph_pairs(N)) {
    EXPECT_DOUBLE_EQ(elicited_pairwise_consistency(cfg.map(i, j), cfg, masks, i, j), 1.0);
  }
}

TEST(Elicited, OutlierOnlyAffinityMasksToZero) {
  // Affinity only between rows 2 and 3; keep rows 0 and 1.
  const int n = 4;
  std::vector<AffinityMatrix::Triplet> t{{2 * n + 2, 3 * n + 3, 2.0}, {3 * n + 3, 2 * n + 2, 2.0}};
  AffinitySet ks(2);
  ks.set(0, 1, AffinityMatrix::from_triplets(n, t));
  InlierMasks masks{2, {{1, 1, 0, 0}, {1, 1, 0, 0}}};
  const std::vector<int> id{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(ks.at(0, 1).score(id), 4.0);
  EXPECT_DOUBLE_EQ(elicited_score(id, 0, 1, ks, masks), 0.0);
}
