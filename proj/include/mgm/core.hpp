#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mgm {

// Class: PermutationMatrix
//
// One-to-one correspondence between the nodes of two graphs of equal size.
// Stored as the row->column map of the binary matrix: X(u, map[u]) = 1.
// The inverse map is kept alongside so that transposition is free.
class PermutationMatrix {
 public:
  PermutationMatrix() = default;

  explicit PermutationMatrix(std::vector<int> map) : fwd_(std::move(map)) {
    const int n = static_cast<int>(fwd_.size());
    inv_.assign(n, -1);
    for (int u = 0; u < n; ++u) {
      const int c = fwd_[u];
      if (c < 0 || c >= n || inv_[c] != -1) {
        throw std::invalid_argument("PermutationMatrix: map is not a bijection");
      }
      inv_[c] = u;
    }
  }

  static PermutationMatrix identity(int n) {
    std::vector<int> m(n);
    std::iota(m.begin(), m.end(), 0);
    return PermutationMatrix(std::move(m));
  }

  // Accepts a dense 0/1 matrix with exactly one unit entry per row and per
  // column. Anything else (zero-padded rows, fractional entries) throws.
  static PermutationMatrix from_dense(const Eigen::MatrixXd& x) {
    if (x.rows() != x.cols()) {
      throw std::invalid_argument("PermutationMatrix: matrix is not square");
    }
    const int n = static_cast<int>(x.rows());
    std::vector<int> m(n, -1);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double v = x(r, c);
        if (v == 1.0) {
          if (m[r] != -1) {
            throw std::invalid_argument("PermutationMatrix: row has several ones");
          }
          m[r] = c;
        } else if (v != 0.0) {
          throw std::invalid_argument("PermutationMatrix: entries must be 0 or 1");
        }
      }
      if (m[r] == -1) {
        throw std::invalid_argument("PermutationMatrix: row " + std::to_string(r) +
                                    " has no unit entry");
      }
    }
    return PermutationMatrix(std::move(m));
  }

  template <typename URBG>
  static PermutationMatrix random(int n, URBG& rng) {
    std::vector<int> m(n);
    std::iota(m.begin(), m.end(), 0);
    std::shuffle(m.begin(), m.end(), rng);
    return PermutationMatrix(std::move(m));
  }

  int size() const { return static_cast<int>(fwd_.size()); }
  int operator[](int row) const { return fwd_[row]; }
  int row_of(int col) const { return inv_[col]; }
  std::span<const int> map() const { return fwd_; }
  std::span<const int> inverse_map() const { return inv_; }

  PermutationMatrix transpose() const {
    PermutationMatrix t;
    t.fwd_ = inv_;
    t.inv_ = fwd_;
    return t;
  }

  Eigen::MatrixXd to_dense() const {
    const int n = size();
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
    for (int u = 0; u < n; ++u) x(u, fwd_[u]) = 1.0;
    return x;
  }

  friend bool operator==(const PermutationMatrix& a, const PermutationMatrix& b) {
    return a.fwd_ == b.fwd_;
  }

 private:
  std::vector<int> fwd_;
  std::vector<int> inv_;
};

// Matrix product X_ik * X_kj expressed on maps: (a*b)[u] = b[a[u]].
inline void compose_into(std::span<const int> a, std::span<const int> b, std::span<int> out) {
  for (std::size_t u = 0; u < a.size(); ++u) out[u] = b[a[u]];
}

inline PermutationMatrix compose(const PermutationMatrix& a, const PermutationMatrix& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("compose: dimension mismatch");
  }
  std::vector<int> out(a.size());
  compose_into(a.map(), b.map(), out);
  return PermutationMatrix(std::move(out));
}

// Number of rows on which the two maps disagree. For permutation matrices the
// trace norm tr((A-B)^T (A-B)) equals twice this count.
inline int row_mismatches(std::span<const int> a, std::span<const int> b) {
  int d = 0;
  for (std::size_t u = 0; u < a.size(); ++u) d += (a[u] != b[u]);
  return d;
}

inline std::uint64_t hash_map(std::span<const int> m) {
  std::uint64_t h = 1469598103934665603ull;
  for (int v : m) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull;
    h *= 1099511628211ull;
  }
  return h;
}

// Class: AffinityMatrix
//
// Pairwise affinity K of size n^2 x n^2 between two graphs of n nodes. The
// entry for the edge pair (i,j) <-> (a,b) sits at row a*n+i, column b*n+j,
// following column-wise vectorisation of the n x n assignment matrix.
//
// Storage is compressed row-major by default. Small problems (n <= 12) and
// nearly full matrices use a dense buffer instead.
class AffinityMatrix {
 public:
  enum class Storage { automatic, dense, sparse };

  using Triplet = Eigen::Triplet<double>;
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  AffinityMatrix() = default;

  static AffinityMatrix zero(int n) {
    AffinityMatrix k;
    k.n_ = n;
    k.sparse_ = true;
    k.csr_.resize(n * n, n * n);
    return k;
  }

  static AffinityMatrix from_triplets(int n, const std::vector<Triplet>& entries,
                                      Storage storage = Storage::automatic) {
    const int d = n * n;
    Sparse s(d, d);
    s.setFromTriplets(entries.begin(), entries.end());
    s.prune(0.0);
    return finish(n, std::move(s), storage);
  }

  static AffinityMatrix from_dense(const Eigen::MatrixXd& dense,
                                   Storage storage = Storage::automatic) {
    const auto d = dense.rows();
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
    if (dense.cols() != d || static_cast<Eigen::Index>(n) * n != d) {
      throw std::invalid_argument("AffinityMatrix: dense input must be n^2 x n^2");
    }
    Sparse s = dense.sparseView(0.0, 0.0);
    return finish(n, std::move(s), storage);
  }

  int node_count() const { return n_; }
  int dim() const { return n_ * n_; }
  bool is_sparse() const { return sparse_; }
  Eigen::Index nonzeros() const { return sparse_ ? csr_.nonZeros() : (dense_.array() != 0.0).count(); }
  int index(int i, int a) const { return a * n_ + i; }

  double coeff(int r, int c) const { return sparse_ ? csr_.coeff(r, c) : dense_(r, c); }

  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const {
    if (sparse_) return csr_ * v;
    return dense_ * v;
  }

  Eigen::MatrixXd to_dense() const { return sparse_ ? Eigen::MatrixXd(csr_) : dense_; }

  // vec(X)^T K vec(X) where row u of X selects column map[u]. Only the n
  // nonzero positions of vec(X) are touched.
  double score(std::span<const int> map) const {
    double total = 0.0;
    for (int u = 0; u < n_; ++u) total += row_score_unchecked(map, u);
    return total;
  }

  // vec(X^u)^T K vec(X): contribution of row u (all other rows of the left
  // factor zeroed).
  double row_score(std::span<const int> map, int u) const {
    check_map(map);
    return row_score_unchecked(map, u);
  }

  // Quadratic form of the row-masked matrix: rows with keep[u] == 0 are
  // zeroed on both sides.
  double masked_score(std::span<const int> map, std::span<const char> keep) const {
    double total = 0.0;
    for (int u = 0; u < n_; ++u) {
      if (!keep[u]) continue;
      const int r = index(u, map[u]);
      if (sparse_) {
        for (Sparse::InnerIterator it(csr_, r); it; ++it) {
          const int c = static_cast<int>(it.col());
          const int v = c % n_;
          if (keep[v] && map[v] == c / n_) total += it.value();
        }
      } else {
        for (int v = 0; v < n_; ++v) {
          if (keep[v]) total += dense_(r, index(v, map[v]));
        }
      }
    }
    return total;
  }

  void check_map(std::span<const int> map) const {
    if (static_cast<int>(map.size()) != n_) {
      throw std::invalid_argument("AffinityMatrix: assignment size " + std::to_string(map.size()) +
                                  " does not match n = " + std::to_string(n_));
    }
  }

 private:
  static AffinityMatrix finish(int n, Sparse s, Storage storage) {
    for (int r = 0; r < s.outerSize(); ++r) {
      for (Sparse::InnerIterator it(s, r); it; ++it) {
        if (!(it.value() >= 0.0) || !std::isfinite(it.value())) {
          throw std::invalid_argument("AffinityMatrix: entries must be finite and non-negative");
        }
      }
    }
    const Sparse t = s.transpose();
    const Sparse diff = s - t;
    double asym = 0.0;
    double scale = 1.0;
    for (int r = 0; r < diff.outerSize(); ++r) {
      for (Sparse::InnerIterator it(diff, r); it; ++it) asym = std::max(asym, std::abs(it.value()));
    }
    for (int r = 0; r < s.outerSize(); ++r) {
      for (Sparse::InnerIterator it(s, r); it; ++it) scale = std::max(scale, it.value());
    }
    if (asym > 1e-12 * scale) {
      throw std::invalid_argument("AffinityMatrix: matrix is not symmetric");
    }

    AffinityMatrix k;
    k.n_ = n;
    const double d = static_cast<double>(n) * n;
    const double density = d > 0 ? static_cast<double>(s.nonZeros()) / (d * d) : 0.0;
    bool dense = false;
    switch (storage) {
      case Storage::dense: dense = true; break;
      case Storage::sparse: dense = false; break;
      case Storage::automatic: dense = n <= 12 || density > 0.5; break;
    }
    k.sparse_ = !dense;
    if (dense) {
      k.dense_ = Eigen::MatrixXd(s);
    } else {
      k.csr_ = std::move(s);
      k.csr_.makeCompressed();
    }
    return k;
  }

  double row_score_unchecked(std::span<const int> map, int u) const {
    const int r = index(u, map[u]);
    double total = 0.0;
    if (sparse_) {
      for (Sparse::InnerIterator it(csr_, r); it; ++it) {
        const int c = static_cast<int>(it.col());
        if (map[c % n_] == c / n_) total += it.value();
      }
    } else {
      for (int v = 0; v < n_; ++v) total += dense_(r, index(v, map[v]));
    }
    return total;
  }

  int n_ = 0;
  bool sparse_ = true;
  Sparse csr_;
  Eigen::MatrixXd dense_;
};

inline double affinity_score(const PermutationMatrix& x, const AffinityMatrix& k) {
  k.check_map(x.map());
  return k.score(x.map());
}

// Class: MatchConfig
//
// All pairwise matchings over N graphs. Only X_ij with i < j is stored;
// X_ji is the transpose and X_ii the identity, so X_ji = X_ij^T holds by
// construction.
class MatchConfig {
 public:
  MatchConfig() = default;

  MatchConfig(int graphs, int nodes) : graphs_(graphs), nodes_(nodes) {
    if (graphs < 1 || nodes < 1) {
      throw std::invalid_argument("MatchConfig: need at least one graph and one node");
    }
    upper_.assign(static_cast<std::size_t>(graphs) * (graphs - 1) / 2, PermutationMatrix::identity(nodes));
    identity_.resize(nodes);
    std::iota(identity_.begin(), identity_.end(), 0);
  }

  int graph_count() const { return graphs_; }
  int node_count() const { return nodes_; }
  int pair_count() const { return static_cast<int>(upper_.size()); }

  // Linear index of the unordered pair {i, j}, i < j.
  int pair_index(int i, int j) const {
    return i * graphs_ - i * (i + 1) / 2 + (j - i - 1);
  }

  // Row->column map of X_ij for any ordered pair.
  std::span<const int> map(int i, int j) const {
    if (i == j) return identity_;
    if (i < j) return upper_[pair_index(i, j)].map();
    return upper_[pair_index(j, i)].inverse_map();
  }

  PermutationMatrix get(int i, int j) const {
    check_pair(i, j, true);
    if (i == j) return PermutationMatrix::identity(nodes_);
    if (i < j) return upper_[pair_index(i, j)];
    return upper_[pair_index(j, i)].transpose();
  }

  void set(int i, int j, PermutationMatrix x) {
    check_pair(i, j, false);
    if (x.size() != nodes_) {
      throw std::invalid_argument("MatchConfig: matching has wrong node count");
    }
    if (i < j) {
      upper_[pair_index(i, j)] = std::move(x);
    } else {
      upper_[pair_index(j, i)] = x.transpose();
    }
  }

  friend bool operator==(const MatchConfig& a, const MatchConfig& b) {
    return a.graphs_ == b.graphs_ && a.nodes_ == b.nodes_ && a.upper_ == b.upper_;
  }

 private:
  void check_pair(int i, int j, bool allow_diagonal) const {
    if (i < 0 || j < 0 || i >= graphs_ || j >= graphs_) {
      throw std::out_of_range("MatchConfig: graph index out of range");
    }
    if (!allow_diagonal && i == j) {
      throw std::invalid_argument("MatchConfig: X_ii is fixed to the identity");
    }
  }

  int graphs_ = 0;
  int nodes_ = 0;
  std::vector<PermutationMatrix> upper_;
  std::vector<int> identity_;
};

// All unordered pairs (i, j), i < j, in row-major order.
inline std::vector<std::pair<int, int>> graph_pairs(int graphs) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(graphs) * (graphs - 1) / 2);
  for (int i = 0; i < graphs; ++i) {
    for (int j = i + 1; j < graphs; ++j) out.emplace_back(i, j);
  }
  return out;
}

// Class: AffinitySet
//
// K_ij for every pair i < j. The reverse orientation is served by index
// transposition: J_ji(X_ji) = J_ij(X_ij), which holds for every affinity
// builder in this library (they are symmetric in the roles of the graphs).
class AffinitySet {
 public:
  AffinitySet() = default;
  explicit AffinitySet(int graphs) : graphs_(graphs), upper_(static_cast<std::size_t>(graphs) * (graphs - 1) / 2) {}

  int graph_count() const { return graphs_; }

  void set(int i, int j, AffinityMatrix k) { upper_.at(index(i, j)) = std::move(k); }

  const AffinityMatrix& at(int i, int j) const {
    if (i >= j || i < 0 || j >= graphs_) {
      throw std::out_of_range("AffinitySet: expected a pair i < j");
    }
    const auto& k = upper_[index(i, j)];
    if (k.dim() == 0) throw std::out_of_range("AffinitySet: missing affinity for pair");
    return k;
  }

  bool complete() const {
    return std::all_of(upper_.begin(), upper_.end(), [](const AffinityMatrix& k) { return k.dim() > 0; });
  }

  // J(X_ij) for the map of X_ij (any orientation, i != j).
  double score(int i, int j, std::span<const int> map_ij) const {
    if (i < j) return at(i, j).score(map_ij);
    std::vector<int> inv(map_ij.size());
    for (std::size_t u = 0; u < map_ij.size(); ++u) inv[map_ij[u]] = static_cast<int>(u);
    return at(j, i).score(inv);
  }

  // Contribution of node u of graph i in vec(X_ij^u)^T K_ij vec(X_ij).
  double row_score(const MatchConfig& cfg, int i, int j, int u) const {
    if (i < j) return at(i, j).row_score(cfg.map(i, j), u);
    return at(j, i).row_score(cfg.map(j, i), cfg.map(i, j)[u]);
  }

 private:
  int index(int i, int j) const { return i * graphs_ - i * (i + 1) / 2 + (j - i - 1); }

  int graphs_ = 0;
  std::vector<AffinityMatrix> upper_;
};

// Class: ScoreNormalizer
//
// max over pairs of the initial affinity score. Fixed once at
// initialisation; boosted pairs may exceed 1 after normalisation.
struct ScoreNormalizer {
  double value = 1.0;

  explicit ScoreNormalizer(double v) : value(v) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("ScoreNormalizer: value must be positive (all-zero affinities?)");
    }
  }

  static ScoreNormalizer from_config(const MatchConfig& cfg, const AffinitySet& ks) {
    double best = 0.0;
    for (auto [i, j] : graph_pairs(cfg.graph_count())) {
      best = std::max(best, ks.at(i, j).score(cfg.map(i, j)));
    }
    return ScoreNormalizer(best);
  }
};

inline double normalized_score(const PermutationMatrix& x, const AffinityMatrix& k, const ScoreNormalizer& norm) {
  if (!(norm.value > 0.0)) throw std::invalid_argument("normalized_score: zero normalizer");
  return affinity_score(x, k) / norm.value;
}

// Class: GroundTruth
//
// True pairwise matchings plus, per graph, which nodes are common inliers.
struct GroundTruth {
  MatchConfig matches;
  std::vector<std::vector<char>> inlier_rows;
};

// Fraction of inlier rows of graph i on which map_ij agrees with the truth.
inline double pair_accuracy(std::span<const int> map_ij, const GroundTruth& truth, int i, int j) {
  const auto tru = truth.matches.map(i, j);
  const auto& inl = truth.inlier_rows.at(i);
  int hit = 0;
  int total = 0;
  for (std::size_t u = 0; u < map_ij.size(); ++u) {
    if (!inl[u]) continue;
    ++total;
    hit += (map_ij[u] == tru[u]);
  }
  return total ? static_cast<double>(hit) / total : 1.0;
}

}  // namespace mgm
