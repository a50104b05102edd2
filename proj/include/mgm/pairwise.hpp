#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mgm/core.hpp"

namespace mgm {

struct SolverOptions {
  int max_power_iters = 200;
  double tol = 1e-9;

  void validate() const {
    if (max_power_iters < 1) throw std::invalid_argument("SolverOptions: max_power_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("SolverOptions: tol must be positive");
  }
};

struct PowerIterationResult {
  Eigen::VectorXd vector;
  int iterations = 0;
  bool converged = false;
};

// Principal eigenvector of a non-negative K by power iteration from the
// uniform vector. The result has unit 2-norm and non-negative entries. If
// the tolerance is not met within max_power_iters the last iterate is
// returned with converged = false.
inline PowerIterationResult power_iteration(const AffinityMatrix& k, const SolverOptions& opts = {}) {
  opts.validate();
  const int d = k.dim();
  PowerIterationResult res;
  res.vector = Eigen::VectorXd::Constant(d, d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 0.0);
  if (d == 0) {
    res.converged = true;
    return res;
  }
  for (int it = 1; it <= opts.max_power_iters; ++it) {
    Eigen::VectorXd next = k.multiply(res.vector);
    const double norm = next.norm();
    res.iterations = it;
    if (!(norm > 0.0)) {
      // K v = 0: no preferred direction, keep the uniform start.
      res.converged = true;
      return res;
    }
    next /= norm;
    const double change = (next - res.vector).norm();
    res.vector = std::move(next);
    if (change < opts.tol) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

// Maximum-profit linear assignment, O(n^3) shortest augmenting paths.
// Rows are inserted in ascending order and ties resolve to the lowest
// column index, so an all-equal profit matrix yields the identity.
inline PermutationMatrix hungarian(const Eigen::MatrixXd& profit) {
  if (profit.rows() != profit.cols()) {
    throw std::invalid_argument("hungarian: profit matrix must be square");
  }
  if (!profit.allFinite()) throw std::invalid_argument("hungarian: non-finite profit");
  const int n = static_cast<int>(profit.rows());
  if (n == 0) return PermutationMatrix(std::vector<int>{});
  const double inf = std::numeric_limits<double>::infinity();
  const double top = profit.maxCoeff();

  // 1-based potentials; p[j] = row assigned to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  auto cost = [&](int r, int c) { return top - profit(r - 1, c - 1); };

  for (int r = 1; r <= n; ++r) {
    p[0] = r;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> map(n);
  for (int j = 1; j <= n; ++j) map[p[j] - 1] = j - 1;
  return PermutationMatrix(std::move(map));
}

struct PairwiseSolution {
  PermutationMatrix match;
  bool converged = true;
  int iterations = 0;
};

// Spectral matching: principal eigenvector of K reshaped to n x n (entry
// (i, a) at a*n+i) and rounded to a permutation with the Hungarian method.
inline PairwiseSolution solve_pairwise(const AffinityMatrix& k, const SolverOptions& opts = {}) {
  const int n = k.node_count();
  if (n < 1) throw std::invalid_argument("solve_pairwise: empty affinity matrix");
  const auto pi = power_iteration(k, opts);
  const Eigen::MatrixXd profit = Eigen::Map<const Eigen::MatrixXd>(pi.vector.data(), n, n);
  return {hungarian(profit), pi.converged, pi.iterations};
}

// Callable wrapper used wherever a pairwise solver is pluggable.
struct SpectralMatcher {
  SolverOptions options;

  PermutationMatrix operator()(const AffinityMatrix& k) const { return solve_pairwise(k, options).match; }
};

}  // namespace mgm
