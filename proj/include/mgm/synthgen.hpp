#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgm/core.hpp"
#include "mgm/delaunay.hpp"
#include "mgm/parallel.hpp"

namespace mgm {

// Class: GraphInstance
//
// Weighted undirected graph (0 = no edge) with optional planar coordinates.
// truth[u] is the reference index of node u; reference indices below
// `inliers` are the common inliers.
struct GraphInstance {
  Eigen::MatrixXd adjacency;
  std::optional<Eigen::MatrixX2d> coords;
  int inliers = 0;
  PermutationMatrix truth;

  int size() const { return static_cast<int>(adjacency.rows()); }
  bool is_inlier(int u) const { return truth[u] < inliers; }

  friend bool operator==(const GraphInstance& a, const GraphInstance& b) {
    if (a.inliers != b.inliers || !(a.truth == b.truth)) return false;
    if (a.adjacency.rows() != b.adjacency.rows() || a.adjacency != b.adjacency) return false;
    if (a.coords.has_value() != b.coords.has_value()) return false;
    return !a.coords || *a.coords == *b.coords;
  }
};

struct SynthParams {
  int graphs = 10;
  int inliers = 10;
  int outliers = 0;
  double deform = 0.0;   // std of the Gaussian disturbance
  double density = 1.0;  // edge keep probability
  double sigma2 = 0.05;  // edge affinity sensitivity
  double coverage = 1.0; // fraction of pairs initialised by the pairwise solver
  std::uint64_t seed = 0;

  int nodes() const { return inliers + outliers; }

  void validate() const {
    if (graphs < 0 || inliers < 0 || outliers < 0) throw std::invalid_argument("SynthParams: negative count");
    if (!(deform >= 0.0)) throw std::invalid_argument("SynthParams: deform must be >= 0");
    if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("SynthParams: density must be in [0,1]");
    if (!(coverage >= 0.0 && coverage <= 1.0)) throw std::invalid_argument("SynthParams: coverage must be in [0,1]");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("SynthParams: sigma2 must be positive");
  }
};

namespace detail {

// Relabels reference-ordered weights into a random node order.
template <typename URBG>
GraphInstance shuffle_instance(const Eigen::MatrixXd& ref_weights, std::optional<Eigen::MatrixX2d> ref_coords,
                               int inliers, URBG& rng) {
  const int n = static_cast<int>(ref_weights.rows());
  GraphInstance g;
  g.inliers = inliers;
  g.truth = PermutationMatrix::random(n, rng);
  g.adjacency.resize(n, n);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) g.adjacency(u, v) = ref_weights(g.truth[u], g.truth[v]);
  }
  if (ref_coords) {
    Eigen::MatrixX2d c(n, 2);
    for (int u = 0; u < n; ++u) c.row(u) = ref_coords->row(g.truth[u]);
    g.coords = std::move(c);
  }
  return g;
}

template <typename URBG>
void sparsify(Eigen::MatrixXd& w, double density, URBG& rng) {
  if (density >= 1.0) return;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int u = 0; u < w.rows(); ++u) {
    for (int v = u + 1; v < w.cols(); ++v) {
      if (unit(rng) >= density) w(u, v) = w(v, u) = 0.0;
    }
  }
}

inline Eigen::MatrixXd distances(const Eigen::MatrixX2d& p) {
  const auto n = p.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v = u + 1; v < n; ++v) d(u, v) = d(v, u) = (p.row(u) - p.row(v)).norm();
  }
  return d;
}

}  // namespace detail

// Random weighted graphs: a complete reference graph on `inliers` nodes with
// U[0,1] weights; each instance adds N(0, deform) to every reference edge
// (negative results become absent edges), appends `outliers` nodes with
// fresh U[0,1] incident weights, keeps each edge with probability
// `density`, and shuffles its nodes.
inline std::vector<GraphInstance> gen_random_graphs(const SynthParams& p) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, p.deform > 0.0 ? p.deform : 1.0);
  const int ni = p.inliers;
  const int n = p.nodes();

  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(ni, ni);
  for (int u = 0; u < ni; ++u) {
    for (int v = u + 1; v < ni; ++v) ref(u, v) = ref(v, u) = unit(rng);
  }

  std::vector<GraphInstance> out;
  out.reserve(p.graphs);
  for (int g = 0; g < p.graphs; ++g) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        double q;
        if (u < ni && v < ni) {
          q = ref(u, v) + (p.deform > 0.0 ? noise(rng) : 0.0);
          q = std::max(q, 0.0);
        } else {
          q = unit(rng);
        }
        w(u, v) = w(v, u) = q;
      }
    }
    detail::sparsify(w, p.density, rng);
    out.push_back(detail::shuffle_instance(w, std::nullopt, ni, rng));
  }
  return out;
}

// Random planar point sets: `inliers` reference points ~ N(0,1)^2, copied
// per instance with N(0, deform) noise plus `outliers` fresh N(0,1)^2 points.
// Edge weights are Euclidean distances, sparsified by `density`.
inline std::vector<GraphInstance> gen_random_points(const SynthParams& p) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, p.deform > 0.0 ? p.deform : 1.0);
  const int ni = p.inliers;
  const int n = p.nodes();

  Eigen::MatrixX2d ref(ni, 2);
  for (int u = 0; u < ni; ++u) {
    ref(u, 0) = gauss(rng);
    ref(u, 1) = gauss(rng);
  }

  std::vector<GraphInstance> out;
  out.reserve(p.graphs);
  for (int g = 0; g < p.graphs; ++g) {
    Eigen::MatrixX2d pts(n, 2);
    for (int u = 0; u < n; ++u) {
      for (int c = 0; c < 2; ++c) {
        pts(u, c) = u < ni ? ref(u, c) + (p.deform > 0.0 ? noise(rng) : 0.0) : gauss(rng);
      }
    }
    Eigen::MatrixXd w = detail::distances(pts);
    detail::sparsify(w, p.density, rng);
    out.push_back(detail::shuffle_instance(w, pts, ni, rng));
  }
  return out;
}

// K_{ia;jb} = exp(-(q_ij - q_ab)^2 / sigma2) when both edges exist, else 0.
// Unary (diagonal) affinities are zero.
inline AffinityMatrix build_affinity_gauss(const GraphInstance& g1, const GraphInstance& g2, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("build_affinity_gauss: sigma2 must be positive");
  const int n = g1.size();
  if (g2.size() != n) throw std::invalid_argument("build_affinity_gauss: graphs must have equal size (pad first)");
  std::vector<AffinityMatrix::Triplet> entries;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double q1 = g1.adjacency(i, j);
      if (i == j || q1 <= 0.0) continue;
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          const double q2 = g2.adjacency(a, b);
          if (a == b || q2 <= 0.0) continue;
          const double d = q1 - q2;
          entries.emplace_back(a * n + i, b * n + j, std::exp(-d * d / sigma2));
        }
      }
    }
  }
  return AffinityMatrix::from_triplets(n, entries);
}

// Delaunay graph of the instance's coordinates; edge weights are lengths
// divided by the largest Delaunay edge length.
inline GraphInstance delaunay_instance(const GraphInstance& g) {
  if (!g.coords) throw std::invalid_argument("delaunay_instance: instance has no coordinates");
  const auto& pts = *g.coords;
  const auto edges = delaunay_edges(pts);
  GraphInstance out = g;
  const int n = g.size();
  out.adjacency = Eigen::MatrixXd::Zero(n, n);
  double longest = 0.0;
  for (auto [u, v] : edges) longest = std::max(longest, (pts.row(u) - pts.row(v)).norm());
  for (auto [u, v] : edges) {
    out.adjacency(u, v) = out.adjacency(v, u) = (pts.row(u) - pts.row(v)).norm() / longest;
  }
  return out;
}

// Absolute angle in [0, pi/2] between edge (u, v) and the horizontal.
inline double edge_angle(const Eigen::MatrixX2d& pts, int u, int v) {
  const double dx = pts(v, 0) - pts(u, 0);
  const double dy = pts(v, 1) - pts(u, 1);
  return std::atan2(std::abs(dy), std::abs(dx));
}

// beta_w * K^len + (1 - beta_w) * K^ang over Delaunay edges. K^len uses the
// normalised edge lengths, K^ang the edge angles; the angle bandwidth
// defaults to sigma2.
inline AffinityMatrix build_affinity_len_angle(const GraphInstance& g1, const GraphInstance& g2, double sigma2,
                                               double beta_w, std::optional<double> angle_sigma2 = std::nullopt) {
  if (!(beta_w >= 0.0 && beta_w <= 1.0)) throw std::invalid_argument("build_affinity_len_angle: beta must be in [0,1]");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("build_affinity_len_angle: sigma2 must be positive");
  const double s2_ang = angle_sigma2.value_or(sigma2);
  if (!(s2_ang > 0.0)) throw std::invalid_argument("build_affinity_len_angle: angle sigma2 must be positive");
  const GraphInstance d1 = delaunay_instance(g1);
  const GraphInstance d2 = delaunay_instance(g2);
  const int n = g1.size();
  if (g2.size() != n) throw std::invalid_argument("build_affinity_len_angle: graphs must have equal size");
  const auto& p1 = *g1.coords;
  const auto& p2 = *g2.coords;
  std::vector<AffinityMatrix::Triplet> entries;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double l1 = d1.adjacency(i, j);
      if (i == j || l1 <= 0.0) continue;
      const double t1 = edge_angle(p1, i, j);
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          const double l2 = d2.adjacency(a, b);
          if (a == b || l2 <= 0.0) continue;
          const double dl = l1 - l2;
          const double dt = t1 - edge_angle(p2, a, b);
          const double v = beta_w * std::exp(-dl * dl / sigma2) + (1.0 - beta_w) * std::exp(-dt * dt / s2_ang);
          entries.emplace_back(a * n + i, b * n + j, v);
        }
      }
    }
  }
  return AffinityMatrix::from_triplets(n, entries);
}

// Builds K_ij for every pair i < j with builder(g_i, g_j).
template <typename Builder>
  requires std::invocable<const Builder&, const GraphInstance&, const GraphInstance&>
AffinitySet build_affinity_set(const std::vector<GraphInstance>& graphs, const Builder& builder, int threads = 1) {
  const int n_graphs = static_cast<int>(graphs.size());
  AffinitySet ks(n_graphs);
  const auto pairs = graph_pairs(n_graphs);
  std::vector<AffinityMatrix> built(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t p) {
    built[p] = builder(graphs[pairs[p].first], graphs[pairs[p].second]);
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) ks.set(pairs[p].first, pairs[p].second, std::move(built[p]));
  return ks;
}

// Ground-truth pairwise matchings X_ij[u] = truth_j^{-1}[truth_i[u]].
inline GroundTruth ground_truth(const std::vector<GraphInstance>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("ground_truth: no graphs");
  const int n = graphs.front().size();
  GroundTruth t{MatchConfig(static_cast<int>(graphs.size()), n), {}};
  for (const auto& g : graphs) {
    std::vector<char> inl(n);
    for (int u = 0; u < n; ++u) inl[u] = g.is_inlier(u);
    t.inlier_rows.push_back(std::move(inl));
  }
  for (auto [i, j] : graph_pairs(static_cast<int>(graphs.size()))) {
    std::vector<int> m(n);
    for (int u = 0; u < n; ++u) m[u] = graphs[j].truth.row_of(graphs[i].truth[u]);
    t.matches.set(i, j, PermutationMatrix(std::move(m)));
  }
  return t;
}

// Pads every instance to the largest size with isolated dummy nodes. Dummy
// nodes take the unused reference indices (all outliers) and zero edges, so
// they contribute zero affinity. Coordinates are dropped from padded
// instances.
inline void pad_instances(std::vector<GraphInstance>& graphs) {
  int n_max = 0;
  for (const auto& g : graphs) n_max = std::max(n_max, g.size());
  for (auto& g : graphs) {
    const int n = g.size();
    if (n == n_max) continue;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_max, n_max);
    w.topLeftCorner(n, n) = g.adjacency;
    std::vector<int> truth(n_max);
    for (int u = 0; u < n; ++u) truth[u] = g.truth[u];
    for (int u = n; u < n_max; ++u) truth[u] = u;
    g.adjacency = std::move(w);
    g.truth = PermutationMatrix(std::move(truth));
    g.coords.reset();
  }
}

// Initial configuration: round(c * pairs) pairs, chosen uniformly by seed,
// are solved by `solver`; the rest get uniformly random permutations.
template <typename Solver>
  requires std::invocable<const Solver&, const AffinityMatrix&>
MatchConfig init_config(int graphs, int nodes, const AffinitySet& ks, const Solver& solver, double coverage,
                        std::uint64_t seed, int threads = 1) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw std::invalid_argument("init_config: coverage must be in [0,1]");
  MatchConfig cfg(graphs, nodes);
  const auto pairs = graph_pairs(graphs);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto solved = static_cast<std::size_t>(std::llround(coverage * static_cast<double>(pairs.size())));
  std::vector<char> use_solver(pairs.size(), 0);
  for (std::size_t r = 0; r < solved; ++r) use_solver[order[r]] = 1;

  std::vector<PermutationMatrix> result(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (!use_solver[p]) result[p] = PermutationMatrix::random(nodes, rng);
  }
  parallel_for(pairs.size(), threads, [&](std::size_t p) {
    if (use_solver[p]) result[p] = solver(ks.at(pairs[p].first, pairs[p].second));
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) cfg.set(pairs[p].first, pairs[p].second, std::move(result[p]));
  return cfg;
}

// ---------------------------------------------------------------------------
// Point-set files
//
//   n_frames n_points
//   x y                      (n_points lines per frame)
//   perm l_0 ... l_{n-1}     (optional; landmark id of each point row)
//
// Blank lines and lines starting with '#' are ignored.

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct PointsetFrame {
  Eigen::MatrixX2d points;
  std::vector<int> landmarks;  // landmark id per point row
};

inline std::vector<PointsetFrame> parse_pointset(std::istream& in) {
  std::string line;
  int line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      const auto first = out.find_first_not_of(" \t\r");
      if (first == std::string::npos || out[first] == '#') continue;
      return true;
    }
    return false;
  };

  if (!next_line(line)) throw ParseError("empty point-set file", line_no);
  int frames = 0, points = 0;
  {
    std::istringstream hs(line);
    std::string extra;
    if (!(hs >> frames >> points) || (hs >> extra) || frames < 0 || points < 1) {
      throw ParseError("expected header 'n_frames n_points'", line_no);
    }
  }

  std::vector<PointsetFrame> out;
  bool pending = false;
  for (int f = 0; f < frames; ++f) {
    PointsetFrame fr;
    fr.points.resize(points, 2);
    for (int r = 0; r < points; ++r) {
      if (!pending && !next_line(line)) throw ParseError("unexpected end of file in frame " + std::to_string(f), line_no);
      pending = false;
      std::istringstream ls(line);
      double x, y;
      std::string extra;
      if (!(ls >> x >> y)) throw ParseError("expected 'x y' coordinates", line_no);
      if (ls >> extra) throw ParseError("trailing data after coordinates", line_no);
      fr.points(r, 0) = x;
      fr.points(r, 1) = y;
    }
    fr.landmarks.resize(points);
    std::iota(fr.landmarks.begin(), fr.landmarks.end(), 0);
    if (next_line(line)) {
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "perm") {
        std::vector<char> seen(points, 0);
        for (int r = 0; r < points; ++r) {
          int l;
          if (!(ls >> l) || l < 0 || l >= points || seen[l]) {
            throw ParseError("permutation line must list each landmark id once", line_no);
          }
          seen[l] = 1;
          fr.landmarks[r] = l;
        }
        std::string extra;
        if (ls >> extra) throw ParseError("trailing data after permutation", line_no);
      } else {
        pending = true;
      }
    }
    out.push_back(std::move(fr));
  }
  if (pending || next_line(line)) throw ParseError("unexpected data after last frame", line_no);
  return out;
}

struct PointsetOptions {
  std::optional<int> inliers;  // default: every landmark
  int outliers = 0;
  std::uint64_t seed = 0;
  bool shuffle = false;
};

// Instances from annotated frames. With `inliers` set, that many landmarks
// are drawn (common to all frames) and `outliers` further landmarks are drawn
// per frame from the rest.
inline std::vector<GraphInstance> instances_from_frames(const std::vector<PointsetFrame>& frames,
                                                        const PointsetOptions& opt) {
  std::vector<GraphInstance> out;
  if (frames.empty()) return out;
  const int n_ant = static_cast<int>(frames.front().points.rows());
  const int ni = opt.inliers.value_or(n_ant - opt.outliers);
  if (ni < 0 || opt.outliers < 0 || ni + opt.outliers > n_ant) {
    throw std::invalid_argument("pointset: inliers + outliers exceed the annotated landmarks");
  }
  std::mt19937_64 rng(opt.seed);
  std::vector<int> landmarks(n_ant);
  std::iota(landmarks.begin(), landmarks.end(), 0);
  if (opt.inliers) std::shuffle(landmarks.begin(), landmarks.end(), rng);
  const std::vector<int> chosen(landmarks.begin(), landmarks.begin() + ni);
  const std::vector<int> rest(landmarks.begin() + ni, landmarks.end());

  for (const auto& fr : frames) {
    std::vector<int> row_of(n_ant);
    for (int r = 0; r < n_ant; ++r) row_of[fr.landmarks[r]] = r;
    std::vector<int> outl = rest;
    std::shuffle(outl.begin(), outl.end(), rng);
    outl.resize(opt.outliers);

    const int n = ni + opt.outliers;
    Eigen::MatrixX2d ref(n, 2);
    for (int s = 0; s < ni; ++s) ref.row(s) = fr.points.row(row_of[chosen[s]]);
    for (int s = 0; s < opt.outliers; ++s) ref.row(ni + s) = fr.points.row(row_of[outl[s]]);
    const Eigen::MatrixXd w = detail::distances(ref);
    if (opt.shuffle) {
      out.push_back(detail::shuffle_instance(w, ref, ni, rng));
    } else {
      out.push_back(GraphInstance{w, ref, ni, PermutationMatrix::identity(n)});
    }
  }
  return out;
}

inline std::vector<GraphInstance> load_pointset(const std::string& path, const PointsetOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open point-set file: " + path);
  return instances_from_frames(parse_pointset(in), opt);
}

}  // namespace mgm
