#pragma once

// Plain-text dumps. Every file starts with a magic word and a format
// version; readers reject anything else.
//
//   mgm-instances 1
//   <N>
//   graph <n> <inliers> <has_coords 0|1>
//   truth t_0 ... t_{n-1}
//   <n rows of n adjacency weights>
//   <n rows "x y" if has_coords>
//
//   mgm-config 1
//   <N> <n>
//   <i> <j> m_0 ... m_{n-1}        (one line per pair i < j)
//
//   mgm-affinity 1
//   <N> <n>
//   pair <i> <j> <nnz>
//   <row> <col> <value>            (nnz lines)
//
// Doubles are written with 17 significant digits and round-trip exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgm/core.hpp"
#include "mgm/synthgen.hpp"

namespace mgm {

namespace detail {

inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void expect_header(std::istream& in, const std::string& magic) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != magic) throw std::runtime_error("not a " + magic + " file");
  if (version != 1) throw std::runtime_error(magic + ": unsupported version " + std::to_string(version));
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T v;
  if (!(in >> v)) throw std::runtime_error(std::string("truncated input while reading ") + what);
  return v;
}

}  // namespace detail

inline void write_instances(std::ostream& out, const std::vector<GraphInstance>& graphs) {
  out << "mgm-instances 1\n" << graphs.size() << "\n";
  for (const auto& g : graphs) {
    const int n = g.size();
    out << "graph " << n << ' ' << g.inliers << ' ' << (g.coords ? 1 : 0) << "\ntruth";
    for (int u = 0; u < n; ++u) out << ' ' << g.truth[u];
    out << "\n";
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) out << (v ? " " : "") << detail::exact(g.adjacency(u, v));
      out << "\n";
    }
    if (g.coords) {
      for (int u = 0; u < n; ++u) out << detail::exact((*g.coords)(u, 0)) << ' ' << detail::exact((*g.coords)(u, 1)) << "\n";
    }
  }
}

inline std::vector<GraphInstance> read_instances(std::istream& in) {
  detail::expect_header(in, "mgm-instances");
  const int count = detail::read_value<int>(in, "graph count");
  if (count < 0) throw std::runtime_error("mgm-instances: negative graph count");
  std::vector<GraphInstance> graphs;
  for (int g = 0; g < count; ++g) {
    if (detail::read_value<std::string>(in, "graph tag") != "graph") throw std::runtime_error("mgm-instances: expected 'graph'");
    const int n = detail::read_value<int>(in, "node count");
    GraphInstance inst;
    inst.inliers = detail::read_value<int>(in, "inlier count");
    const int has_coords = detail::read_value<int>(in, "coordinate flag");
    if (n < 1 || inst.inliers < 0 || inst.inliers > n) throw std::runtime_error("mgm-instances: bad graph header");
    if (detail::read_value<std::string>(in, "truth tag") != "truth") throw std::runtime_error("mgm-instances: expected 'truth'");
    std::vector<int> truth(n);
    for (auto& t : truth) t = detail::read_value<int>(in, "truth");
    inst.truth = PermutationMatrix(std::move(truth));
    inst.adjacency.resize(n, n);
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) inst.adjacency(u, v) = detail::read_value<double>(in, "adjacency");
    }
    if (has_coords) {
      Eigen::MatrixX2d c(n, 2);
      for (int u = 0; u < n; ++u) {
        c(u, 0) = detail::read_value<double>(in, "x");
        c(u, 1) = detail::read_value<double>(in, "y");
      }
      inst.coords = std::move(c);
    }
    graphs.push_back(std::move(inst));
  }
  return graphs;
}

inline void write_config(std::ostream& out, const MatchConfig& cfg) {
  out << "mgm-config 1\n" << cfg.graph_count() << ' ' << cfg.node_count() << "\n";
  for (auto [i, j] : graph_pairs(cfg.graph_count())) {
    out << i << ' ' << j;
    for (int c : cfg.map(i, j)) out << ' ' << c;
    out << "\n";
  }
}

inline MatchConfig read_config(std::istream& in) {
  detail::expect_header(in, "mgm-config");
  const int graphs = detail::read_value<int>(in, "graph count");
  const int nodes = detail::read_value<int>(in, "node count");
  MatchConfig cfg(graphs, nodes);
  for (auto [i, j] : graph_pairs(graphs)) {
    const int a = detail::read_value<int>(in, "pair index");
    const int b = detail::read_value<int>(in, "pair index");
    if (a != i || b != j) throw std::runtime_error("mgm-config: pairs out of order");
    std::vector<int> m(nodes);
    for (auto& c : m) c = detail::read_value<int>(in, "matching");
    cfg.set(i, j, PermutationMatrix(std::move(m)));
  }
  return cfg;
}

inline void write_affinities(std::ostream& out, const AffinitySet& ks) {
  const int graphs = ks.graph_count();
  const int n = graphs > 1 ? ks.at(0, 1).node_count() : 0;
  out << "mgm-affinity 1\n" << graphs << ' ' << n << "\n";
  for (auto [i, j] : graph_pairs(graphs)) {
    const Eigen::MatrixXd k = ks.at(i, j).to_dense();
    std::vector<std::string> lines;
    for (int r = 0; r < k.rows(); ++r) {
      for (int c = 0; c < k.cols(); ++c) {
        if (k(r, c) != 0.0) lines.push_back(std::to_string(r) + ' ' + std::to_string(c) + ' ' + detail::exact(k(r, c)));
      }
    }
    out << "pair " << i << ' ' << j << ' ' << lines.size() << "\n";
    for (const auto& l : lines) out << l << "\n";
  }
}

inline AffinitySet read_affinities(std::istream& in) {
  detail::expect_header(in, "mgm-affinity");
  const int graphs = detail::read_value<int>(in, "graph count");
  const int n = detail::read_value<int>(in, "node count");
  AffinitySet ks(graphs);
  for (auto [i, j] : graph_pairs(graphs)) {
    if (detail::read_value<std::string>(in, "pair tag") != "pair") throw std::runtime_error("mgm-affinity: expected 'pair'");
    const int a = detail::read_value<int>(in, "pair index");
    const int b = detail::read_value<int>(in, "pair index");
    if (a != i || b != j) throw std::runtime_error("mgm-affinity: pairs out of order");
    const long nnz = detail::read_value<long>(in, "entry count");
    std::vector<AffinityMatrix::Triplet> entries;
    entries.reserve(nnz);
    for (long e = 0; e < nnz; ++e) {
      const int r = detail::read_value<int>(in, "row");
      const int c = detail::read_value<int>(in, "column");
      const double v = detail::read_value<double>(in, "value");
      if (r < 0 || c < 0 || r >= n * n || c >= n * n) throw std::runtime_error("mgm-affinity: entry out of range");
      entries.emplace_back(r, c, v);
    }
    ks.set(i, j, AffinityMatrix::from_triplets(n, entries));
  }
  return ks;
}

template <typename Writer, typename Value>
void save_file(const std::filesystem::path& path, Writer writer, const Value& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  writer(out, v);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename Reader>
auto load_file(const std::filesystem::path& path, Reader reader) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return reader(in);
}

}  // namespace mgm
