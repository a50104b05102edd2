#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgm/boost.hpp"
#include "mgm/core.hpp"
#include "mgm/pairwise.hpp"
#include "mgm/parallel.hpp"
#include "mgm/synthgen.hpp"

namespace mgm {

// Mean over pairs i < j of the fraction of ground-truth inlier rows of
// graph i that cfg_alg matches correctly. Outlier rows are ignored.
inline double accuracy(const MatchConfig& cfg_alg, const GroundTruth& truth) {
  const auto& tru = truth.matches;
  if (cfg_alg.graph_count() != tru.graph_count() || cfg_alg.node_count() != tru.node_count() ||
      static_cast<int>(truth.inlier_rows.size()) != tru.graph_count()) {
    throw std::invalid_argument("accuracy: configuration shapes differ");
  }
  const auto pairs = graph_pairs(cfg_alg.graph_count());
  if (pairs.empty()) return 1.0;
  double total = 0.0;
  for (auto [i, j] : pairs) total += pair_accuracy(cfg_alg.map(i, j), truth, i, j);
  return total / static_cast<double>(pairs.size());
}

enum class Generator { random_graph, random_point, file };

struct AlgorithmSpec {
  enum class Kind { initial, boost, accuracy_oracle };

  std::string id;
  Kind kind = Kind::boost;
  BoostParams params;
};

// "init", "isb_acc" or a boost mode name, optionally suffixed with "+post"
// (force the final full-consistency step) or "-raw" (disable it).
inline AlgorithmSpec algorithm_from_name(const std::string& name, const BoostParams& base) {
  AlgorithmSpec a{name, AlgorithmSpec::Kind::boost, base};
  std::string mode = name;
  auto strip = [&](std::string_view suffix) {
    if (mode.size() > suffix.size() && mode.ends_with(suffix)) {
      mode.resize(mode.size() - suffix.size());
      return true;
    }
    return false;
  };
  if (strip("+post")) a.params.enforce_final_consistency = true;
  else if (strip("-raw")) a.params.enforce_final_consistency = false;
  if (mode == "init") a.kind = AlgorithmSpec::Kind::initial;
  else if (mode == "isb_acc") a.kind = AlgorithmSpec::Kind::accuracy_oracle;
  else a.params.mode = parse_boost_mode(mode);
  return a;
}

inline const std::vector<std::string>& sweepable_params() {
  static const std::vector<std::string> names{"graphs",   "inliers", "outliers", "deform", "density",
                                              "sigma2",   "coverage", "n_est",   "sample_rate", "t_max"};
  return names;
}

struct ExperimentSpec {
  Generator generator = Generator::random_graph;
  SynthParams base;
  std::string swept_param = "deform";
  std::vector<double> swept_values{0.0};
  std::vector<AlgorithmSpec> algorithms;
  int trials = 50;
  std::uint64_t seed_base = 0;
  bool record_time = true;

  // file generator: frames are sampled per trial, affinities use length and
  // angle with weight beta_w
  std::string pointset_path;
  double beta_w = 1.0;

  SolverOptions solver;
  int threads = 1;  // trial-level workers; 0: take MGM_THREADS

  void validate() const {
    const auto& names = sweepable_params();
    if (std::find(names.begin(), names.end(), swept_param) == names.end()) {
      throw std::invalid_argument("ExperimentSpec: unknown swept parameter '" + swept_param + "'");
    }
    if (swept_values.empty()) throw std::invalid_argument("ExperimentSpec: no swept values");
    if (trials < 1) throw std::invalid_argument("ExperimentSpec: trials must be >= 1");
    if (algorithms.empty()) throw std::invalid_argument("ExperimentSpec: no algorithms");
    if (generator == Generator::file && pointset_path.empty()) {
      throw std::invalid_argument("ExperimentSpec: file generator needs a point-set path");
    }
    base.validate();
    solver.validate();
    for (const auto& a : algorithms) a.params.validate();
  }
};

struct ResultRow {
  std::string algorithm;
  std::string swept_param;
  double swept_value = 0.0;
  double mean_accuracy = 0.0;
  double accuracy_std = 0.0;
  double mean_time_s = 0.0;
  double mean_consistency = 0.0;
  double mean_score = 0.0;
  int trials_ok = 0;
};

namespace detail {

inline void apply_sweep(const std::string& name, double v, SynthParams& p, std::vector<AlgorithmSpec>& algs) {
  auto as_int = [&] { return static_cast<int>(std::lround(v)); };
  if (name == "graphs") p.graphs = as_int();
  else if (name == "inliers") p.inliers = as_int();
  else if (name == "outliers") p.outliers = as_int();
  else if (name == "deform") p.deform = v;
  else if (name == "density") p.density = v;
  else if (name == "sigma2") p.sigma2 = v;
  else if (name == "coverage") p.coverage = v;
  else {
    for (auto& a : algs) {
      if (name == "n_est") {
        if (a.params.elicit) a.params.elicit->n_est = as_int();
      } else if (name == "sample_rate") {
        a.params.sample_rate = v;
      } else if (name == "t_max") {
        a.params.t_max = as_int();
        a.params.t0 = std::min(a.params.t0, a.params.t_max);
      }
    }
  }
}

struct TrialOutcome {
  bool ok = false;
  std::string error;
  double accuracy = 0.0, seconds = 0.0, consistency = 0.0, score = 0.0;
};

inline std::vector<GraphInstance> file_trial(const std::vector<PointsetFrame>& frames, const SynthParams& p) {
  if (p.graphs > static_cast<int>(frames.size())) {
    throw std::invalid_argument("file generator: more graphs requested than frames available");
  }
  std::mt19937_64 rng(p.seed);
  std::vector<PointsetFrame> pick;
  std::sample(frames.begin(), frames.end(), std::back_inserter(pick), p.graphs, rng);
  PointsetOptions opt;
  opt.inliers = p.inliers;
  opt.outliers = p.outliers;
  opt.seed = rng();
  opt.shuffle = true;
  return instances_from_frames(pick, opt);
}

}  // namespace detail

// Runs every algorithm on every (swept value, trial). Within a trial all
// algorithms start from the same initial configuration. Trials run in
// parallel; results are aggregated in index order.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, std::ostream* log = &std::cerr) {
  spec.validate();
  std::vector<PointsetFrame> frames;
  if (spec.generator == Generator::file) {
    std::ifstream in(spec.pointset_path);
    if (!in) throw std::runtime_error("cannot open point-set file: " + spec.pointset_path);
    frames = parse_pointset(in);
  }
  const std::size_t n_values = spec.swept_values.size();
  const std::size_t n_algs = spec.algorithms.size();
  const auto trials = static_cast<std::size_t>(spec.trials);
  std::vector<detail::TrialOutcome> outcomes(n_values * trials * n_algs);
  std::mutex log_mutex;

  const int threads = spec.threads > 0 ? spec.threads : thread_count_from_env();
  parallel_for(n_values * trials, threads, [&](std::size_t job) {
    using clock = std::chrono::steady_clock;
    const std::size_t vi = job / trials;
    const std::size_t trial = job % trials;
    SynthParams p = spec.base;
    auto algs = spec.algorithms;
    detail::apply_sweep(spec.swept_param, spec.swept_values[vi], p, algs);
    p.seed = derive_seed(spec.seed_base, vi, trial);
    auto* out = &outcomes[job * n_algs];
    auto fail_all = [&](const std::string& why) {
      for (std::size_t a = 0; a < n_algs; ++a) out[a].error = why;
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << "trial " << trial << " at " << spec.swept_param << "=" << spec.swept_values[vi] << " failed: " << why
             << "\n";
      }
    };
    try {
      std::vector<GraphInstance> graphs;
      AffinitySet ks;
      switch (spec.generator) {
        case Generator::random_graph:
          graphs = gen_random_graphs(p);
          ks = build_affinity_set(graphs, [&](const auto& a, const auto& b) { return build_affinity_gauss(a, b, p.sigma2); });
          break;
        case Generator::random_point:
          graphs = gen_random_points(p);
          ks = build_affinity_set(graphs, [&](const auto& a, const auto& b) { return build_affinity_gauss(a, b, p.sigma2); });
          break;
        case Generator::file:
          graphs = detail::file_trial(frames, p);
          ks = build_affinity_set(graphs, [&](const auto& a, const auto& b) {
            return build_affinity_len_angle(a, b, p.sigma2, spec.beta_w);
          });
          break;
      }
      const auto truth = ground_truth(graphs);
      const int n_graphs = static_cast<int>(graphs.size());
      const int n = graphs.front().size();
      const auto t_init = clock::now();
      const MatchConfig cfg0 =
          init_config(n_graphs, n, ks, SpectralMatcher{spec.solver}, p.coverage, derive_seed(p.seed, 0x1417));
      const double init_seconds = std::chrono::duration<double>(clock::now() - t_init).count();
      const ScoreNormalizer norm = ScoreNormalizer::from_config(cfg0, ks);
      const double n_pairs = std::max(1, cfg0.pair_count());

      for (std::size_t a = 0; a < n_algs; ++a) {
        const auto& alg = algs[a];
        try {
          const auto start = clock::now();
          MatchConfig result;
          double seconds = 0.0;
          switch (alg.kind) {
            case AlgorithmSpec::Kind::initial:
              result = cfg0;
              seconds = init_seconds;
              break;
            case AlgorithmSpec::Kind::boost: {
              BoostParams bp = alg.params;
              bp.seed = derive_seed(p.seed, 0xb005, a);
              bp.threads = 1;
              result = run_boost(cfg0, ks, bp).config;
              seconds = std::chrono::duration<double>(clock::now() - start).count();
              break;
            }
            case AlgorithmSpec::Kind::accuracy_oracle:
              result = run_isb_acc_oracle(cfg0, truth, alg.params.t_max);
              seconds = std::chrono::duration<double>(clock::now() - start).count();
              break;
          }
          out[a] = {true, {}, accuracy(result, truth), seconds, overall_consistency(result),
                    total_normalized_score(result, ks, norm) / n_pairs};
        } catch (const std::exception& e) {
          out[a].error = e.what();
          if (log) {
            std::lock_guard lock(log_mutex);
            *log << alg.id << " failed on trial " << trial << ": " << e.what() << "\n";
          }
        }
      }
    } catch (const std::exception& e) {
      fail_all(e.what());
    }
  });

  std::vector<ResultRow> rows;
  for (std::size_t a = 0; a < n_algs; ++a) {
    for (std::size_t vi = 0; vi < n_values; ++vi) {
      ResultRow r;
      r.algorithm = spec.algorithms[a].id;
      r.swept_param = spec.swept_param;
      r.swept_value = spec.swept_values[vi];
      std::vector<double> acc;
      for (std::size_t trial = 0; trial < trials; ++trial) {
        const auto& o = outcomes[(vi * trials + trial) * n_algs + a];
        if (!o.ok) continue;
        acc.push_back(o.accuracy);
        r.mean_time_s += o.seconds;
        r.mean_consistency += o.consistency;
        r.mean_score += o.score;
      }
      r.trials_ok = static_cast<int>(acc.size());
      if (acc.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.mean_accuracy = r.accuracy_std = r.mean_time_s = r.mean_consistency = r.mean_score = nan;
      } else {
        const double k = static_cast<double>(acc.size());
        for (double v : acc) r.mean_accuracy += v;
        r.mean_accuracy /= k;
        for (double v : acc) r.accuracy_std += (v - r.mean_accuracy) * (v - r.mean_accuracy);
        r.accuracy_std = std::sqrt(r.accuracy_std / k);
        r.mean_time_s /= k;
        r.mean_consistency /= k;
        r.mean_score /= k;
      }
      if (!spec.record_time) r.mean_time_s = 0.0;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* csv_header =
    "algorithm,swept_param,swept_value,trial_mean_acc,acc_std,mean_time_s,mean_consistency,mean_score";

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << csv_header << "\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.swept_param << ',' << detail::fmt(r.swept_value) << ','
        << detail::fmt(r.mean_accuracy) << ',' << detail::fmt(r.accuracy_std) << ',' << detail::fmt(r.mean_time_s)
        << ',' << detail::fmt(r.mean_consistency) << ',' << detail::fmt(r.mean_score) << "\n";
  }
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  write_csv(rows, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<ResultRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != csv_header) throw std::runtime_error("unexpected CSV header in " + path.string());
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw std::runtime_error("malformed CSV row in " + path.string() + ": " + line);
    ResultRow r;
    r.algorithm = f[0];
    r.swept_param = f[1];
    r.swept_value = std::stod(f[2]);
    r.mean_accuracy = std::stod(f[3]);
    r.accuracy_std = std::stod(f[4]);
    r.mean_time_s = std::stod(f[5]);
    r.mean_consistency = std::stod(f[6]);
    r.mean_score = std::stod(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// One whitespace-separated series file per algorithm, <dir>/<algorithm>.dat,
// rows in swept-value order. Returns the written paths.
inline std::vector<std::filesystem::path> emit_plotdata(const std::vector<ResultRow>& rows,
                                                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::map<std::string, std::vector<const ResultRow*>> series;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!series.count(r.algorithm)) order.push_back(r.algorithm);
    series[r.algorithm].push_back(&r);
  }
  std::vector<std::filesystem::path> written;
  for (const auto& name : order) {
    auto pts = series[name];
    std::stable_sort(pts.begin(), pts.end(), [](auto a, auto b) { return a->swept_value < b->swept_value; });
    const auto path = dir / (name + ".dat");
    auto out = detail::open_output(path);
    out << "# " << pts.front()->swept_param << " mean_acc acc_std mean_time_s mean_consistency mean_score\n";
    for (const auto* r : pts) {
      out << detail::fmt(r->swept_value) << ' ' << detail::fmt(r->mean_accuracy) << ' ' << detail::fmt(r->accuracy_std)
          << ' ' << detail::fmt(r->mean_time_s) << ' ' << detail::fmt(r->mean_consistency) << ' '
          << detail::fmt(r->mean_score) << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace mgm
