#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mgm/bench.hpp"
#include "mgm/boost.hpp"
#include "mgm/io.hpp"
#include "mgm/synthgen.hpp"

namespace {

struct BoostFlags {
  mgm::BoostParams params;
  std::string mode = "isb_gc";
  std::string elicit = "none";
  int n_est = 0;
  bool post = false;

  mgm::BoostParams resolve(int inliers) const {
    mgm::BoostParams p = params;
    p.mode = mgm::parse_boost_mode(mode);
    p.enforce_final_consistency = post;
    if (elicit != "none") {
      p.elicit = mgm::InlierEstimate{n_est > 0 ? n_est : inliers,
                                     elicit == "afy" ? mgm::InlierMode::affinity : mgm::InlierMode::consistency};
    }
    return p;
  }
};

void add_synth_flags(CLI::App* app, mgm::SynthParams& p) {
  app->add_option("--n-graphs", p.graphs, "number of graphs N")->capture_default_str();
  app->add_option("--inliers", p.inliers, "common inliers per graph")->capture_default_str();
  app->add_option("--outliers", p.outliers, "outliers per graph")->capture_default_str();
  app->add_option("--deform", p.deform, "deformation noise std")->capture_default_str();
  app->add_option("--density", p.density, "edge density")->capture_default_str();
  app->add_option("--coverage", p.coverage, "fraction of pairs solved by the pairwise solver")->capture_default_str();
  app->add_option("--sigma2", p.sigma2, "edge affinity sensitivity")->capture_default_str();
  app->add_option("--seed", p.seed, "random seed")->capture_default_str();
}

void add_boost_flags(CLI::App* app, BoostFlags& f) {
  auto& p = f.params;
  app->add_option("--t0", p.t0, "pure score-boosting iterations")->capture_default_str();
  app->add_option("--t-max", p.t_max, "maximum iterations")->capture_default_str();
  app->add_option("--lambda0", p.lambda0, "initial consistency weight")->capture_default_str();
  app->add_option("--beta", p.beta, "consistency weight growth")->capture_default_str();
  app->add_option("--gamma", p.gamma, "post-processing consistency threshold")->capture_default_str();
  app->add_option("--delta", p.delta, "convergence threshold")->capture_default_str();
  app->add_option("--sample-rate", p.sample_rate, "fraction of anchor graphs searched")->capture_default_str();
  app->add_option("--mode", f.mode, "isb, isb_cst, isb_2nd, isb_gc, isb_gc_inv, isb_gc_u, isb_gc_p")
      ->capture_default_str();
  app->add_option("--elicit", f.elicit, "inlier eliciting")
      ->check(CLI::IsMember({"none", "cst", "afy"}))
      ->capture_default_str();
  app->add_option("--n-est", f.n_est, "estimated inlier count (default: --inliers)");
  app->add_flag("--post", f.post, "run the full-consistency step at the end");
}

mgm::AffinitySet affinities(const std::vector<mgm::GraphInstance>& graphs, const std::string& kind, double sigma2,
                            double beta_w, int threads) {
  if (kind == "gauss") {
    return mgm::build_affinity_set(
        graphs, [&](const auto& a, const auto& b) { return mgm::build_affinity_gauss(a, b, sigma2); }, threads);
  }
  return mgm::build_affinity_set(
      graphs, [&](const auto& a, const auto& b) { return mgm::build_affinity_len_angle(a, b, sigma2, beta_w); },
      threads);
}

std::vector<mgm::GraphInstance> generate(const std::string& generator, const mgm::SynthParams& p) {
  return generator == "point" ? mgm::gen_random_points(p) : mgm::gen_random_graphs(p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-graph matching by consistency-regularized boosting"};
  app.require_subcommand(1);
  const int threads = mgm::thread_count_from_env();

  // gen ----------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate synthetic graphs and write an instance dump");
  mgm::SynthParams gen_p;
  std::string gen_kind = "graph";
  std::string gen_out = "instances.txt";
  std::string gen_aff_out;
  add_synth_flags(gen, gen_p);
  gen->add_option("--generator", gen_kind, "graph or point")
      ->check(CLI::IsMember({"graph", "point"}))
      ->capture_default_str();
  gen->add_option("--out", gen_out, "instance dump path")->capture_default_str();
  gen->add_option("--affinity-out", gen_aff_out, "also write the Gaussian edge affinities");

  // match --------------------------------------------------------------------
  auto* match = app.add_subcommand("match", "match a set of graphs and report accuracy");
  mgm::SynthParams match_p;
  BoostFlags match_b;
  std::string match_in, match_pointset, match_gen = "graph", match_affinity = "gauss", match_out;
  double match_beta_w = 1.0;
  add_synth_flags(match, match_p);
  add_boost_flags(match, match_b);
  match->add_option("--input", match_in, "instance dump (default: generate from the synthetic flags)");
  match->add_option("--pointset", match_pointset, "point-set file; --n-graphs and --inliers/--outliers select frames and landmarks");
  match->add_option("--generator", match_gen, "graph or point")
      ->check(CLI::IsMember({"graph", "point"}))
      ->capture_default_str();
  match->add_option("--affinity", match_affinity, "gauss or len-angle")
      ->check(CLI::IsMember({"gauss", "len-angle"}))
      ->capture_default_str();
  match->add_option("--beta-w", match_beta_w, "length weight of the len-angle affinity")->capture_default_str();
  match->add_option("--out", match_out, "write the final configuration here");

  // bench --------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "run an experiment grid and write CSV / plot data");
  mgm::ExperimentSpec spec;
  BoostFlags bench_b;
  std::string bench_gen = "graph", bench_out = "results.csv", bench_plot;
  std::vector<std::string> bench_algs{"init", "isb", "isb_gc"};
  bool no_timing = false;
  add_synth_flags(bench, spec.base);
  add_boost_flags(bench, bench_b);
  bench->add_option("--generator", bench_gen, "graph, point or file")
      ->check(CLI::IsMember({"graph", "point", "file"}))
      ->capture_default_str();
  bench->add_option("--pointset", spec.pointset_path, "point-set file for --generator file");
  bench->add_option("--beta-w", spec.beta_w, "length weight of the len-angle affinity")->capture_default_str();
  bench->add_option("--sweep", spec.swept_param, "swept parameter")
      ->check(CLI::IsMember(mgm::sweepable_params()))
      ->capture_default_str();
  bench->add_option("--values", spec.swept_values, "swept values")->required();
  bench->add_option("--algorithms", bench_algs, "init, isb_acc, or boost mode names (suffix +post / -raw)")
      ->capture_default_str();
  bench->add_option("--trials", spec.trials, "trials per swept value")->capture_default_str();
  bench->add_option("--out", bench_out, "CSV output path")->capture_default_str();
  bench->add_option("--plot-dir", bench_plot, "write per-algorithm series files here");
  bench->add_flag("--no-timing", no_timing, "write zero times so reruns give identical files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      gen_p.validate();
      const auto graphs = generate(gen_kind, gen_p);
      mgm::save_file(gen_out, mgm::write_instances, graphs);
      if (!gen_aff_out.empty()) {
        mgm::save_file(gen_aff_out, mgm::write_affinities, affinities(graphs, "gauss", gen_p.sigma2, 1.0, threads));
      }
      std::printf("wrote %zu graphs of %d nodes to %s\n", graphs.size(), gen_p.nodes(), gen_out.c_str());
    } else if (*match) {
      match_p.validate();
      std::vector<mgm::GraphInstance> graphs;
      if (!match_pointset.empty()) {
        std::ifstream in(match_pointset);
        if (!in) throw std::runtime_error("cannot open point-set file: " + match_pointset);
        auto frames = mgm::parse_pointset(in);
        if (match->count("--n-graphs") && match_p.graphs < static_cast<int>(frames.size())) frames.resize(match_p.graphs);
        mgm::PointsetOptions opt;
        if (match->count("--inliers")) opt.inliers = match_p.inliers;
        opt.outliers = match_p.outliers;
        opt.seed = match_p.seed;
        opt.shuffle = true;
        graphs = mgm::instances_from_frames(frames, opt);
      }
      else if (!match_in.empty()) graphs = mgm::load_file(match_in, mgm::read_instances);
      else graphs = generate(match_gen, match_p);
      if (graphs.size() < 2) throw std::invalid_argument("need at least two graphs");
      mgm::pad_instances(graphs);
      const auto ks = affinities(graphs, match_affinity, match_p.sigma2, match_beta_w, threads);
      const int n_graphs = static_cast<int>(graphs.size());
      const int n = graphs.front().size();
      const auto cfg0 = mgm::init_config(n_graphs, n, ks, mgm::SpectralMatcher{}, match_p.coverage,
                                         mgm::derive_seed(match_p.seed, 0x1417), threads);
      auto bp = match_b.resolve(graphs.front().inliers);
      bp.seed = match_p.seed;
      bp.threads = threads;
      const auto res = mgm::run_boost(cfg0, ks, bp);
      const auto truth = mgm::ground_truth(graphs);
      std::printf("iter  lambda  score       consistency  changed  time_s\n");
      for (const auto& s : res.trace.snapshots) {
        std::printf("%4d  %6.3f  %10.4f  %11.4f  %7d  %.4f\n", s.iteration, s.lambda, s.total_score, s.consistency,
                    s.changes, s.seconds);
      }
      std::printf("initial accuracy %.4f, final accuracy %.4f, final consistency %.4f%s\n",
                  mgm::accuracy(cfg0, truth), mgm::accuracy(res.config, truth),
                  mgm::overall_consistency(res.config), res.trace.converged ? " (converged)" : "");
      if (!match_out.empty()) mgm::save_file(match_out, mgm::write_config, res.config);
    } else if (*bench) {
      static const std::map<std::string, mgm::Generator> gens{
          {"graph", mgm::Generator::random_graph}, {"point", mgm::Generator::random_point}, {"file", mgm::Generator::file}};
      spec.generator = gens.at(bench_gen);
      spec.seed_base = spec.base.seed;
      spec.record_time = !no_timing;
      spec.threads = threads;
      const auto bp = bench_b.resolve(spec.base.inliers);
      for (const auto& name : bench_algs) spec.algorithms.push_back(mgm::algorithm_from_name(name, bp));
      const auto rows = mgm::run_experiment(spec);
      mgm::emit_csv(rows, bench_out);
      if (!bench_plot.empty()) mgm::emit_plotdata(rows, bench_plot);
      mgm::write_csv(rows, std::cout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
