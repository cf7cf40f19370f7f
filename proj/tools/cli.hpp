// Command-line front end. dispatch() writes only to the streams it is given.
#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "pgroup/evaluation.hpp"
#include "pgroup/io.hpp"
#include "pgroup/losses.hpp"
#include "pgroup/parallel.hpp"
#include "pgroup/pipeline.hpp"
#include "pgroup/synth.hpp"

namespace pgroup::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Generator flags shared by `generate`, `train-scorer` and `bench`.
inline void add_generator_flags(CLI::App& app, GenConfig& g) {
  app.add_option("--n-objects", g.n_objects, "objects per scene")->capture_default_str();
  app.add_option("--n-classes", g.n_classes, "semantic classes including floor and wall")->capture_default_str();
  app.add_option("--adjacent-pairs", g.adjacent_pairs, "same-class box pairs placed adjacent_gap apart")
      ->capture_default_str();
  app.add_option("--adjacent-gap", g.adjacent_gap, "gap inside adjacent pairs (m)")->capture_default_str();
  app.add_option("--gap-min", g.gap_min, "minimum gap between other objects (m)")->capture_default_str();
  app.add_option("--gap-max", g.gap_max, "maximum gap to the anchoring neighbour (m)")->capture_default_str();
  app.add_option("--size-min", g.size_min, "minimum object extent (m)")->capture_default_str();
  app.add_option("--size-max", g.size_max, "maximum object extent (m)")->capture_default_str();
  app.add_option("--density", g.density, "object surface points per square meter")->capture_default_str();
  app.add_option("--stuff-density", g.stuff_density, "floor and wall points per square meter")
      ->capture_default_str();
  app.add_option("--room-x", g.room.x, "room extent along x (m)")->capture_default_str();
  app.add_option("--room-y", g.room.y, "room extent along y (m)")->capture_default_str();
  app.add_option("--room-z", g.room.z, "room height (m)")->capture_default_str();
  app.add_option("--class-weights", g.class_weights, "sampling weight per object class");
  app.add_option("--p-sem", g.p_sem, "probability of flipping an object point's label")->capture_default_str();
  app.add_option("--temperature", g.temperature, "softmax temperature of perturbed scores")->capture_default_str();
  app.add_option("--sigma0", g.sigma0, "base offset noise stdev (m)")->capture_default_str();
  app.add_option("--beta", g.beta, "offset noise growth with centroid distance")->capture_default_str();
}

inline void add_cluster_flags(CLI::App& app, ClusterParams& c) {
  app.add_option("--radius", c.radius, "ball query radius (m)")->capture_default_str();
  app.add_option("--min-points", c.min_points, "clusters need more than this many points")->capture_default_str();
}

inline void add_threads_flag(CLI::App& app, unsigned& threads) {
  app.add_option("--threads", threads, "worker threads, 0 = all cores")->capture_default_str();
}

/// Seeded training corpus: scene k uses seed base.seed + k.
inline std::vector<TrainingScene> make_corpus(const GenConfig& base, std::size_t n_scenes) {
  std::vector<TrainingScene> corpus;
  corpus.reserve(n_scenes);
  for (std::size_t k = 0; k < n_scenes; ++k) {
    GenConfig g = base;
    g.seed = base.seed + k;
    auto s = generate_sample(g);
    corpus.push_back({std::move(s.scene), std::move(s.offsets), std::move(s.ground_truth)});
  }
  return corpus;
}

struct GenerateArgs {
  GenConfig gen;
  std::string out;
  std::string offsets_out;
  std::string semantic_out;
  unsigned threads = 1;
};

inline int run_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.gen.p_sem > 0.0 && a.semantic_out.empty()) throw ValidationError("--p-sem > 0 needs --semantic-out");
  set_num_threads(a.threads);
  const auto s = generate_sample(a.gen);
  save_scene(s.ground_truth, a.out);
  if (!a.offsets_out.empty()) save_offsets(s.offsets, a.offsets_out);
  if (!a.semantic_out.empty()) save_scene(s.scene, a.semantic_out);
  out << "points " << s.ground_truth.n_points() << "\ninstances " << s.ground_truth.n_instances() << '\n';
  return kExitOk;
}

struct ClusterArgs {
  std::string scene;
  std::string offsets;
  std::string gt;
  std::string set = "both";
  std::string scorer = "model";
  std::string model;
  PipelineConfig config;
  double min_score = -1.0;
  std::string out;
  std::string ply;
  unsigned threads = 1;
};

inline CoordinateSets parse_sets(const std::string& s) {
  if (s == "p") return CoordinateSets::kOriginal;
  if (s == "q") return CoordinateSets::kShifted;
  return CoordinateSets::kBoth;
}

inline ScorerKind parse_scorer_kind(const std::string& s) {
  if (s == "oracle") return ScorerKind::kOracle;
  if (s == "semprob") return ScorerKind::kSemProb;
  return ScorerKind::kModel;
}

inline int run_cluster(ClusterArgs a, std::ostream& out) {
  a.config.sets = parse_sets(a.set);
  a.config.scorer = parse_scorer_kind(a.scorer);
  if (a.config.scorer == ScorerKind::kOracle && a.gt.empty()) throw ValidationError("--scorer oracle needs --gt");
  if (a.config.scorer == ScorerKind::kModel && a.model.empty()) throw ValidationError("--scorer model needs --model");
  if (a.config.scorer != ScorerKind::kModel && !a.model.empty())
    throw ValidationError("--model is only used with --scorer model");
  if (a.min_score >= 0.0) a.config.min_score = a.min_score;
  a.config.validate();
  set_num_threads(a.threads);

  const Scene scene = load_scene(a.scene);
  const OffsetField offsets = load_offsets(a.offsets);
  validate_offsets(offsets, scene.n_points());
  std::optional<GroundTruth> gt;
  if (!a.gt.empty()) {
    const Scene gt_scene = load_scene(a.gt);
    if (gt_scene.n_points() != scene.n_points()) throw ValidationError("ground-truth scene has a different point count");
    gt = ground_truth(gt_scene);
  }
  std::optional<ScorerModel> model;
  if (!a.model.empty()) model = load_scorer(a.model);

  const auto preds = run_pipeline(scene, offsets, a.config, model ? &*model : nullptr, gt ? &*gt : nullptr);
  if (a.out.empty()) {
    out << format_predictions(preds);
  } else {
    save_predictions(preds, a.out);
  }
  if (!a.ply.empty()) export_ply(scene, preds, a.ply);
  return kExitOk;
}

struct EvaluateArgs {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  double score_filter = kDefaultScoreFilter;
  bool tsv = false;
};

inline void print_eval(const EvalResult& r, bool tsv, std::ostream& out) {
  const char* sep = tsv ? "\t" : "  ";
  auto cell = [&](const std::string& s, std::size_t w) {
    if (tsv) return s;
    return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
  };
  out << cell("class", 6) << sep << cell("n_gt", 6) << sep << cell("AP", 9) << sep << cell("AP50", 9) << sep
      << cell("AP25", 9) << sep << cell("Prec50", 9) << sep << cell("Rec50", 9) << '\n';
  for (const auto& c : r.classes) {
    out << cell(std::to_string(c.class_id), 6) << sep << cell(std::to_string(c.n_gt), 6) << sep
        << cell(fixed(c.ap_mean), 9) << sep << cell(fixed(c.ap50), 9) << sep << cell(fixed(c.ap25), 9) << sep
        << cell(fixed(c.precision50), 9) << sep << cell(fixed(c.recall50), 9) << '\n';
  }
  out << cell("mAP", 9) << sep << cell("AP50", 9) << sep << cell("AP25", 9) << sep << cell("mPrec50", 9) << sep
      << cell("mRec50", 9) << '\n';
  out << cell(fixed(r.mean_ap), 9) << sep << cell(fixed(r.ap50), 9) << sep << cell(fixed(r.ap25), 9) << sep
      << cell(fixed(r.mprec50), 9) << sep << cell(fixed(r.mrec50), 9) << '\n';
}

inline int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.pred.size() != a.gt.size()) throw ValidationError("--pred and --gt need the same number of files");
  if (!(a.score_filter >= 0.0 && a.score_filter <= 1.0)) throw ValidationError("--score-filter must lie in [0,1]");
  std::vector<std::vector<InstancePrediction>> preds;
  std::vector<GroundTruth> gts;
  for (std::size_t k = 0; k < a.pred.size(); ++k) {
    preds.push_back(load_predictions(a.pred[k]));
    gts.push_back(ground_truth(load_scene(a.gt[k])));
  }
  std::vector<EvalScene> scenes;
  for (std::size_t k = 0; k < preds.size(); ++k) scenes.push_back({preds[k], &gts[k]});
  EvalConfig cfg;
  cfg.score_filter = a.score_filter;
  print_eval(evaluate_corpus(scenes, cfg), a.tsv, out);
  return kExitOk;
}

struct BenchArgs {
  std::string scene;
  std::string offsets;
  std::string model;
  GenConfig gen = [] {
    GenConfig g;
    g.seed = 1;
    g.room = {8.0, 8.0, 2.0};
    g.n_objects = 34;
    g.adjacent_pairs = 3;
    g.sigma0 = 0.01;
    g.beta = 2.0;
    return g;
  }();
  PipelineConfig config;
  std::size_t repeats = 5;
  unsigned threads = 1;
  bool tsv = false;
};

inline StageTimes bench_pipeline(const Scene& scene, const OffsetField& offsets, const PipelineConfig& config,
                                 const ScorerModel& model, std::size_t repeats) {
  if (repeats < 1) throw ValidationError("--repeats must be >= 1");
  StageTimes warm;
  run_pipeline(scene, offsets, config, &model, nullptr, &warm);
  StageTimes mean;
  for (std::size_t k = 0; k < repeats; ++k) {
    StageTimes t;
    run_pipeline(scene, offsets, config, &model, nullptr, &t);
    mean.ball_query_p += t.ball_query_p;
    mean.cluster_p += t.cluster_p;
    mean.ball_query_q += t.ball_query_q;
    mean.cluster_q += t.cluster_q;
    mean.scoring += t.scoring;
    mean.nms += t.nms;
    mean.total += t.total;
  }
  const double r = static_cast<double>(repeats);
  for (double* v : {&mean.ball_query_p, &mean.cluster_p, &mean.ball_query_q, &mean.cluster_q, &mean.scoring,
                    &mean.nms, &mean.total})
    *v /= r;
  return mean;
}

inline int run_bench(BenchArgs a, std::ostream& out) {
  if (a.repeats < 1) throw ValidationError("--repeats must be >= 1");
  if (a.scene.empty() != a.offsets.empty()) throw ValidationError("--scene and --offsets go together");
  a.config.scorer = ScorerKind::kModel;
  a.config.validate();
  set_num_threads(a.threads);
  Scene scene;
  OffsetField offsets;
  if (a.scene.empty()) {
    auto s = generate_sample(a.gen);
    scene = std::move(s.scene);
    offsets = std::move(s.offsets);
  } else {
    scene = load_scene(a.scene);
    offsets = load_offsets(a.offsets);
    validate_offsets(offsets, scene.n_points());
  }
  // The untrained model still computes every descriptor.
  const ScorerModel model = a.model.empty() ? ScorerModel::zeros() : load_scorer(a.model);
  const auto t = bench_pipeline(scene, offsets, a.config, model, a.repeats);

  const std::vector<std::pair<const char*, double>> rows = {
      {"ball_query_p", t.ball_query_p}, {"cluster_p", t.cluster_p}, {"ball_query_q", t.ball_query_q},
      {"cluster_q", t.cluster_q},       {"scoring", t.scoring},     {"nms", t.nms},
      {"total", t.total}};
  if (a.tsv) {
    out << "points\t" << scene.n_points() << "\nthreads\t" << num_threads() << "\nrepeats\t" << a.repeats << '\n';
    for (const auto& [name, ms] : rows) out << name << "_ms\t" << fixed(ms, 3) << '\n';
  } else {
    out << "points " << scene.n_points() << ", threads " << num_threads() << ", repeats " << a.repeats << '\n';
    for (const auto& [name, ms] : rows) {
      std::string label = name;
      label.resize(14, ' ');
      out << label << fixed(ms, 3) << " ms\n";
    }
  }
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t trials = 20;
  double tolerance = 1e-5;
};

struct GradcheckReport {
  double offset_reg = 0.0;
  double offset_dir = 0.0;
  double score_bce = 0.0;
};

/// Worst relative error of each analytic gradient over `trials` random points.
inline GradcheckReport gradcheck_losses(std::uint64_t seed, std::size_t trials) {
  GenConfig g;
  g.seed = seed;
  g.n_objects = 2;
  g.density = 400.0;
  g.stuff_density = 5.0;
  const auto gen = generate_scene(g);
  const auto sup = offset_supervision(gen.scene);
  CounterRng rng(seed, 77);

  GradcheckReport rep;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> x(3 * gen.scene.n_points());
    for (std::size_t i = 0; i < gen.scene.n_points(); ++i) {
      const double tgt[3] = {sup.target[i].x, sup.target[i].y, sup.target[i].z};
      for (std::size_t k = 0; k < 3; ++k) {
        const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
        x[3 * i + k] = tgt[k] + sign * rng.uniform(0.01, 0.5);
      }
    }
    rep.offset_reg = std::max(rep.offset_reg, grad_check([&](std::span<const double> p, std::span<double> gr) {
                                return offset_reg_loss(p, sup, gr);
                              }, x));
    rep.offset_dir = std::max(rep.offset_dir, grad_check([&](std::span<const double> p, std::span<double> gr) {
                                return offset_dir_loss(p, sup, gr);
                              }, x));

    const std::size_t n = 32;
    const ScorerModel shape = ScorerModel::zeros();
    std::vector<double> theta(shape.parameter_count());
    for (auto& v : theta) v = rng.normal() * 0.5;
    std::vector<double> z(n * shape.dim);
    for (auto& v : z) v = rng.normal();
    std::vector<double> soft(n);
    for (auto& v : soft) v = rng.uniform();
    rep.score_bce = std::max(rep.score_bce, grad_check([&](std::span<const double> p, std::span<double> gr) {
                               return scorer_objective(shape, p, z, soft, gr);
                             }, theta));
  }
  return rep;
}

inline int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.trials < 1) throw ValidationError("--trials must be >= 1");
  const auto rep = gradcheck_losses(a.seed, a.trials);
  char buf[64];
  const std::vector<std::pair<const char*, double>> rows = {
      {"offset_reg", rep.offset_reg}, {"offset_dir", rep.offset_dir}, {"score_bce", rep.score_bce}};
  bool ok = true;
  for (const auto& [name, err] : rows) {
    std::snprintf(buf, sizeof buf, "%.3e", err);
    out << name << '\t' << buf << '\n';
    ok = ok && err <= a.tolerance;
  }
  return ok ? kExitOk : kExitFailure;
}

struct TrainArgs {
  GenConfig gen = [] {
    GenConfig g;
    g.seed = 1000;
    g.adjacent_pairs = 2;
    g.sigma0 = 0.01;
    g.beta = 2.0;
    return g;
  }();
  std::size_t scenes = 20;
  TrainParams params;
  std::string out;
  unsigned threads = 1;
};

inline int run_train(const TrainArgs& a, std::ostream& out) {
  if (a.scenes < 1) throw ValidationError("--scenes must be >= 1");
  set_num_threads(a.threads);
  const auto corpus = make_corpus(a.gen, a.scenes);
  const auto res = train_scorer(corpus, a.params);
  save_scorer(res.model, a.out);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", res.grad_check_error);
  out << "initial_loss\t" << fixed(res.initial_loss) << "\nfinal_loss\t" << fixed(res.final_loss)
      << "\ngrad_check\t" << buf << '\n';
  return kExitOk;
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud instance clustering, scoring and evaluation", "pgroup"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic scene and its offsets");
  generate->add_option("--seed", gen.gen.seed, "scene seed")->capture_default_str();
  generate->add_option("--out", gen.out, "ground-truth scene (.sc1)")->required();
  generate->add_option("--offsets-out", gen.offsets_out, "offsets (.off1), noisy when --sigma0 > 0");
  generate->add_option("--semantic-out", gen.semantic_out, "perturbed-label scene (.sc1), needed when --p-sem > 0");
  add_generator_flags(*generate, gen.gen);
  add_threads_flag(*generate, gen.threads);

  ClusterArgs cl;
  auto* cluster = app.add_subcommand("cluster", "cluster, score and suppress one scene");
  cluster->add_option("--scene", cl.scene, "scene whose labels drive clustering (.sc1)")->required();
  cluster->add_option("--offsets", cl.offsets, "offset field (.off1)")->required();
  cluster->add_option("--gt", cl.gt, "ground-truth scene, required by --scorer oracle");
  cluster->add_option("--set", cl.set, "coordinate sets")
      ->check(CLI::IsMember({"p", "q", "both"}))
      ->capture_default_str();
  cluster->add_option("--scorer", cl.scorer, "cluster scorer")
      ->check(CLI::IsMember({"oracle", "semprob", "model"}))
      ->capture_default_str();
  cluster->add_option("--model", cl.model, "trained scorer (from train-scorer)");
  add_cluster_flags(*cluster, cl.config.cluster);
  cluster->add_option("--nms-iou", cl.config.nms_iou, "NMS IoU threshold")->capture_default_str();
  cluster->add_option("--min-score", cl.min_score, "drop predictions scoring below this after NMS");
  cluster->add_option("--out", cl.out, "predictions (.pred1); stdout when omitted");
  cluster->add_option("--ply", cl.ply, "colored PLY of the predictions");
  add_threads_flag(*cluster, cl.threads);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against ground truth");
  evaluate->add_option("--pred", ev.pred, "prediction files, one per scene")->required();
  evaluate->add_option("--gt", ev.gt, "ground-truth scenes, same order as --pred")->required();
  evaluate->add_option("--score-filter", ev.score_filter, "confidence cut for precision/recall")
      ->capture_default_str();
  evaluate->add_flag("--tsv", ev.tsv, "tab-separated output");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "time the pipeline stages");
  bench->add_option("--scene", be.scene, "scene (.sc1); a synthetic scene is generated when omitted");
  bench->add_option("--offsets", be.offsets, "offsets (.off1) for --scene");
  bench->add_option("--model", be.model, "trained scorer; an untrained one is used when omitted");
  bench->add_option("--seed", be.gen.seed, "seed of the generated scene")->capture_default_str();
  add_generator_flags(*bench, be.gen);
  add_cluster_flags(*bench, be.config.cluster);
  bench->add_option("--nms-iou", be.config.nms_iou, "NMS IoU threshold")->capture_default_str();
  bench->add_option("--repeats", be.repeats, "timed repetitions after one warm-up")->capture_default_str();
  bench->add_flag("--tsv", be.tsv, "tab-separated output");
  add_threads_flag(*bench, be.threads);

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic loss gradients with central differences");
  gradcheck->add_option("--seed", gc.seed, "seed")->capture_default_str();
  gradcheck->add_option("--trials", gc.trials, "random points per loss")->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance, "maximum relative error")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train-scorer", "fit the cluster scorer on a synthetic corpus");
  train->add_option("--scenes", tr.scenes, "corpus size")->capture_default_str();
  train->add_option("--corpus-seed", tr.gen.seed, "seed of the first corpus scene")->capture_default_str();
  add_generator_flags(*train, tr.gen);
  add_cluster_flags(*train, tr.params.cluster);
  train->add_option("--hidden", tr.params.hidden, "hidden units")->capture_default_str();
  train->add_option("--lr", tr.params.learning_rate, "learning rate")->capture_default_str();
  train->add_option("--epochs", tr.params.epochs, "full-batch gradient steps")->capture_default_str();
  train->add_option("--seed", tr.params.seed, "weight initialisation seed")->capture_default_str();
  train->add_option("--low", tr.params.low, "IoU below which the target is 0")->capture_default_str();
  train->add_option("--high", tr.params.high, "IoU above which the target is 1")->capture_default_str();
  train->add_option("--out", tr.out, "scorer file")->required();
  add_threads_flag(*train, tr.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return run_generate(gen, out);
    if (cluster->parsed()) return run_cluster(cl, out);
    if (evaluate->parsed()) return run_evaluate(ev, out);
    if (bench->parsed()) return run_bench(be, out);
    if (gradcheck->parsed()) return run_gradcheck(gc, out);
    if (train->parsed()) return run_train(tr, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace pgroup::cli
