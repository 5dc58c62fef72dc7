#include "diffce/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "diffce/ce_pipeline.hpp"
#include "diffce/checkpoint.hpp"
#include "diffce/idx.hpp"
#include "diffce/report.hpp"
#include "diffce/sampler.hpp"

namespace diffce {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stage namespaces for seed derivation; every random stream hangs off the
// experiment seed through one of these.
constexpr std::uint64_t kSeedData = 1;
constexpr std::uint64_t kSeedScore = 2;
constexpr std::uint64_t kSeedClassifiers = 3;
constexpr std::uint64_t kSeedCe = 4;
constexpr std::uint64_t kSeedEval = 5;

struct Paths {
  fs::path root, data, score, classifiers, ce, eval, report;
  explicit Paths(const std::string& out)
      : root(out),
        data(root / "data"),
        score(root / "score"),
        classifiers(root / "classifiers"),
        ce(root / "ce"),
        eval(root / "eval"),
        report(root / "report") {}
};

ExperimentConfig load_config(const RunOptions& opt) {
  if (opt.config_path.empty())
    throw std::runtime_error("a config file is required (--config PATH)");
  if (opt.out_dir.empty())
    throw std::runtime_error("an output directory is required (--out DIR)");
  ExperimentConfig cfg = ExperimentConfig::load(opt.config_path);
  if (opt.seed_override) cfg.seed = *opt.seed_override;
  return cfg;
}

json read_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) return json();
  return json::parse(read_text_file(p.string()));
}

void write_manifest(const fs::path& dir, const std::string& stage,
                    const std::string& digest, const json& extra) {
  json m = {{"stage", stage},
            {"config_digest", digest},
            {"complete", true},
            {"details", extra}};
  write_text_file((dir / "manifest.json").string(), m.dump(2) + "\n");
}

// Decides whether the stage must run.  Existing results from a different
// config are never silently overwritten.
bool prepare_stage(const fs::path& dir, const std::string& stage,
                   const std::string& digest, bool resume) {
  fs::create_directories(dir);
  const json m = read_manifest(dir);
  if (m.is_null()) return true;
  if (m.value("config_digest", "") != digest)
    throw std::runtime_error(
        "stage '" + stage + "' in " + dir.string() +
        " was produced with config digest " + m.value("config_digest", "?") +
        " but the current config digest is " + digest +
        "; refusing to mix results - use a fresh output directory");
  if (!m.value("complete", false)) {
    if (resume) return true;
    throw std::runtime_error("stage '" + stage + "' in " + dir.string() +
                             " is incomplete; pass --resume to redo it");
  }
  if (resume) {
    std::cout << "[" << stage << "] cached, skipping\n";
    return false;
  }
  throw std::runtime_error(
      "stage '" + stage + "' already exists in " + dir.string() +
      "; pass --resume to reuse it or choose a fresh output directory");
}

void require_stage(const fs::path& dir, const std::string& stage,
                   const std::string& digest, const std::string& producer) {
  const json m = read_manifest(dir);
  if (m.is_null() || !m.value("complete", false))
    throw std::runtime_error("stage '" + stage + "' not found in " +
                             dir.string() + "; run '" + producer + "' first");
  if (m.value("config_digest", "") != digest)
    throw std::runtime_error(
        "stage '" + stage + "' in " + dir.string() +
        " carries config digest " + m.value("config_digest", "?") +
        " which does not match the current config digest " + digest);
}

void write_resolved_config(const ExperimentConfig& cfg, const Paths& paths) {
  fs::create_directories(paths.root);
  write_text_file((paths.root / "config.resolved.json").string(),
                  cfg.to_json().dump(2) + "\n");
}

// ----- data stage ----------------------------------------------------------

struct DataBundle {
  Eigen::MatrixXd train_x, eval_x;
  Eigen::VectorXi train_y, eval_y;
  int n_classes = 0;
};

Eigen::MatrixXd labels_to_matrix(const Eigen::VectorXi& y) {
  Eigen::MatrixXd m(1, y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) m(0, i) = y[i];
  return m;
}

Eigen::VectorXi labels_from_matrix(const Eigen::MatrixXd& m) {
  Eigen::VectorXi y(m.cols());
  for (Eigen::Index i = 0; i < m.cols(); ++i)
    y[i] = static_cast<int>(std::lround(m(0, i)));
  return y;
}

void run_data_stage(const ExperimentConfig& cfg, const Paths& paths,
                    bool resume) {
  const std::string digest = cfg.digest();
  if (!prepare_stage(paths.data, "data", digest, resume)) return;
  std::cout << "[data] sampling datasets\n";
  DataBundle b;
  b.n_classes = cfg.data.n_classes;
  if (cfg.data.source == "mixture") {
    const GaussianMixture mix = cfg.mixture();
    Rng train_rng(derive_seed(cfg.seed, {kSeedData, 0}));
    Rng eval_rng(derive_seed(cfg.seed, {kSeedData, 1}));
    std::tie(b.train_x, b.train_y) =
        mix.sample_labeled(cfg.data.n_train, train_rng);
    std::tie(b.eval_x, b.eval_y) = mix.sample_labeled(cfg.data.n_eval, eval_rng);
  } else {
    if (cfg.data.idx_eval_images.empty() || cfg.data.idx_eval_labels.empty())
      throw std::runtime_error(
          "config error: idx sources need idx_eval_images and idx_eval_labels");
    IdxDataset train = load_idx(cfg.data.idx_images, cfg.data.idx_labels);
    IdxDataset ev = load_idx(cfg.data.idx_eval_images, cfg.data.idx_eval_labels);
    if (train.images.cols() < cfg.data.n_train ||
        ev.images.cols() < cfg.data.n_eval)
      throw std::runtime_error("idx files hold fewer examples than requested");
    b.train_x = train.images.leftCols(cfg.data.n_train);
    b.train_y = train.labels.head(cfg.data.n_train);
    b.eval_x = ev.images.leftCols(cfg.data.n_eval);
    b.eval_y = ev.labels.head(cfg.data.n_eval);
    for (Eigen::Index i = 0; i < b.train_y.size(); ++i)
      if (b.train_y[i] < 0 || b.train_y[i] >= b.n_classes)
        throw std::runtime_error("idx label " + std::to_string(b.train_y[i]) +
                                 " outside [0, " +
                                 std::to_string(b.n_classes) + ")");
  }
  const Eigen::MatrixXd train_y_m = labels_to_matrix(b.train_y);
  const Eigen::MatrixXd eval_y_m = labels_to_matrix(b.eval_y);
  save_checkpoint((paths.data / "dataset.ckpt").string(), "dataset",
                  {{"n_classes", b.n_classes},
                   {"dim", b.train_x.rows()},
                   {"config_digest", digest}},
                  {{"train_x", &b.train_x},
                   {"train_y", &train_y_m},
                   {"eval_x", &b.eval_x},
                   {"eval_y", &eval_y_m}});
  write_manifest(paths.data, "data", digest,
                 {{"n_train", b.train_x.cols()},
                  {"n_eval", b.eval_x.cols()},
                  {"dim", b.train_x.rows()}});
}

DataBundle load_data_bundle(const Paths& paths) {
  LoadedCheckpoint ck = load_checkpoint((paths.data / "dataset.ckpt").string());
  if (ck.kind != "dataset")
    throw std::runtime_error("data stage holds a non-dataset checkpoint");
  DataBundle b;
  b.n_classes = ck.meta.at("n_classes").get<int>();
  b.train_x = ck.tensors.at("train_x");
  b.eval_x = ck.tensors.at("eval_x");
  b.train_y = labels_from_matrix(ck.tensors.at("train_y"));
  b.eval_y = labels_from_matrix(ck.tensors.at("eval_y"));
  return b;
}

// ----- score stage ---------------------------------------------------------

void run_score_stage(const ExperimentConfig& cfg, const Paths& paths,
                     bool resume) {
  const std::string digest = cfg.digest();
  require_stage(paths.data, "data", digest, "train-score");
  if (!prepare_stage(paths.score, "score", digest, resume)) return;
  json extra = {{"type", cfg.score.type}};
  if (cfg.score.type == "mixture") {
    std::cout << "[score] analytic mixture model, nothing to train\n";
  } else {
    std::cout << "[score] training denoiser (" << cfg.score.train.steps
              << " steps)\n";
    const DataBundle data = load_data_bundle(paths);
    DenoiserModel model(static_cast<int>(data.train_x.rows()), data.n_classes,
                        cfg.score.arch, derive_seed(cfg.seed, {kSeedScore, 0}));
    DsmTrainConfig tc = cfg.score.train;
    tc.seed = derive_seed(cfg.seed, {kSeedScore, 1});
    const DsmTrainTrace trace =
        train_denoiser_dsm(model, cfg.schedule, data.train_x, data.train_y, tc);
    save_denoiser((paths.score / "denoiser.ckpt").string(), model,
                  cfg.schedule, digest);
    extra["loss_history"] = trace.loss_history;
    extra["final_loss"] = trace.loss_history.back();
    std::cout << "[score] final windowed loss " << trace.loss_history.back()
              << "\n";
  }
  write_manifest(paths.score, "score", digest, extra);
}

// Owns whichever objects back the noise predictor.
struct ScoreBundle {
  std::unique_ptr<GaussianMixture> mixture;
  std::unique_ptr<DenoiserModel> denoiser;
  std::unique_ptr<NoisePredictor> predictor;
  VpSchedule sched;
};

ScoreBundle load_score_bundle(const ExperimentConfig& cfg, const Paths& paths) {
  ScoreBundle b;
  b.sched = cfg.schedule;
  if (cfg.score.type == "mixture") {
    b.mixture = std::make_unique<GaussianMixture>(cfg.mixture());
    b.predictor = std::make_unique<MixturePredictor>(*b.mixture, b.sched);
  } else {
    LoadedDenoiser ld =
        load_denoiser((paths.score / "denoiser.ckpt").string());
    b.sched = ld.sched;
    b.denoiser = std::make_unique<DenoiserModel>(std::move(ld.model));
    struct Wrapper : NoisePredictor {
      DenoiserModel* m;
      explicit Wrapper(DenoiserModel* m) : m(m) {}
      int dim() const override { return m->dim(); }
      int n_classes() const override { return m->n_classes(); }
      Eigen::MatrixXd predict(const Eigen::MatrixXd& x, double t,
                              std::optional<int> cls) const override {
        return m->predict(x, t, cls);
      }
    };
    b.predictor = std::make_unique<Wrapper>(b.denoiser.get());
  }
  return b;
}

// ----- classifier stage ----------------------------------------------------

void run_classifier_stage(const ExperimentConfig& cfg, const Paths& paths,
                          bool resume) {
  const std::string digest = cfg.digest();
  require_stage(paths.data, "data", digest, "train-classifier");
  if (!prepare_stage(paths.classifiers, "classifiers", digest, resume)) return;
  const DataBundle data = load_data_bundle(paths);
  json models = json::array();
  for (std::size_t i = 0; i < cfg.classifiers.epsilons.size(); ++i) {
    const double eps = cfg.classifiers.epsilons[i];
    std::cout << "[classifiers] training epsilon=" << eps << "\n";
    ClassifierModel model(
        static_cast<int>(data.train_x.rows()), data.n_classes,
        cfg.classifiers.arch,
        derive_seed(cfg.seed, {kSeedClassifiers, static_cast<std::uint64_t>(i),
                               0}));
    ClassifierTrainConfig tc;
    tc.epochs = cfg.classifiers.epochs;
    tc.batch_size = cfg.classifiers.batch_size;
    tc.lr = cfg.classifiers.lr;
    tc.dropout = cfg.classifiers.dropout;
    tc.epsilon = eps;
    tc.pgd_steps = cfg.classifiers.pgd_steps;
    tc.seed = derive_seed(
        cfg.seed, {kSeedClassifiers, static_cast<std::uint64_t>(i), 1});
    const ClassifierTrainTrace trace =
        train_classifier(model, data.train_x, data.train_y, tc);
    const std::string file = "classifier_" + std::to_string(i) + ".ckpt";
    save_classifier((paths.classifiers / file).string(), model, eps, digest);
    models.push_back({{"file", file},
                      {"epsilon", eps},
                      {"final_loss", trace.loss_history.back()}});
  }
  write_manifest(paths.classifiers, "classifiers", digest,
                 {{"models", models}});
}

std::vector<LoadedClassifier> load_classifier_ladder(
    const ExperimentConfig& cfg, const Paths& paths) {
  std::vector<LoadedClassifier> out;
  for (std::size_t i = 0; i < cfg.classifiers.epsilons.size(); ++i)
    out.push_back(load_classifier(
        (paths.classifiers / ("classifier_" + std::to_string(i) + ".ckpt"))
            .string()));
  return out;
}

// ----- ce stage -------------------------------------------------------------

NeighborhoodKind variant_kind(const std::string& variant) {
  if (variant == "boltzmann") return NeighborhoodKind::kBoltzmann;
  if (variant == "gaussian") return NeighborhoodKind::kGaussian;
  throw std::runtime_error("unknown ce variant '" + variant + "'");
}

CeParams ce_params_for(const ExperimentConfig& cfg,
                       const std::string& variant) {
  CeParams p;
  p.kind = variant_kind(variant);
  p.w = cfg.ce.w;
  p.sigma_ce = cfg.ce.sigma_ce;
  p.neighborhood_noise_units = cfg.ce.boltzmann_sigma_t_scaling;
  return p;
}

CEDataset generate_variant_dataset(const ExperimentConfig& cfg,
                                   const NoisePredictor& predictor,
                                   const VpSchedule& sched,
                                   const Eigen::MatrixXd& sources,
                                   const Eigen::VectorXi& labels,
                                   const std::string& variant,
                                   std::uint64_t dataset_seed) {
  const int n_sources = static_cast<int>(sources.cols());
  const int k = predictor.n_classes();
  const int rep = cfg.ce.n_per_class;
  CEDataset ds;
  ds.provenance = {1, cfg.digest(), dataset_seed, variant, cfg.ce.w,
                   cfg.ce.sigma_ce};
  ds.n_classes = k;
  ds.l0_threshold = cfg.ce.l0_threshold;
  const CeParams params = ce_params_for(cfg, variant);
  // one batched sampler run per target class
  std::vector<Eigen::MatrixXd> per_class(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    Eigen::MatrixXd batch(sources.rows(),
                          static_cast<Eigen::Index>(n_sources) * rep);
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_sources) * rep);
    for (int i = 0; i < n_sources; ++i)
      for (int j = 0; j < rep; ++j) {
        const Eigen::Index q = static_cast<Eigen::Index>(i) * rep + j;
        batch.col(q) = sources.col(i);
        seeds[static_cast<std::size_t>(q)] =
            derive_seed(dataset_seed, {static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(c),
                                       static_cast<std::uint64_t>(j)});
      }
    per_class[static_cast<std::size_t>(c)] =
        generate_ce_batch(sched, predictor, batch, c, params, cfg.ce.n_steps,
                          seeds, cfg.ce.clip_range);
  }
  for (int i = 0; i < n_sources; ++i)
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < rep; ++j) {
        CERecord rec;
        rec.source_id = i;
        rec.x = sources.col(i);
        rec.y = labels[i];
        rec.y_ce = c;
        rec.x_ce = per_class[static_cast<std::size_t>(c)].col(
            static_cast<Eigen::Index>(i) * rep + j);
        const CeDistances d = ce_distances(rec.x, rec.x_ce, cfg.ce.l0_threshold);
        rec.l2 = d.l2;
        rec.l0 = d.l0;
        ds.records.push_back(std::move(rec));
      }
  return ds;
}

void run_ce_stage(const ExperimentConfig& cfg, const Paths& paths,
                  bool resume) {
  const std::string digest = cfg.digest();
  require_stage(paths.data, "data", digest, "train-score");
  require_stage(paths.score, "score", digest, "train-score");
  if (!prepare_stage(paths.ce, "ce", digest, resume)) return;
  const DataBundle data = load_data_bundle(paths);
  if (data.eval_x.cols() < cfg.ce.n_sources)
    throw std::runtime_error("ce stage needs " +
                             std::to_string(cfg.ce.n_sources) +
                             " sources but the eval split holds " +
                             std::to_string(data.eval_x.cols()));
  const ScoreBundle score = load_score_bundle(cfg, paths);
  const Eigen::MatrixXd sources = data.eval_x.leftCols(cfg.ce.n_sources);
  const Eigen::VectorXi labels = data.eval_y.head(cfg.ce.n_sources);
  json files = json::array();
  for (std::size_t vi = 0; vi < cfg.ce.variants.size(); ++vi) {
    const std::string& variant = cfg.ce.variants[vi];
    std::cout << "[ce] generating " << variant << " counterfactuals\n";
    const CEDataset ds = generate_variant_dataset(
        cfg, *score.predictor, score.sched, sources, labels, variant,
        derive_seed(cfg.seed, {kSeedCe, static_cast<std::uint64_t>(vi)}));
    const std::string file = variant + ".jsonl";
    save_ce_dataset(ds, (paths.ce / file).string());
    files.push_back({{"file", file},
                     {"variant", variant},
                     {"n_records", ds.records.size()}});
  }
  write_manifest(paths.ce, "ce", digest, {{"datasets", files}});
}

// ----- eval stage ------------------------------------------------------------

json eval_classifier_vs_dataset(const ClassifierModel& model,
                                const CEDataset& ds) {
  const CeAccuracyReport rep = ce_accuracy_report(model, ds);
  const SourcePredictionResult spp = source_prediction_probability(model, ds);
  const ConfidenceDistanceResult cd = confidence_distance_correlation(model, ds);
  return {{"same_class_accuracy", rep.same_class_accuracy},
          {"diff_class_accuracy", rep.diff_class_accuracy},
          {"source_prediction_probability", spp.probability},
          {"confidence_distance_r2", cd.fit.r_squared},
          {"confidence_distance_slope", cd.fit.slope},
          {"confidence", cd.confidence},
          {"distance", cd.distance}};
}

json summarize_variant(const CEDataset& ds, const GaussianMixture* mixture) {
  std::vector<double> l2s, l0s;
  int bayes_hits = 0, n_diff = 0;
  for (const auto& rec : ds.records) {
    if (rec.y_ce == rec.y) continue;
    ++n_diff;
    l2s.push_back(rec.l2);
    l0s.push_back(rec.l0);
    if (mixture) {
      Eigen::MatrixXd x(rec.x_ce.size(), 1);
      x.col(0) = rec.x_ce;
      if (mixture->bayes_classify(x)[0] == rec.y_ce) ++bayes_hits;
    }
  }
  if (n_diff == 0)
    throw std::runtime_error("variant '" + ds.provenance.variant +
                             "' has no different-class records");
  double mean_l2 = 0.0;
  for (double v : l2s) mean_l2 += v;
  mean_l2 /= n_diff;
  json out = {{"variant", ds.provenance.variant},
              {"n_diff", n_diff},
              {"median_l2", median(l2s)},
              {"median_l0", median(l0s)},
              {"mean_l2", mean_l2}};
  if (mixture)
    out["bayes_hit_rate"] = static_cast<double>(bayes_hits) / n_diff;
  else
    out["bayes_hit_rate"] = nullptr;
  return out;
}

void run_eval_stage(const ExperimentConfig& cfg, const Paths& paths,
                    bool resume) {
  const std::string digest = cfg.digest();
  require_stage(paths.data, "data", digest, "train-score");
  require_stage(paths.score, "score", digest, "train-score");
  require_stage(paths.classifiers, "classifiers", digest, "train-classifier");
  require_stage(paths.ce, "ce", digest, "gen-ce");
  if (!prepare_stage(paths.eval, "eval", digest, resume)) return;
  std::cout << "[eval] computing metrics\n";
  const DataBundle data = load_data_bundle(paths);
  const ScoreBundle score = load_score_bundle(cfg, paths);
  const std::vector<LoadedClassifier> ladder =
      load_classifier_ladder(cfg, paths);
  std::map<std::string, CEDataset> variants;
  for (const auto& v : cfg.ce.variants)
    variants.emplace(
        v, load_ce_dataset((paths.ce / (v + ".jsonl")).string()));
  std::unique_ptr<GaussianMixture> mixture;
  if (cfg.data.source == "mixture")
    mixture = std::make_unique<GaussianMixture>(cfg.mixture());

  json metrics;
  metrics["config_digest"] = digest;

  // classifier ladder
  json classifiers = json::array();
  for (const auto& lc : ladder) {
    json entry;
    entry["epsilon"] = lc.train_epsilon;
    entry["clean_accuracy"] = lc.model.accuracy(data.eval_x, data.eval_y);
    AttackConfig atk;
    atk.epsilon = cfg.eval.attack_epsilon;
    atk.n_steps = cfg.eval.attack_steps;
    const Eigen::MatrixXd adv = pgd_attack(lc.model, data.eval_x, data.eval_y, atk);
    entry["pgd_accuracy"] = lc.model.accuracy(adv, data.eval_y);
    double max_norm = 0.0;
    for (Eigen::Index i = 0; i < adv.cols(); ++i)
      max_norm = std::max(max_norm, (adv.col(i) - data.eval_x.col(i)).norm());
    entry["max_pgd_norm"] = max_norm;
    json per_variant;
    for (const auto& [name, ds] : variants)
      per_variant[name] = eval_classifier_vs_dataset(lc.model, ds);
    entry["per_variant"] = per_variant;
    classifiers.push_back(entry);
  }
  metrics["classifiers"] = classifiers;

  // counterfactual geometry per variant
  json variant_stats = json::array();
  for (const auto& v : cfg.ce.variants)
    variant_stats.push_back(summarize_variant(variants.at(v), mixture.get()));

  // model-gradient baseline from the most robust classifier
  if (cfg.eval.robust_ce && !ladder.empty()) {
    std::size_t robust_idx = 0;
    for (std::size_t i = 1; i < ladder.size(); ++i)
      if (ladder[i].train_epsilon > ladder[robust_idx].train_epsilon)
        robust_idx = i;
    const ClassifierModel& rm = ladder[robust_idx].model;
    RobustCeConfig rc;
    rc.step_size = cfg.eval.robust_ce_step;
    rc.conf_threshold = cfg.eval.robust_ce_conf;
    rc.max_steps = cfg.eval.robust_ce_max_steps;
    rc.clip = cfg.eval.robust_ce_clip;
    CEDataset ds;
    ds.provenance = {1, digest, derive_seed(cfg.seed, {kSeedEval, 0}),
                     "robust_model", 0.0, 0.0};
    ds.n_classes = data.n_classes;
    ds.l0_threshold = cfg.ce.l0_threshold;
    const int n_src = std::min<int>(cfg.ce.n_sources,
                                    static_cast<int>(data.eval_x.cols()));
    int converged = 0;
    for (int i = 0; i < n_src; ++i) {
      for (int c = 0; c < data.n_classes; ++c) {
        if (c == data.eval_y[i]) continue;
        const RobustCeResult r = robust_model_ce(rm, data.eval_x.col(i), c, rc);
        CERecord rec;
        rec.source_id = i;
        rec.x = data.eval_x.col(i);
        rec.y = data.eval_y[i];
        rec.y_ce = c;
        rec.x_ce = r.x_ce;
        const CeDistances d = ce_distances(rec.x, rec.x_ce, cfg.ce.l0_threshold);
        rec.l2 = d.l2;
        rec.l0 = d.l0;
        ds.records.push_back(std::move(rec));
        if (r.converged) ++converged;
      }
    }
    save_ce_dataset(ds, (paths.eval / "robust_model.jsonl").string());
    json rstats = summarize_variant(ds, mixture.get());
    rstats["converged_rate"] =
        ds.records.empty() ? 0.0
                           : static_cast<double>(converged) /
                                 static_cast<double>(ds.records.size());
    variant_stats.push_back(rstats);
  }
  metrics["ce_variants"] = variant_stats;

  // optional probes on the primary variant's generator
  const std::string primary = cfg.ce.variants.front();
  if (cfg.eval.distance_classifier_sources > 0) {
    const CeParams params = ce_params_for(cfg, primary);
    const auto gen = [&](const Eigen::VectorXd& x, int y_ce,
                         std::uint64_t seed) {
      SamplerConfig sc;
      sc.n_steps = cfg.ce.n_steps;
      sc.seed = seed;
      sc.clip_range = cfg.ce.clip_range;
      return generate_ce(score.sched, *score.predictor, x, y_ce, params, sc);
    };
    const int n = std::min<int>(cfg.eval.distance_classifier_sources,
                                static_cast<int>(data.eval_x.cols()));
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const DistanceClassification dc = ce_distance_classifier(
          gen, data.eval_x.col(i), data.n_classes, cfg.ce.n_per_class,
          derive_seed(cfg.seed, {kSeedEval, 1, static_cast<std::uint64_t>(i)}));
      if (dc.predicted == data.eval_y[i]) ++hits;
    }
    metrics["distance_classifier"] = {
        {"n", n}, {"accuracy", static_cast<double>(hits) / n}};
  } else {
    metrics["distance_classifier"] = nullptr;
  }
  if (cfg.eval.ce_from_ce_sources > 0) {
    const CeParams params = ce_params_for(cfg, primary);
    const auto gen = [&](const Eigen::VectorXd& x, int y_ce,
                         std::uint64_t seed) {
      SamplerConfig sc;
      sc.n_steps = cfg.ce.n_steps;
      sc.seed = seed;
      sc.clip_range = cfg.ce.clip_range;
      return generate_ce(score.sched, *score.predictor, x, y_ce, params, sc);
    };
    CEDataset sub;
    const CEDataset& base = variants.at(primary);
    sub.provenance = base.provenance;
    sub.n_classes = base.n_classes;
    sub.l0_threshold = base.l0_threshold;
    for (const auto& rec : base.records)
      if (rec.source_id < cfg.eval.ce_from_ce_sources) sub.records.push_back(rec);
    const CeFromCeStats st =
        ce_from_ce_analysis(gen, sub, derive_seed(cfg.seed, {kSeedEval, 2}));
    metrics["ce_from_ce"] = {{"n", st.n},
                             {"mean_forward_l2", st.mean_forward_l2},
                             {"mean_back_l2", st.mean_back_l2},
                             {"mean_return_gap", st.mean_return_gap}};
  } else {
    metrics["ce_from_ce"] = nullptr;
  }

  write_text_file((paths.eval / "metrics.json").string(),
                  metrics.dump(2) + "\n");
  write_manifest(paths.eval, "eval", digest, json::object());
}

// ----- report stage -----------------------------------------------------------

std::string nullable_number(const json& v) {
  if (v.is_null()) return "nan";
  return format_double(v.get<double>());
}

void run_report_stage(const ExperimentConfig& cfg, const Paths& paths,
                      bool resume) {
  const std::string digest = cfg.digest();
  require_stage(paths.eval, "eval", digest, "eval");
  if (!prepare_stage(paths.report, "report", digest, resume)) return;
  std::cout << "[report] writing tables and figures\n";
  const json metrics =
      json::parse(read_text_file((paths.eval / "metrics.json").string()));
  const std::string primary = cfg.ce.variants.front();

  // classifier ladder table
  CsvTable ladder;
  ladder.header = {"epsilon", "clean_accuracy", "pgd_accuracy", "max_pgd_norm"};
  for (const auto& c : metrics.at("classifiers"))
    ladder.rows.push_back({format_double(c.at("epsilon").get<double>()),
                           format_double(c.at("clean_accuracy").get<double>()),
                           format_double(c.at("pgd_accuracy").get<double>()),
                           format_double(c.at("max_pgd_norm").get<double>())});
  write_text_file((paths.report / "classifier_ladder.csv").string(),
                  csv_serialize(ladder));

  // classifier x variant counterfactual metrics
  CsvTable clf_ce;
  clf_ce.header = {"epsilon",
                   "variant",
                   "same_class_accuracy",
                   "diff_class_accuracy",
                   "source_prediction_probability",
                   "confidence_distance_r2",
                   "confidence_distance_slope"};
  for (const auto& c : metrics.at("classifiers"))
    for (const auto& [name, pv] : c.at("per_variant").items())
      clf_ce.rows.push_back(
          {format_double(c.at("epsilon").get<double>()), name,
           format_double(pv.at("same_class_accuracy").get<double>()),
           format_double(pv.at("diff_class_accuracy").get<double>()),
           format_double(pv.at("source_prediction_probability").get<double>()),
           format_double(pv.at("confidence_distance_r2").get<double>()),
           format_double(pv.at("confidence_distance_slope").get<double>())});
  write_text_file((paths.report / "classifier_ce_metrics.csv").string(),
                  csv_serialize(clf_ce));

  // counterfactual geometry
  CsvTable variants;
  variants.header = {"variant", "n_diff", "median_l2",
                     "median_l0", "mean_l2", "bayes_hit_rate"};
  for (const auto& v : metrics.at("ce_variants"))
    variants.rows.push_back(
        {v.at("variant").get<std::string>(),
         std::to_string(v.at("n_diff").get<int>()),
         format_double(v.at("median_l2").get<double>()),
         format_double(v.at("median_l0").get<double>()),
         format_double(v.at("mean_l2").get<double>()),
         nullable_number(v.at("bayes_hit_rate"))});
  write_text_file((paths.report / "ce_variants.csv").string(),
                  csv_serialize(variants));

  // per-source confidence/distance points
  CsvTable points;
  points.header = {"epsilon", "variant", "confidence", "distance"};
  for (const auto& c : metrics.at("classifiers"))
    for (const auto& [name, pv] : c.at("per_variant").items()) {
      const auto& conf = pv.at("confidence");
      const auto& dist = pv.at("distance");
      for (std::size_t i = 0; i < conf.size(); ++i)
        points.rows.push_back(
            {format_double(c.at("epsilon").get<double>()), name,
             format_double(conf[i].get<double>()),
             format_double(dist[i].get<double>())});
    }
  write_text_file((paths.report / "confidence_distance.csv").string(),
                  csv_serialize(points));

  // flat summary
  CsvTable summary;
  summary.header = {"key", "value"};
  summary.rows.push_back({"config_digest", digest});
  for (const auto& v : metrics.at("ce_variants")) {
    const std::string pre = "ce." + v.at("variant").get<std::string>() + ".";
    summary.rows.push_back(
        {pre + "median_l2", format_double(v.at("median_l2").get<double>())});
    summary.rows.push_back(
        {pre + "median_l0", format_double(v.at("median_l0").get<double>())});
    summary.rows.push_back(
        {pre + "bayes_hit_rate", nullable_number(v.at("bayes_hit_rate"))});
  }
  for (const auto& c : metrics.at("classifiers")) {
    const std::string pre =
        "classifier.eps" + format_double(c.at("epsilon").get<double>()) + ".";
    summary.rows.push_back(
        {pre + "clean_accuracy",
         format_double(c.at("clean_accuracy").get<double>())});
    summary.rows.push_back(
        {pre + "pgd_accuracy",
         format_double(c.at("pgd_accuracy").get<double>())});
    summary.rows.push_back(
        {pre + "r2_" + primary,
         format_double(c.at("per_variant")
                           .at(primary)
                           .at("confidence_distance_r2")
                           .get<double>())});
  }
  if (!metrics.at("distance_classifier").is_null())
    summary.rows.push_back(
        {"distance_classifier.accuracy",
         format_double(
             metrics.at("distance_classifier").at("accuracy").get<double>())});
  if (!metrics.at("ce_from_ce").is_null()) {
    summary.rows.push_back(
        {"ce_from_ce.mean_back_l2",
         format_double(
             metrics.at("ce_from_ce").at("mean_back_l2").get<double>())});
    summary.rows.push_back(
        {"ce_from_ce.mean_return_gap",
         format_double(
             metrics.at("ce_from_ce").at("mean_return_gap").get<double>())});
  }
  write_text_file((paths.report / "summary.csv").string(),
                  csv_serialize(summary));

  // figures are rendered from the CSV bytes just written
  const CsvTable ladder_csv = csv_parse(
      read_text_file((paths.report / "classifier_ladder.csv").string()));
  write_text_file(
      (paths.report / "classifier_ladder.svg").string(),
      render_bars_svg(ladder_csv, "Accuracy vs training budget", "epsilon",
                      {"clean_accuracy", "pgd_accuracy"}));
  const CsvTable variants_csv =
      csv_parse(read_text_file((paths.report / "ce_variants.csv").string()));
  write_text_file((paths.report / "ce_distances.svg").string(),
                  render_bars_svg(variants_csv, "Counterfactual distances",
                                  "variant", {"median_l2", "median_l0"}));
  CsvTable scatter = csv_parse(
      read_text_file((paths.report / "confidence_distance.csv").string()));
  CsvTable filtered;
  filtered.header = scatter.header;
  for (const auto& row : scatter.rows)
    if (row[1] == primary) filtered.rows.push_back(row);
  write_text_file(
      (paths.report / "confidence_distance.svg").string(),
      render_scatter_svg(filtered, "Confidence vs counterfactual distance",
                         "distance", "confidence", "epsilon"));
  write_manifest(paths.report, "report", digest, json::object());
}

}  // namespace

// ----- commands ---------------------------------------------------------------

void cmd_train_score(const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  write_resolved_config(cfg, paths);
  run_data_stage(cfg, paths, true);  // data is cheap: always fill if missing
  run_score_stage(cfg, paths, opt.resume);
}

void cmd_train_classifier(const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  write_resolved_config(cfg, paths);
  run_data_stage(cfg, paths, true);
  run_classifier_stage(cfg, paths, opt.resume);
}

void cmd_gen_ce(const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  write_resolved_config(cfg, paths);
  run_ce_stage(cfg, paths, opt.resume);
}

void cmd_eval(const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  write_resolved_config(cfg, paths);
  run_eval_stage(cfg, paths, opt.resume);
}

void cmd_report(const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  write_resolved_config(cfg, paths);
  run_report_stage(cfg, paths, opt.resume);
}

void cmd_run(const RunOptions& opt) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  write_resolved_config(cfg, paths);
  run_data_stage(cfg, paths, opt.resume);
  run_score_stage(cfg, paths, opt.resume);
  run_classifier_stage(cfg, paths, opt.resume);
  run_ce_stage(cfg, paths, opt.resume);
  run_eval_stage(cfg, paths, opt.resume);
  run_report_stage(cfg, paths, opt.resume);
  std::cout << "run complete: " << paths.report.string() << "\n";
}

void cmd_ce_classify(const RunOptions& opt, int n_sources) {
  const ExperimentConfig cfg = load_config(opt);
  const Paths paths(opt.out_dir);
  const std::string digest = cfg.digest();
  require_stage(paths.data, "data", digest, "train-score");
  require_stage(paths.score, "score", digest, "train-score");
  const DataBundle data = load_data_bundle(paths);
  const ScoreBundle score = load_score_bundle(cfg, paths);
  const std::string primary = cfg.ce.variants.front();
  const CeParams params = ce_params_for(cfg, primary);
  const auto gen = [&](const Eigen::VectorXd& x, int y_ce, std::uint64_t seed) {
    SamplerConfig sc;
    sc.n_steps = cfg.ce.n_steps;
    sc.seed = seed;
    sc.clip_range = cfg.ce.clip_range;
    return generate_ce(score.sched, *score.predictor, x, y_ce, params, sc);
  };
  const int n = std::min<int>(n_sources, static_cast<int>(data.eval_x.cols()));
  if (n <= 0) throw std::runtime_error("ce-classify: no sources requested");
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const DistanceClassification dc = ce_distance_classifier(
        gen, data.eval_x.col(i), data.n_classes, cfg.ce.n_per_class,
        derive_seed(cfg.seed, {kSeedEval, 1, static_cast<std::uint64_t>(i)}));
    if (dc.predicted == data.eval_y[i]) ++hits;
    std::cout << "source " << i << ": label " << data.eval_y[i]
              << " predicted " << dc.predicted << " (distances:";
    for (double d : dc.mean_distance) std::cout << " " << format_double(d);
    std::cout << ")\n";
  }
  std::cout << "distance-classifier accuracy: "
            << static_cast<double>(hits) / n << " over " << n << " sources\n";
}

}  // namespace diffce
