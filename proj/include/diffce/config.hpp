#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffce/classifier.hpp"
#include "diffce/denoiser.hpp"
#include "diffce/mixture.hpp"
#include "diffce/schedule.hpp"

namespace diffce {

// FNV-1a over bytes; the config digest every artifact carries.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct DataConfig {
  std::string source = "mixture";  // "mixture" or "idx"
  int n_train = 2000;
  int n_eval = 200;
  std::vector<MixtureComponent> components;  // mixture source
  int n_classes = 0;                         // derived for mixture sources
  std::string idx_images, idx_labels;        // idx source
  std::string idx_eval_images, idx_eval_labels;
  int idx_n_classes = 10;
};

struct ScoreModelConfig {
  std::string type = "denoiser";  // "denoiser" or "mixture" (analytic oracle)
  DenoiserConfig arch;
  DsmTrainConfig train;
};

struct ClassifierStageConfig {
  std::vector<double> epsilons = {0.0, 0.2, 0.5};
  ClassifierConfig arch;
  int epochs = 40;
  int batch_size = 64;
  double lr = 1e-3;
  double dropout = 0.3;
  int pgd_steps = 8;
};

struct CeStageConfig {
  double w = 15.0;
  double sigma_ce = 0.2;
  int n_sources = 100;
  int n_per_class = 2;
  int n_steps = 1000;
  double l0_threshold = 0.02;
  bool boltzmann_sigma_t_scaling = false;
  std::optional<std::pair<double, double>> clip_range;
  std::vector<std::string> variants = {"boltzmann", "gaussian"};
};

struct EvalStageConfig {
  double attack_epsilon = 0.5;
  int attack_steps = 8;
  bool robust_ce = true;
  double robust_ce_step = 0.05;
  double robust_ce_conf = 0.9;
  int robust_ce_max_steps = 200;
  std::optional<std::pair<double, double>> robust_ce_clip =
      std::make_pair(0.0, 1.0);
  int distance_classifier_sources = 0;  // 0 disables the probe
  int ce_from_ce_sources = 0;           // 0 disables the probe
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  DataConfig data;
  VpSchedule schedule;
  ScoreModelConfig score;
  ClassifierStageConfig classifiers;
  CeStageConfig ce;
  EvalStageConfig eval;

  // Strict parse: any key not in the schema raises std::runtime_error
  // naming the offending key path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  // Fully resolved form (defaults filled in).  Loading the result again
  // reproduces the identical resolved form.
  nlohmann::json to_json() const;

  // Hex FNV-1a of the resolved canonical dump.
  std::string digest() const;

  void validate() const;
  GaussianMixture mixture() const;  // throws when source != "mixture"
};

}  // namespace diffce
