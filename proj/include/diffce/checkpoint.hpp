#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "diffce/classifier.hpp"
#include "diffce/denoiser.hpp"
#include "diffce/schedule.hpp"

namespace diffce {

// Container layout: 8-byte magic "DIFFCKPT", little-endian u32 header
// length, UTF-8 JSON header, then the tensors as float32 little-endian in
// header order (column-major).  The header alone identifies the model kind
// and architecture, so loaders never guess.

void save_checkpoint(
    const std::string& path, const std::string& kind,
    const nlohmann::json& meta,
    const std::vector<std::pair<std::string, const Eigen::MatrixXd*>>& tensors);

struct LoadedCheckpoint {
  std::string kind;
  nlohmann::json meta;
  std::map<std::string, Eigen::MatrixXd> tensors;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

void save_denoiser(const std::string& path, DenoiserModel& model,
                   const VpSchedule& sched, const std::string& config_digest);
struct LoadedDenoiser {
  DenoiserModel model;
  VpSchedule sched;
  std::string config_digest;
};
LoadedDenoiser load_denoiser(const std::string& path);

void save_classifier(const std::string& path, ClassifierModel& model,
                     double train_epsilon, const std::string& config_digest);
struct LoadedClassifier {
  ClassifierModel model;
  double train_epsilon = 0.0;
  std::string config_digest;
};
LoadedClassifier load_classifier(const std::string& path);

}  // namespace diffce
