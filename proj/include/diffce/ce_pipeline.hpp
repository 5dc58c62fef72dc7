#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "diffce/classifier.hpp"

namespace diffce {

// L2 distance and strict-threshold L0 (fraction of coordinates changed by
// more than the threshold).
struct CeDistances {
  double l2 = 0.0;
  double l0 = 0.0;
};
CeDistances ce_distances(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ce,
                         double l0_threshold = 0.02);

struct CERecord {
  int source_id = 0;
  Eigen::VectorXd x;
  int y = 0;     // source class
  int y_ce = 0;  // target class
  Eigen::VectorXd x_ce;
  double l2 = 0.0;
  double l0 = 0.0;
};

// Everything needed to regenerate the records lives in the header, so a
// dataset file is self-describing.
struct CeProvenance {
  int schema_version = 1;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string variant;
  double w = 0.0;
  double sigma_ce = 0.0;
};

struct CEDataset {
  CeProvenance provenance;
  int n_classes = 0;
  double l0_threshold = 0.02;
  std::vector<CERecord> records;
};

// Draws one counterfactual of x toward class y_ce using the given seed.
using CeGenerator =
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, int, std::uint64_t)>;

// Generates n_per_class counterfactuals per (source, target class) pair,
// every target class included.  Record seeds are derived from the dataset
// seed and the (source, class, repeat) indices, so generation order cannot
// change the contents.
CEDataset build_ce_dataset(const CeGenerator& gen, const Eigen::MatrixXd& x,
                           const Eigen::VectorXi& y, int n_classes,
                           int n_per_class, CeProvenance provenance,
                           double l0_threshold = 0.02);

void save_ce_dataset(const CEDataset& ds, const std::string& path);
CEDataset load_ce_dataset(const std::string& path);

// Mean L2 from a source to its different-class counterfactuals.
double avg_diff_class_distance(const CEDataset& ds, int source_id);

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
// Least squares of y on x.  Zero variance in x makes the fit undefined
// (throws std::runtime_error); zero variance in y gives r_squared = 0.
OlsFit ols_fit(const std::vector<double>& x, const std::vector<double>& y);

struct ConfidenceDistanceResult {
  OlsFit fit;
  std::vector<double> distance;    // per source: mean diff-class CE distance
  std::vector<double> confidence;  // per source: classifier confidence
};
// Correlation between the classifier's confidence in each source's own
// class and the mean distance to that source's different-class CEs.
ConfidenceDistanceResult confidence_distance_correlation(
    const ClassifierModel& model, const CEDataset& ds);

struct CeAccuracyReport {
  double clean_accuracy = 0.0;      // classifier vs source labels
  double same_class_accuracy = 0.0; // CEs targeting the source's own class
  double diff_class_accuracy = 0.0; // CEs targeting a different class
  int n_sources = 0;
  int n_same = 0;
  int n_diff = 0;
};
CeAccuracyReport ce_accuracy_report(const ClassifierModel& model,
                                    const CEDataset& ds);

struct SourcePredictionResult {
  double probability = 0.0;
  int numerator = 0;
  int denominator = 0;
};
// Over different-class CEs: how often the classifier still assigns the
// source's class.
SourcePredictionResult source_prediction_probability(
    const ClassifierModel& model, const CEDataset& ds);

struct DistanceClassification {
  int predicted = 0;
  std::vector<double> mean_distance;  // per candidate class
};
// Classifies x as the class whose counterfactuals are nearest on average;
// ties resolve to the lowest class index.
DistanceClassification ce_distance_classifier(const CeGenerator& gen,
                                              const Eigen::VectorXd& x,
                                              int n_classes, int n_per_class,
                                              std::uint64_t seed);

struct CeFromCeStats {
  int n = 0;
  double mean_forward_l2 = 0.0;  // source -> CE
  double mean_back_l2 = 0.0;     // CE -> CE-of-CE (targeting the source class)
  double mean_return_gap = 0.0;  // CE-of-CE -> original source
};
// Round-trip probe: regenerate counterfactuals of the different-class CEs
// back toward their source classes.
CeFromCeStats ce_from_ce_analysis(const CeGenerator& gen, const CEDataset& ds,
                                  std::uint64_t seed);

// Utilities shared by the evaluation stages.
double median(std::vector<double> values);

}  // namespace diffce
