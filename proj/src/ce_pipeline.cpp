#include "diffce/ce_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "diffce/rng.hpp"

namespace diffce {

using nlohmann::json;

CeDistances ce_distances(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ce,
                         double l0_threshold) {
  if (x.size() != x_ce.size())
    throw std::invalid_argument("ce_distances: dimension mismatch");
  if (x.size() == 0) throw std::invalid_argument("ce_distances: empty input");
  CeDistances d;
  d.l2 = (x - x_ce).norm();
  const Eigen::ArrayXd diff = (x - x_ce).array().abs();
  d.l0 = static_cast<double>((diff > l0_threshold).count()) /
         static_cast<double>(x.size());
  return d;
}

CEDataset build_ce_dataset(const CeGenerator& gen, const Eigen::MatrixXd& x,
                           const Eigen::VectorXi& y, int n_classes,
                           int n_per_class, CeProvenance provenance,
                           double l0_threshold) {
  if (x.cols() != y.size())
    throw std::invalid_argument("build_ce_dataset: data/label size mismatch");
  if (n_classes <= 0 || n_per_class <= 0)
    throw std::invalid_argument("build_ce_dataset: counts must be positive");
  CEDataset ds;
  ds.provenance = std::move(provenance);
  ds.n_classes = n_classes;
  ds.l0_threshold = l0_threshold;
  ds.records.reserve(static_cast<std::size_t>(x.cols()) * n_classes *
                     n_per_class);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    if (y[i] < 0 || y[i] >= n_classes)
      throw std::invalid_argument("build_ce_dataset: label out of range");
    for (int c = 0; c < n_classes; ++c) {
      for (int j = 0; j < n_per_class; ++j) {
        CERecord rec;
        rec.source_id = static_cast<int>(i);
        rec.x = x.col(i);
        rec.y = y[i];
        rec.y_ce = c;
        rec.x_ce = gen(rec.x, c,
                       derive_seed(ds.provenance.seed,
                                   {static_cast<std::uint64_t>(i),
                                    static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(j)}));
        const CeDistances d = ce_distances(rec.x, rec.x_ce, l0_threshold);
        rec.l2 = d.l2;
        rec.l0 = d.l0;
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

namespace {
json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a, const char* what) {
  if (!a.is_array())
    throw std::runtime_error(std::string("ce dataset: ") + what +
                             " is not an array");
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}
}  // namespace

void save_ce_dataset(const CEDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("save_ce_dataset: cannot open " + path);
  json header = {
      {"kind", "ce_dataset"},
      {"schema_version", ds.provenance.schema_version},
      {"config_digest", ds.provenance.config_digest},
      {"seed", ds.provenance.seed},
      {"variant", ds.provenance.variant},
      {"w", ds.provenance.w},
      {"sigma_ce", ds.provenance.sigma_ce},
      {"n_classes", ds.n_classes},
      {"l0_threshold", ds.l0_threshold},
      {"n_records", ds.records.size()},
  };
  out << header.dump() << "\n";
  for (const auto& rec : ds.records) {
    json row = {
        {"source_id", rec.source_id}, {"y", rec.y},
        {"y_ce", rec.y_ce},           {"x", vec_to_json(rec.x)},
        {"x_ce", vec_to_json(rec.x_ce)}, {"l2", rec.l2},
        {"l0", rec.l0},
    };
    out << row.dump() << "\n";
  }
  if (!out)
    throw std::runtime_error("save_ce_dataset: write failed for " + path);
}

CEDataset load_ce_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_ce_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_ce_dataset: " + path + " is empty");
  json header = json::parse(line);
  if (header.value("kind", "") != "ce_dataset")
    throw std::runtime_error("load_ce_dataset: " + path +
                             " is not a ce_dataset file");
  CEDataset ds;
  ds.provenance.schema_version = header.at("schema_version").get<int>();
  if (ds.provenance.schema_version != 1)
    throw std::runtime_error("load_ce_dataset: unsupported schema_version " +
                             std::to_string(ds.provenance.schema_version));
  ds.provenance.config_digest = header.at("config_digest").get<std::string>();
  ds.provenance.seed = header.at("seed").get<std::uint64_t>();
  ds.provenance.variant = header.at("variant").get<std::string>();
  ds.provenance.w = header.at("w").get<double>();
  ds.provenance.sigma_ce = header.at("sigma_ce").get<double>();
  ds.n_classes = header.at("n_classes").get<int>();
  ds.l0_threshold = header.at("l0_threshold").get<double>();
  const auto n_records = header.at("n_records").get<std::size_t>();
  ds.records.reserve(n_records);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row = json::parse(line);
    CERecord rec;
    rec.source_id = row.at("source_id").get<int>();
    rec.y = row.at("y").get<int>();
    rec.y_ce = row.at("y_ce").get<int>();
    rec.x = vec_from_json(row.at("x"), "x");
    rec.x_ce = vec_from_json(row.at("x_ce"), "x_ce");
    rec.l2 = row.at("l2").get<double>();
    rec.l0 = row.at("l0").get<double>();
    if (rec.x.size() != rec.x_ce.size())
      throw std::runtime_error("load_ce_dataset: record at line " +
                               std::to_string(line_no) +
                               " has mismatched x/x_ce sizes");
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.size() != n_records)
    throw std::runtime_error(
        "load_ce_dataset: header declares " + std::to_string(n_records) +
        " records but file holds " + std::to_string(ds.records.size()));
  return ds;
}

double avg_diff_class_distance(const CEDataset& ds, int source_id) {
  double sum = 0.0;
  int n = 0;
  for (const auto& rec : ds.records) {
    if (rec.source_id != source_id || rec.y_ce == rec.y) continue;
    sum += rec.l2;
    ++n;
  }
  if (n == 0)
    throw std::runtime_error(
        "avg_diff_class_distance: source " + std::to_string(source_id) +
        " has no different-class records");
  return sum / n;
}

OlsFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("ols_fit: size mismatch");
  if (x.size() < 2)
    throw std::invalid_argument("ols_fit: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0)
    throw std::runtime_error(
        "ols_fit: regressor has zero variance; fit undefined");
  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // Constant response: the constant fit is exact, no variance to explain.
  fit.r_squared = syy == 0.0 ? 0.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

ConfidenceDistanceResult confidence_distance_correlation(
    const ClassifierModel& model, const CEDataset& ds) {
  std::map<int, const CERecord*> sources;
  for (const auto& rec : ds.records)
    sources.emplace(rec.source_id, &rec);
  ConfidenceDistanceResult res;
  for (const auto& [sid, rec] : sources) {
    res.distance.push_back(avg_diff_class_distance(ds, sid));
    const Eigen::VectorXd p = model.probabilities(rec->x).col(0);
    res.confidence.push_back(p[rec->y]);
  }
  res.fit = ols_fit(res.distance, res.confidence);
  return res;
}

CeAccuracyReport ce_accuracy_report(const ClassifierModel& model,
                                    const CEDataset& ds) {
  CeAccuracyReport rep;
  std::map<int, const CERecord*> sources;
  for (const auto& rec : ds.records) sources.emplace(rec.source_id, &rec);
  int clean_hits = 0;
  for (const auto& [sid, rec] : sources)
    if (model.predict(rec->x)[0] == rec->y) ++clean_hits;
  rep.n_sources = static_cast<int>(sources.size());
  if (rep.n_sources == 0)
    throw std::runtime_error("ce_accuracy_report: dataset has no records");
  rep.clean_accuracy = static_cast<double>(clean_hits) / rep.n_sources;
  int same_hits = 0, diff_hits = 0;
  for (const auto& rec : ds.records) {
    const int pred = model.predict(rec.x_ce)[0];
    if (rec.y_ce == rec.y) {
      ++rep.n_same;
      if (pred == rec.y_ce) ++same_hits;
    } else {
      ++rep.n_diff;
      if (pred == rec.y_ce) ++diff_hits;
    }
  }
  rep.same_class_accuracy =
      rep.n_same > 0 ? static_cast<double>(same_hits) / rep.n_same : 0.0;
  rep.diff_class_accuracy =
      rep.n_diff > 0 ? static_cast<double>(diff_hits) / rep.n_diff : 0.0;
  return rep;
}

SourcePredictionResult source_prediction_probability(
    const ClassifierModel& model, const CEDataset& ds) {
  SourcePredictionResult res;
  for (const auto& rec : ds.records) {
    if (rec.y_ce == rec.y) continue;
    ++res.denominator;
    if (model.predict(rec.x_ce)[0] == rec.y) ++res.numerator;
  }
  if (res.denominator == 0)
    throw std::runtime_error(
        "source_prediction_probability: no different-class records");
  res.probability =
      static_cast<double>(res.numerator) / static_cast<double>(res.denominator);
  return res;
}

DistanceClassification ce_distance_classifier(const CeGenerator& gen,
                                              const Eigen::VectorXd& x,
                                              int n_classes, int n_per_class,
                                              std::uint64_t seed) {
  if (n_classes <= 0 || n_per_class <= 0)
    throw std::invalid_argument(
        "ce_distance_classifier: counts must be positive");
  DistanceClassification out;
  out.mean_distance.resize(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    double sum = 0.0;
    for (int j = 0; j < n_per_class; ++j) {
      const Eigen::VectorXd x_ce =
          gen(x, c, derive_seed(seed, {static_cast<std::uint64_t>(c),
                                       static_cast<std::uint64_t>(j)}));
      sum += (x - x_ce).norm();
    }
    out.mean_distance[static_cast<std::size_t>(c)] = sum / n_per_class;
  }
  out.predicted = 0;
  for (int c = 1; c < n_classes; ++c)
    if (out.mean_distance[static_cast<std::size_t>(c)] <
        out.mean_distance[static_cast<std::size_t>(out.predicted)])
      out.predicted = c;  // strict comparison keeps ties at the lowest index
  return out;
}

CeFromCeStats ce_from_ce_analysis(const CeGenerator& gen, const CEDataset& ds,
                                  std::uint64_t seed) {
  CeFromCeStats stats;
  std::uint64_t idx = 0;
  for (const auto& rec : ds.records) {
    ++idx;
    if (rec.y_ce == rec.y) continue;
    const Eigen::VectorXd back =
        gen(rec.x_ce, rec.y, derive_seed(seed, {idx}));
    stats.mean_forward_l2 += rec.l2;
    stats.mean_back_l2 += (rec.x_ce - back).norm();
    stats.mean_return_gap += (rec.x - back).norm();
    ++stats.n;
  }
  if (stats.n == 0)
    throw std::runtime_error(
        "ce_from_ce_analysis: no different-class records");
  stats.mean_forward_l2 /= stats.n;
  stats.mean_back_l2 /= stats.n;
  stats.mean_return_gap /= stats.n;
  return stats;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace diffce
