#include "diffce/mixture.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffce {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

GaussianMixture::GaussianMixture(std::vector<MixtureComponent> components,
                                 int n_classes)
    : comps_(std::move(components)), n_classes_(n_classes) {
  if (comps_.empty())
    throw std::invalid_argument("GaussianMixture: no components");
  if (n_classes_ <= 0)
    throw std::invalid_argument("GaussianMixture: n_classes must be positive");
  dim_ = static_cast<int>(comps_[0].mean.size());
  double wsum = 0.0;
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const auto& c = comps_[k];
    if (c.mean.size() != dim_ || c.cov_diag.size() != dim_)
      throw std::invalid_argument(
          "GaussianMixture: component " + std::to_string(k) +
          " has inconsistent dimension");
    if (!(c.weight > 0.0))
      throw std::invalid_argument("GaussianMixture: component " +
                                  std::to_string(k) +
                                  " weight must be positive");
    if ((c.cov_diag.array() <= 0.0).any())
      throw std::invalid_argument("GaussianMixture: component " +
                                  std::to_string(k) +
                                  " has non-positive variance");
    if (c.cls < 0 || c.cls >= n_classes_)
      throw std::invalid_argument(
          "GaussianMixture: component " + std::to_string(k) +
          " class label " + std::to_string(c.cls) + " outside [0, " +
          std::to_string(n_classes_) + ")");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument(
        "GaussianMixture: weights must sum to 1, got " + std::to_string(wsum));
  class_prior_.assign(n_classes_, 0.0);
  for (const auto& c : comps_) class_prior_[c.cls] += c.weight;
}

double GaussianMixture::class_prior(int cls) const {
  if (cls < 0 || cls >= n_classes_)
    throw std::invalid_argument("GaussianMixture: class " +
                                std::to_string(cls) + " outside [0, " +
                                std::to_string(n_classes_) + ")");
  return class_prior_[cls];
}

std::vector<int> GaussianMixture::select(std::optional<int> cls) const {
  std::vector<int> sel;
  if (!cls) {
    sel.resize(comps_.size());
    for (std::size_t k = 0; k < comps_.size(); ++k) sel[k] = static_cast<int>(k);
    return sel;
  }
  if (*cls < 0 || *cls >= n_classes_)
    throw std::invalid_argument("GaussianMixture: class " +
                                std::to_string(*cls) + " outside [0, " +
                                std::to_string(n_classes_) + ")");
  for (std::size_t k = 0; k < comps_.size(); ++k)
    if (comps_[k].cls == *cls) sel.push_back(static_cast<int>(k));
  if (sel.empty())
    throw std::invalid_argument("GaussianMixture: class " +
                                std::to_string(*cls) + " has no components");
  return sel;
}

void GaussianMixture::component_log_joint(const VpSchedule& sched,
                                          const Eigen::MatrixXd& x, double t,
                                          const std::vector<int>& sel,
                                          Eigen::MatrixXd& out) const {
  if (x.rows() != dim_)
    throw std::invalid_argument("GaussianMixture: input has " +
                                std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(dim_));
  const auto [a, s] = sched.alpha_sigma(t);
  const Eigen::Index n = x.cols();
  out.resize(static_cast<Eigen::Index>(sel.size()), n);
  for (std::size_t j = 0; j < sel.size(); ++j) {
    const auto& c = comps_[sel[j]];
    const Eigen::ArrayXd v = (a * a) * c.cov_diag.array() + s * s;
    const double log_norm =
        -0.5 * (v.log().sum() + dim_ * kLog2Pi) + std::log(c.weight);
    const Eigen::VectorXd m = a * c.mean;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd d = x.col(i).array() - m.array();
      out(static_cast<Eigen::Index>(j), i) =
          log_norm - 0.5 * (d * d / v).sum();
    }
  }
}

Eigen::MatrixXd GaussianMixture::diffused_score(const VpSchedule& sched,
                                                const Eigen::MatrixXd& x,
                                                double t,
                                                std::optional<int> cls) const {
  const auto sel = select(cls);
  Eigen::MatrixXd lj;
  component_log_joint(sched, x, t, sel, lj);
  // responsibilities r_kj = softmax over components, per column
  const Eigen::RowVectorXd mx = lj.colwise().maxCoeff();
  Eigen::MatrixXd r = (lj.rowwise() - mx).array().exp();
  const Eigen::RowVectorXd denom = r.colwise().sum();
  r.array().rowwise() /= denom.array();

  const auto [a, s] = sched.alpha_sigma(t);
  Eigen::MatrixXd score = Eigen::MatrixXd::Zero(dim_, x.cols());
  for (std::size_t j = 0; j < sel.size(); ++j) {
    const auto& c = comps_[sel[j]];
    const Eigen::ArrayXd v = (a * a) * c.cov_diag.array() + s * s;
    const Eigen::VectorXd m = a * c.mean;
    // score contribution: r_k * (m - x) / v
    Eigen::MatrixXd contrib =
        ((-x).colwise() + m).array().colwise() / v;
    score.noalias() +=
        contrib * r.row(static_cast<Eigen::Index>(j)).asDiagonal();
  }
  return score;
}

Eigen::VectorXd GaussianMixture::diffused_score(const VpSchedule& sched,
                                                const Eigen::VectorXd& x,
                                                double t,
                                                std::optional<int> cls) const {
  return diffused_score(sched, Eigen::MatrixXd(x), t, cls).col(0);
}

double GaussianMixture::diffused_log_density(const VpSchedule& sched,
                                             const Eigen::VectorXd& x, double t,
                                             std::optional<int> cls) const {
  const auto sel = select(cls);
  Eigen::MatrixXd lj;
  component_log_joint(sched, Eigen::MatrixXd(x), t, sel, lj);
  // conditional densities renormalize the class weights
  double prior = 1.0;
  if (cls) prior = class_prior_[*cls];
  const double mx = lj.col(0).maxCoeff();
  const double lse = mx + std::log((lj.col(0).array() - mx).exp().sum());
  return lse - std::log(prior);
}

Eigen::MatrixXd GaussianMixture::noise_prediction(const VpSchedule& sched,
                                                  const Eigen::MatrixXd& x,
                                                  double t,
                                                  std::optional<int> cls) const {
  const double s = sched.sigma(t);
  if (!(s > 0.0))
    throw std::domain_error(
        "GaussianMixture::noise_prediction: sigma(t) must be positive, got t=" +
        std::to_string(t));
  return -s * diffused_score(sched, x, t, cls);
}

Eigen::VectorXd GaussianMixture::noise_prediction(const VpSchedule& sched,
                                                  const Eigen::VectorXd& x,
                                                  double t,
                                                  std::optional<int> cls) const {
  return noise_prediction(sched, Eigen::MatrixXd(x), t, cls).col(0);
}

Eigen::MatrixXd GaussianMixture::bayes_posterior(const Eigen::MatrixXd& x) const {
  VpSchedule clean;  // t = 0 reduces to the clean densities
  Eigen::MatrixXd lj;
  const auto all = select(std::nullopt);
  component_log_joint(clean, x, 0.0, all, lj);
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(n_classes_, x.cols());
  // accumulate per class in log space via per-column max over all components
  const Eigen::RowVectorXd mx = lj.colwise().maxCoeff();
  Eigen::MatrixXd e = (lj.rowwise() - mx).array().exp();
  for (std::size_t k = 0; k < comps_.size(); ++k)
    post.row(comps_[k].cls) += e.row(static_cast<Eigen::Index>(k));
  const Eigen::RowVectorXd denom = post.colwise().sum();
  post.array().rowwise() /= denom.array();
  return post;
}

Eigen::VectorXd GaussianMixture::bayes_posterior(const Eigen::VectorXd& x) const {
  return bayes_posterior(Eigen::MatrixXd(x)).col(0);
}

Eigen::VectorXi GaussianMixture::bayes_classify(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd post = bayes_posterior(x);
  Eigen::VectorXi out(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    Eigen::Index arg;
    post.col(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXi> GaussianMixture::sample_labeled(
    int n, Rng& rng) const {
  Eigen::MatrixXd x(dim_, n);
  Eigen::VectorXi y(n);
  std::vector<double> cum(comps_.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    acc += comps_[k].weight;
    cum[k] = acc;
  }
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < comps_.size() && u > cum[k]) ++k;
    const auto& c = comps_[k];
    x.col(i) = c.mean.array() + c.cov_diag.array().sqrt() *
                                    rng.normal_vec(dim_).array();
    y[i] = c.cls;
  }
  return {x, y};
}

}  // namespace diffce
