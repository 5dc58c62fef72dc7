#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "diffce/rng.hpp"
#include "diffce/schedule.hpp"

namespace diffce {

// One diagonal-covariance Gaussian component, tagged with a class label.
struct MixtureComponent {
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd cov_diag;
  int cls = 0;
};

// Class-conditional Gaussian mixture with analytically known diffused
// marginals: under the VP forward process each component stays Gaussian
// with mean alpha m_k and variance alpha^2 S_k + sigma^2, so scores,
// noise predictions and Bayes posteriors are exact.  Serves as the
// ground-truth oracle the learned models are checked against.
class GaussianMixture {
 public:
  // Throws std::invalid_argument on inconsistent shapes, non-positive
  // variances, class labels outside [0, n_classes) or weights that do not
  // sum to 1 within 1e-9.
  GaussianMixture(std::vector<MixtureComponent> components, int n_classes);

  int dim() const { return dim_; }
  int n_classes() const { return n_classes_; }
  int n_components() const { return static_cast<int>(comps_.size()); }
  const std::vector<MixtureComponent>& components() const { return comps_; }
  double class_prior(int cls) const;

  // Score of the diffused marginal, unconditional or conditioned on a
  // class.  Valid for any t in [0, 1]; t = 0 gives the clean score.
  Eigen::VectorXd diffused_score(const VpSchedule& sched,
                                 const Eigen::VectorXd& x, double t,
                                 std::optional<int> cls = std::nullopt) const;
  Eigen::MatrixXd diffused_score(const VpSchedule& sched,
                                 const Eigen::MatrixXd& x, double t,
                                 std::optional<int> cls = std::nullopt) const;

  // log p_t(x), optionally class-conditional; used by finite-difference
  // checks of the score.
  double diffused_log_density(const VpSchedule& sched, const Eigen::VectorXd& x,
                              double t,
                              std::optional<int> cls = std::nullopt) const;

  // epsilon-hat = -sigma(t) * score.  Requires sigma(t) > 0.
  Eigen::VectorXd noise_prediction(const VpSchedule& sched,
                                   const Eigen::VectorXd& x, double t,
                                   std::optional<int> cls = std::nullopt) const;
  Eigen::MatrixXd noise_prediction(const VpSchedule& sched,
                                   const Eigen::MatrixXd& x, double t,
                                   std::optional<int> cls = std::nullopt) const;

  // Posterior P(y | x) under the clean mixture.
  Eigen::VectorXd bayes_posterior(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd bayes_posterior(const Eigen::MatrixXd& x) const;
  Eigen::VectorXi bayes_classify(const Eigen::MatrixXd& x) const;

  // Draws n labeled samples; columns are samples.
  std::pair<Eigen::MatrixXd, Eigen::VectorXi> sample_labeled(int n,
                                                             Rng& rng) const;

 private:
  std::vector<MixtureComponent> comps_;
  int n_classes_;
  int dim_;
  std::vector<double> class_prior_;

  // Column k holds log w_k + log N(x; alpha m_k, alpha^2 S_k + sigma^2 I)
  // for the selected components.
  void component_log_joint(const VpSchedule& sched, const Eigen::MatrixXd& x,
                           double t, const std::vector<int>& sel,
                           Eigen::MatrixXd& out) const;
  std::vector<int> select(std::optional<int> cls) const;
};

}  // namespace diffce
