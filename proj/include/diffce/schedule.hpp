#pragma once

#include <utility>

#include <Eigen/Core>

namespace diffce {

// Variance-preserving forward process.  Diffusion time lives in [0, 1];
// sampling integrates backwards from t = 1 to t = t_min.
struct VpSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double t_min = 1e-3;

  // Throws std::invalid_argument if the parameters are inconsistent.
  void validate() const;

  // Instantaneous noise rate beta(t); t must lie in [0, 1].
  double beta(double t) const;

  // Signal retention alpha(t) = exp(-t^2 (beta_max - beta_min)/4 - t beta_min/2).
  double alpha(double t) const;

  // Marginal noise scale sigma(t) = sqrt(1 - alpha(t)^2).
  double sigma(double t) const;

  std::pair<double, double> alpha_sigma(double t) const {
    return {alpha(t), sigma(t)};
  }

  // x_t = alpha(t) x0 + sigma(t) z for externally supplied z ~ N(0, I).
  Eigen::VectorXd perturb(const Eigen::VectorXd& x0, double t,
                          const Eigen::VectorXd& z) const;
  Eigen::MatrixXd perturb(const Eigen::MatrixXd& x0, double t,
                          const Eigen::MatrixXd& z) const;
};

}  // namespace diffce
