#include "diffce/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffce {

void VpSchedule::validate() const {
  if (!(beta_min > 0.0))
    throw std::invalid_argument("VpSchedule: beta_min must be positive, got " +
                                std::to_string(beta_min));
  if (!(beta_max > beta_min))
    throw std::invalid_argument(
        "VpSchedule: beta_max must exceed beta_min, got beta_max=" +
        std::to_string(beta_max) + " beta_min=" + std::to_string(beta_min));
  if (!(t_min > 0.0) || !(t_min < 1.0))
    throw std::invalid_argument("VpSchedule: t_min must lie in (0, 1), got " +
                                std::to_string(t_min));
}

namespace {
void check_t(double t) {
  if (!(t >= 0.0) || !(t <= 1.0))
    throw std::domain_error("VpSchedule: t must lie in [0, 1], got " +
                            std::to_string(t));
}
}  // namespace

double VpSchedule::beta(double t) const {
  check_t(t);
  return beta_min + t * (beta_max - beta_min);
}

double VpSchedule::alpha(double t) const {
  check_t(t);
  return std::exp(-0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min);
}

double VpSchedule::sigma(double t) const {
  const double a = alpha(t);
  return std::sqrt(1.0 - a * a);
}

Eigen::VectorXd VpSchedule::perturb(const Eigen::VectorXd& x0, double t,
                                    const Eigen::VectorXd& z) const {
  if (x0.size() != z.size())
    throw std::invalid_argument("VpSchedule::perturb: x0 and z sizes differ");
  const auto [a, s] = alpha_sigma(t);
  return a * x0 + s * z;
}

Eigen::MatrixXd VpSchedule::perturb(const Eigen::MatrixXd& x0, double t,
                                    const Eigen::MatrixXd& z) const {
  if (x0.rows() != z.rows() || x0.cols() != z.cols())
    throw std::invalid_argument("VpSchedule::perturb: x0 and z shapes differ");
  const auto [a, s] = alpha_sigma(t);
  return a * x0 + s * z;
}

}  // namespace diffce
