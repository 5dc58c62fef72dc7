#include "diffce/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "diffce/special.hpp"

namespace diffce {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kSqrtPi = 1.7724538509055160272981674833411;

struct BoltzmannParams {
  double lambda;  // sqrt(2) / (alpha sigma_ce): clean-score magnitude
  double u;       // sigma_t / (alpha sigma_ce)
  double alpha;
  double sigma_t;
};

BoltzmannParams boltzmann_params(const VpSchedule& sched, double sigma_ce,
                                 double t) {
  if (!(sigma_ce > 0.0))
    throw std::invalid_argument("neighborhood: sigma_ce must be positive, got " +
                                std::to_string(sigma_ce));
  const auto [a, s] = sched.alpha_sigma(t);
  if (!(s > 0.0))
    throw std::domain_error(
        "neighborhood: Boltzmann terms need sigma(t) > 0, got t=" +
        std::to_string(t));
  return {kSqrt2 / (a * sigma_ce), s / (a * sigma_ce), a, s};
}
}  // namespace

void NeighborhoodSpec::validate(int dim) const {
  if (center.size() != dim)
    throw std::invalid_argument(
        "NeighborhoodSpec: center has dimension " +
        std::to_string(center.size()) + ", expected " + std::to_string(dim));
  if (!(scale > 0.0))
    throw std::invalid_argument("NeighborhoodSpec: scale must be positive");
}

double boltzmann_slope(const VpSchedule& sched, double sigma_ce, double t) {
  const auto p = boltzmann_params(sched, sigma_ce, t);
  return p.lambda -
         kSqrt2 / (p.sigma_t * kSqrtPi) * stable_erfc_ratio(p.u);
}

double boltzmann_curvature_at_mode(const VpSchedule& sched, double sigma_ce,
                                   double t) {
  const auto p = boltzmann_params(sched, sigma_ce, t);
  return boltzmann_slope(sched, sigma_ce, t) * p.lambda;
}

double boltzmann_exact_score_1d(const VpSchedule& sched, double sigma_ce,
                                double y, double t) {
  const auto p = boltzmann_params(sched, sigma_ce, t);
  const double sign = y < 0.0 ? -1.0 : 1.0;
  const double yt = std::abs(y) / (kSqrt2 * p.sigma_t);
  const double m = p.u - yt;
  double ratio;
  if (m >= 0.0) {
    const double ep = erfcx(p.u + yt);
    const double em = erfcx(m);
    ratio = (ep - em) / (ep + em);
  } else {
    // erfcx(m) for m < 0 grows like 2 exp(m^2); factor exp(-m^2) through
    // the ratio instead so every term stays bounded.
    const double q = -m;
    const double damp = std::exp(-q * q);
    const double ep = erfcx(p.u + yt);
    const double eq = erfcx(q);
    ratio = (damp * (ep + eq) - 2.0) / (damp * (ep - eq) + 2.0);
  }
  return sign * p.lambda * ratio;
}

double boltzmann_approx_score_1d(const VpSchedule& sched, double sigma_ce,
                                 double y, double t) {
  const auto p = boltzmann_params(sched, sigma_ce, t);
  const double g = boltzmann_slope(sched, sigma_ce, t) * y;
  return p.lambda * std::clamp(g, -1.0, 1.0);
}

Eigen::MatrixXd neighborhood_score_centers(const VpSchedule& sched,
                                           NeighborhoodKind kind,
                                           const Eigen::MatrixXd& centers,
                                           double scale,
                                           const Eigen::MatrixXd& x_t,
                                           double t) {
  if (centers.rows() != x_t.rows() || centers.cols() != x_t.cols())
    throw std::invalid_argument(
        "neighborhood_score_centers: centers/x_t shape mismatch");
  if (!(scale > 0.0))
    throw std::invalid_argument("neighborhood: sigma_ce must be positive");
  const auto [a, s] = sched.alpha_sigma(t);
  if (kind == NeighborhoodKind::kGaussian) {
    const double v = a * a * scale * scale + s * s;
    return (a * centers - x_t) / v;
  }
  const auto p = boltzmann_params(sched, scale, t);
  const double gamma = boltzmann_slope(sched, scale, t);
  const Eigen::MatrixXd y = x_t - a * centers;
  return (p.lambda * (gamma * y.array()).min(1.0).max(-1.0)).matrix();
}

Eigen::MatrixXd neighborhood_score(const VpSchedule& sched,
                                   const NeighborhoodSpec& spec,
                                   const Eigen::MatrixXd& x_t, double t) {
  spec.validate(static_cast<int>(x_t.rows()));
  return neighborhood_score_centers(sched, spec.kind,
                                    spec.center.replicate(1, x_t.cols()),
                                    spec.scale, x_t, t);
}

Eigen::VectorXd neighborhood_score(const VpSchedule& sched,
                                   const NeighborhoodSpec& spec,
                                   const Eigen::VectorXd& x_t, double t) {
  return neighborhood_score(sched, spec, Eigen::MatrixXd(x_t), t).col(0);
}

}  // namespace diffce
