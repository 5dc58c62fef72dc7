#pragma once

#include <Eigen/Core>

#include "diffce/schedule.hpp"

namespace diffce {

enum class NeighborhoodKind { kGaussian, kBoltzmann };

// Localization term pulling samples toward a source point.  `scale` is the
// neighborhood width sigma_ce; `center` is the source example.
struct NeighborhoodSpec {
  NeighborhoodKind kind = NeighborhoodKind::kBoltzmann;
  Eigen::VectorXd center;
  double scale = 0.2;

  void validate(int dim) const;
};

// --- Boltzmann (Laplace) neighborhood, per coordinate ---------------------
//
// The clean neighborhood density is b(x) propto exp(-sqrt(2) |x - mu| / s).
// Diffusing it with the VP kernel keeps a closed form built from erfcx.

// Slope gamma_t of the diffused log-density derivative at the mode,
// normalized so the score is lambda * g(gamma_t y) with g'(0) = 1.
// Always negative.
double boltzmann_slope(const VpSchedule& sched, double sigma_ce, double t);

// Derivative of the exact score at y = 0 — the curvature of the diffused
// log-density at the mode: gamma_t * sqrt(2) / (alpha sigma_ce).
double boltzmann_curvature_at_mode(const VpSchedule& sched, double sigma_ce,
                                   double t);

// Exact score of the diffused Boltzmann density at offset y = x - alpha mu,
// evaluated through erfcx ratios so it is stable for any t in (0, 1] and
// any y.  One coordinate at a time.
double boltzmann_exact_score_1d(const VpSchedule& sched, double sigma_ce,
                                double y, double t);

// Hardtanh surrogate used inside the sampler:
//   lambda * clamp(gamma_t * y, -1, 1),  lambda = sqrt(2) / (alpha sigma_ce).
// Saturates to the exact asymptotes and matches the exact slope at the mode.
double boltzmann_approx_score_1d(const VpSchedule& sched, double sigma_ce,
                                 double y, double t);

// --- Gaussian neighborhood -------------------------------------------------
//
// N(mu, sigma_ce^2 I) diffuses to N(alpha mu, (alpha sigma_ce)^2 + sigma_t^2),
// with score (alpha mu - x) / ((alpha sigma_ce)^2 + sigma_t^2).

// Score of the diffused neighborhood density at x_t (columns = batch).
// Dispatches on the spec kind; the Boltzmann branch applies the hardtanh
// surrogate coordinate-wise.
Eigen::MatrixXd neighborhood_score(const VpSchedule& sched,
                                   const NeighborhoodSpec& spec,
                                   const Eigen::MatrixXd& x_t, double t);
Eigen::VectorXd neighborhood_score(const VpSchedule& sched,
                                   const NeighborhoodSpec& spec,
                                   const Eigen::VectorXd& x_t, double t);

// Same term with one center per column, for batches of counterfactual
// chains that localize around different sources.
Eigen::MatrixXd neighborhood_score_centers(const VpSchedule& sched,
                                           NeighborhoodKind kind,
                                           const Eigen::MatrixXd& centers,
                                           double scale,
                                           const Eigen::MatrixXd& x_t,
                                           double t);

}  // namespace diffce
