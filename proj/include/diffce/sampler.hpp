#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "diffce/neighborhood.hpp"
#include "diffce/predictor.hpp"
#include "diffce/schedule.hpp"
#include "diffce/rng.hpp"

namespace diffce {

struct GuidanceSpec {
  double w = 0.0;
  std::optional<int> target_class;
};

// A noise predictor plus the optional guidance and neighborhood terms that
// together define the reverse-time dynamics.
struct ComposedModel {
  const NoisePredictor* predictor = nullptr;
  GuidanceSpec guidance;
  std::optional<NeighborhoodSpec> neighborhood;
  // Default composition adds the neighborhood term to the score directly.
  // When set, the term is read in noise-prediction units instead, which
  // divides its score contribution by sigma(t).
  bool neighborhood_noise_units = false;
};

// Total score driving the sampler: guided prediction converted through
// -eps / sigma(t), plus the neighborhood score when present.
Eigen::MatrixXd composed_score(const VpSchedule& sched,
                               const ComposedModel& model,
                               const Eigen::MatrixXd& x_t, double t);

// One Euler-Maruyama step of the reverse SDE over a step dt > 0:
//   x' = x + (beta(t)/2 x + beta(t) score) dt + sqrt(beta(t) dt) z.
Eigen::MatrixXd em_reverse_step(const VpSchedule& sched,
                                const Eigen::MatrixXd& x, double t, double dt,
                                const Eigen::MatrixXd& score,
                                const Eigen::MatrixXd& z);
Eigen::VectorXd em_reverse_step(const VpSchedule& sched,
                                const Eigen::VectorXd& x, double t, double dt,
                                const Eigen::VectorXd& score,
                                const Eigen::VectorXd& z);

struct SamplerConfig {
  int n_steps = 1000;
  std::uint64_t seed = 0;
  // Value clamp applied once after the final step, never during integration.
  std::optional<std::pair<double, double>> clip_range;
};

// Integrates the reverse SDE from t = 1 down to sched.t_min on a uniform
// grid, starting from N(0, I) and injecting fresh noise at every step.
// Columns are independent samples.
Eigen::MatrixXd sample(const VpSchedule& sched, const ComposedModel& model,
                       const SamplerConfig& cfg, int n);

struct CeParams {
  NeighborhoodKind kind = NeighborhoodKind::kBoltzmann;
  double w = 15.0;
  double sigma_ce = 0.2;
  bool neighborhood_noise_units = false;
};

// Draws one counterfactual for source x targeting class y_ce: the sampler
// runs with guidance toward y_ce plus a neighborhood centered at x.
Eigen::VectorXd generate_ce(const VpSchedule& sched,
                            const NoisePredictor& predictor,
                            const Eigen::VectorXd& x, int y_ce,
                            const CeParams& params, const SamplerConfig& cfg);

// Batched form: one counterfactual per column of sources, all sharing the
// target class.  Each column consumes its own seed in the same draw order
// as a single-column run, so the batch reproduces per-record generation
// exactly regardless of batch composition.
Eigen::MatrixXd generate_ce_batch(const VpSchedule& sched,
                                  const NoisePredictor& predictor,
                                  const Eigen::MatrixXd& sources, int y_ce,
                                  const CeParams& params, int n_steps,
                                  const std::vector<std::uint64_t>& seeds,
                                  std::optional<std::pair<double, double>>
                                      clip_range = std::nullopt);

}  // namespace diffce
