#include "diffce/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffce {

Eigen::MatrixXd composed_score(const VpSchedule& sched,
                               const ComposedModel& model,
                               const Eigen::MatrixXd& x_t, double t) {
  if (!model.predictor)
    throw std::invalid_argument("composed_score: predictor is null");
  const double s = sched.sigma(t);
  if (!(s > 0.0))
    throw std::domain_error("composed_score: sigma(t) must be positive");
  Eigen::MatrixXd eps;
  if (model.guidance.target_class)
    eps = guided_prediction(*model.predictor, x_t, t,
                            *model.guidance.target_class, model.guidance.w);
  else
    eps = model.predictor->predict(x_t, t, std::nullopt);
  Eigen::MatrixXd score = -eps / s;
  if (model.neighborhood) {
    const Eigen::MatrixXd ns =
        neighborhood_score(sched, *model.neighborhood, x_t, t);
    score += model.neighborhood_noise_units ? (ns / s).eval() : ns;
  }
  return score;
}

Eigen::MatrixXd em_reverse_step(const VpSchedule& sched,
                                const Eigen::MatrixXd& x, double t, double dt,
                                const Eigen::MatrixXd& score,
                                const Eigen::MatrixXd& z) {
  if (!(dt > 0.0))
    throw std::invalid_argument("em_reverse_step: dt must be positive, got " +
                                std::to_string(dt));
  const double b = sched.beta(t);
  return x + (0.5 * b * x + b * score) * dt + std::sqrt(b * dt) * z;
}

Eigen::VectorXd em_reverse_step(const VpSchedule& sched,
                                const Eigen::VectorXd& x, double t, double dt,
                                const Eigen::VectorXd& score,
                                const Eigen::VectorXd& z) {
  return em_reverse_step(sched, Eigen::MatrixXd(x), t, dt,
                         Eigen::MatrixXd(score), Eigen::MatrixXd(z))
      .col(0);
}

Eigen::MatrixXd sample(const VpSchedule& sched, const ComposedModel& model,
                       const SamplerConfig& cfg, int n) {
  if (!model.predictor)
    throw std::invalid_argument("sample: predictor is null");
  if (cfg.n_steps <= 0)
    throw std::invalid_argument("sample: n_steps must be positive");
  if (n <= 0) throw std::invalid_argument("sample: n must be positive");
  sched.validate();
  const int d = model.predictor->dim();
  if (model.neighborhood) model.neighborhood->validate(d);
  Rng rng(cfg.seed);
  Eigen::MatrixXd x(d, n);
  rng.fill_normal(x);
  Eigen::MatrixXd z(d, n);
  const double dt = (1.0 - sched.t_min) / cfg.n_steps;
  for (int k = 0; k < cfg.n_steps; ++k) {
    const double t = 1.0 - k * dt;
    const Eigen::MatrixXd score = composed_score(sched, model, x, t);
    rng.fill_normal(z);
    x = em_reverse_step(sched, x, t, dt, score, z);
  }
  if (cfg.clip_range)
    x = x.cwiseMax(cfg.clip_range->first).cwiseMin(cfg.clip_range->second);
  return x;
}

Eigen::MatrixXd generate_ce_batch(
    const VpSchedule& sched, const NoisePredictor& predictor,
    const Eigen::MatrixXd& sources, int y_ce, const CeParams& params,
    int n_steps, const std::vector<std::uint64_t>& seeds,
    std::optional<std::pair<double, double>> clip_range) {
  if (y_ce < 0 || y_ce >= predictor.n_classes())
    throw std::invalid_argument("generate_ce: target class " +
                                std::to_string(y_ce) + " outside [0, " +
                                std::to_string(predictor.n_classes()) + ")");
  if (sources.rows() != predictor.dim())
    throw std::invalid_argument("generate_ce: source dimension mismatch");
  if (static_cast<Eigen::Index>(seeds.size()) != sources.cols())
    throw std::invalid_argument("generate_ce: one seed per source required");
  if (n_steps <= 0)
    throw std::invalid_argument("generate_ce: n_steps must be positive");
  sched.validate();
  const Eigen::Index d = sources.rows();
  const Eigen::Index n = sources.cols();
  std::vector<Rng> rngs;
  rngs.reserve(seeds.size());
  for (std::uint64_t s : seeds) rngs.emplace_back(s);
  Eigen::MatrixXd x(d, n);
  for (Eigen::Index i = 0; i < n; ++i)
    x.col(i) = rngs[static_cast<std::size_t>(i)].normal_vec(d);
  Eigen::MatrixXd z(d, n);
  const double dt = (1.0 - sched.t_min) / n_steps;
  for (int k = 0; k < n_steps; ++k) {
    const double t = 1.0 - k * dt;
    const double sg = sched.sigma(t);
    const Eigen::MatrixXd eps =
        guided_prediction(predictor, x, t, y_ce, params.w);
    Eigen::MatrixXd score = -eps / sg;
    const Eigen::MatrixXd ns = neighborhood_score_centers(
        sched, params.kind, sources, params.sigma_ce, x, t);
    score += params.neighborhood_noise_units ? (ns / sg).eval() : ns;
    for (Eigen::Index i = 0; i < n; ++i)
      z.col(i) = rngs[static_cast<std::size_t>(i)].normal_vec(d);
    x = em_reverse_step(sched, x, t, dt, score, z);
  }
  if (clip_range)
    x = x.cwiseMax(clip_range->first).cwiseMin(clip_range->second);
  return x;
}

Eigen::VectorXd generate_ce(const VpSchedule& sched,
                            const NoisePredictor& predictor,
                            const Eigen::VectorXd& x, int y_ce,
                            const CeParams& params, const SamplerConfig& cfg) {
  return generate_ce_batch(sched, predictor, Eigen::MatrixXd(x), y_ce, params,
                           cfg.n_steps, {cfg.seed}, cfg.clip_range)
      .col(0);
}

}  // namespace diffce
