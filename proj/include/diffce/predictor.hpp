#pragma once

#include <optional>
#include <stdexcept>

#include <Eigen/Core>

#include "diffce/mixture.hpp"
#include "diffce/schedule.hpp"

namespace diffce {

// A conditional noise-prediction model epsilon-hat(x_t, t, y).  Passing
// no class queries the unconditional model.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual int dim() const = 0;
  virtual int n_classes() const = 0;
  // Columns of x_t are batch elements sharing the same t.
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& x_t, double t,
                                  std::optional<int> cls) const = 0;
};

// Classifier-free guidance: (w + 1) * conditional - w * unconditional.
// w = 0 returns the conditional prediction unchanged.
inline Eigen::MatrixXd guided_noise(const Eigen::MatrixXd& cond,
                                    const Eigen::MatrixXd& uncond, double w) {
  if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols())
    throw std::invalid_argument("guided_noise: shape mismatch");
  return (w + 1.0) * cond - w * uncond;
}

inline Eigen::MatrixXd guided_prediction(const NoisePredictor& model,
                                         const Eigen::MatrixXd& x_t, double t,
                                         int target_class, double w) {
  const Eigen::MatrixXd cond = model.predict(x_t, t, target_class);
  if (w == 0.0) return cond;
  const Eigen::MatrixXd uncond = model.predict(x_t, t, std::nullopt);
  return guided_noise(cond, uncond, w);
}

// Exact noise predictions from an analytic mixture; the ground-truth stand-in
// for a trained denoiser.
class MixturePredictor : public NoisePredictor {
 public:
  MixturePredictor(const GaussianMixture& mixture, const VpSchedule& sched)
      : mixture_(mixture), sched_(sched) {}

  int dim() const override { return mixture_.dim(); }
  int n_classes() const override { return mixture_.n_classes(); }

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x_t, double t,
                          std::optional<int> cls) const override {
    return mixture_.noise_prediction(sched_, x_t, t, cls);
  }

 private:
  const GaussianMixture& mixture_;
  VpSchedule sched_;
};

}  // namespace diffce
