#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "diffce/nn.hpp"

namespace diffce {

struct ClassifierConfig {
  int hidden_dim = 64;
  int n_hidden = 2;
};

// Small MLP classifier with SiLU hidden layers.  Inference is always
// deterministic; dropout only exists inside the training loop.  Input
// gradients are exposed for the attack and model-gradient counterfactuals.
class ClassifierModel {
 public:
  ClassifierModel(int dim, int n_classes, ClassifierConfig cfg,
                  std::uint64_t init_seed);

  int dim() const { return dim_; }
  int n_classes() const { return n_classes_; }
  const ClassifierConfig& config() const { return cfg_; }

  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const;
  Eigen::VectorXi predict(const Eigen::MatrixXd& x) const;
  double accuracy(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) const;

  // Gradient of sum_i log p(y_i | x_i) with respect to the inputs.
  Eigen::MatrixXd logprob_input_grad(const Eigen::MatrixXd& x,
                                     const Eigen::VectorXi& y) const;

  // Mean cross-entropy over the batch, with optional inverted dropout on
  // the hidden activations; accumulates parameter gradients.
  double cross_entropy_loss(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                            double dropout, Rng* dropout_rng,
                            bool accumulate_grads);

  std::vector<Tensor*> parameters();
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  void zero_grad();

 private:
  struct Cache;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, double dropout,
                          Rng* dropout_rng, Cache* cache) const;

  int dim_;
  int n_classes_;
  ClassifierConfig cfg_;
  struct Layer {
    Tensor W, b;
  };
  std::vector<Layer> hidden_;
  Layer out_;
};

struct AttackConfig {
  double epsilon = 0.5;
  int n_steps = 8;
  double step_size = 0.0;  // 0 selects 2.5 * epsilon / n_steps
};

// Untargeted L2 projected gradient descent.  Starts exactly at x (no random
// restart), normalizes each per-example gradient, skips examples whose
// gradient vanishes, and re-projects onto the epsilon-ball after every step.
Eigen::MatrixXd pgd_attack(const ClassifierModel& model,
                           const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                           const AttackConfig& cfg);

struct ClassifierTrainConfig {
  int epochs = 40;
  int batch_size = 64;
  double lr = 1e-3;
  double dropout = 0.3;   // applied only when epsilon == 0
  double epsilon = 0.0;   // adversarial-training budget; 0 = standard
  int pgd_steps = 8;
  std::uint64_t seed = 0;
};

struct ClassifierTrainTrace {
  std::vector<double> loss_history;  // mean loss per epoch
};

// Standard training when epsilon == 0; otherwise every batch is replaced by
// PGD adversaries generated against the current model before the update.
ClassifierTrainTrace train_classifier(ClassifierModel& model,
                                      const Eigen::MatrixXd& x,
                                      const Eigen::VectorXi& y,
                                      const ClassifierTrainConfig& cfg);

struct RobustCeConfig {
  double step_size = 0.05;
  double conf_threshold = 0.9;
  int max_steps = 200;
  // Per-step value clamp; disabled when unset.
  std::optional<std::pair<double, double>> clip = std::make_pair(0.0, 1.0);
};

struct RobustCeResult {
  Eigen::VectorXd x_ce;
  int steps = 0;
  double confidence = 0.0;
  bool converged = false;
};

// Gradient ascent on log p(y_ce | x) with normalized steps until the
// target-class confidence crosses the threshold.
RobustCeResult robust_model_ce(const ClassifierModel& model,
                               const Eigen::VectorXd& x, int y_ce,
                               const RobustCeConfig& cfg);

}  // namespace diffce
