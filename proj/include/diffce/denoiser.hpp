#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "diffce/nn.hpp"
#include "diffce/predictor.hpp"
#include "diffce/schedule.hpp"

namespace diffce {

struct DenoiserConfig {
  int hidden_dim = 128;
  int n_blocks = 3;
  int time_freqs = 16;  // sinusoidal features: 2 * time_freqs
};

// Residual MLP noise predictor.  A sinusoidal embedding of t goes through a
// linear layer, a learned class-embedding table (with an extra null row for
// unconditional queries) is added to it, and the sum conditions the input
// projection.  Backpropagation is written out by hand so parameter
// gradients can be checked against finite differences.
class DenoiserModel : public NoisePredictor {
 public:
  DenoiserModel(int data_dim, int n_classes, DenoiserConfig cfg,
                std::uint64_t init_seed);

  int dim() const override { return data_dim_; }
  int n_classes() const override { return n_classes_; }
  const DenoiserConfig& config() const { return cfg_; }

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x_t, double t,
                          std::optional<int> cls) const override;

  // Per-column times and conditions; a class of -1 selects the null
  // embedding.
  Eigen::MatrixXd predict_each(const Eigen::MatrixXd& x_t,
                               const Eigen::VectorXd& ts,
                               const std::vector<int>& cls) const;

  // Denoising score-matching loss on an externally fixed batch:
  // x_t = alpha(t_i) x0_i + sigma(t_i) z_i, target z_i, mean squared error
  // over every entry.  Accumulates parameter gradients when requested.
  double dsm_loss(const VpSchedule& sched, const Eigen::MatrixXd& x0,
                  const Eigen::MatrixXd& z, const Eigen::VectorXd& ts,
                  const std::vector<int>& cls, bool accumulate_grads);

  std::vector<Tensor*> parameters();
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  void zero_grad();

 private:
  struct Cache;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x_t,
                          const Eigen::VectorXd& ts,
                          const std::vector<int>& cls, Cache* cache) const;
  void backward(const Eigen::MatrixXd& d_eps, const Cache& cache);
  Eigen::MatrixXd time_features(const Eigen::VectorXd& ts) const;

  int data_dim_;
  int n_classes_;
  DenoiserConfig cfg_;
  Eigen::VectorXd freqs_;

  struct Block {
    Tensor W1, b1, W2, b2;
  };
  Tensor in_W_, in_b_;
  Tensor time_W_, time_b_;
  Tensor emb_;  // hidden_dim x (n_classes + 1); last column is the null class
  std::vector<Block> blocks_;
  Tensor out_W_, out_b_;
};

struct DsmTrainConfig {
  int steps = 4000;
  int batch_size = 128;
  double lr = 1e-3;
  int warmup_steps = 200;
  double clip_norm = 1.0;
  double cond_dropout = 0.3;  // probability of training a batch element
                              // unconditionally
  std::uint64_t seed = 0;
  int log_every = 500;
};

struct DsmTrainTrace {
  std::vector<double> loss_history;  // mean loss per log window
};

DsmTrainTrace train_denoiser_dsm(DenoiserModel& model, const VpSchedule& sched,
                                 const Eigen::MatrixXd& data,
                                 const Eigen::VectorXi& labels,
                                 const DsmTrainConfig& cfg);

}  // namespace diffce
