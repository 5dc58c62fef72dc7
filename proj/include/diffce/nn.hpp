#pragma once

#include <vector>

#include <Eigen/Core>

#include "diffce/rng.hpp"

namespace diffce {

// Parameter tensor with its gradient accumulator.  Vectors are stored as
// n x 1 matrices so the optimizer can treat everything uniformly.
struct Tensor {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  void init_zero(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  // Uniform(-limit, limit) fan-in init.
  void init_uniform(Eigen::Index rows, Eigen::Index cols, double limit,
                    Rng& rng);
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

Eigen::MatrixXd silu(const Eigen::MatrixXd& x);
// Derivative of silu evaluated at the pre-activation x.
Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& x);

// Column-wise softmax / log-softmax (classes along rows).
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

// Adam with linear learning-rate warmup and global gradient-norm clipping.
// The parameter list is borrowed; call step() after gradients have been
// accumulated, then zero_grad() on the model.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, double lr, int warmup_steps = 0,
       double clip_norm = 0.0, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  double last_grad_norm() const { return last_grad_norm_; }
  long steps_taken() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Eigen::MatrixXd> m_, v_;
  double lr_, beta1_, beta2_, eps_, clip_norm_;
  int warmup_;
  long t_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace diffce
