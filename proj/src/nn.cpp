#include "diffce/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace diffce {

void Tensor::init_uniform(Eigen::Index rows, Eigen::Index cols, double limit,
                          Rng& rng) {
  value.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      value(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
  grad.setZero(rows, cols);
}

Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
  return (x.array() / (1.0 + (-x.array()).exp())).matrix();
}

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& x) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
  return (s * (1.0 + x.array() * (1.0 - s))).matrix();
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  const Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.rowwise() - mx;
  const Eigen::RowVectorXd lse =
      shifted.array().exp().colwise().sum().log();
  return shifted.rowwise() - lse;
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  return log_softmax(logits).array().exp();
}

Adam::Adam(std::vector<Tensor*> params, double lr, int warmup_steps,
           double clip_norm, double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      clip_norm_(clip_norm),
      warmup_(warmup_steps) {
  if (params_.empty()) throw std::invalid_argument("Adam: no parameters");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor* p : params_) {
    m_.emplace_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.emplace_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  double sq = 0.0;
  for (const Tensor* p : params_) sq += p->grad.squaredNorm();
  last_grad_norm_ = std::sqrt(sq);
  double scale = 1.0;
  if (clip_norm_ > 0.0 && last_grad_norm_ > clip_norm_)
    scale = clip_norm_ / last_grad_norm_;
  const double warm =
      warmup_ > 0 ? std::min(1.0, static_cast<double>(t_) / warmup_) : 1.0;
  const double lr_t = lr_ * warm;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor* p = params_[i];
    const Eigen::ArrayXXd g = scale * p->grad.array();
    m_[i] = beta1_ * m_[i].array() + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i].array() + (1.0 - beta2_) * g.square();
    const Eigen::ArrayXXd mhat = m_[i].array() / bc1;
    const Eigen::ArrayXXd vhat = v_[i].array() / bc2;
    p->value.array() -= lr_t * mhat / (vhat.sqrt() + eps_);
  }
}

}  // namespace diffce
