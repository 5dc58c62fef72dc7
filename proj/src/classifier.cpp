#include "diffce/classifier.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace diffce {

struct ClassifierModel::Cache {
  Eigen::MatrixXd x;
  std::vector<Eigen::MatrixXd> r;      // pre-activations
  std::vector<Eigen::MatrixXd> a;      // post-activation (after dropout)
  std::vector<Eigen::MatrixXd> mask;   // dropout masks (empty when unused)
};

ClassifierModel::ClassifierModel(int dim, int n_classes, ClassifierConfig cfg,
                                 std::uint64_t init_seed)
    : dim_(dim), n_classes_(n_classes), cfg_(cfg) {
  if (dim <= 0 || n_classes <= 1)
    throw std::invalid_argument("ClassifierModel: need dim > 0, n_classes > 1");
  if (cfg_.hidden_dim <= 0 || cfg_.n_hidden <= 0)
    throw std::invalid_argument("ClassifierModel: invalid architecture config");
  Rng rng(init_seed);
  auto fan = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  hidden_.resize(cfg_.n_hidden);
  int in = dim;
  for (auto& layer : hidden_) {
    layer.W.init_uniform(cfg_.hidden_dim, in, fan(in), rng);
    layer.b.init_zero(cfg_.hidden_dim, 1);
    in = cfg_.hidden_dim;
  }
  out_.W.init_uniform(n_classes, in, fan(in), rng);
  out_.b.init_zero(n_classes, 1);
}

Eigen::MatrixXd ClassifierModel::forward(const Eigen::MatrixXd& x,
                                         double dropout, Rng* dropout_rng,
                                         Cache* cache) const {
  if (x.rows() != dim_)
    throw std::invalid_argument("ClassifierModel: input has " +
                                std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(dim_));
  if (cache) {
    cache->x = x;
    cache->r.clear();
    cache->a.clear();
    cache->mask.clear();
  }
  Eigen::MatrixXd a = x;
  for (const auto& layer : hidden_) {
    Eigen::MatrixXd r =
        (layer.W.value * a).colwise() + Eigen::VectorXd(layer.b.value.col(0));
    a = silu(r);
    Eigen::MatrixXd mask;
    if (dropout > 0.0) {
      if (!dropout_rng)
        throw std::invalid_argument("ClassifierModel: dropout needs an rng");
      const double keep = 1.0 - dropout;
      mask.resize(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
          mask(i, j) = dropout_rng->uniform() <= keep ? 1.0 / keep : 0.0;
      a = a.cwiseProduct(mask);
    }
    if (cache) {
      cache->r.push_back(std::move(r));
      cache->mask.push_back(std::move(mask));
      cache->a.push_back(a);
    }
  }
  return (out_.W.value * a).colwise() + Eigen::VectorXd(out_.b.value.col(0));
}

Eigen::MatrixXd ClassifierModel::logits(const Eigen::MatrixXd& x) const {
  return forward(x, 0.0, nullptr, nullptr);
}

Eigen::MatrixXd ClassifierModel::probabilities(const Eigen::MatrixXd& x) const {
  return softmax(logits(x));
}

Eigen::VectorXi ClassifierModel::predict(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd l = logits(x);
  Eigen::VectorXi out(x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    Eigen::Index arg;
    l.col(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

double ClassifierModel::accuracy(const Eigen::MatrixXd& x,
                                 const Eigen::VectorXi& y) const {
  if (x.cols() != y.size())
    throw std::invalid_argument("ClassifierModel::accuracy: size mismatch");
  const Eigen::VectorXi pred = predict(x);
  int hits = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (pred[i] == y[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

Eigen::MatrixXd ClassifierModel::logprob_input_grad(
    const Eigen::MatrixXd& x, const Eigen::VectorXi& y) const {
  if (x.cols() != y.size())
    throw std::invalid_argument("logprob_input_grad: size mismatch");
  Cache cache;
  const Eigen::MatrixXd lg = forward(x, 0.0, nullptr, &cache);
  Eigen::MatrixXd d_logits = -softmax(lg);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= n_classes_)
      throw std::invalid_argument("logprob_input_grad: label out of range");
    d_logits(y[i], i) += 1.0;
  }
  Eigen::MatrixXd d_a = out_.W.value.transpose() * d_logits;
  for (int l = cfg_.n_hidden - 1; l >= 0; --l) {
    const Eigen::MatrixXd d_r =
        d_a.cwiseProduct(silu_grad(cache.r[static_cast<std::size_t>(l)]));
    const Eigen::MatrixXd& W = hidden_[static_cast<std::size_t>(l)].W.value;
    d_a = W.transpose() * d_r;
  }
  return d_a;
}

double ClassifierModel::cross_entropy_loss(const Eigen::MatrixXd& x,
                                           const Eigen::VectorXi& y,
                                           double dropout, Rng* dropout_rng,
                                           bool accumulate_grads) {
  if (x.cols() != y.size())
    throw std::invalid_argument("cross_entropy_loss: size mismatch");
  Cache cache;
  const Eigen::MatrixXd lg =
      forward(x, dropout, dropout_rng, accumulate_grads ? &cache : nullptr);
  const Eigen::MatrixXd lsm = log_softmax(lg);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= n_classes_)
      throw std::invalid_argument("cross_entropy_loss: label out of range");
    loss -= lsm(y[i], i);
  }
  const double n = static_cast<double>(y.size());
  loss /= n;
  if (!accumulate_grads) return loss;

  Eigen::MatrixXd d_logits = lsm.array().exp();
  for (Eigen::Index i = 0; i < y.size(); ++i) d_logits(y[i], i) -= 1.0;
  d_logits /= n;

  const Eigen::MatrixXd& a_last =
      cfg_.n_hidden > 0 ? cache.a.back() : cache.x;
  out_.W.grad.noalias() += d_logits * a_last.transpose();
  out_.b.grad.col(0) += d_logits.rowwise().sum();
  Eigen::MatrixXd d_a = out_.W.value.transpose() * d_logits;
  for (int l = cfg_.n_hidden - 1; l >= 0; --l) {
    auto& layer = hidden_[static_cast<std::size_t>(l)];
    const auto& mask = cache.mask[static_cast<std::size_t>(l)];
    if (mask.size() > 0) d_a = d_a.cwiseProduct(mask);
    const Eigen::MatrixXd d_r =
        d_a.cwiseProduct(silu_grad(cache.r[static_cast<std::size_t>(l)]));
    const Eigen::MatrixXd& a_in =
        l > 0 ? cache.a[static_cast<std::size_t>(l - 1)] : cache.x;
    layer.W.grad.noalias() += d_r * a_in.transpose();
    layer.b.grad.col(0) += d_r.rowwise().sum();
    d_a = layer.W.value.transpose() * d_r;
  }
  return loss;
}

std::vector<Tensor*> ClassifierModel::parameters() {
  std::vector<Tensor*> p;
  for (auto& layer : hidden_) {
    p.push_back(&layer.W);
    p.push_back(&layer.b);
  }
  p.push_back(&out_.W);
  p.push_back(&out_.b);
  return p;
}

std::vector<std::pair<std::string, Tensor*>>
ClassifierModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> p;
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const std::string pre = "hidden" + std::to_string(l) + ".";
    p.emplace_back(pre + "W", &hidden_[l].W);
    p.emplace_back(pre + "b", &hidden_[l].b);
  }
  p.emplace_back("out.W", &out_.W);
  p.emplace_back("out.b", &out_.b);
  return p;
}

void ClassifierModel::zero_grad() {
  for (Tensor* p : parameters()) p->zero_grad();
}

Eigen::MatrixXd pgd_attack(const ClassifierModel& model,
                           const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                           const AttackConfig& cfg) {
  if (!(cfg.epsilon >= 0.0))
    throw std::invalid_argument("pgd_attack: epsilon must be >= 0");
  if (cfg.n_steps <= 0)
    throw std::invalid_argument("pgd_attack: n_steps must be positive");
  if (cfg.epsilon == 0.0) return x;
  const double step =
      cfg.step_size > 0.0 ? cfg.step_size : 2.5 * cfg.epsilon / cfg.n_steps;
  Eigen::MatrixXd adv = x;
  for (int it = 0; it < cfg.n_steps; ++it) {
    // ascend the loss = descend the true-class log-probability
    const Eigen::MatrixXd g = -model.logprob_input_grad(adv, y);
    for (Eigen::Index i = 0; i < adv.cols(); ++i) {
      const double gn = g.col(i).norm();
      if (gn == 0.0) continue;  // flat point: keep the iterate where it is
      adv.col(i) += (step / gn) * g.col(i);
      Eigen::VectorXd delta = adv.col(i) - x.col(i);
      const double dn = delta.norm();
      if (dn > cfg.epsilon) adv.col(i) = x.col(i) + (cfg.epsilon / dn) * delta;
    }
  }
  return adv;
}

ClassifierTrainTrace train_classifier(ClassifierModel& model,
                                      const Eigen::MatrixXd& x,
                                      const Eigen::VectorXi& y,
                                      const ClassifierTrainConfig& cfg) {
  if (x.cols() != y.size())
    throw std::invalid_argument("train_classifier: data/label size mismatch");
  if (x.cols() == 0)
    throw std::invalid_argument("train_classifier: empty dataset");
  Adam opt(model.parameters(), cfg.lr);
  Rng rng(cfg.seed);
  const Eigen::Index n = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const bool adversarial = cfg.epsilon > 0.0;
  const double dropout = adversarial ? 0.0 : cfg.dropout;
  ClassifierTrainTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the deterministic stream
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(
          rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(x.rows(), bsz);
      Eigen::VectorXi yb(bsz);
      for (Eigen::Index i = 0; i < bsz; ++i) {
        xb.col(i) = x.col(order[static_cast<std::size_t>(start + i)]);
        yb[i] = y[order[static_cast<std::size_t>(start + i)]];
      }
      if (adversarial) {
        AttackConfig atk;
        atk.epsilon = cfg.epsilon;
        atk.n_steps = cfg.pgd_steps;
        xb = pgd_attack(model, xb, yb, atk);
      }
      model.zero_grad();
      epoch_loss += model.cross_entropy_loss(xb, yb, dropout,
                                             dropout > 0.0 ? &rng : nullptr,
                                             true);
      opt.step();
      ++batches;
    }
    trace.loss_history.push_back(epoch_loss / batches);
  }
  model.zero_grad();
  return trace;
}

RobustCeResult robust_model_ce(const ClassifierModel& model,
                               const Eigen::VectorXd& x, int y_ce,
                               const RobustCeConfig& cfg) {
  if (y_ce < 0 || y_ce >= model.n_classes())
    throw std::invalid_argument("robust_model_ce: target class out of range");
  if (!(cfg.step_size > 0.0) || cfg.max_steps <= 0)
    throw std::invalid_argument("robust_model_ce: invalid step configuration");
  RobustCeResult res;
  res.x_ce = x;
  Eigen::VectorXi target(1);
  target[0] = y_ce;
  for (int it = 0; it < cfg.max_steps; ++it) {
    const Eigen::VectorXd p = model.probabilities(res.x_ce).col(0);
    res.confidence = p[y_ce];
    if (res.confidence >= cfg.conf_threshold) {
      res.converged = true;
      return res;
    }
    const Eigen::VectorXd g =
        model.logprob_input_grad(res.x_ce, target).col(0);
    const double gn = g.norm();
    if (gn == 0.0) break;  // no usable ascent direction
    res.x_ce += (cfg.step_size / gn) * g;
    if (cfg.clip)
      res.x_ce = res.x_ce.cwiseMax(cfg.clip->first).cwiseMin(cfg.clip->second);
    ++res.steps;
  }
  res.confidence = model.probabilities(res.x_ce)(y_ce, 0);
  res.converged = res.confidence >= cfg.conf_threshold;
  return res;
}

}  // namespace diffce
