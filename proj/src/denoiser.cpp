#include "diffce/denoiser.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffce {

struct DenoiserModel::Cache {
  Eigen::MatrixXd x;
  Eigen::MatrixXd tfeat;
  std::vector<int> emb_cols;
  std::vector<Eigen::MatrixXd> h;  // n_blocks + 1 states
  std::vector<Eigen::MatrixXd> r;  // block pre-activations
  std::vector<Eigen::MatrixXd> s;  // block activations
};

DenoiserModel::DenoiserModel(int data_dim, int n_classes, DenoiserConfig cfg,
                             std::uint64_t init_seed)
    : data_dim_(data_dim), n_classes_(n_classes), cfg_(cfg) {
  if (data_dim <= 0 || n_classes <= 0)
    throw std::invalid_argument("DenoiserModel: dimensions must be positive");
  if (cfg_.hidden_dim <= 0 || cfg_.n_blocks <= 0 || cfg_.time_freqs <= 0)
    throw std::invalid_argument("DenoiserModel: invalid architecture config");
  const int h = cfg_.hidden_dim;
  const int tf = 2 * cfg_.time_freqs;
  // log-spaced angular frequencies covering t in [0, 1]
  freqs_.resize(cfg_.time_freqs);
  for (int i = 0; i < cfg_.time_freqs; ++i)
    freqs_[i] = std::pow(
        1000.0, cfg_.time_freqs == 1
                    ? 0.0
                    : static_cast<double>(i) / (cfg_.time_freqs - 1));

  Rng rng(init_seed);
  auto fan = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  in_W_.init_uniform(h, data_dim, fan(data_dim), rng);
  in_b_.init_zero(h, 1);
  time_W_.init_uniform(h, tf, fan(tf), rng);
  time_b_.init_zero(h, 1);
  emb_.init_uniform(h, n_classes + 1, fan(h), rng);
  blocks_.resize(cfg_.n_blocks);
  for (auto& blk : blocks_) {
    blk.W1.init_uniform(h, h, fan(h), rng);
    blk.b1.init_zero(h, 1);
    // zero-init the block output so every block starts as the identity
    blk.W2.init_zero(h, h);
    blk.b2.init_zero(h, 1);
  }
  out_W_.init_uniform(data_dim, h, fan(h), rng);
  out_b_.init_zero(data_dim, 1);
}

Eigen::MatrixXd DenoiserModel::time_features(const Eigen::VectorXd& ts) const {
  const Eigen::Index n = ts.size();
  Eigen::MatrixXd f(2 * cfg_.time_freqs, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < cfg_.time_freqs; ++j) {
      const double a = freqs_[j] * ts[i];
      f(2 * j, i) = std::sin(a);
      f(2 * j + 1, i) = std::cos(a);
    }
  }
  return f;
}

Eigen::MatrixXd DenoiserModel::forward(const Eigen::MatrixXd& x_t,
                                       const Eigen::VectorXd& ts,
                                       const std::vector<int>& cls,
                                       Cache* cache) const {
  const Eigen::Index n = x_t.cols();
  if (x_t.rows() != data_dim_)
    throw std::invalid_argument("DenoiserModel: input has " +
                                std::to_string(x_t.rows()) +
                                " rows, expected " + std::to_string(data_dim_));
  if (ts.size() != n || static_cast<Eigen::Index>(cls.size()) != n)
    throw std::invalid_argument(
        "DenoiserModel: ts/cls batch size mismatch");

  Eigen::MatrixXd tfeat = time_features(ts);
  Eigen::MatrixXd cond = (time_W_.value * tfeat).colwise() +
                         Eigen::VectorXd(time_b_.value.col(0));
  std::vector<int> emb_cols(cls.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    int c = cls[static_cast<std::size_t>(i)];
    if (c < -1 || c >= n_classes_)
      throw std::invalid_argument("DenoiserModel: class " + std::to_string(c) +
                                  " outside [-1, " +
                                  std::to_string(n_classes_) + ")");
    const int col = c < 0 ? n_classes_ : c;
    emb_cols[static_cast<std::size_t>(i)] = col;
    cond.col(i) += emb_.value.col(col);
  }

  Eigen::MatrixXd h =
      ((in_W_.value * x_t).colwise() + Eigen::VectorXd(in_b_.value.col(0))) +
      cond;
  if (cache) {
    cache->x = x_t;
    cache->tfeat = std::move(tfeat);
    cache->emb_cols = std::move(emb_cols);
    cache->h.clear();
    cache->r.clear();
    cache->s.clear();
    cache->h.push_back(h);
  }
  for (const auto& blk : blocks_) {
    Eigen::MatrixXd r =
        (blk.W1.value * h).colwise() + Eigen::VectorXd(blk.b1.value.col(0));
    Eigen::MatrixXd s = silu(r);
    h = h + ((blk.W2.value * s).colwise() +
             Eigen::VectorXd(blk.b2.value.col(0)));
    if (cache) {
      cache->r.push_back(std::move(r));
      cache->s.push_back(std::move(s));
      cache->h.push_back(h);
    }
  }
  return (out_W_.value * h).colwise() + Eigen::VectorXd(out_b_.value.col(0));
}

void DenoiserModel::backward(const Eigen::MatrixXd& d_eps, const Cache& cache) {
  const Eigen::MatrixXd& h_last = cache.h.back();
  out_W_.grad.noalias() += d_eps * h_last.transpose();
  out_b_.grad.col(0) += d_eps.rowwise().sum();
  Eigen::MatrixXd d_h = out_W_.value.transpose() * d_eps;
  for (int k = cfg_.n_blocks - 1; k >= 0; --k) {
    auto& blk = blocks_[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd& s = cache.s[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd& r = cache.r[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd& h_in = cache.h[static_cast<std::size_t>(k)];
    blk.W2.grad.noalias() += d_h * s.transpose();
    blk.b2.grad.col(0) += d_h.rowwise().sum();
    Eigen::MatrixXd d_r =
        (blk.W2.value.transpose() * d_h).cwiseProduct(silu_grad(r));
    blk.W1.grad.noalias() += d_r * h_in.transpose();
    blk.b1.grad.col(0) += d_r.rowwise().sum();
    d_h.noalias() += blk.W1.value.transpose() * d_r;
  }
  in_W_.grad.noalias() += d_h * cache.x.transpose();
  in_b_.grad.col(0) += d_h.rowwise().sum();
  time_W_.grad.noalias() += d_h * cache.tfeat.transpose();
  time_b_.grad.col(0) += d_h.rowwise().sum();
  for (Eigen::Index i = 0; i < d_h.cols(); ++i)
    emb_.grad.col(cache.emb_cols[static_cast<std::size_t>(i)]) += d_h.col(i);
}

Eigen::MatrixXd DenoiserModel::predict(const Eigen::MatrixXd& x_t, double t,
                                       std::optional<int> cls) const {
  const Eigen::Index n = x_t.cols();
  const Eigen::VectorXd ts = Eigen::VectorXd::Constant(n, t);
  std::vector<int> c(static_cast<std::size_t>(n), cls ? *cls : -1);
  return forward(x_t, ts, c, nullptr);
}

Eigen::MatrixXd DenoiserModel::predict_each(const Eigen::MatrixXd& x_t,
                                            const Eigen::VectorXd& ts,
                                            const std::vector<int>& cls) const {
  return forward(x_t, ts, cls, nullptr);
}

double DenoiserModel::dsm_loss(const VpSchedule& sched,
                               const Eigen::MatrixXd& x0,
                               const Eigen::MatrixXd& z,
                               const Eigen::VectorXd& ts,
                               const std::vector<int>& cls,
                               bool accumulate_grads) {
  if (x0.rows() != z.rows() || x0.cols() != z.cols())
    throw std::invalid_argument("dsm_loss: x0/z shape mismatch");
  const Eigen::Index n = x0.cols();
  Eigen::MatrixXd x_t(x0.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [a, s] = sched.alpha_sigma(ts[i]);
    x_t.col(i) = a * x0.col(i) + s * z.col(i);
  }
  Cache cache;
  const Eigen::MatrixXd eps =
      forward(x_t, ts, cls, accumulate_grads ? &cache : nullptr);
  const Eigen::MatrixXd diff = eps - z;
  const double denom = static_cast<double>(x0.size());
  const double loss = diff.squaredNorm() / denom;
  if (accumulate_grads) backward((2.0 / denom) * diff, cache);
  return loss;
}

std::vector<Tensor*> DenoiserModel::parameters() {
  std::vector<Tensor*> p = {&in_W_, &in_b_, &time_W_, &time_b_, &emb_};
  for (auto& blk : blocks_) {
    p.push_back(&blk.W1);
    p.push_back(&blk.b1);
    p.push_back(&blk.W2);
    p.push_back(&blk.b2);
  }
  p.push_back(&out_W_);
  p.push_back(&out_b_);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> DenoiserModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> p = {
      {"in.W", &in_W_},     {"in.b", &in_b_},
      {"time.W", &time_W_}, {"time.b", &time_b_},
      {"emb", &emb_}};
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const std::string pre = "block" + std::to_string(k) + ".";
    p.emplace_back(pre + "W1", &blocks_[k].W1);
    p.emplace_back(pre + "b1", &blocks_[k].b1);
    p.emplace_back(pre + "W2", &blocks_[k].W2);
    p.emplace_back(pre + "b2", &blocks_[k].b2);
  }
  p.emplace_back("out.W", &out_W_);
  p.emplace_back("out.b", &out_b_);
  return p;
}

void DenoiserModel::zero_grad() {
  for (Tensor* p : parameters()) p->zero_grad();
}

DsmTrainTrace train_denoiser_dsm(DenoiserModel& model, const VpSchedule& sched,
                                 const Eigen::MatrixXd& data,
                                 const Eigen::VectorXi& labels,
                                 const DsmTrainConfig& cfg) {
  if (data.cols() != labels.size())
    throw std::invalid_argument("train_denoiser_dsm: data/label size mismatch");
  if (data.cols() == 0)
    throw std::invalid_argument("train_denoiser_dsm: empty dataset");
  Adam opt(model.parameters(), cfg.lr, cfg.warmup_steps, cfg.clip_norm);
  Rng rng(cfg.seed);
  const Eigen::Index n = data.cols();
  const int b = cfg.batch_size;
  DsmTrainTrace trace;
  double window = 0.0;
  int window_n = 0;
  Eigen::MatrixXd x0(data.rows(), b), z(data.rows(), b);
  Eigen::VectorXd ts(b);
  std::vector<int> cls(static_cast<std::size_t>(b));
  for (int step = 0; step < cfg.steps; ++step) {
    for (int i = 0; i < b; ++i) {
      const auto idx = static_cast<Eigen::Index>(
          rng.uniform_int(static_cast<std::uint64_t>(n)));
      x0.col(i) = data.col(idx);
      // t uniform on [t_min, 1]
      ts[i] = sched.t_min + (1.0 - sched.t_min) * rng.uniform();
      const bool drop = rng.uniform() < cfg.cond_dropout;
      cls[static_cast<std::size_t>(i)] = drop ? -1 : labels[idx];
    }
    rng.fill_normal(z);
    model.zero_grad();
    const double loss = model.dsm_loss(sched, x0, z, ts, cls, true);
    opt.step();
    window += loss;
    ++window_n;
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
      trace.loss_history.push_back(window / window_n);
      window = 0.0;
      window_n = 0;
    }
  }
  model.zero_grad();
  return trace;
}

}  // namespace diffce
