#include <doctest.h>

#include <cmath>

#include "diffce/denoiser.hpp"
#include "diffce/rng.hpp"
#include "oracle/oracles.hpp"

using diffce::DenoiserConfig;
using diffce::DenoiserModel;
using diffce::DsmTrainConfig;
using diffce::Rng;
using diffce::train_denoiser_dsm;
using diffce::VpSchedule;

namespace {

DenoiserModel tiny_model(std::uint64_t seed = 3) {
  DenoiserConfig cfg;
  cfg.hidden_dim = 8;
  cfg.n_blocks = 2;
  cfg.time_freqs = 4;
  return DenoiserModel(3, 2, cfg, seed);
}

}  // namespace

TEST_CASE("dsm parameter gradients match central finite differences") {
  VpSchedule sched;
  DenoiserModel model = tiny_model();
  Rng rng(11);
  Eigen::MatrixXd x0(3, 5), z(3, 5);
  rng.fill_normal(x0);
  rng.fill_normal(z);
  Eigen::VectorXd ts(5);
  ts << 0.1, 0.35, 0.6, 0.85, 1.0;
  const std::vector<int> cls = {0, 1, -1, 0, 1};

  model.zero_grad();
  (void)model.dsm_loss(sched, x0, z, ts, cls, /*accumulate_grads=*/true);

  const double h = 1e-5;
  for (auto& [name, tensor] : model.named_parameters()) {
    // probe a handful of entries per tensor
    const Eigen::Index n = tensor->value.size();
    for (Eigen::Index k = 0; k < n; k += std::max<Eigen::Index>(1, n / 7)) {
      double* v = tensor->value.data() + k;
      const double keep = *v;
      *v = keep + h;
      const double up = model.dsm_loss(sched, x0, z, ts, cls, false);
      *v = keep - h;
      const double dn = model.dsm_loss(sched, x0, z, ts, cls, false);
      *v = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double got = tensor->grad.data()[k];
      INFO(name, "[", k, "]");
      CHECK(got == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("dsm loss equals the mean squared prediction error by hand") {
  VpSchedule sched;
  DenoiserModel model = tiny_model(9);
  Rng rng(13);
  Eigen::MatrixXd x0(3, 4), z(3, 4);
  rng.fill_normal(x0);
  rng.fill_normal(z);
  Eigen::VectorXd ts(4);
  ts << 0.2, 0.5, 0.7, 0.9;
  const std::vector<int> cls = {1, -1, 0, 1};

  Eigen::MatrixXd x_t(3, 4);
  for (int j = 0; j < 4; ++j) {
    const auto [a, s] = sched.alpha_sigma(ts[j]);
    x_t.col(j) = a * x0.col(j) + s * z.col(j);
  }
  const Eigen::MatrixXd pred = model.predict_each(x_t, ts, cls);
  const double want = (pred - z).squaredNorm() / static_cast<double>(pred.size());
  const double got = model.dsm_loss(sched, x0, z, ts, cls, false);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("null and class conditions give different predictions") {
  VpSchedule sched;
  DenoiserModel model = tiny_model(21);
  Rng rng(17);
  const Eigen::MatrixXd x = rng.normal_vec(3);
  const Eigen::MatrixXd cond = model.predict(x, 0.5, 0);
  const Eigen::MatrixXd other = model.predict(x, 0.5, 1);
  const Eigen::MatrixXd uncond = model.predict(x, 0.5, std::nullopt);
  CHECK((cond - uncond).norm() > 1e-8);
  CHECK((cond - other).norm() > 1e-8);
}

TEST_CASE("predict_each agrees with predict on constant time and class") {
  VpSchedule sched;
  DenoiserModel model = tiny_model(33);
  Rng rng(19);
  Eigen::MatrixXd x(3, 6);
  rng.fill_normal(x);
  const Eigen::VectorXd ts = Eigen::VectorXd::Constant(6, 0.4);
  const Eigen::MatrixXd a = model.predict(x, 0.4, 1);
  const Eigen::MatrixXd b = model.predict_each(x, ts, std::vector<int>(6, 1));
  CHECK((a - b).norm() < 1e-14);
  const Eigen::MatrixXd u = model.predict(x, 0.4, std::nullopt);
  const Eigen::MatrixXd v = model.predict_each(x, ts, std::vector<int>(6, -1));
  CHECK((u - v).norm() < 1e-14);
}

TEST_CASE("same init seed, same model; different seed, different model") {
  Rng rng(23);
  const Eigen::MatrixXd x = rng.normal_vec(3);
  DenoiserModel a = tiny_model(7), b = tiny_model(7), c = tiny_model(8);
  CHECK((a.predict(x, 0.5, 0) - b.predict(x, 0.5, 0)).norm() == 0.0);
  CHECK((a.predict(x, 0.5, 0) - c.predict(x, 0.5, 0)).norm() > 1e-8);
}

TEST_CASE("short dsm training reduces the loss on a simple mixture") {
  VpSchedule sched;
  Rng rng(29);
  // two well-separated 1-of-2 clusters in 3d
  Eigen::MatrixXd data(3, 256);
  Eigen::VectorXi labels(256);
  for (int j = 0; j < 256; ++j) {
    const int c = j % 2;
    labels[j] = c;
    data.col(j) = rng.normal_vec(3) * 0.3;
    data(0, j) += c == 0 ? -1.5 : 1.5;
  }
  DenoiserConfig mc;
  mc.hidden_dim = 24;
  mc.n_blocks = 2;
  mc.time_freqs = 8;
  DenoiserModel model(3, 2, mc, 41);
  DsmTrainConfig tc;
  tc.steps = 600;
  tc.batch_size = 64;
  tc.lr = 3e-3;
  tc.warmup_steps = 50;
  tc.seed = 43;
  tc.log_every = 100;
  const auto trace = train_denoiser_dsm(model, sched, data, labels, tc);
  REQUIRE(trace.loss_history.size() == 6);
  CHECK(trace.loss_history.back() < 0.75 * trace.loss_history.front());
}
