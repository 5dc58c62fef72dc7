#include <doctest.h>

#include <cmath>

#include "diffce/classifier.hpp"
#include "diffce/rng.hpp"
#include "oracle/oracles.hpp"

using diffce::AttackConfig;
using diffce::ClassifierConfig;
using diffce::ClassifierModel;
using diffce::ClassifierTrainConfig;
using diffce::pgd_attack;
using diffce::Rng;
using diffce::robust_model_ce;
using diffce::RobustCeConfig;
using diffce::train_classifier;

namespace {

ClassifierModel tiny_model(std::uint64_t seed = 3) {
  ClassifierConfig cfg;
  cfg.hidden_dim = 6;
  cfg.n_hidden = 2;
  return ClassifierModel(3, 3, cfg, seed);
}

// Two linearly separable 2d blobs along the first coordinate.
std::pair<Eigen::MatrixXd, Eigen::VectorXi> blobs(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(2, n);
  Eigen::VectorXi y(n);
  for (int j = 0; j < n; ++j) {
    const int c = j % 2;
    y[j] = c;
    x.col(j) = rng.normal_vec(2) * 0.25;
    x(0, j) += c == 0 ? -1.0 : 1.0;
  }
  return {x, y};
}

}  // namespace

TEST_CASE("cross-entropy parameter gradients match central finite differences") {
  ClassifierModel model = tiny_model();
  Rng rng(7);
  Eigen::MatrixXd x(3, 5);
  rng.fill_normal(x);
  Eigen::VectorXi y(5);
  y << 0, 2, 1, 1, 0;

  model.zero_grad();
  (void)model.cross_entropy_loss(x, y, 0.0, nullptr, true);

  const double h = 1e-5;
  for (auto& [name, tensor] : model.named_parameters()) {
    const Eigen::Index n = tensor->value.size();
    for (Eigen::Index k = 0; k < n; k += std::max<Eigen::Index>(1, n / 7)) {
      double* v = tensor->value.data() + k;
      const double keep = *v;
      *v = keep + h;
      const double up = model.cross_entropy_loss(x, y, 0.0, nullptr, false);
      *v = keep - h;
      const double dn = model.cross_entropy_loss(x, y, 0.0, nullptr, false);
      *v = keep;
      const double fd = (up - dn) / (2.0 * h);
      INFO(name, "[", k, "]");
      CHECK(tensor->grad.data()[k] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("input gradients match finite differences of the log-probability") {
  ClassifierModel model = tiny_model(5);
  Rng rng(11);
  Eigen::MatrixXd x(3, 4);
  rng.fill_normal(x);
  Eigen::VectorXi y(4);
  y << 1, 0, 2, 1;
  const Eigen::MatrixXd grad = model.logprob_input_grad(x, y);
  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd fd = oracle::fd_gradient(
        [&](const Eigen::VectorXd& p) {
          const Eigen::MatrixXd lp =
              model.probabilities(p).array().log().matrix();
          return lp(y[j], 0);
        },
        x.col(j), 1e-6);
    CHECK((grad.col(j) - fd).norm() < 1e-7 * (1.0 + fd.norm()));
  }
}

TEST_CASE("probabilities, predictions, accuracy are mutually consistent") {
  ClassifierModel model = tiny_model(9);
  Rng rng(13);
  Eigen::MatrixXd x(3, 10);
  rng.fill_normal(x);
  const Eigen::MatrixXd p = model.probabilities(x);
  const Eigen::VectorXi pred = model.predict(x);
  int agree = 0;
  for (int j = 0; j < 10; ++j) {
    CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
    int arg = 0;
    p.col(j).maxCoeff(&arg);
    CHECK(pred[j] == arg);
    agree += pred[j] == j % 3 ? 1 : 0;
  }
  Eigen::VectorXi labels(10);
  for (int j = 0; j < 10; ++j) labels[j] = j % 3;
  CHECK(model.accuracy(x, labels) == doctest::Approx(agree / 10.0).epsilon(1e-12));
}

TEST_CASE("dropout perturbs the training loss but never inference") {
  ClassifierModel model = tiny_model(15);
  Rng rng(17);
  Eigen::MatrixXd x(3, 8);
  rng.fill_normal(x);
  Eigen::VectorXi y(8);
  for (int j = 0; j < 8; ++j) y[j] = j % 3;
  const double clean = model.cross_entropy_loss(x, y, 0.0, nullptr, false);
  Rng d1(100), d2(100), d3(101);
  const double a = model.cross_entropy_loss(x, y, 0.5, &d1, false);
  const double b = model.cross_entropy_loss(x, y, 0.5, &d2, false);
  const double c = model.cross_entropy_loss(x, y, 0.5, &d3, false);
  CHECK(a == b);        // same mask stream
  CHECK(a != clean);    // the mask actually bites
  CHECK(a != c);        // different mask stream
  // logits never see dropout
  const Eigen::MatrixXd l1 = model.logits(x);
  const Eigen::MatrixXd l2 = model.logits(x);
  CHECK((l1 - l2).norm() == 0.0);
}

TEST_CASE("pgd respects the budget and never helps the attacked class") {
  const auto [x, y] = blobs(64, 21);
  ClassifierConfig cfg;
  cfg.hidden_dim = 16;
  cfg.n_hidden = 2;
  ClassifierModel model(2, 2, cfg, 23);
  ClassifierTrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 32;
  tc.dropout = 0.0;
  tc.seed = 25;
  train_classifier(model, x, y, tc);
  REQUIRE(model.accuracy(x, y) > 0.95);

  AttackConfig ac;
  ac.epsilon = 0.4;
  ac.n_steps = 10;
  const Eigen::MatrixXd adv = pgd_attack(model, x, y, ac);
  double max_norm = 0.0;
  for (int j = 0; j < x.cols(); ++j)
    max_norm = std::max(max_norm, (adv.col(j) - x.col(j)).norm());
  CHECK(max_norm <= ac.epsilon + 1e-9);
  CHECK(max_norm > 0.39);  // the attack actually uses its budget
  CHECK(model.accuracy(adv, y) < model.accuracy(x, y));

  // zero budget returns the inputs untouched
  ac.epsilon = 0.0;
  const Eigen::MatrixXd same = pgd_attack(model, x, y, ac);
  CHECK((same - x).norm() == 0.0);

  // deterministic: no random restart
  ac.epsilon = 0.4;
  const Eigen::MatrixXd again = pgd_attack(model, x, y, ac);
  CHECK((again - adv).norm() == 0.0);
}

TEST_CASE("adversarial training shifts weight onto the robust feature") {
  // coordinate 0 separates by 1.0 with sigma 0.15 (safe under the budget),
  // coordinate 1 by 0.6 with sigma 0.03 (10 sigma, but erased by the attack)
  Rng rng(27);
  const int n = 200;
  Eigen::MatrixXd x(2, n);
  Eigen::VectorXi y(n);
  for (int j = 0; j < n; ++j) {
    const int c = j % 2;
    const double s = c == 0 ? -1.0 : 1.0;
    y[j] = c;
    x(0, j) = s * 0.5 + 0.15 * rng.normal();
    x(1, j) = s * 0.3 + 0.03 * rng.normal();
  }
  ClassifierConfig cfg;
  cfg.hidden_dim = 16;
  cfg.n_hidden = 2;
  ClassifierTrainConfig std_tc;
  std_tc.epochs = 25;
  std_tc.dropout = 0.0;
  std_tc.seed = 29;
  ClassifierModel std_model(2, 2, cfg, 31);
  const auto std_trace = train_classifier(std_model, x, y, std_tc);
  CHECK(std_trace.loss_history.size() == 25);
  CHECK(std_trace.loss_history.back() < std_trace.loss_history.front());

  ClassifierTrainConfig adv_tc = std_tc;
  adv_tc.epsilon = 0.4;
  ClassifierModel adv_model(2, 2, cfg, 31);
  train_classifier(adv_model, x, y, adv_tc);

  AttackConfig ac;
  ac.epsilon = 0.4;
  ac.n_steps = 10;
  const double std_rob = std_model.accuracy(pgd_attack(std_model, x, y, ac), y);
  const double adv_rob = adv_model.accuracy(pgd_attack(adv_model, x, y, ac), y);
  CHECK(adv_rob > std_rob);
  CHECK(adv_model.accuracy(x, y) > 0.9);  // clean accuracy survives

  // same seed reproduces the same trained weights
  ClassifierModel repeat(2, 2, cfg, 31);
  train_classifier(repeat, x, y, std_tc);
  Rng probe_rng(33);
  const Eigen::MatrixXd probe = probe_rng.normal_vec(2);
  CHECK((repeat.logits(probe) - std_model.logits(probe)).norm() == 0.0);
}

TEST_CASE("robust_model_ce walks to the requested confidence") {
  const auto [x, y] = blobs(128, 35);
  ClassifierConfig cfg;
  cfg.hidden_dim = 16;
  cfg.n_hidden = 2;
  ClassifierModel model(2, 2, cfg, 37);
  ClassifierTrainConfig tc;
  tc.epochs = 30;
  tc.dropout = 0.0;
  tc.seed = 39;
  train_classifier(model, x, y, tc);

  Eigen::VectorXd source(2);
  source << -1.0, 0.0;  // firmly class 0
  RobustCeConfig rc;
  rc.conf_threshold = 0.9;
  rc.clip.reset();
  const auto res = robust_model_ce(model, source, 1, rc);
  CHECK(res.converged);
  CHECK(res.confidence >= 0.9);
  CHECK(res.steps <= rc.max_steps);
  CHECK(model.probabilities(res.x_ce)(1, 0) == doctest::Approx(res.confidence));
  // moved toward the other blob, step budget respected
  CHECK(res.x_ce[0] > source[0]);
  CHECK((res.x_ce - source).norm() <= rc.step_size * res.steps + 1e-9);

  // already across the threshold (the previous endpoint is): zero steps
  const auto trivial = robust_model_ce(model, res.x_ce, 1, rc);
  CHECK(trivial.converged);
  CHECK(trivial.steps == 0);
  CHECK((trivial.x_ce - res.x_ce).norm() == 0.0);

  // clip keeps the walk inside the box
  RobustCeConfig boxed = rc;
  boxed.clip = std::make_pair(-0.5, 0.5);
  const auto clipped = robust_model_ce(model, source, 1, boxed);
  CHECK(clipped.x_ce.maxCoeff() <= 0.5);
  CHECK(clipped.x_ce.minCoeff() >= -0.5);
}
