#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffce/ce_pipeline.hpp"
#include "diffce/mixture.hpp"
#include "diffce/neighborhood.hpp"
#include "diffce/predictor.hpp"
#include "diffce/rng.hpp"
#include "diffce/sampler.hpp"
#include "diffce/schedule.hpp"
#include "diffce/special.hpp"

namespace py = pybind11;
using namespace diffce;

namespace {

NeighborhoodKind kind_from_string(const std::string& s) {
  if (s == "boltzmann") return NeighborhoodKind::kBoltzmann;
  if (s == "gaussian") return NeighborhoodKind::kGaussian;
  throw std::invalid_argument("neighborhood kind must be 'boltzmann' or 'gaussian'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "diffusion counterfactual core";

  py::class_<VpSchedule>(m, "VpSchedule")
      .def(py::init([](double beta_min, double beta_max, double t_min) {
             VpSchedule s;
             s.beta_min = beta_min;
             s.beta_max = beta_max;
             s.t_min = t_min;
             s.validate();
             return s;
           }),
           py::arg("beta_min") = 0.1, py::arg("beta_max") = 20.0,
           py::arg("t_min") = 1e-3)
      .def_readonly("beta_min", &VpSchedule::beta_min)
      .def_readonly("beta_max", &VpSchedule::beta_max)
      .def_readonly("t_min", &VpSchedule::t_min)
      .def("beta", &VpSchedule::beta, py::arg("t"))
      .def("alpha", &VpSchedule::alpha, py::arg("t"))
      .def("sigma", &VpSchedule::sigma, py::arg("t"))
      .def(
          "perturb",
          [](const VpSchedule& s, const Eigen::VectorXd& x0, double t,
             const Eigen::VectorXd& z) { return s.perturb(x0, t, z); },
          py::arg("x0"), py::arg("t"), py::arg("z"));

  py::class_<MixtureComponent>(m, "MixtureComponent")
      .def(py::init([](double weight, const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& cov_diag, int cls) {
             return MixtureComponent{weight, mean, cov_diag, cls};
           }),
           py::arg("weight"), py::arg("mean"), py::arg("cov_diag"),
           py::arg("cls"));

  py::class_<GaussianMixture>(m, "GaussianMixture")
      .def(py::init<std::vector<MixtureComponent>, int>(),
           py::arg("components"), py::arg("n_classes"))
      .def_property_readonly("dim", &GaussianMixture::dim)
      .def_property_readonly("n_classes", &GaussianMixture::n_classes)
      .def(
          "diffused_score",
          [](const GaussianMixture& g, const VpSchedule& s,
             const Eigen::VectorXd& x, double t, std::optional<int> cls) {
            return g.diffused_score(s, x, t, cls);
          },
          py::arg("sched"), py::arg("x"), py::arg("t"),
          py::arg("cls") = std::nullopt)
      .def(
          "noise_prediction",
          [](const GaussianMixture& g, const VpSchedule& s,
             const Eigen::VectorXd& x, double t, std::optional<int> cls) {
            return g.noise_prediction(s, x, t, cls);
          },
          py::arg("sched"), py::arg("x"), py::arg("t"),
          py::arg("cls") = std::nullopt)
      .def("diffused_log_density", &GaussianMixture::diffused_log_density,
           py::arg("sched"), py::arg("x"), py::arg("t"),
           py::arg("cls") = std::nullopt)
      .def(
          "bayes_posterior",
          [](const GaussianMixture& g, const Eigen::VectorXd& x) {
            return g.bayes_posterior(x);
          },
          py::arg("x"))
      .def("bayes_classify", &GaussianMixture::bayes_classify, py::arg("x"))
      .def(
          "sample_labeled",
          [](const GaussianMixture& g, int n, std::uint64_t seed) {
            Rng rng(seed);
            return g.sample_labeled(n, rng);
          },
          py::arg("n"), py::arg("seed"));

  py::class_<MixturePredictor>(m, "MixturePredictor")
      .def(py::init<const GaussianMixture&, const VpSchedule&>(),
           py::arg("mixture"), py::arg("sched"),
           py::keep_alive<1, 2>())  // predictor refers into the mixture
      .def(
          "predict",
          [](const MixturePredictor& p, const Eigen::MatrixXd& x, double t,
             std::optional<int> cls) { return p.predict(x, t, cls); },
          py::arg("x_t"), py::arg("t"), py::arg("cls") = std::nullopt);

  m.def("erfcx", &erfcx, py::arg("x"));
  m.def("stable_erfc_ratio", &stable_erfc_ratio, py::arg("u"));
  m.def("guided_noise", &guided_noise, py::arg("cond"), py::arg("uncond"),
        py::arg("w"));
  m.def("boltzmann_slope", &boltzmann_slope, py::arg("sched"),
        py::arg("sigma_ce"), py::arg("t"));
  m.def("boltzmann_exact_score_1d", &boltzmann_exact_score_1d,
        py::arg("sched"), py::arg("sigma_ce"), py::arg("y"), py::arg("t"));
  m.def("boltzmann_approx_score_1d", &boltzmann_approx_score_1d,
        py::arg("sched"), py::arg("sigma_ce"), py::arg("y"), py::arg("t"));
  m.def(
      "neighborhood_score",
      [](const VpSchedule& s, const std::string& kind,
         const Eigen::VectorXd& center, double scale,
         const Eigen::VectorXd& x_t, double t) {
        NeighborhoodSpec spec;
        spec.kind = kind_from_string(kind);
        spec.center = center;
        spec.scale = scale;
        return neighborhood_score(s, spec, x_t, t);
      },
      py::arg("sched"), py::arg("kind"), py::arg("center"), py::arg("scale"),
      py::arg("x_t"), py::arg("t"));

  m.def(
      "generate_ce",
      [](const VpSchedule& sched, const MixturePredictor& predictor,
         const Eigen::VectorXd& x, int y_ce, const std::string& kind, double w,
         double sigma_ce, int n_steps, std::uint64_t seed,
         std::optional<std::pair<double, double>> clip_range,
         bool neighborhood_noise_units) {
        CeParams params;
        params.kind = kind_from_string(kind);
        params.w = w;
        params.sigma_ce = sigma_ce;
        params.neighborhood_noise_units = neighborhood_noise_units;
        SamplerConfig cfg;
        cfg.n_steps = n_steps;
        cfg.seed = seed;
        cfg.clip_range = clip_range;
        return generate_ce(sched, predictor, x, y_ce, params, cfg);
      },
      py::arg("sched"), py::arg("predictor"), py::arg("x"), py::arg("y_ce"),
      py::arg("kind") = "boltzmann", py::arg("w") = 15.0,
      py::arg("sigma_ce") = 0.2, py::arg("n_steps") = 1000,
      py::arg("seed") = 0, py::arg("clip_range") = std::nullopt,
      py::arg("neighborhood_noise_units") = false);

  m.def(
      "ce_distances",
      [](const Eigen::VectorXd& x, const Eigen::VectorXd& x_ce,
         double l0_threshold) {
        const CeDistances d = ce_distances(x, x_ce, l0_threshold);
        return std::make_pair(d.l2, d.l0);
      },
      py::arg("x"), py::arg("x_ce"), py::arg("l0_threshold") = 0.02);

  m.def(
      "derive_seed",
      [](std::uint64_t master, const std::vector<std::uint64_t>& path) {
        return derive_seed_range(master, path);
      },
      py::arg("master"), py::arg("path"));
}
