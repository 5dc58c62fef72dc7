#include "diffce/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace diffce {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::runtime_error("config error at '" + path + "': " + msg);
}

// Rejects unknown keys so typos cannot silently fall back to defaults.
void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) fail(path + "." + key, "unknown key");
}

double get_number(const json& obj, const std::string& path, const char* key,
                  double dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_number()) fail(path + "." + key, "expected a number");
  return obj.at(key).get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key,
            int dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_number_integer())
    fail(path + "." + key, "expected an integer");
  return obj.at(key).get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_boolean()) fail(path + "." + key, "expected a boolean");
  return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const std::string& path,
                       const char* key, const std::string& dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

std::optional<std::pair<double, double>> get_range(const json& obj,
                                                   const std::string& path,
                                                   const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  const json& a = obj.at(key);
  if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
    fail(path + "." + key, "expected null or [low, high]");
  const double lo = a[0].get<double>();
  const double hi = a[1].get<double>();
  if (!(lo < hi)) fail(path + "." + key, "low must be less than high");
  return std::make_pair(lo, hi);
}

Eigen::VectorXd get_vector(const json& a, const std::string& path) {
  if (!a.is_array() || a.empty()) fail(path, "expected a non-empty array");
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) fail(path, "expected numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

json range_to_json(const std::optional<std::pair<double, double>>& r) {
  if (!r) return nullptr;
  return json::array({r->first, r->second});
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  check_keys(j, "config",
             {"name", "seed", "data", "schedule", "score_model", "classifiers",
              "ce", "eval"});
  cfg.name = get_string(j, "config", "name", cfg.name);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
      fail("config.seed", "expected an integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "config.data",
               {"source", "n_train", "n_eval", "components", "idx_images",
                "idx_labels", "idx_eval_images", "idx_eval_labels",
                "idx_n_classes"});
    cfg.data.source = get_string(d, "config.data", "source", cfg.data.source);
    if (cfg.data.source != "mixture" && cfg.data.source != "idx")
      fail("config.data.source", "must be 'mixture' or 'idx'");
    cfg.data.n_train = get_int(d, "config.data", "n_train", cfg.data.n_train);
    cfg.data.n_eval = get_int(d, "config.data", "n_eval", cfg.data.n_eval);
    if (cfg.data.source == "mixture") {
      if (!d.contains("components"))
        fail("config.data.components", "required for mixture sources");
      const json& comps = d.at("components");
      if (!comps.is_array() || comps.empty())
        fail("config.data.components", "expected a non-empty array");
      int max_cls = 0;
      for (std::size_t k = 0; k < comps.size(); ++k) {
        const std::string p =
            "config.data.components[" + std::to_string(k) + "]";
        check_keys(comps[k], p, {"weight", "mean", "cov_diag", "class"});
        MixtureComponent c;
        c.weight = get_number(comps[k], p, "weight", -1.0);
        if (!comps[k].contains("mean")) fail(p + ".mean", "required");
        c.mean = get_vector(comps[k].at("mean"), p + ".mean");
        if (!comps[k].contains("cov_diag")) fail(p + ".cov_diag", "required");
        c.cov_diag = get_vector(comps[k].at("cov_diag"), p + ".cov_diag");
        c.cls = get_int(comps[k], p, "class", 0);
        max_cls = std::max(max_cls, c.cls);
        cfg.data.components.push_back(std::move(c));
      }
      cfg.data.n_classes = max_cls + 1;
    } else {
      cfg.data.idx_images = get_string(d, "config.data", "idx_images", "");
      cfg.data.idx_labels = get_string(d, "config.data", "idx_labels", "");
      cfg.data.idx_eval_images =
          get_string(d, "config.data", "idx_eval_images", "");
      cfg.data.idx_eval_labels =
          get_string(d, "config.data", "idx_eval_labels", "");
      cfg.data.idx_n_classes =
          get_int(d, "config.data", "idx_n_classes", cfg.data.idx_n_classes);
      if (cfg.data.idx_images.empty() || cfg.data.idx_labels.empty())
        fail("config.data", "idx sources need idx_images and idx_labels");
      cfg.data.n_classes = cfg.data.idx_n_classes;
    }
  } else {
    fail("config.data", "required");
  }

  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, "config.schedule", {"beta_min", "beta_max", "t_min"});
    cfg.schedule.beta_min =
        get_number(s, "config.schedule", "beta_min", cfg.schedule.beta_min);
    cfg.schedule.beta_max =
        get_number(s, "config.schedule", "beta_max", cfg.schedule.beta_max);
    cfg.schedule.t_min =
        get_number(s, "config.schedule", "t_min", cfg.schedule.t_min);
  }

  if (j.contains("score_model")) {
    const json& s = j.at("score_model");
    check_keys(s, "config.score_model",
               {"type", "hidden_dim", "n_blocks", "time_freqs", "train"});
    cfg.score.type = get_string(s, "config.score_model", "type", cfg.score.type);
    if (cfg.score.type != "denoiser" && cfg.score.type != "mixture")
      fail("config.score_model.type", "must be 'denoiser' or 'mixture'");
    cfg.score.arch.hidden_dim =
        get_int(s, "config.score_model", "hidden_dim", cfg.score.arch.hidden_dim);
    cfg.score.arch.n_blocks =
        get_int(s, "config.score_model", "n_blocks", cfg.score.arch.n_blocks);
    cfg.score.arch.time_freqs =
        get_int(s, "config.score_model", "time_freqs", cfg.score.arch.time_freqs);
    if (s.contains("train")) {
      const json& t = s.at("train");
      check_keys(t, "config.score_model.train",
                 {"steps", "batch_size", "lr", "warmup_steps", "clip_norm",
                  "cond_dropout", "log_every"});
      cfg.score.train.steps =
          get_int(t, "config.score_model.train", "steps", cfg.score.train.steps);
      cfg.score.train.batch_size = get_int(t, "config.score_model.train",
                                           "batch_size", cfg.score.train.batch_size);
      cfg.score.train.lr =
          get_number(t, "config.score_model.train", "lr", cfg.score.train.lr);
      cfg.score.train.warmup_steps =
          get_int(t, "config.score_model.train", "warmup_steps",
                  cfg.score.train.warmup_steps);
      cfg.score.train.clip_norm = get_number(t, "config.score_model.train",
                                             "clip_norm", cfg.score.train.clip_norm);
      cfg.score.train.cond_dropout =
          get_number(t, "config.score_model.train", "cond_dropout",
                     cfg.score.train.cond_dropout);
      cfg.score.train.log_every = get_int(t, "config.score_model.train",
                                          "log_every", cfg.score.train.log_every);
    }
  }

  if (j.contains("classifiers")) {
    const json& c = j.at("classifiers");
    check_keys(c, "config.classifiers",
               {"epsilons", "hidden_dim", "n_hidden", "epochs", "batch_size",
                "lr", "dropout", "pgd_steps"});
    if (c.contains("epsilons")) {
      const json& eps = c.at("epsilons");
      if (!eps.is_array() || eps.empty())
        fail("config.classifiers.epsilons", "expected a non-empty array");
      cfg.classifiers.epsilons.clear();
      for (const auto& e : eps) {
        if (!e.is_number())
          fail("config.classifiers.epsilons", "expected numbers");
        cfg.classifiers.epsilons.push_back(e.get<double>());
      }
    }
    cfg.classifiers.arch.hidden_dim = get_int(c, "config.classifiers",
                                              "hidden_dim",
                                              cfg.classifiers.arch.hidden_dim);
    cfg.classifiers.arch.n_hidden =
        get_int(c, "config.classifiers", "n_hidden", cfg.classifiers.arch.n_hidden);
    cfg.classifiers.epochs =
        get_int(c, "config.classifiers", "epochs", cfg.classifiers.epochs);
    cfg.classifiers.batch_size =
        get_int(c, "config.classifiers", "batch_size", cfg.classifiers.batch_size);
    cfg.classifiers.lr =
        get_number(c, "config.classifiers", "lr", cfg.classifiers.lr);
    cfg.classifiers.dropout =
        get_number(c, "config.classifiers", "dropout", cfg.classifiers.dropout);
    cfg.classifiers.pgd_steps =
        get_int(c, "config.classifiers", "pgd_steps", cfg.classifiers.pgd_steps);
  }

  if (j.contains("ce")) {
    const json& c = j.at("ce");
    check_keys(c, "config.ce",
               {"w", "sigma_ce", "n_sources", "n_per_class", "n_steps",
                "l0_threshold", "boltzmann_sigma_t_scaling", "clip_range",
                "variants"});
    cfg.ce.w = get_number(c, "config.ce", "w", cfg.ce.w);
    cfg.ce.sigma_ce = get_number(c, "config.ce", "sigma_ce", cfg.ce.sigma_ce);
    cfg.ce.n_sources = get_int(c, "config.ce", "n_sources", cfg.ce.n_sources);
    cfg.ce.n_per_class =
        get_int(c, "config.ce", "n_per_class", cfg.ce.n_per_class);
    cfg.ce.n_steps = get_int(c, "config.ce", "n_steps", cfg.ce.n_steps);
    cfg.ce.l0_threshold =
        get_number(c, "config.ce", "l0_threshold", cfg.ce.l0_threshold);
    cfg.ce.boltzmann_sigma_t_scaling =
        get_bool(c, "config.ce", "boltzmann_sigma_t_scaling",
                 cfg.ce.boltzmann_sigma_t_scaling);
    cfg.ce.clip_range = get_range(c, "config.ce", "clip_range");
    if (c.contains("variants")) {
      const json& v = c.at("variants");
      if (!v.is_array() || v.empty())
        fail("config.ce.variants", "expected a non-empty array");
      cfg.ce.variants.clear();
      for (const auto& name : v) {
        if (!name.is_string()) fail("config.ce.variants", "expected strings");
        const std::string s = name.get<std::string>();
        if (s != "boltzmann" && s != "gaussian")
          fail("config.ce.variants", "unknown variant '" + s + "'");
        cfg.ce.variants.push_back(s);
      }
    }
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "config.eval",
               {"attack_epsilon", "attack_steps", "robust_ce",
                "robust_ce_step", "robust_ce_conf", "robust_ce_max_steps",
                "robust_ce_clip", "distance_classifier_sources",
                "ce_from_ce_sources"});
    cfg.eval.attack_epsilon =
        get_number(e, "config.eval", "attack_epsilon", cfg.eval.attack_epsilon);
    cfg.eval.attack_steps =
        get_int(e, "config.eval", "attack_steps", cfg.eval.attack_steps);
    cfg.eval.robust_ce = get_bool(e, "config.eval", "robust_ce", cfg.eval.robust_ce);
    cfg.eval.robust_ce_step =
        get_number(e, "config.eval", "robust_ce_step", cfg.eval.robust_ce_step);
    cfg.eval.robust_ce_conf =
        get_number(e, "config.eval", "robust_ce_conf", cfg.eval.robust_ce_conf);
    cfg.eval.robust_ce_max_steps = get_int(e, "config.eval",
                                           "robust_ce_max_steps",
                                           cfg.eval.robust_ce_max_steps);
    if (e.contains("robust_ce_clip"))
      cfg.eval.robust_ce_clip = get_range(e, "config.eval", "robust_ce_clip");
    cfg.eval.distance_classifier_sources =
        get_int(e, "config.eval", "distance_classifier_sources",
                cfg.eval.distance_classifier_sources);
    cfg.eval.ce_from_ce_sources = get_int(e, "config.eval", "ce_from_ce_sources",
                                          cfg.eval.ce_from_ce_sources);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("config error: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config error: " + path + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json d;
  d["source"] = data.source;
  d["n_train"] = data.n_train;
  d["n_eval"] = data.n_eval;
  if (data.source == "mixture") {
    json comps = json::array();
    for (const auto& c : data.components) {
      json mean = json::array(), cov = json::array();
      for (Eigen::Index i = 0; i < c.mean.size(); ++i) mean.push_back(c.mean[i]);
      for (Eigen::Index i = 0; i < c.cov_diag.size(); ++i)
        cov.push_back(c.cov_diag[i]);
      comps.push_back({{"weight", c.weight},
                       {"mean", mean},
                       {"cov_diag", cov},
                       {"class", c.cls}});
    }
    d["components"] = comps;
  } else {
    d["idx_images"] = data.idx_images;
    d["idx_labels"] = data.idx_labels;
    d["idx_eval_images"] = data.idx_eval_images;
    d["idx_eval_labels"] = data.idx_eval_labels;
    d["idx_n_classes"] = data.idx_n_classes;
  }
  json out = {
      {"name", name},
      {"seed", seed},
      {"data", d},
      {"schedule",
       {{"beta_min", schedule.beta_min},
        {"beta_max", schedule.beta_max},
        {"t_min", schedule.t_min}}},
      {"score_model",
       {{"type", score.type},
        {"hidden_dim", score.arch.hidden_dim},
        {"n_blocks", score.arch.n_blocks},
        {"time_freqs", score.arch.time_freqs},
        {"train",
         {{"steps", score.train.steps},
          {"batch_size", score.train.batch_size},
          {"lr", score.train.lr},
          {"warmup_steps", score.train.warmup_steps},
          {"clip_norm", score.train.clip_norm},
          {"cond_dropout", score.train.cond_dropout},
          {"log_every", score.train.log_every}}}}},
      {"classifiers",
       {{"epsilons", classifiers.epsilons},
        {"hidden_dim", classifiers.arch.hidden_dim},
        {"n_hidden", classifiers.arch.n_hidden},
        {"epochs", classifiers.epochs},
        {"batch_size", classifiers.batch_size},
        {"lr", classifiers.lr},
        {"dropout", classifiers.dropout},
        {"pgd_steps", classifiers.pgd_steps}}},
      {"ce",
       {{"w", ce.w},
        {"sigma_ce", ce.sigma_ce},
        {"n_sources", ce.n_sources},
        {"n_per_class", ce.n_per_class},
        {"n_steps", ce.n_steps},
        {"l0_threshold", ce.l0_threshold},
        {"boltzmann_sigma_t_scaling", ce.boltzmann_sigma_t_scaling},
        {"clip_range", range_to_json(ce.clip_range)},
        {"variants", ce.variants}}},
      {"eval",
       {{"attack_epsilon", eval.attack_epsilon},
        {"attack_steps", eval.attack_steps},
        {"robust_ce", eval.robust_ce},
        {"robust_ce_step", eval.robust_ce_step},
        {"robust_ce_conf", eval.robust_ce_conf},
        {"robust_ce_max_steps", eval.robust_ce_max_steps},
        {"robust_ce_clip", range_to_json(eval.robust_ce_clip)},
        {"distance_classifier_sources", eval.distance_classifier_sources},
        {"ce_from_ce_sources", eval.ce_from_ce_sources}}},
  };
  return out;
}

std::string ExperimentConfig::digest() const {
  return hex64(fnv1a64(to_json().dump()));
}

void ExperimentConfig::validate() const {
  schedule.validate();
  if (data.n_train <= 0 || data.n_eval <= 0)
    throw std::runtime_error("config error: data sizes must be positive");
  if (data.source == "mixture") {
    // constructing the mixture runs its own validation
    (void)mixture();
  }
  if (score.train.steps <= 0 || score.train.batch_size <= 0)
    throw std::runtime_error("config error: score_model.train sizes must be positive");
  if (score.train.cond_dropout < 0.0 || score.train.cond_dropout >= 1.0)
    throw std::runtime_error(
        "config error: score_model.train.cond_dropout must lie in [0, 1)");
  for (double e : classifiers.epsilons)
    if (e < 0.0)
      throw std::runtime_error("config error: classifier epsilons must be >= 0");
  if (!(ce.w >= 0.0))
    throw std::runtime_error("config error: ce.w must be >= 0");
  if (!(ce.sigma_ce > 0.0))
    throw std::runtime_error("config error: ce.sigma_ce must be positive");
  if (ce.n_sources <= 0 || ce.n_per_class <= 0 || ce.n_steps <= 0)
    throw std::runtime_error("config error: ce counts must be positive");
  if (!(ce.l0_threshold > 0.0))
    throw std::runtime_error("config error: ce.l0_threshold must be positive");
  if (!(eval.attack_epsilon >= 0.0) || eval.attack_steps <= 0)
    throw std::runtime_error("config error: eval attack settings invalid");
}

GaussianMixture ExperimentConfig::mixture() const {
  if (data.source != "mixture")
    throw std::runtime_error("config error: data source is not a mixture");
  return GaussianMixture(data.components, data.n_classes);
}

}  // namespace diffce
