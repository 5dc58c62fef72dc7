#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "diffce/experiment.hpp"

namespace {

// DIFFCE_THREADS is the only environment variable the tool reads.
void apply_thread_env() {
  const char* v = std::getenv("DIFFCE_THREADS");
  if (!v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1)
    throw std::runtime_error("DIFFCE_THREADS must be a positive integer");
  Eigen::setNbThreads(static_cast<int>(n));
}

void add_common(CLI::App* cmd, diffce::RunOptions& opt,
                std::optional<std::uint64_t>& seed) {
  cmd->add_option("--config", opt.config_path, "experiment config (JSON)")
      ->required();
  cmd->add_option("--out", opt.out_dir, "output directory")->required();
  cmd->add_option("--seed", seed, "override the config's master seed");
  cmd->add_flag("--resume", opt.resume,
                "reuse completed stages instead of failing on them");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion counterfactual pipeline"};
  app.require_subcommand(1);

  diffce::RunOptions opt;
  std::optional<std::uint64_t> seed;
  int classify_sources = 20;

  CLI::App* run = app.add_subcommand("run", "all stages in order");
  CLI::App* train_score =
      app.add_subcommand("train-score", "sample data, fit the score model");
  CLI::App* train_clf =
      app.add_subcommand("train-classifier", "train the classifier ladder");
  CLI::App* gen_ce =
      app.add_subcommand("gen-ce", "generate counterfactual datasets");
  CLI::App* eval = app.add_subcommand("eval", "compute evaluation metrics");
  CLI::App* report = app.add_subcommand("report", "render CSV tables and SVGs");
  CLI::App* classify = app.add_subcommand(
      "ce-classify", "classify eval points by counterfactual distance");
  classify->add_option("--n-sources", classify_sources,
                       "number of eval points to classify");
  for (CLI::App* c : {run, train_score, train_clf, gen_ce, eval, report,
                      classify})
    add_common(c, opt, seed);

  CLI11_PARSE(app, argc, argv);

  try {
    apply_thread_env();
    opt.seed_override = seed;
    if (run->parsed()) diffce::cmd_run(opt);
    if (train_score->parsed()) diffce::cmd_train_score(opt);
    if (train_clf->parsed()) diffce::cmd_train_classifier(opt);
    if (gen_ce->parsed()) diffce::cmd_gen_ce(opt);
    if (eval->parsed()) diffce::cmd_eval(opt);
    if (report->parsed()) diffce::cmd_report(opt);
    if (classify->parsed()) diffce::cmd_ce_classify(opt, classify_sources);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
