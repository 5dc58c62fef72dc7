#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "diffce/config.hpp"

namespace diffce {

struct RunOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  bool resume = false;
};

// Stage commands.  Each one loads the config, verifies that upstream stage
// manifests exist and carry the same config digest, and either runs or —
// under --resume with a matching manifest — skips its own stage.  A digest
// mismatch against any existing manifest is a hard error; so is rerunning
// into a completed stage without --resume.
void cmd_run(const RunOptions& opt);               // all stages in order
void cmd_train_score(const RunOptions& opt);       // data + score model
void cmd_train_classifier(const RunOptions& opt);  // classifier ladder
void cmd_gen_ce(const RunOptions& opt);            // counterfactual datasets
void cmd_eval(const RunOptions& opt);              // metrics
void cmd_report(const RunOptions& opt);            // CSV + SVG rendering

// Distance-to-counterfactual classification probe; prints per-class mean
// distances and accuracy over the probe sources.
void cmd_ce_classify(const RunOptions& opt, int n_sources);

}  // namespace diffce
