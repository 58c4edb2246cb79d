#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "argus/nn/params.hpp"
#include "argus/synth.hpp"
#include "argus/volume.hpp"

namespace argus::bench {

/// Axis grids for cmd_sweep.
struct SweepAxes {
  std::vector<double> mask_ratio{0.5};
  std::vector<std::string> compression{"pixel_shuffle"};
  std::vector<int> connector_depth{2};
  std::vector<double> data_fraction{1.0};
};

/// One run's configuration. Precedence: command-line flags > config file >
/// defaults.
struct RunConfig {
  uint64_t seed = 0;
  std::string profile = "normal";
  std::string compression = "pixel_shuffle";
  int connector_depth = 2;
  double mask_ratio = 0.5;
  std::string pretrain = "mae";
  std::string plan = "2stage-unfrozen";

  std::string out_dir = "runs/out";
  std::string corpus;       // defaults to <out_dir>/corpus.jsonl
  std::string volumes_dir;  // defaults to <out_dir>/volumes
  std::string pairs;        // explicit EvalPair file for cmd_evaluate
  std::string scores;       // clinical score file to merge

  // "hu" for raw CT input; "unit" maps [0,1] synthetic volumes onto the HU
  // scale before the standard preprocessing stages run
  std::string input_scale = "hu";

  // encoder widths; geometry comes from the resolution profile
  size_t d_model = 12, n_layers = 1, n_heads = 2;
  double mlp_ratio = 2.0;
  size_t d_joint = 16, d_llm = 32, n_queries = 64;

  size_t batch_size = 8;
  size_t epochs = 1;          // per schedule stage
  size_t pretrain_epochs = 1;
  double lr_stage1 = 1e-4;
  double lr_stage2 = 1e-6;
  double pretrain_lr = 1e-4;
  double tau = 0.07;

  SynthSpec synth;
  SweepAxes sweep;
  std::string eval_model = "argus-micro";

  static RunConfig from_json_file(const std::string& path);
  void validate() const;

  ResolutionProfile resolution() const;
  nn::EncoderConfig encoder_config() const;

  std::string corpus_path() const;
  std::string volumes_path() const;
  std::string curated_path() const;
  std::string curation_log_path() const;
  std::string manifest_path() const;
  std::string pre_dir() const;
  std::string tok_dir() const;
  std::string checkpoint_path(const std::string& tag) const;
  std::string history_path() const;
};

/// Raw and compressed token counts for a profile/compression pair.
std::pair<size_t, size_t> token_ledger(const ResolutionProfile& profile,
                                       const std::string& compression,
                                       size_t n_queries = 64);

void cmd_synth(const RunConfig& cfg);
void cmd_curate(const RunConfig& cfg);
void cmd_split(const RunConfig& cfg);
void cmd_preprocess(const RunConfig& cfg);
void cmd_tokenize(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
int cmd_gradcheck(const RunConfig& cfg);  // 0 below threshold, 1 otherwise
void cmd_evaluate(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);

/// synth -> curate -> split -> preprocess -> tokenize -> pretrain ->
/// evaluate, all into cfg.out_dir.
void run_full_pipeline(const RunConfig& cfg);

/// Relative paths of every artifact a pipeline run produces (for
/// byte-comparison; excludes run.log, which holds the timestamps).
std::vector<std::string> pipeline_artifacts(const RunConfig& cfg);

}  // namespace argus::bench
