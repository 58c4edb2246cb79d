#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "argus/nn/model.hpp"
#include "argus/nn/params.hpp"
#include "argus/token_grid.hpp"

namespace argus::nn {

enum class Objective { Mae, Flip, Align };

Objective objective_from_string(const std::string& s);
const char* objective_to_string(Objective o);

/// One optimization stage: which tensors update, at what peak rate, for how
/// many passes over the data.
struct Stage {
  std::string name;
  Objective objective = Objective::Mae;
  std::set<std::string> trainable;  // selectors, resolved against the params
  double lr = 1e-4;
  size_t epochs = 1;
};

struct TrainPlan {
  std::vector<Stage> stages;
  size_t batch_size = 8;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double weight_decay = 0.0;
  double warmup_ratio = 0.05;
  double mask_ratio = 0.5;
  double tau = 0.07;
  uint64_t seed = 0;
};

struct TrainData {
  std::vector<TokenGrid> grids;
  std::vector<std::vector<double>> text_embs;  // required for Flip stages
};

struct HistoryRow {
  size_t step = 0;  // global, 0-based
  std::string stage;
  double lr = 0.0;
  double loss = 0.0;
};

/// Linear warmup to lr over round(warmup_ratio * total) steps, then linear
/// decay back to zero. Step 0 of the warmup is exactly 0.
double lr_at(size_t step, size_t total_steps, double lr, double warmup_ratio);

/// AdamW over the plan's stages. Only resolved trainable tensors update;
/// frozen tensors are rejected from trainable sets and everything outside a
/// stage's set stays bit-identical. Deterministic in (params, plan, data).
/// A non-finite loss aborts with the failing step index.
std::vector<HistoryRow> train(ParameterSet& params, const TrainPlan& plan,
                              const TrainData& data);

void write_history_csv(const std::vector<HistoryRow>& history,
                       const std::string& path);

/// Stage presets for the schedule experiments: "1stage",
/// "2stage-frozen", "2stage-unfrozen" (alias "2stage"). Stage 1 always
/// trains the connector alone at lr1; stage 2 uses lr2 and, when unfrozen,
/// also updates the encoder and compression tensors.
std::vector<Stage> schedule_plan(const std::string& name,
                                 const ParameterSet& params, double lr1,
                                 double lr2, size_t epochs);

/// Pretraining stage presets: "mae", "flip", "mae_then_flip".
std::vector<Stage> pretrain_plan(const std::string& name, double lr,
                                 size_t epochs);

}  // namespace argus::nn
