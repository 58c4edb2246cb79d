#include "argus/nn/optimizer.hpp"

#include <cmath>
#include <fstream>

#include "argus/rng.hpp"

namespace argus::nn {

Objective objective_from_string(const std::string& s) {
  if (s == "mae") return Objective::Mae;
  if (s == "flip") return Objective::Flip;
  if (s == "align") return Objective::Align;
  throw ValidationError("unknown objective '" + s + "'");
}

const char* objective_to_string(Objective o) {
  switch (o) {
    case Objective::Mae: return "mae";
    case Objective::Flip: return "flip";
    case Objective::Align: return "align";
  }
  return "?";
}

double lr_at(size_t step, size_t total_steps, double lr, double warmup_ratio) {
  if (total_steps == 0) return 0.0;
  const size_t warmup = size_t(std::llround(warmup_ratio * double(total_steps)));
  if (warmup > 0 && step < warmup) {
    return lr * double(step) / double(warmup);
  }
  if (total_steps == warmup) return lr;
  return lr * double(total_steps - step) / double(total_steps - warmup);
}

namespace {

struct AdamState {
  Tensor m, v;
  size_t t = 0;
};

// Batch loss graph for one objective; returns the loss value after backward.
double step_loss_and_grads(const ParameterSet& params, Objective objective,
                           const TrainData& data,
                           const std::vector<size_t>& batch, double mask_ratio,
                           double tau, uint64_t mask_seed,
                           std::map<std::string, Mat>& grads_out) {
  Graph g;
  int loss = -1;
  switch (objective) {
    case Objective::Mae: {
      std::vector<int> losses;
      for (size_t k = 0; k < batch.size(); ++k) {
        const TokenGrid& grid = data.grids[batch[k]];
        const MaskSet mask = sample_mask(grid.n_tokens(), mask_ratio,
                                         derive_seed(mask_seed, uint64_t(k)));
        losses.push_back(build_mae(g, params, grid, grid, mask).loss);
      }
      loss = losses.size() == 1 ? losses[0] : g.mean_scalars(losses);
      break;
    }
    case Objective::Flip: {
      std::vector<const TokenGrid*> items;
      std::vector<std::vector<double>> texts;
      std::vector<MaskSet> masks;
      for (size_t k = 0; k < batch.size(); ++k) {
        items.push_back(&data.grids[batch[k]]);
        texts.push_back(data.text_embs.at(batch[k]));
        masks.push_back(sample_mask(items.back()->n_tokens(), mask_ratio,
                                    derive_seed(mask_seed, uint64_t(k))));
      }
      loss = build_flip(g, params, items, texts, masks, tau).loss;
      break;
    }
    case Objective::Align: {
      std::vector<int> losses;
      for (size_t idx : batch) {
        losses.push_back(build_align(g, params, data.grids[idx]).loss);
      }
      loss = losses.size() == 1 ? losses[0] : g.mean_scalars(losses);
      break;
    }
  }
  g.backward(loss);
  grads_out = g.named_grads();
  return g.value(loss).at(0, 0);
}

}  // namespace

std::vector<HistoryRow> train(ParameterSet& params, const TrainPlan& plan,
                              const TrainData& data) {
  if (data.grids.empty()) throw ValidationError("train: empty dataset");
  std::vector<HistoryRow> history;
  size_t global_step = 0;

  for (size_t stage_idx = 0; stage_idx < plan.stages.size(); ++stage_idx) {
    const Stage& stage = plan.stages[stage_idx];
    if (!(stage.lr > 0.0)) {
      throw ValidationError("train: stage '" + stage.name +
                            "' learning rate must be positive");
    }
    const std::set<std::string> trainable =
        resolve_tensor_set(params, stage.trainable);
    for (const auto& name : trainable) {
      if (params.frozen(name)) {
        throw ValidationError("train: tensor '" + name +
                              "' is frozen and cannot be trained");
      }
    }
    if (stage.objective == Objective::Flip &&
        data.text_embs.size() != data.grids.size()) {
      throw ValidationError("train: flip stage needs one text embedding per grid");
    }

    const size_t n = data.grids.size();
    const size_t bs = std::max<size_t>(1, plan.batch_size);
    // batches per epoch; flip batches must keep B >= 2
    std::vector<std::vector<size_t>> epoch_batches;
    const size_t min_batch = stage.objective == Objective::Flip ? 2 : 1;

    std::map<std::string, AdamState> adam;
    for (const auto& name : trainable) {
      AdamState st;
      st.m = Tensor(params.at(name).shape);
      st.v = Tensor(params.at(name).shape);
      adam[name] = std::move(st);
    }

    // precompute the step count for the LR schedule
    size_t steps_per_epoch = 0;
    {
      size_t rem = n;
      while (rem > 0) {
        const size_t take = std::min(bs, rem);
        rem -= take;
        if (take >= min_batch) ++steps_per_epoch;
      }
    }
    const size_t total_steps = steps_per_epoch * stage.epochs;
    if (total_steps == 0) {
      throw ValidationError("train: stage '" + stage.name +
                            "' yields no usable batches");
    }

    size_t stage_step = 0;
    for (size_t epoch = 0; epoch < stage.epochs; ++epoch) {
      std::vector<size_t> order(n);
      for (size_t i = 0; i < n; ++i) order[i] = i;
      Rng shuffle_rng(derive_seed(plan.seed,
                                  "stage" + std::to_string(stage_idx) +
                                      ".epoch" + std::to_string(epoch)));
      shuffle_rng.shuffle(order);

      for (size_t off = 0; off < n; off += bs) {
        const size_t take = std::min(bs, n - off);
        if (take < min_batch) continue;  // flip cannot use a 1-item tail
        std::vector<size_t> batch(order.begin() + std::ptrdiff_t(off),
                                  order.begin() + std::ptrdiff_t(off + take));

        std::map<std::string, Mat> grads;
        const uint64_t mask_seed =
            derive_seed(plan.seed, "mask." + std::to_string(stage_idx) + "." +
                                       std::to_string(global_step));
        const double loss =
            step_loss_and_grads(params, stage.objective, data, batch,
                                plan.mask_ratio, plan.tau, mask_seed, grads);
        if (!std::isfinite(loss)) {
          throw ValidationError("train: non-finite loss at step " +
                                std::to_string(global_step));
        }

        const double lr =
            lr_at(stage_step, total_steps, stage.lr, plan.warmup_ratio);
        for (const auto& name : trainable) {
          auto git = grads.find(name);
          if (git == grads.end()) continue;  // tensor unused by this objective
          AdamState& st = adam[name];
          Tensor& theta = params.at(name);
          st.t += 1;
          const double bc1 = 1.0 - std::pow(plan.beta1, double(st.t));
          const double bc2 = 1.0 - std::pow(plan.beta2, double(st.t));
          const std::vector<double>& gd = git->second.d;
          for (size_t i = 0; i < theta.data.size(); ++i) {
            st.m.data[i] = plan.beta1 * st.m.data[i] + (1.0 - plan.beta1) * gd[i];
            st.v.data[i] =
                plan.beta2 * st.v.data[i] + (1.0 - plan.beta2) * gd[i] * gd[i];
            const double mhat = st.m.data[i] / bc1;
            const double vhat = st.v.data[i] / bc2;
            theta.data[i] -= lr * (mhat / (std::sqrt(vhat) + plan.adam_eps) +
                                   plan.weight_decay * theta.data[i]);
          }
        }

        history.push_back({global_step, stage.name, lr, loss});
        ++stage_step;
        ++global_step;
      }
    }
  }
  return history;
}

void write_history_csv(const std::vector<HistoryRow>& history,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "step,stage,lr,loss\n";
  out.precision(17);
  for (const auto& row : history) {
    out << row.step << "," << row.stage << "," << row.lr << "," << row.loss
        << "\n";
  }
}

std::vector<Stage> schedule_plan(const std::string& name,
                                 const ParameterSet& params, double lr1,
                                 double lr2, size_t epochs) {
  std::set<std::string> stage2_unfrozen = {"encoder", "connector"};
  if (params.compression == Compression::Perceiver) {
    stage2_unfrozen.insert("resampler");
  }
  if (name == "1stage") {
    return {{"stage1", Objective::Align, {"connector"}, lr1, epochs}};
  }
  if (name == "2stage-frozen") {
    return {{"stage1", Objective::Align, {"connector"}, lr1, epochs},
            {"stage2", Objective::Align, {"connector"}, lr2, epochs}};
  }
  if (name == "2stage-unfrozen" || name == "2stage") {
    return {{"stage1", Objective::Align, {"connector"}, lr1, epochs},
            {"stage2", Objective::Align, stage2_unfrozen, lr2, epochs}};
  }
  throw ValidationError("unknown schedule plan '" + name +
                        "' (valid: 1stage, 2stage-frozen, 2stage-unfrozen)");
}

std::vector<Stage> pretrain_plan(const std::string& name, double lr,
                                 size_t epochs) {
  const Stage mae{"mae", Objective::Mae,
                  {"encoder", "mae"}, lr, epochs};
  const Stage flip{"flip", Objective::Flip,
                   {"encoder", "joint"}, lr, epochs};
  if (name == "mae") return {mae};
  if (name == "flip") return {flip};
  if (name == "mae_then_flip") return {mae, flip};
  throw ValidationError("unknown pretrain method '" + name +
                        "' (valid: mae, flip, mae_then_flip)");
}

}  // namespace argus::nn
