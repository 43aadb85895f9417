#pragma once

#include <string>
#include <vector>

#include "vlplab/config.hpp"
#include "vlplab/dataset.hpp"
#include "vlplab/losses.hpp"
#include "vlplab/model.hpp"

namespace vlplab {

struct OptimizerState {
  std::vector<Tensor> m, v;  // aligned with ModelState::params
  int64_t step = 0;
};

OptimizerState init_optimizer(const ModelState& s);

// Linear warmup to lr, then cosine to final_lr at the run's last step.
double lr_at(int64_t step, const TrainConfig& cfg, int64_t steps_per_epoch);

struct StepResult {
  LossBreakdown loss;
  std::vector<Tensor> grads;  // aligned with ModelState::params
};

// One optimization objective evaluation: augment the batch, forward all
// views, assemble the recipe's loss, and backpropagate. The batch is a view
// into the dataset plus the dataset indices used for seed derivation.
StepResult training_step(ModelState& state, const std::vector<const Sample*>& batch,
                         const std::vector<int64_t>& sample_ids, int64_t epoch,
                         int64_t global_step, const TrainConfig& cfg);

// Decoupled weight decay update; decay skips biases, normalization
// parameters, and the logit scales. Clamps exp(log_scale) to the configured
// maximum afterwards.
void adamw_step(OptimizerState& opt, ModelState& state, const std::vector<Tensor>& grads,
                double lr, const TrainConfig& cfg);

struct TrainResult {
  double final_zeroshot = 0.0;
  double logit_scale_weak = 0.0;
  double logit_scale_strong = 0.0;
  int64_t steps = 0;
  std::string metrics_path;
  std::string checkpoint_path;
};

// Full trainingrun: seeded epoch shuffles, optimizer steps, momentum updates
// (BYOLIP), periodic zero-shot evaluation, metrics CSV, final checkpoint.
// Throws NonFinite with the failing batch's seed context if a loss goes NaN.
TrainResult run_epochs(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                       const ClassPromptSet& prompts, const std::string& out_dir);

}  // namespace vlplab
