#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlplab/tape.hpp"
#include "vlplab/textaug.hpp"

namespace vlplab {

enum class Mode { Train, Eval };
enum class Modality { Image, Text };
enum class Direction { AtoB, BtoA };

struct ModelConfig {
  int64_t image_size = 32;  // encoder consumes flattened 3 * S * S
  int64_t embed_dim = 64;
  int64_t hidden_dim = 128;
  int64_t proj_dim = 32;
  int64_t text_buckets = 1024;
  int64_t n_prototypes = 32;
  double dropout_prob = 0.0;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  bool with_predictors = false;
  bool with_momentum = false;
  bool with_prototypes = false;
  double logit_scale_max = 100.0;
};

struct Param {
  std::string name;
  Tensor value;
  bool decay_eligible = true;
};

struct BnBuffers {
  Tensor mean;
  Tensor var;
};

// All learnable state plus batch-norm buffers and the optional momentum copy.
struct ModelState {
  ModelConfig cfg;
  std::vector<Param> params;
  BnBuffers bn_img, bn_txt;

  // Momentum copy of encoders and projectors (predictors and prototypes stay
  // online-only); aligned with momentum_ids.
  std::vector<size_t> momentum_ids;
  std::vector<Tensor> momentum_values;
  BnBuffers bn_img_m, bn_txt_m;

  int64_t find(std::string_view name) const;
  const Tensor& value_of(std::string_view name) const;
  Tensor& value_of(std::string_view name);
};

ModelState init_model(const ModelConfig& cfg, uint64_t seed);

// Per-step binding of parameters to tape nodes. Online bindings are leaves;
// momentum bindings are constants of the momentum values (gradient stops
// there by construction).
struct ParamVars {
  std::vector<Var> vars;  // aligned with state.params; invalid for uncovered momentum slots

  static ParamVars leaves(GradTape& t, const ModelState& s);
  static ParamVars momentum_constants(GradTape& t, const ModelState& s);

  Var of(const ModelState& s, std::string_view name) const;
};

// Hashed token ids of a batch of captions plus per-caption offsets.
struct TokenBatch {
  std::vector<int64_t> ids;
  std::vector<int64_t> offsets;  // size = captions + 1
};

TokenBatch make_token_batch(const std::vector<TokenSequence>& captions, int64_t buckets);

// Flatten (3,S,S) images into one N x 3SS row-major matrix.
Tensor flatten_images(const std::vector<Tensor>& images);

Var encode_images(GradTape& t, const ParamVars& pv, const ModelState& s, const Tensor& flat);
// dropout_prob 0 disables dropout; streams derive from dropout_seed and the
// hidden-layer index.
Var encode_texts(GradTape& t, const ParamVars& pv, const ModelState& s, const TokenBatch& batch,
                 double dropout_prob, uint64_t dropout_seed);
// Bias-free linear weak projector (un-normalized output).
Var project_weak(GradTape& t, const ParamVars& pv, const ModelState& s, Modality m, Var embed);
// linear -> batch norm -> relu -> linear, then row normalization; train mode
// uses batch statistics and updates the supplied running buffers.
Var project_strong(GradTape& t, const ParamVars& pv, const ModelState& s, Modality m, Var embed,
                   Mode mode, BnBuffers& buffers);
Var predictor_forward(GradTape& t, const ParamVars& pv, const ModelState& s, Direction dir,
                      Var z);

// Standalone inverted dropout on a plain tensor (eval mode: identity).
Tensor apply_dropout(const Tensor& t, double prob, Mode mode, Rng& rng);

// momentum_param <- m * momentum_param + (1 - m) * online_param.
void momentum_update(ModelState& s, double m);

struct ViewEmbeddings {
  Var img_weak, txt_weak;
  std::vector<Var> img_strong, txt_strong;
};

// Forward one weak view and any number of strong views per modality. Weak
// views pass the linear projector; strong projections come back
// row-normalized. use_momentum selects the momentum buffers and suppresses
// text dropout (targets stay stable); pair it with
// ParamVars::momentum_constants.
ViewEmbeddings forward_views(GradTape& t, const ParamVars& pv, ModelState& s,
                             const Tensor& img_weak_flat,
                             const std::vector<Tensor>& img_strong_flat,
                             const TokenBatch& txt_weak, const std::vector<TokenBatch>& txt_strong,
                             Mode mode, uint64_t step_seed, bool use_momentum = false);

// Checkpoints: one TNSR file per parameter plus a JSON manifest carrying the
// parameter table, model config, recipe/method, and the config hash.
void save_checkpoint(const std::string& dir, const ModelState& s, const std::string& method,
                     const std::string& recipe, uint64_t config_hash);
struct Checkpoint {
  ModelState state;
  std::string method;
  std::string recipe;
  uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace vlplab
