#pragma once

#include <map>
#include <string>

#include "vlplab/imageaug.hpp"
#include "vlplab/model.hpp"
#include "vlplab/sinkhorn.hpp"
#include "vlplab/textaug.hpp"

namespace vlplab {

enum class Method { CLIP, SiamLIP, BYOLIP, BarLIP, SwALIP, SwALIPModified };
enum class Recipe { Base, Improved };

std::string method_name(Method m);
Method parse_method(const std::string& s);
std::string recipe_name(Recipe r);
Recipe parse_recipe(const std::string& s);

struct TrainConfig {
  Method method = Method::CLIP;
  Recipe recipe = Recipe::Improved;
  int num_augs = 2;
  double alpha = 1.0, beta = 1.0;
  double label_smoothing = 0.1;
  double lr = 0.003, final_lr = 1e-5;
  double warmup_epochs = 1.0;
  int epochs = 200;
  int batch_size = 32;
  double adam_beta1 = 0.9, adam_beta2 = 0.98;
  double weight_decay = 0.1;
  double momentum_coef = 0.99;   // BYOLIP EMA
  double lam_bt = 5e-3;          // Barlow off-diagonal weight
  double swav_temperature = 0.1; // clustering losses use their own temperature
  double swalip_lambda = 0.5;    // identity mixing for the prototype-free loss
  uint64_t seed = 42;
  int log_every = 50;    // steps
  int eval_every = 20;   // epochs; 0 = final only
  bool timing_wall = false;  // wall-clock in the metrics CSV (off keeps runs byte-identical)

  SinkhornConfig sinkhorn;
  TextAugConfig text;
  ImageAugConfig image;
  ModelConfig model;
};

// Flat namespaced key=value view of a config; sections in the file become
// key prefixes ("[train]" + "lr = 0.1" -> "train.lr").
using RawConfig = std::map<std::string, std::string>;

// Parses the `key = value` file with '#' comments and [section] headers.
RawConfig parse_config_file(const std::string& path);

// Named bundles of key overrides applied before file/flag values.
RawConfig preset(const std::string& name);

// Applies raw keys over the defaults; throws BadConfig naming any unknown key
// or unparseable value, and enforces cross-field invariants (multi-view
// requirement of SwALIP-modified, base-recipe semantics).
TrainConfig materialize(const RawConfig& raw);
void apply_raw(TrainConfig& cfg, const RawConfig& raw);
void validate(const TrainConfig& cfg);

// Canonical serialization of every key (sorted), and its FNV-1a hash.
RawConfig to_raw(const TrainConfig& cfg);
std::string canonical_config(const TrainConfig& cfg);
uint64_t config_hash(const TrainConfig& cfg);

}  // namespace vlplab
