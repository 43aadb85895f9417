#include "vlplab/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "vlplab/errors.hpp"
#include "vlplab/rng.hpp"

namespace vlplab {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(Errc::BadConfig, "key '" + key + "': cannot parse '" + v + "' as a real");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw Error(Errc::BadConfig, "key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw Error(Errc::BadConfig, "key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(int64_t v) { return std::to_string(v); }
std::string fmt(uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::CLIP: return "CLIP";
    case Method::SiamLIP: return "SiamLIP";
    case Method::BYOLIP: return "BYOLIP";
    case Method::BarLIP: return "BarLIP";
    case Method::SwALIP: return "SwALIP";
    case Method::SwALIPModified: return "SwALIP-modified";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::CLIP, Method::SiamLIP, Method::BYOLIP, Method::BarLIP, Method::SwALIP,
                   Method::SwALIPModified})
    if (s == method_name(m)) return m;
  throw Error(Errc::BadConfig,
              "key 'train.method': unknown method '" + s +
                  "' (expected CLIP|SiamLIP|BYOLIP|BarLIP|SwALIP|SwALIP-modified)");
}

std::string recipe_name(Recipe r) { return r == Recipe::Base ? "base" : "improved"; }

Recipe parse_recipe(const std::string& s) {
  if (s == "base") return Recipe::Base;
  if (s == "improved") return Recipe::Improved;
  throw Error(Errc::BadConfig, "key 'train.recipe': expected base|improved, got '" + s + "'");
}

RawConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open config file: " + path);
  RawConfig out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string l = trim(line);
    if (l.empty()) continue;
    if (l.front() == '[' && l.back() == ']') {
      section = trim(l.substr(1, l.size() - 2));
      continue;
    }
    size_t eq = l.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::BadConfig,
                  path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(l.substr(0, eq));
    std::string value = trim(l.substr(eq + 1));
    if (key.empty())
      throw Error(Errc::BadConfig, path + ":" + std::to_string(lineno) + ": empty key");
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

RawConfig preset(const std::string& name) {
  if (name == "desk" || name.empty()) return {};
  if (name == "cc3m-like") return {{"model.dropout", "0.2"}, {"train.weight_decay", "0.5"}};
  if (name == "yfcc-like") return {{"model.dropout", "0"}, {"text.stopword_prob", "0.9"}};
  if (name == "paper")
    return {{"model.hidden_dim", "4096"}, {"model.proj_dim", "256"}, {"model.image_size", "224"},
            {"train.batch_size", "4096"}, {"train.epochs", "32"}};
  throw Error(Errc::BadConfig, "unknown preset '" + name +
                                   "' (expected desk|cc3m-like|yfcc-like|paper)");
}

void apply_raw(TrainConfig& cfg, const RawConfig& raw) {
  using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"train.method", [](TrainConfig& c, const std::string&, const std::string& v) { c.method = parse_method(v); }},
      {"train.recipe", [](TrainConfig& c, const std::string&, const std::string& v) { c.recipe = parse_recipe(v); }},
      {"train.num_augs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.num_augs = static_cast<int>(parse_int(k, v)); }},
      {"train.alpha", [](TrainConfig& c, const std::string& k, const std::string& v) { c.alpha = parse_double(k, v); }},
      {"train.beta", [](TrainConfig& c, const std::string& k, const std::string& v) { c.beta = parse_double(k, v); }},
      {"train.label_smoothing", [](TrainConfig& c, const std::string& k, const std::string& v) { c.label_smoothing = parse_double(k, v); }},
      {"train.lr", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lr = parse_double(k, v); }},
      {"train.final_lr", [](TrainConfig& c, const std::string& k, const std::string& v) { c.final_lr = parse_double(k, v); }},
      {"train.warmup_epochs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.warmup_epochs = parse_double(k, v); }},
      {"train.epochs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.epochs = static_cast<int>(parse_int(k, v)); }},
      {"train.batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = static_cast<int>(parse_int(k, v)); }},
      {"train.adam_beta1", [](TrainConfig& c, const std::string& k, const std::string& v) { c.adam_beta1 = parse_double(k, v); }},
      {"train.adam_beta2", [](TrainConfig& c, const std::string& k, const std::string& v) { c.adam_beta2 = parse_double(k, v); }},
      {"train.weight_decay", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_decay = parse_double(k, v); }},
      {"train.momentum", [](TrainConfig& c, const std::string& k, const std::string& v) { c.momentum_coef = parse_double(k, v); }},
      {"train.lam_bt", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lam_bt = parse_double(k, v); }},
      {"train.swav_temperature", [](TrainConfig& c, const std::string& k, const std::string& v) { c.swav_temperature = parse_double(k, v); }},
      {"train.swalip_lambda", [](TrainConfig& c, const std::string& k, const std::string& v) { c.swalip_lambda = parse_double(k, v); }},
      {"train.seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); }},
      {"train.log_every", [](TrainConfig& c, const std::string& k, const std::string& v) { c.log_every = static_cast<int>(parse_int(k, v)); }},
      {"train.eval_every", [](TrainConfig& c, const std::string& k, const std::string& v) { c.eval_every = static_cast<int>(parse_int(k, v)); }},
      {"train.timing", [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.timing_wall = false;
         else if (v == "wall") c.timing_wall = true;
         else throw Error(Errc::BadConfig, "key '" + k + "': expected none|wall");
       }},
      {"model.image_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.image_size = parse_int(k, v); c.image.out_size = c.model.image_size; }},
      {"model.embed_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.embed_dim = parse_int(k, v); }},
      {"model.hidden_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.hidden_dim = parse_int(k, v); }},
      {"model.proj_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.proj_dim = parse_int(k, v); }},
      {"model.text_buckets", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.text_buckets = parse_int(k, v); }},
      {"model.prototypes", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.n_prototypes = parse_int(k, v); }},
      {"model.dropout", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.dropout_prob = parse_double(k, v); }},
      {"sinkhorn.epsilon", [](TrainConfig& c, const std::string& k, const std::string& v) { c.sinkhorn.epsilon = parse_double(k, v); }},
      {"sinkhorn.iters", [](TrainConfig& c, const std::string& k, const std::string& v) { c.sinkhorn.n_iters = static_cast<int>(parse_int(k, v)); }},
      {"sinkhorn.tol", [](TrainConfig& c, const std::string& k, const std::string& v) { c.sinkhorn.tol = parse_double(k, v); }},
      {"text.stopword_prob", [](TrainConfig& c, const std::string& k, const std::string& v) { c.text.stopword_prob = parse_double(k, v); }},
      {"text.eda_intensity", [](TrainConfig& c, const std::string& k, const std::string& v) { c.text.eda_intensity = parse_double(k, v); }},
      {"text.deletion_prob", [](TrainConfig& c, const std::string& k, const std::string& v) { c.text.deletion_prob = parse_double(k, v); }},
      {"text.stopwords_file", [](TrainConfig& c, const std::string&, const std::string& v) { c.text.stopwords = StopwordSet::from_file(v); }},
      {"text.thesaurus_file", [](TrainConfig& c, const std::string&, const std::string& v) { c.text.thesaurus = Thesaurus::from_file(v); }},
      {"image.weak_scale_lo", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.weak_scale_lo = parse_double(k, v); }},
      {"image.weak_scale_hi", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.weak_scale_hi = parse_double(k, v); }},
      {"image.strong_scale_lo", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.strong_scale_lo = parse_double(k, v); }},
      {"image.strong_scale_hi", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.strong_scale_hi = parse_double(k, v); }},
      {"image.jitter_prob", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.jitter_prob = parse_double(k, v); }},
      {"image.jitter_contrast", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.jitter_contrast = parse_double(k, v); }},
      {"image.jitter_brightness", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.jitter_brightness = parse_double(k, v); }},
      {"image.jitter_saturation", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.jitter_saturation = parse_double(k, v); }},
      {"image.jitter_hue", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.jitter_hue = parse_double(k, v); }},
      {"image.grayscale_prob", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.grayscale_prob = parse_double(k, v); }},
      {"image.blur_prob", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.blur_prob = parse_double(k, v); }},
      {"image.blur_sigma_lo", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.blur_sigma_lo = parse_double(k, v); }},
      {"image.blur_sigma_hi", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.blur_sigma_hi = parse_double(k, v); }},
      {"image.flip_prob", [](TrainConfig& c, const std::string& k, const std::string& v) { c.image.flip_prob = parse_double(k, v); }},
  };
  for (const auto& [key, value] : raw) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(Errc::BadConfig, "unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.method == Method::SwALIPModified &&
      (cfg.recipe != Recipe::Improved || cfg.num_augs < 2))
    throw Error(Errc::BadConfig,
                "method SwALIP-modified computes swapped assignments from correlated views and "
                "requires recipe=improved with num_augs >= 2");
  if (cfg.recipe == Recipe::Improved && cfg.num_augs < 1)
    throw Error(Errc::BadConfig, "key 'train.num_augs': must be >= 1 for the improved recipe");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0 || cfg.beta < 0.0 || cfg.beta > 1.0)
    throw Error(Errc::BadConfig, "keys 'train.alpha'/'train.beta' must be in [0,1]");
  if (cfg.label_smoothing < 0.0 || cfg.label_smoothing >= 1.0)
    throw Error(Errc::BadConfig, "key 'train.label_smoothing': must be in [0,1)");
  if (cfg.model.dropout_prob < 0.0 || cfg.model.dropout_prob >= 1.0)
    throw Error(Errc::BadConfig, "key 'model.dropout': must be in [0,1)");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw Error(Errc::BadConfig, "keys 'train.epochs'/'train.batch_size' must be >= 1");
  if (cfg.lr <= 0.0) throw Error(Errc::BadConfig, "key 'train.lr': must be positive");
  if (cfg.image.out_size != cfg.model.image_size)
    throw Error(Errc::BadConfig, "augmented view size must match model.image_size");
}

TrainConfig materialize(const RawConfig& raw) {
  TrainConfig cfg;
  apply_raw(cfg, raw);
  validate(cfg);
  return cfg;
}

RawConfig to_raw(const TrainConfig& c) {
  RawConfig r;
  r["train.method"] = method_name(c.method);
  r["train.recipe"] = recipe_name(c.recipe);
  r["train.num_augs"] = fmt(static_cast<int64_t>(c.num_augs));
  r["train.alpha"] = fmt(c.alpha);
  r["train.beta"] = fmt(c.beta);
  r["train.label_smoothing"] = fmt(c.label_smoothing);
  r["train.lr"] = fmt(c.lr);
  r["train.final_lr"] = fmt(c.final_lr);
  r["train.warmup_epochs"] = fmt(c.warmup_epochs);
  r["train.epochs"] = fmt(static_cast<int64_t>(c.epochs));
  r["train.batch_size"] = fmt(static_cast<int64_t>(c.batch_size));
  r["train.adam_beta1"] = fmt(c.adam_beta1);
  r["train.adam_beta2"] = fmt(c.adam_beta2);
  r["train.weight_decay"] = fmt(c.weight_decay);
  r["train.momentum"] = fmt(c.momentum_coef);
  r["train.lam_bt"] = fmt(c.lam_bt);
  r["train.swav_temperature"] = fmt(c.swav_temperature);
  r["train.swalip_lambda"] = fmt(c.swalip_lambda);
  r["train.seed"] = fmt(c.seed);
  r["train.log_every"] = fmt(static_cast<int64_t>(c.log_every));
  r["train.eval_every"] = fmt(static_cast<int64_t>(c.eval_every));
  r["train.timing"] = c.timing_wall ? "wall" : "none";
  r["model.image_size"] = fmt(c.model.image_size);
  r["model.embed_dim"] = fmt(c.model.embed_dim);
  r["model.hidden_dim"] = fmt(c.model.hidden_dim);
  r["model.proj_dim"] = fmt(c.model.proj_dim);
  r["model.text_buckets"] = fmt(c.model.text_buckets);
  r["model.prototypes"] = fmt(c.model.n_prototypes);
  r["model.dropout"] = fmt(c.model.dropout_prob);
  r["sinkhorn.epsilon"] = fmt(c.sinkhorn.epsilon);
  r["sinkhorn.iters"] = fmt(static_cast<int64_t>(c.sinkhorn.n_iters));
  r["sinkhorn.tol"] = fmt(c.sinkhorn.tol);
  r["text.stopword_prob"] = fmt(c.text.stopword_prob);
  r["text.eda_intensity"] = fmt(c.text.eda_intensity);
  r["text.deletion_prob"] = fmt(c.text.deletion_prob);
  r["image.weak_scale_lo"] = fmt(c.image.weak_scale_lo);
  r["image.weak_scale_hi"] = fmt(c.image.weak_scale_hi);
  r["image.strong_scale_lo"] = fmt(c.image.strong_scale_lo);
  r["image.strong_scale_hi"] = fmt(c.image.strong_scale_hi);
  r["image.jitter_prob"] = fmt(c.image.jitter_prob);
  r["image.jitter_contrast"] = fmt(c.image.jitter_contrast);
  r["image.jitter_brightness"] = fmt(c.image.jitter_brightness);
  r["image.jitter_saturation"] = fmt(c.image.jitter_saturation);
  r["image.jitter_hue"] = fmt(c.image.jitter_hue);
  r["image.grayscale_prob"] = fmt(c.image.grayscale_prob);
  r["image.blur_prob"] = fmt(c.image.blur_prob);
  r["image.blur_sigma_lo"] = fmt(c.image.blur_sigma_lo);
  r["image.blur_sigma_hi"] = fmt(c.image.blur_sigma_hi);
  r["image.flip_prob"] = fmt(c.image.flip_prob);
  return r;
}

std::string canonical_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : to_raw(cfg)) os << k << "=" << v << "\n";
  return os.str();
}

uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(canonical_config(cfg)); }

}  // namespace vlplab
