#include "vlplab/model.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vlplab/tensor_io.hpp"

namespace vlplab {

namespace {

using nlohmann::json;

constexpr double kLogitScaleInit = 2.6592600369327783;  // ln(1/0.07)

bool is_momentum_covered(const std::string& name) {
  for (const char* prefix : {"img_enc.", "txt_embed.", "txt_enc.", "img_proj_weak.",
                             "txt_proj_weak.", "img_proj_strong.", "txt_proj_strong."})
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

Tensor init_weight(int64_t in_dim, int64_t out_dim, uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Tensor w({in_dim, out_dim});
  for (int64_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-bound, bound);
  return w;
}

std::string hash_hex(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

int64_t ModelState::find(std::string_view name) const {
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int64_t>(i);
  return -1;
}

const Tensor& ModelState::value_of(std::string_view name) const {
  int64_t i = find(name);
  if (i < 0) throw Error(Errc::BadConfig, "no parameter named " + std::string(name));
  return params[static_cast<size_t>(i)].value;
}

Tensor& ModelState::value_of(std::string_view name) {
  int64_t i = find(name);
  if (i < 0) throw Error(Errc::BadConfig, "no parameter named " + std::string(name));
  return params[static_cast<size_t>(i)].value;
}

ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.image_size < 2 || cfg.embed_dim < 1 || cfg.hidden_dim < 1 || cfg.proj_dim < 1 ||
      cfg.text_buckets < 1)
    throw Error(Errc::BadConfig, "model dims must be positive");
  ModelState s;
  s.cfg = cfg;
  const int64_t in_dim = 3 * cfg.image_size * cfg.image_size;
  const int64_t h = cfg.hidden_dim, e = cfg.embed_dim, p = cfg.proj_dim;

  // Each parameter draws from its own derived stream, so optional components
  // (predictors, prototypes) never shift the shared initializations.
  auto weight = [&](const std::string& name, int64_t in, int64_t out) {
    s.params.push_back({name, init_weight(in, out, derive_seed(seed, "init", fnv1a64(name))), true});
  };
  auto bias = [&](const std::string& name, int64_t n) {
    s.params.push_back({name, Tensor::zeros({n}), false});
  };

  weight("img_enc.w0", in_dim, h);
  bias("img_enc.b0", h);
  weight("img_enc.w1", h, h);
  bias("img_enc.b1", h);
  weight("img_enc.w2", h, e);
  bias("img_enc.b2", e);

  weight("txt_embed.table", cfg.text_buckets, h);
  weight("txt_enc.w0", h, h);
  bias("txt_enc.b0", h);
  weight("txt_enc.w1", h, h);
  bias("txt_enc.b1", h);
  weight("txt_enc.w2", h, e);
  bias("txt_enc.b2", e);

  weight("img_proj_weak.w", e, p);
  weight("txt_proj_weak.w", e, p);

  for (const char* mod : {"img", "txt"}) {
    const std::string base = std::string(mod) + "_proj_strong.";
    weight(base + "w0", e, h);
    bias(base + "b0", h);
    s.params.push_back({base + "gamma", Tensor::full({h}, 1.0), false});
    s.params.push_back({base + "beta", Tensor::zeros({h}), false});
    weight(base + "w1", h, p);
    bias(base + "b1", p);
  }

  if (cfg.with_predictors) {
    for (const char* dir : {"pred_ab.", "pred_ba."}) {
      weight(std::string(dir) + "w0", p, h);
      bias(std::string(dir) + "b0", h);
      weight(std::string(dir) + "w1", h, p);
      bias(std::string(dir) + "b1", p);
    }
  }

  if (cfg.with_prototypes) {
    Rng rng(derive_seed(seed, "init", fnv1a64("prototypes")));
    Tensor protos({cfg.n_prototypes, p});
    for (int64_t i = 0; i < protos.numel(); ++i) protos.at(i) = rng.uniform(-1.0, 1.0);
    s.params.push_back({"prototypes", l2_normalize_rows(protos), true});
  }

  s.params.push_back({"log_scale_weak", Tensor::scalar(kLogitScaleInit), false});
  s.params.push_back({"log_scale_strong", Tensor::scalar(kLogitScaleInit), false});

  s.bn_img = {Tensor::zeros({h}), Tensor::full({h}, 1.0)};
  s.bn_txt = {Tensor::zeros({h}), Tensor::full({h}, 1.0)};

  if (cfg.with_momentum) {
    for (size_t i = 0; i < s.params.size(); ++i) {
      if (is_momentum_covered(s.params[i].name)) {
        s.momentum_ids.push_back(i);
        s.momentum_values.push_back(s.params[i].value);
      }
    }
    s.bn_img_m = s.bn_img;
    s.bn_txt_m = s.bn_txt;
  }
  return s;
}

ParamVars ParamVars::leaves(GradTape& t, const ModelState& s) {
  ParamVars pv;
  pv.vars.reserve(s.params.size());
  for (const auto& p : s.params) pv.vars.push_back(t.leaf(p.value));
  return pv;
}

ParamVars ParamVars::momentum_constants(GradTape& t, const ModelState& s) {
  if (!s.cfg.with_momentum) throw Error(Errc::MomentumMissing, "model has no momentum state");
  ParamVars pv;
  pv.vars.assign(s.params.size(), Var{});
  for (size_t k = 0; k < s.momentum_ids.size(); ++k)
    pv.vars[s.momentum_ids[k]] = t.constant(s.momentum_values[k]);
  return pv;
}

Var ParamVars::of(const ModelState& s, std::string_view name) const {
  int64_t i = s.find(name);
  if (i < 0 || !vars[static_cast<size_t>(i)].valid())
    throw Error(Errc::BadConfig, "parameter not bound: " + std::string(name));
  return vars[static_cast<size_t>(i)];
}

TokenBatch make_token_batch(const std::vector<TokenSequence>& captions, int64_t buckets) {
  TokenBatch b;
  b.offsets.push_back(0);
  for (const auto& caption : captions) {
    if (caption.empty()) throw Error(Errc::EmptyCaptionList, "empty token sequence in batch");
    for (const auto& tok : caption)
      b.ids.push_back(static_cast<int64_t>(fnv1a64(tok) % static_cast<uint64_t>(buckets)));
    b.offsets.push_back(static_cast<int64_t>(b.ids.size()));
  }
  return b;
}

Tensor flatten_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw Error(Errc::ShapeMismatch, "flatten_images: empty batch");
  const int64_t per = images[0].numel();
  Tensor out({static_cast<int64_t>(images.size()), per});
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].numel() != per)
      throw Error(Errc::ShapeMismatch, "flatten_images: inconsistent image sizes");
    for (int64_t j = 0; j < per; ++j) out.at(static_cast<int64_t>(i), j) = images[i].at(j);
  }
  return out;
}

Var encode_images(GradTape& t, const ParamVars& pv, const ModelState& s, const Tensor& flat) {
  if (flat.cols() != 3 * s.cfg.image_size * s.cfg.image_size)
    throw Error(Errc::ShapeMismatch, "image batch width " + flat.dims_str() +
                                         " does not match the configured image size");
  Var x = t.constant(flat);
  x = t.relu(t.linear(x, pv.of(s, "img_enc.w0"), pv.of(s, "img_enc.b0")));
  x = t.relu(t.linear(x, pv.of(s, "img_enc.w1"), pv.of(s, "img_enc.b1")));
  return t.linear(x, pv.of(s, "img_enc.w2"), pv.of(s, "img_enc.b2"));
}

Var encode_texts(GradTape& t, const ParamVars& pv, const ModelState& s, const TokenBatch& batch,
                 double dropout_prob, uint64_t dropout_seed) {
  Var emb = t.gather_rows(pv.of(s, "txt_embed.table"), batch.ids);
  Var x = t.segment_mean(emb, batch.offsets);
  for (int layer = 0; layer < 2; ++layer) {
    const std::string w = "txt_enc.w" + std::to_string(layer);
    const std::string b = "txt_enc.b" + std::to_string(layer);
    x = t.relu(t.linear(x, pv.of(s, w), pv.of(s, b)));
    if (dropout_prob > 0.0) {
      Rng rng(derive_seed(dropout_seed, "layer", static_cast<uint64_t>(layer)));
      x = t.dropout(x, dropout_prob, rng);
    }
  }
  return t.linear(x, pv.of(s, "txt_enc.w2"), pv.of(s, "txt_enc.b2"));
}

Var project_weak(GradTape& t, const ParamVars& pv, const ModelState& s, Modality m, Var embed) {
  const char* name = (m == Modality::Image) ? "img_proj_weak.w" : "txt_proj_weak.w";
  return t.matmul(embed, pv.of(s, name));
}

Var project_strong(GradTape& t, const ParamVars& pv, const ModelState& s, Modality m, Var embed,
                   Mode mode, BnBuffers& buffers) {
  const std::string base = (m == Modality::Image) ? "img_proj_strong." : "txt_proj_strong.";
  Var x = t.linear(embed, pv.of(s, base + "w0"), pv.of(s, base + "b0"));
  if (mode == Mode::Train) {
    BatchNormStats stats;
    x = t.batchnorm_train(x, pv.of(s, base + "gamma"), pv.of(s, base + "beta"), s.cfg.bn_eps,
                          &stats);
    const double m_bn = s.cfg.bn_momentum;
    for (int64_t j = 0; j < buffers.mean.numel(); ++j) {
      buffers.mean.at(j) = m_bn * buffers.mean.at(j) + (1.0 - m_bn) * stats.mean.at(j);
      buffers.var.at(j) = m_bn * buffers.var.at(j) + (1.0 - m_bn) * stats.var.at(j);
    }
  } else {
    x = t.batchnorm_eval(x, pv.of(s, base + "gamma"), pv.of(s, base + "beta"), buffers.mean,
                         buffers.var, s.cfg.bn_eps);
  }
  x = t.relu(x);
  x = t.linear(x, pv.of(s, base + "w1"), pv.of(s, base + "b1"));
  return t.l2_normalize_rows(x);
}

Var predictor_forward(GradTape& t, const ParamVars& pv, const ModelState& s, Direction dir,
                      Var z) {
  if (!s.cfg.with_predictors)
    throw Error(Errc::PredictorMissing, "this configuration has no predictors");
  const std::string base = (dir == Direction::AtoB) ? "pred_ab." : "pred_ba.";
  Var x = t.relu(t.linear(z, pv.of(s, base + "w0"), pv.of(s, base + "b0")));
  return t.linear(x, pv.of(s, base + "w1"), pv.of(s, base + "b1"));
}

Tensor apply_dropout(const Tensor& t, double prob, Mode mode, Rng& rng) {
  if (prob < 0.0 || prob >= 1.0) throw Error(Errc::BadConfig, "dropout prob must be in [0,1)");
  if (mode == Mode::Eval || prob == 0.0) return t;
  Tensor out(t.dims());
  const double keep_scale = 1.0 / (1.0 - prob);
  for (int64_t i = 0; i < t.numel(); ++i)
    out.at(i) = rng.bernoulli(prob) ? 0.0 : t.at(i) * keep_scale;
  return out;
}

void momentum_update(ModelState& s, double m) {
  if (!s.cfg.with_momentum || s.momentum_ids.empty())
    throw Error(Errc::MomentumMissing, "momentum_update on a model without momentum state");
  if (m < 0.0 || m > 1.0) throw Error(Errc::BadConfig, "momentum coefficient must be in [0,1]");
  for (size_t k = 0; k < s.momentum_ids.size(); ++k) {
    const Tensor& online = s.params[s.momentum_ids[k]].value;
    Tensor& mom = s.momentum_values[k];
    for (int64_t i = 0; i < mom.numel(); ++i)
      mom.at(i) = m * mom.at(i) + (1.0 - m) * online.at(i);
  }
}

ViewEmbeddings forward_views(GradTape& t, const ParamVars& pv, ModelState& s,
                             const Tensor& img_weak_flat,
                             const std::vector<Tensor>& img_strong_flat,
                             const TokenBatch& txt_weak, const std::vector<TokenBatch>& txt_strong,
                             Mode mode, uint64_t step_seed, bool use_momentum) {
  if (img_strong_flat.size() != txt_strong.size())
    throw Error(Errc::ViewCountMismatch, "image and text strong view counts differ");
  BnBuffers& bn_img = use_momentum ? s.bn_img_m : s.bn_img;
  BnBuffers& bn_txt = use_momentum ? s.bn_txt_m : s.bn_txt;
  const double drop = (mode == Mode::Train && !use_momentum) ? s.cfg.dropout_prob : 0.0;

  ViewEmbeddings out;
  Var e_img = encode_images(t, pv, s, img_weak_flat);
  Var e_txt = encode_texts(t, pv, s, txt_weak, drop, derive_seed(step_seed, "tdrop", 0));
  out.img_weak = project_weak(t, pv, s, Modality::Image, e_img);
  out.txt_weak = project_weak(t, pv, s, Modality::Text, e_txt);

  for (size_t k = 0; k < img_strong_flat.size(); ++k) {
    Var es_img = encode_images(t, pv, s, img_strong_flat[k]);
    Var es_txt = encode_texts(t, pv, s, txt_strong[k], drop,
                              derive_seed(step_seed, "tdrop", 1 + static_cast<uint64_t>(k)));
    out.img_strong.push_back(project_strong(t, pv, s, Modality::Image, es_img, mode, bn_img));
    out.txt_strong.push_back(project_strong(t, pv, s, Modality::Text, es_txt, mode, bn_txt));
  }
  return out;
}

void save_checkpoint(const std::string& dir, const ModelState& s, const std::string& method,
                     const std::string& recipe, uint64_t config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "vlplab-checkpoint";
  manifest["version"] = 1;
  manifest["config_hash"] = hash_hex(config_hash);
  manifest["method"] = method;
  manifest["recipe"] = recipe;
  manifest["model"] = {{"image_size", s.cfg.image_size},
                       {"embed_dim", s.cfg.embed_dim},
                       {"hidden_dim", s.cfg.hidden_dim},
                       {"proj_dim", s.cfg.proj_dim},
                       {"text_buckets", s.cfg.text_buckets},
                       {"n_prototypes", s.cfg.n_prototypes},
                       {"dropout_prob", s.cfg.dropout_prob},
                       {"bn_momentum", s.cfg.bn_momentum},
                       {"bn_eps", s.cfg.bn_eps},
                       {"with_predictors", s.cfg.with_predictors},
                       {"with_momentum", s.cfg.with_momentum},
                       {"with_prototypes", s.cfg.with_prototypes},
                       {"logit_scale_max", s.cfg.logit_scale_max}};
  json params = json::array();
  for (size_t i = 0; i < s.params.size(); ++i) {
    char fname[64];
    std::snprintf(fname, sizeof(fname), "p%03zu.tnsr", i);
    write_tnsr(dir + "/" + fname, s.params[i].value);
    params.push_back({{"name", s.params[i].name},
                      {"dims", s.params[i].value.dims()},
                      {"file", fname},
                      {"decay", s.params[i].decay_eligible}});
  }
  manifest["params"] = params;
  json buffers = json::array();
  auto put_buffer = [&](const std::string& name, const Tensor& v) {
    const std::string fname = name + ".tnsr";
    write_tnsr(dir + "/" + fname, v);
    buffers.push_back({{"name", name}, {"file", fname}});
  };
  put_buffer("bn_img.mean", s.bn_img.mean);
  put_buffer("bn_img.var", s.bn_img.var);
  put_buffer("bn_txt.mean", s.bn_txt.mean);
  put_buffer("bn_txt.var", s.bn_txt.var);
  manifest["buffers"] = buffers;

  std::ofstream os(dir + "/manifest.json");
  if (!os) throw Error(Errc::IoError, "cannot write checkpoint manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw Error(Errc::IoError, "no checkpoint manifest in " + dir);
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, std::string("bad checkpoint manifest: ") + e.what());
  }
  try {
    if (manifest.at("format") != "vlplab-checkpoint")
      throw Error(Errc::CorruptRecord, "not a checkpoint manifest");
    Checkpoint ck;
    const json& mc = manifest.at("model");
    ModelConfig cfg;
    cfg.image_size = mc.at("image_size");
    cfg.embed_dim = mc.at("embed_dim");
    cfg.hidden_dim = mc.at("hidden_dim");
    cfg.proj_dim = mc.at("proj_dim");
    cfg.text_buckets = mc.at("text_buckets");
    cfg.n_prototypes = mc.at("n_prototypes");
    cfg.dropout_prob = mc.at("dropout_prob");
    cfg.bn_momentum = mc.at("bn_momentum");
    cfg.bn_eps = mc.at("bn_eps");
    cfg.with_predictors = mc.at("with_predictors");
    cfg.with_momentum = mc.at("with_momentum");
    cfg.with_prototypes = mc.at("with_prototypes");
    cfg.logit_scale_max = mc.at("logit_scale_max");
    ck.state = init_model(cfg, 0);
    ck.method = manifest.at("method");
    ck.recipe = manifest.at("recipe");
    ck.config_hash = std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);

    for (const auto& p : manifest.at("params")) {
      const std::string name = p.at("name");
      int64_t idx = ck.state.find(name);
      if (idx < 0) throw Error(Errc::CorruptRecord, "unknown parameter in manifest: " + name);
      Tensor v = read_tnsr(dir + "/" + p.at("file").get<std::string>());
      if (!v.same_dims(ck.state.params[static_cast<size_t>(idx)].value))
        throw Error(Errc::CorruptRecord, "shape mismatch for parameter " + name);
      ck.state.params[static_cast<size_t>(idx)].value = std::move(v);
    }
    for (const auto& b : manifest.at("buffers")) {
      const std::string name = b.at("name");
      Tensor v = read_tnsr(dir + "/" + b.at("file").get<std::string>());
      if (name == "bn_img.mean") ck.state.bn_img.mean = std::move(v);
      else if (name == "bn_img.var") ck.state.bn_img.var = std::move(v);
      else if (name == "bn_txt.mean") ck.state.bn_txt.mean = std::move(v);
      else if (name == "bn_txt.var") ck.state.bn_txt.var = std::move(v);
    }
    // Momentum values are not checkpointed; re-seed them from the online copy.
    for (size_t k = 0; k < ck.state.momentum_ids.size(); ++k)
      ck.state.momentum_values[k] = ck.state.params[ck.state.momentum_ids[k]].value;
    ck.state.bn_img_m = ck.state.bn_img;
    ck.state.bn_txt_m = ck.state.bn_txt;
    return ck;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, std::string("bad checkpoint manifest: ") + e.what());
  }
}

}  // namespace vlplab
