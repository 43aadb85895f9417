#include "vlplab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vlplab/imageaug.hpp"

namespace vlplab {

namespace {

constexpr double kAdamEps = 1e-8;

struct BatchViews {
  Tensor img_weak;                      // N x 3SS
  std::vector<Tensor> img_strong;       // num_augs of N x 3SS
  TokenBatch txt_weak;
  std::vector<TokenBatch> txt_strong;
};

// One weak view always; strong views only under the improved recipe. Every
// draw comes from a stream named by (seed, modality, epoch, sample, view), so
// batch composition or method never shifts another sample's augmentations.
BatchViews build_views(const std::vector<const Sample*>& batch,
                       const std::vector<int64_t>& sample_ids, int64_t epoch,
                       const TrainConfig& cfg) {
  const int n_strong = (cfg.recipe == Recipe::Improved) ? cfg.num_augs : 0;
  std::vector<Tensor> weak_imgs;
  std::vector<std::vector<Tensor>> strong_imgs(static_cast<size_t>(n_strong));
  std::vector<TokenSequence> weak_txts;
  std::vector<std::vector<TokenSequence>> strong_txts(static_cast<size_t>(n_strong));

  for (size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    const uint64_t sid = static_cast<uint64_t>(sample_ids[i]);
    {
      Rng rng(derive_seed(cfg.seed, "img", static_cast<uint64_t>(epoch), sid, 0));
      weak_imgs.push_back(augment_image(s.image, ImageMode::Weak, cfg.image, rng));
    }
    {
      Rng rng(derive_seed(cfg.seed, "txt", static_cast<uint64_t>(epoch), sid, 0));
      weak_txts.push_back(augment_text(s.captions, TextMode::Weak, cfg.text, rng));
    }
    for (int k = 0; k < n_strong; ++k) {
      Rng rng_i(derive_seed(cfg.seed, "img", static_cast<uint64_t>(epoch), sid,
                            static_cast<uint64_t>(1 + k)));
      strong_imgs[static_cast<size_t>(k)].push_back(
          augment_image(s.image, ImageMode::Strong, cfg.image, rng_i));
      Rng rng_t(derive_seed(cfg.seed, "txt", static_cast<uint64_t>(epoch), sid,
                            static_cast<uint64_t>(1 + k)));
      strong_txts[static_cast<size_t>(k)].push_back(
          augment_text(s.captions, TextMode::Strong, cfg.text, rng_t));
    }
  }

  BatchViews out;
  out.img_weak = flatten_images(weak_imgs);
  out.txt_weak = make_token_batch(weak_txts, cfg.model.text_buckets);
  for (int k = 0; k < n_strong; ++k) {
    out.img_strong.push_back(flatten_images(strong_imgs[static_cast<size_t>(k)]));
    out.txt_strong.push_back(
        make_token_batch(strong_txts[static_cast<size_t>(k)], cfg.model.text_buckets));
  }
  return out;
}

// Momentum-branch strong (or weak, base recipe) projections of one view;
// constants on the tape, so they are detached targets by construction.
struct MomentumTargets {
  Tensor img;
  Tensor txt;
};

MomentumTargets momentum_targets(GradTape& t, ModelState& state, const BatchViews& views,
                                 const TrainConfig& cfg) {
  ParamVars pv_m = ParamVars::momentum_constants(t, state);
  MomentumTargets out;
  if (cfg.recipe == Recipe::Improved) {
    Var e_img = encode_images(t, pv_m, state, views.img_strong[0]);
    Var e_txt = encode_texts(t, pv_m, state, views.txt_strong[0], 0.0, 0);
    out.img = t.value(
        project_strong(t, pv_m, state, Modality::Image, e_img, Mode::Train, state.bn_img_m));
    out.txt = t.value(
        project_strong(t, pv_m, state, Modality::Text, e_txt, Mode::Train, state.bn_txt_m));
  } else {
    Var e_img = encode_images(t, pv_m, state, views.img_weak);
    Var e_txt = encode_texts(t, pv_m, state, views.txt_weak, 0.0, 0);
    out.img = t.value(project_weak(t, pv_m, state, Modality::Image, e_img));
    out.txt = t.value(project_weak(t, pv_m, state, Modality::Text, e_txt));
  }
  return out;
}

// The non-contrastive term of each baseline over the strong projections
// (weak projections under the base recipe).
Var non_contrastive_loss(GradTape& t, const ParamVars& pv, ModelState& state,
                         const ViewEmbeddings& v, const BatchViews& views,
                         const TrainConfig& cfg) {
  const bool improved = cfg.recipe == Recipe::Improved;
  Var za = improved ? v.img_strong[0] : v.img_weak;
  Var zb = improved ? v.txt_strong[0] : v.txt_weak;

  switch (cfg.method) {
    case Method::CLIP:
      return t.constant(Tensor::scalar(0.0));
    case Method::SiamLIP: {
      Var pa = predictor_forward(t, pv, state, Direction::AtoB, za);
      Var pb = predictor_forward(t, pv, state, Direction::BtoA, zb);
      Var l1 = consistency_loss(t, pa, t.value(zb));
      Var l2 = consistency_loss(t, pb, t.value(za));
      return t.scale(t.add(l1, l2), 0.5);
    }
    case Method::BYOLIP: {
      MomentumTargets targets = momentum_targets(t, state, views, cfg);
      Var pa = predictor_forward(t, pv, state, Direction::AtoB, za);
      Var pb = predictor_forward(t, pv, state, Direction::BtoA, zb);
      Var l1 = consistency_loss(t, pa, targets.txt);
      Var l2 = consistency_loss(t, pb, targets.img);
      return t.scale(t.add(l1, l2), 0.5);
    }
    case Method::BarLIP:
      return barlow_loss(t, barlow_cross_correlation(t, za, zb), cfg.lam_bt);
    case Method::SwALIP: {
      Var protos = pv.of(state, "prototypes");
      const Tensor& protos_v = t.value(protos);
      // Swapped prediction: assignments from the other modality, constants
      // under backprop.
      Tensor a_from_b =
          sinkhorn_normalize(cosine_sim_matrix(t.value(zb), protos_v), cfg.sinkhorn).q;
      Tensor a_from_a =
          sinkhorn_normalize(cosine_sim_matrix(t.value(za), protos_v), cfg.sinkhorn).q;
      Var l1 = swav_xent(t, za, a_from_b, protos, cfg.swav_temperature);
      Var l2 = swav_xent(t, zb, a_from_a, protos, cfg.swav_temperature);
      return t.scale(t.add(l1, l2), 0.5);
    }
    case Method::SwALIPModified: {
      if (v.img_strong.size() < 2 || v.txt_strong.size() < 2)
        throw Error(Errc::ViewCountMismatch,
                    "SwALIP-modified needs two strong views per modality");
      SwalipViews sv{v.img_strong[0], v.img_strong[1], v.txt_strong[0], v.txt_strong[1]};
      return swalip_modified(t, sv, cfg.swalip_lambda, cfg.swav_temperature, cfg.sinkhorn);
    }
  }
  return t.constant(Tensor::scalar(0.0));
}

}  // namespace

OptimizerState init_optimizer(const ModelState& s) {
  OptimizerState opt;
  opt.m.reserve(s.params.size());
  opt.v.reserve(s.params.size());
  for (const auto& p : s.params) {
    opt.m.push_back(Tensor::zeros(p.value.dims()));
    opt.v.push_back(Tensor::zeros(p.value.dims()));
  }
  return opt;
}

double lr_at(int64_t step, const TrainConfig& cfg, int64_t steps_per_epoch) {
  if (step < 0) throw Error(Errc::BadConfig, "lr_at: negative step");
  const int64_t warmup =
      static_cast<int64_t>(std::llround(cfg.warmup_epochs * static_cast<double>(steps_per_epoch)));
  const int64_t total = static_cast<int64_t>(cfg.epochs) * steps_per_epoch;
  if (warmup > 0 && step < warmup)
    return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  const int64_t last = total - 1;
  if (last <= warmup) return cfg.lr;
  const double p = std::clamp(static_cast<double>(step - warmup) /
                                  static_cast<double>(last - warmup),
                              0.0, 1.0);
  return cfg.final_lr + 0.5 * (cfg.lr - cfg.final_lr) * (1.0 + std::cos(3.14159265358979323846 * p));
}

StepResult training_step(ModelState& state, const std::vector<const Sample*>& batch,
                         const std::vector<int64_t>& sample_ids, int64_t epoch,
                         int64_t global_step, const TrainConfig& cfg) {
  if (batch.empty() || batch.size() != sample_ids.size())
    throw Error(Errc::ShapeMismatch, "training_step: malformed batch");
  const int64_t n = static_cast<int64_t>(batch.size());
  const bool improved = cfg.recipe == Recipe::Improved;
  const int num_augs = improved ? cfg.num_augs : 0;

  BatchViews views = build_views(batch, sample_ids, epoch, cfg);

  GradTape t;
  ParamVars pv = ParamVars::leaves(t, state);
  const uint64_t step_seed = derive_seed(cfg.seed, "step", static_cast<uint64_t>(global_step));
  ViewEmbeddings v = forward_views(t, pv, state, views.img_weak, views.img_strong, views.txt_weak,
                                   views.txt_strong, Mode::Train, step_seed);

  Var scale_weak = t.exp(pv.of(state, "log_scale_weak"));
  auto identity_targets = SmoothedTargets::make(n, 0.0);

  LossBreakdown bd;
  bd.alpha = cfg.alpha;
  bd.beta = cfg.beta;
  bd.num_augs = num_augs;

  Var contrastive;
  if (improved) {
    Var scale_strong = t.exp(pv.of(state, "log_scale_strong"));
    auto smoothed = SmoothedTargets::make(n, cfg.label_smoothing);

    Var cw_ab = contrastive_directional(t, v.img_weak, v.txt_weak, scale_weak, identity_targets);
    Var cw_ba = contrastive_directional(t, v.txt_weak, v.img_weak, scale_weak, identity_targets);

    // Each strong view contrasted against every strong view of the other
    // modality: num_augs^2 terms per direction.
    Var cs_ab, cs_ba;
    bool first = true;
    for (int i = 0; i < num_augs; ++i)
      for (int j = 0; j < num_augs; ++j) {
        Var ab = contrastive_directional(t, v.img_strong[static_cast<size_t>(i)],
                                         v.txt_strong[static_cast<size_t>(j)], scale_strong,
                                         smoothed);
        Var ba = contrastive_directional(t, v.txt_strong[static_cast<size_t>(i)],
                                         v.img_strong[static_cast<size_t>(j)], scale_strong,
                                         smoothed);
        cs_ab = first ? ab : t.add(cs_ab, ab);
        cs_ba = first ? ba : t.add(cs_ba, ba);
        first = false;
      }
    const double inv_terms = 1.0 / static_cast<double>(num_augs * num_augs);
    cs_ab = t.scale(cs_ab, inv_terms);
    cs_ba = t.scale(cs_ba, inv_terms);

    const double na = static_cast<double>(num_augs);
    Var loss_a = t.scale(t.add(cw_ab, t.scale(cs_ab, na)), 1.0 / (1.0 + na));
    Var loss_b = t.scale(t.add(cw_ba, t.scale(cs_ba, na)), 1.0 / (1.0 + na));
    contrastive = t.scale(t.add(loss_a, loss_b), 0.5);

    bd.weak_ab = t.value(cw_ab).item();
    bd.weak_ba = t.value(cw_ba).item();
    bd.strong_ab = t.value(cs_ab).item();
    bd.strong_ba = t.value(cs_ba).item();
    bd.modality_a = t.value(loss_a).item();
    bd.modality_b = t.value(loss_b).item();
  } else {
    Var cw_ab = contrastive_directional(t, v.img_weak, v.txt_weak, scale_weak, identity_targets);
    Var cw_ba = contrastive_directional(t, v.txt_weak, v.img_weak, scale_weak, identity_targets);
    contrastive = t.scale(t.add(cw_ab, cw_ba), 0.5);
    bd.weak_ab = t.value(cw_ab).item();
    bd.weak_ba = t.value(cw_ba).item();
    bd.modality_a = bd.weak_ab;
    bd.modality_b = bd.weak_ba;
  }
  bd.contrastive_weak = 0.5 * (bd.weak_ab + bd.weak_ba);
  bd.contrastive_strong = 0.5 * (bd.strong_ab + bd.strong_ba);
  bd.contrastive = t.value(contrastive).item();

  Var lnc = (cfg.method != Method::CLIP && cfg.beta > 0.0)
                ? non_contrastive_loss(t, pv, state, v, views, cfg)
                : t.constant(Tensor::scalar(0.0));
  bd.non_contrastive = t.value(lnc).item();

  Var total = combined_objective(t, contrastive, lnc, cfg.alpha, cfg.beta);
  bd.total = t.value(total).item();

  t.backward(total);
  StepResult out;
  out.loss = bd;
  out.grads.reserve(state.params.size());
  for (size_t i = 0; i < state.params.size(); ++i) out.grads.push_back(t.grad(pv.vars[i]));
  return out;
}

void adamw_step(OptimizerState& opt, ModelState& state, const std::vector<Tensor>& grads,
                double lr, const TrainConfig& cfg) {
  if (grads.size() != state.params.size())
    throw Error(Errc::ShapeMismatch, "adamw_step: gradient count mismatch");
  opt.step += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  for (size_t i = 0; i < state.params.size(); ++i) {
    const Tensor& g = grads[i];
    if (!g.all_finite())
      throw Error(Errc::NonFiniteGradient,
                  "non-finite gradient for " + state.params[i].name);
    Tensor& p = state.params[i].value;
    Tensor& m = opt.m[i];
    Tensor& vv = opt.v[i];
    const double wd = state.params[i].decay_eligible ? cfg.weight_decay : 0.0;
    for (int64_t j = 0; j < p.numel(); ++j) {
      m.at(j) = b1 * m.at(j) + (1.0 - b1) * g.at(j);
      vv.at(j) = b2 * vv.at(j) + (1.0 - b2) * g.at(j) * g.at(j);
      const double mhat = m.at(j) / bc1;
      const double vhat = vv.at(j) / bc2;
      const double old = p.at(j);
      p.at(j) = old - lr * (mhat / (std::sqrt(vhat) + kAdamEps)) - lr * wd * old;
    }
  }
  const double log_max = std::log(state.cfg.logit_scale_max);
  for (const char* name : {"log_scale_weak", "log_scale_strong"}) {
    int64_t idx = state.find(name);
    if (idx < 0) continue;
    Tensor& v = state.params[static_cast<size_t>(idx)].value;
    if (v.at(0) > log_max) v.at(0) = log_max;
  }
}

TrainResult run_epochs(const TrainConfig& cfg, const Dataset& train, const Dataset& test,
                       const ClassPromptSet& prompts, const std::string& out_dir) {
  if (train.samples.empty()) throw Error(Errc::BadConfig, "empty training dataset");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  ModelConfig mc = cfg.model;
  mc.with_predictors = cfg.method == Method::SiamLIP || cfg.method == Method::BYOLIP;
  mc.with_momentum = cfg.method == Method::BYOLIP;
  mc.with_prototypes = cfg.method == Method::SwALIP;
  ModelState state = init_model(mc, cfg.seed);
  OptimizerState opt = init_optimizer(state);

  const int64_t n = static_cast<int64_t>(train.samples.size());
  const int64_t bs = cfg.batch_size;
  const int64_t steps_per_epoch = (n + bs - 1) / bs;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;

  std::vector<Tensor> test_images;
  std::vector<std::string> test_labels;
  for (const auto& s : test.samples) {
    test_images.push_back(s.image);
    test_labels.push_back(s.class_label);
  }

  const std::string metrics_path = out_dir + "/metrics.csv";
  std::ofstream csv(metrics_path, std::ios::binary);
  if (!csv) throw Error(Errc::IoError, "cannot write " + metrics_path);
  csv << "epoch,step,lr,loss_total,loss_weak,loss_strong,loss_nc,logit_scale_weak,"
         "logit_scale_strong,zeroshot_acc,elapsed_s\n";

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_str = [&]() {
    if (!cfg.timing_wall) return std::string("0.000");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return std::string(buf);
  };
  auto write_row = [&](int64_t epoch, int64_t step, double lr, const LossBreakdown& bd,
                       const ModelState& s, const std::string& acc) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,",
                  static_cast<long long>(epoch), static_cast<long long>(step), lr, bd.total,
                  bd.contrastive_weak, bd.contrastive_strong, bd.non_contrastive,
                  std::exp(s.value_of("log_scale_weak").at(0)),
                  std::exp(s.value_of("log_scale_strong").at(0)));
    csv << buf << acc << "," << elapsed_str() << "\n";
  };

  const bool improved = cfg.recipe == Recipe::Improved;
  double last_acc = 0.0;
  LossBreakdown last_bd;
  int64_t global_step = 0;

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    for (int64_t i = n; i > 1; --i) {
      int64_t j = static_cast<int64_t>(shuffle_rng.uniform_int(static_cast<uint64_t>(i)));
      std::swap(order[static_cast<size_t>(i - 1)], order[static_cast<size_t>(j)]);
    }

    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      const int64_t lo = b * bs, hi = std::min(n, lo + bs);
      std::vector<const Sample*> batch;
      std::vector<int64_t> ids;
      for (int64_t i = lo; i < hi; ++i) {
        batch.push_back(&train.samples[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        ids.push_back(order[static_cast<size_t>(i)]);
      }

      StepResult step = training_step(state, batch, ids, epoch, global_step, cfg);
      if (!std::isfinite(step.loss.total))
        throw Error(Errc::NonFinite,
                    "loss went non-finite at epoch " + std::to_string(epoch) + " step " +
                        std::to_string(global_step) + " (first sample index " +
                        std::to_string(ids[0]) + ", seed " + std::to_string(cfg.seed) + ")");
      const double lr = lr_at(global_step, cfg, steps_per_epoch);
      adamw_step(opt, state, step.grads, lr, cfg);
      if (cfg.method == Method::BYOLIP) momentum_update(state, cfg.momentum_coef);

      last_bd = step.loss;
      if (cfg.log_every > 0 && global_step % cfg.log_every == 0)
        write_row(epoch, global_step, lr, step.loss, state, "");
      ++global_step;
    }

    const bool eval_now = !test.samples.empty() &&
                          ((cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) ||
                           epoch + 1 == cfg.epochs);
    if (eval_now) {
      auto zr = zeroshot_classify(state, test_images, test_labels, prompts, improved);
      last_acc = zr.accuracy;
      char accbuf[32];
      std::snprintf(accbuf, sizeof(accbuf), "%.10g", zr.accuracy);
      write_row(epoch, global_step - 1, lr_at(global_step - 1, cfg, steps_per_epoch), last_bd,
                state, accbuf);
    }
  }

  const std::string ckpt = out_dir + "/checkpoint";
  save_checkpoint(ckpt, state, method_name(cfg.method), recipe_name(cfg.recipe),
                  config_hash(cfg));

  TrainResult res;
  res.final_zeroshot = last_acc;
  res.logit_scale_weak = std::exp(state.value_of("log_scale_weak").at(0));
  res.logit_scale_strong = std::exp(state.value_of("log_scale_strong").at(0));
  res.steps = total_steps;
  res.metrics_path = metrics_path;
  res.checkpoint_path = ckpt;
  return res;
}

}  // namespace vlplab
