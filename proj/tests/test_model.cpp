#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "vlplab/model.hpp"

using namespace vlplab;
using testutil::random_tensor;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.embed_dim = 12;
  cfg.hidden_dim = 16;
  cfg.proj_dim = 6;
  cfg.text_buckets = 64;
  cfg.n_prototypes = 5;
  return cfg;
}

TokenBatch toy_tokens(const ModelConfig& cfg) {
  std::vector<TokenSequence> caps = {{"red", "circle"}, {"blue", "square", "small"}};
  return make_token_batch(caps, cfg.text_buckets);
}

Tensor toy_images(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  return random_tensor({2, 3 * cfg.image_size * cfg.image_size}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("init_model determinism and layout") {
  auto cfg = small_cfg();
  ModelState a = init_model(cfg, 99);
  ModelState b = init_model(cfg, 99);
  REQUIRE(a.params.size() == b.params.size());
  for (size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].name == b.params[i].name);
    for (int64_t j = 0; j < a.params[i].value.numel(); ++j)
      CHECK(a.params[i].value.at(j) == b.params[i].value.at(j));
  }
  ModelState c = init_model(cfg, 100);
  bool any_diff = false;
  for (int64_t j = 0; j < c.value_of("img_enc.w0").numel(); ++j)
    any_diff = any_diff || c.value_of("img_enc.w0").at(j) != a.value_of("img_enc.w0").at(j);
  CHECK(any_diff);

  // optional components never shift the shared initializations
  ModelConfig with_extras = cfg;
  with_extras.with_predictors = true;
  with_extras.with_prototypes = true;
  with_extras.with_momentum = true;
  ModelState d = init_model(with_extras, 99);
  for (const char* name : {"img_enc.w0", "txt_embed.table", "img_proj_strong.w1"}) {
    const Tensor& va = a.value_of(name);
    const Tensor& vd = d.value_of(name);
    for (int64_t j = 0; j < va.numel(); ++j) CHECK(va.at(j) == vd.at(j));
  }

  // weak projector is bias-free; logit scales start at ln(1/0.07)
  CHECK(a.find("img_proj_weak.w") >= 0);
  CHECK(a.find("img_proj_weak.b") < 0);
  CHECK(std::exp(a.value_of("log_scale_weak").at(0)) == doctest::Approx(1.0 / 0.07));

  // desk defaults
  ModelConfig desk;
  CHECK(desk.embed_dim == 64);
  CHECK(desk.hidden_dim == 128);
  CHECK(desk.proj_dim == 32);

  // decay exclusions
  for (const auto& p : a.params) {
    const bool is_excluded = p.name.find(".b") != std::string::npos ||
                             p.name.find("gamma") != std::string::npos ||
                             p.name.find("beta") != std::string::npos ||
                             p.name.find("log_scale") != std::string::npos;
    if (p.name.find("txt_embed") != std::string::npos) continue;
    CHECK(p.decay_eligible == !is_excluded);
  }

  CHECK_THROWS_AS((void)init_model(ModelConfig{.image_size = 0}, 1), Error);
}

TEST_CASE("forward_views: eval determinism, strong normalization, dropout semantics") {
  auto cfg = small_cfg();
  cfg.dropout_prob = 0.5;
  ModelState s = init_model(cfg, 3);
  Tensor weak = toy_images(cfg, 1);
  std::vector<Tensor> strong = {toy_images(cfg, 2), toy_images(cfg, 3)};
  TokenBatch tb = toy_tokens(cfg);
  std::vector<TokenBatch> tbs = {tb, tb};

  // eval mode is deterministic even with dropout configured
  Tensor eval1, eval2;
  for (int rep = 0; rep < 2; ++rep) {
    GradTape t;
    ParamVars pv = ParamVars::leaves(t, s);
    auto v = forward_views(t, pv, s, weak, strong, tb, tbs, Mode::Eval, 123);
    (rep == 0 ? eval1 : eval2) = t.value(v.txt_strong[0]);
  }
  for (int64_t i = 0; i < eval1.numel(); ++i) CHECK(eval1.at(i) == eval2.at(i));

  // strong projections have unit rows
  GradTape t;
  ParamVars pv = ParamVars::leaves(t, s);
  auto v = forward_views(t, pv, s, weak, strong, tb, tbs, Mode::Train, 7);
  for (Var sv : {v.img_strong[0], v.txt_strong[1]}) {
    const Tensor& m = t.value(sv);
    for (int64_t i = 0; i < m.rows(); ++i) {
      double n = 0.0;
      for (int64_t j = 0; j < m.cols(); ++j) n += m.at(i, j) * m.at(i, j);
      CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
    }
  }

  // train mode with dropout differs across step seeds (dropout active)
  GradTape t2;
  ParamVars pv2 = ParamVars::leaves(t2, s);
  auto v2 = forward_views(t2, pv2, s, weak, strong, tb, tbs, Mode::Train, 8);
  bool differs = false;
  const Tensor& a = t.value(v.txt_weak);
  const Tensor& b = t2.value(v2.txt_weak);
  for (int64_t i = 0; i < a.numel(); ++i) differs = differs || a.at(i) != b.at(i);
  CHECK(differs);
}

TEST_CASE("predictor_forward examples") {
  auto cfg = small_cfg();
  cfg.with_predictors = true;
  ModelState s = init_model(cfg, 5);
  Rng rng(6);
  Tensor z = random_tensor({3, cfg.proj_dim}, rng);

  GradTape t;
  ParamVars pv = ParamVars::leaves(t, s);
  Var zv = t.constant(z);
  Var ab = predictor_forward(t, pv, s, Direction::AtoB, zv);
  Var ba = predictor_forward(t, pv, s, Direction::BtoA, zv);
  REQUIRE(t.value(ab).dims() == std::vector<int64_t>{3, cfg.proj_dim});

  // distinct direction parameters give distinct outputs
  bool differs = false;
  for (int64_t i = 0; i < t.value(ab).numel(); ++i)
    differs = differs || t.value(ab).at(i) != t.value(ba).at(i);
  CHECK(differs);

  // zero final layer -> zero output
  ModelState s0 = init_model(cfg, 5);
  s0.value_of("pred_ab.w1") = Tensor::zeros({cfg.hidden_dim, cfg.proj_dim});
  s0.value_of("pred_ab.b1") = Tensor::zeros({cfg.proj_dim});
  GradTape t0;
  ParamVars pv0 = ParamVars::leaves(t0, s0);
  Var out0 = predictor_forward(t0, pv0, s0, Direction::AtoB, t0.constant(z));
  for (int64_t i = 0; i < t0.value(out0).numel(); ++i) CHECK(t0.value(out0).at(i) == 0.0);

  // configs without predictors refuse
  ModelState nop = init_model(small_cfg(), 5);
  GradTape t1;
  ParamVars pv1 = ParamVars::leaves(t1, nop);
  CHECK_THROWS_AS((void)predictor_forward(t1, pv1, nop, Direction::AtoB, t1.constant(z)), Error);
}

TEST_CASE("momentum_update examples and contraction") {
  auto cfg = small_cfg();
  cfg.with_momentum = true;
  ModelState s = init_model(cfg, 11);

  // nudge the online weights away from the momentum copy
  Tensor& w = s.value_of("img_enc.w0");
  for (int64_t i = 0; i < w.numel(); ++i) w.at(i) += 0.5;

  auto dist = [&]() {
    double d = 0.0;
    for (size_t k = 0; k < s.momentum_ids.size(); ++k) {
      const Tensor& online = s.params[s.momentum_ids[k]].value;
      for (int64_t i = 0; i < online.numel(); ++i)
        d = std::max(d, std::abs(online.at(i) - s.momentum_values[k].at(i)));
    }
    return d;
  };

  const double d0 = dist();
  CHECK(d0 > 0.4);
  momentum_update(s, 1.0);
  CHECK(dist() == doctest::Approx(d0));  // m = 1: unchanged
  momentum_update(s, 0.99);
  CHECK(dist() == doctest::Approx(0.99 * d0).epsilon(1e-9));
  momentum_update(s, 0.0);
  CHECK(dist() == doctest::Approx(0.0));  // m = 0: copies online

  // scalar example: online 1.0, momentum 0.0, m = 0.99 -> 0.01
  Tensor& scale_w = s.value_of("txt_proj_weak.w");
  Tensor saved = scale_w;
  for (size_t k = 0; k < s.momentum_ids.size(); ++k)
    if (s.params[s.momentum_ids[k]].name == "txt_proj_weak.w") {
      s.params[s.momentum_ids[k]].value.at(0) = 1.0;
      s.momentum_values[k].at(0) = 0.0;
      momentum_update(s, 0.99);
      CHECK(s.momentum_values[k].at(0) == doctest::Approx(0.01).epsilon(1e-12));
    }
  (void)saved;

  ModelState no_m = init_model(small_cfg(), 11);
  CHECK_THROWS_AS(momentum_update(no_m, 0.9), Error);
}

TEST_CASE("apply_dropout examples and unbiasedness") {
  Rng rng(13);
  Tensor x = random_tensor({4, 8}, rng, 0.5, 1.5);
  Rng r1(1);
  Tensor same = apply_dropout(x, 0.0, Mode::Train, r1);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(same.at(i) == x.at(i));
  Rng r2(2);
  Tensor ev = apply_dropout(x, 0.7, Mode::Eval, r2);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(ev.at(i) == x.at(i));

  // inverted dropout is unbiased: mean over 10k trials within 3 sigma
  const double p = 0.2;
  const int trials = 10000;
  double x_mean = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) x_mean += x.at(i);
  x_mean /= static_cast<double>(x.numel());
  double total = 0.0, total_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng r(derive_seed(3, "drop", static_cast<uint64_t>(t)));
    Tensor d = apply_dropout(x, p, Mode::Train, r);
    double m = 0.0;
    for (int64_t i = 0; i < d.numel(); ++i) m += d.at(i);
    m /= static_cast<double>(d.numel());
    total += m;
    total_sq += m * m;
  }
  const double mean = total / trials;
  const double var = total_sq / trials - mean * mean;
  const double sigma = std::sqrt(var / trials);
  CHECK(std::abs(mean - x_mean) < 3.0 * sigma);
}

TEST_CASE("checkpoint save/load round trip") {
  auto cfg = small_cfg();
  cfg.with_prototypes = true;
  ModelState s = init_model(cfg, 21);
  s.bn_img.mean.at(0) = 0.123;
  s.bn_txt.var.at(1) = 2.5;
  const std::string dir = "ckpt_test";
  save_checkpoint(dir, s, "SwALIP", "improved", 0xDEADBEEFULL);

  Checkpoint ck = load_checkpoint(dir);
  CHECK(ck.method == "SwALIP");
  CHECK(ck.recipe == "improved");
  CHECK(ck.config_hash == 0xDEADBEEFULL);
  REQUIRE(ck.state.params.size() == s.params.size());
  for (size_t i = 0; i < s.params.size(); ++i) {
    CHECK(ck.state.params[i].name == s.params[i].name);
    for (int64_t j = 0; j < s.params[i].value.numel(); ++j)
      CHECK(ck.state.params[i].value.at(j) ==
            doctest::Approx(static_cast<double>(static_cast<float>(s.params[i].value.at(j)))));
  }
  CHECK(ck.state.bn_img.mean.at(0) == doctest::Approx(0.123));
  CHECK(ck.state.bn_txt.var.at(1) == doctest::Approx(2.5));

  // corrupt manifest -> CorruptRecord
  {
    std::ofstream os(dir + "/manifest.json", std::ios::trunc);
    os << "{ not json";
  }
  CHECK_THROWS_AS((void)load_checkpoint(dir), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("token batch hashing is stable and in range") {
  auto cfg = small_cfg();
  std::vector<TokenSequence> caps = {{"red", "circle"}, {"red", "circle"}, {"blue", "square"}};
  TokenBatch b = make_token_batch(caps, cfg.text_buckets);
  REQUIRE(b.offsets.size() == 4);
  CHECK(b.offsets.back() == static_cast<int64_t>(b.ids.size()));
  for (int64_t id : b.ids) {
    CHECK(id >= 0);
    CHECK(id < cfg.text_buckets);
  }
  CHECK(b.ids[0] == b.ids[2]);  // same token, same bucket
  CHECK(b.ids[1] == b.ids[3]);
}
