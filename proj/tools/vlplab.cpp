#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vlplab/config.hpp"
#include "vlplab/dataset.hpp"
#include "vlplab/trainer.hpp"
#include "vlplab/verify.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace vlplab;
using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitHash = 5;

std::string now_iso() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hash_hex(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int map_error(const Error& e, bool eval_context = false) {
  switch (e.code()) {
    case Errc::BadConfig:
      return kExitUsage;
    case Errc::NonFinite:
    case Errc::NonFiniteGradient:
      return kExitNumeric;
    case Errc::CorruptRecord:
      return eval_context ? kExitHash : kExitIo;
    default:
      return kExitIo;
  }
}

struct GenDataArgs {
  std::string out;
  uint64_t seed = 7;
  int64_t train_per_class = 100;
  int64_t test_per_class = 20;
  int64_t image_size = 32;
  double noise = 0.06;
};

int cmd_gen_data(const GenDataArgs& a) {
  try {
    DataGenConfig cfg;
    cfg.seed = a.seed;
    cfg.train_per_class = a.train_per_class;
    cfg.test_per_class = a.test_per_class;
    cfg.image_size = a.image_size;
    cfg.noise = a.noise;
    DataGenSummary sum = generate_synthetic_dataset(cfg, a.out);
    std::printf("classes: %lld\ntrain samples: %lld\ntest samples: %lld\nbytes: %lld\nout: %s\n",
                static_cast<long long>(sum.n_classes), static_cast<long long>(sum.n_train),
                static_cast<long long>(sum.n_test), static_cast<long long>(sum.bytes_written),
                a.out.c_str());
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "gen-data: %s\n", e.what());
    return map_error(e);
  }
}

struct TrainArgs {
  std::string data, out, config_file, preset_name;
  std::vector<std::string> sets;  // key=value overrides
  std::string method, recipe;
  int num_augs = -1;
  double label_smoothing = -1.0, lr = -1.0, alpha = -1.0, beta = -1.0;
  int epochs = -1, batch_size = -1, eval_every = -1, log_every = -1;
  int64_t seed = -1;
  bool seed_given = false;
};

void write_manifest(const std::string& path, const TrainConfig& cfg, const TrainArgs& a,
                    const std::string& started, const std::string& finished) {
  json m;
  m["artifact"] = "vlplab";
  m["version"] = 1;
  json conf = json::object();
  for (const auto& [k, v] : to_raw(cfg)) conf[k] = v;
  m["config"] = conf;
  m["config_hash"] = hash_hex(config_hash(cfg));
  m["seed"] = cfg.seed;
  m["started_at"] = started;
  m["finished_at"] = finished;
  m["data_dir"] = a.data;
  m["outputs"] = {{"metrics", a.out + "/metrics.csv"}, {"checkpoint", a.out + "/checkpoint"}};
  std::ofstream os(path);
  if (!os) throw Error(Errc::IoError, "cannot write " + path);
  os << m.dump(2) << "\n";
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  try {
    RawConfig raw = preset(a.preset_name);
    if (!a.config_file.empty())
      for (auto& [k, v] : parse_config_file(a.config_file)) raw[k] = v;
    // Flags override file values.
    if (!a.method.empty()) raw["train.method"] = a.method;
    if (!a.recipe.empty()) raw["train.recipe"] = a.recipe;
    if (a.num_augs >= 0) raw["train.num_augs"] = std::to_string(a.num_augs);
    if (a.label_smoothing >= 0.0) raw["train.label_smoothing"] = std::to_string(a.label_smoothing);
    if (a.lr > 0.0) raw["train.lr"] = std::to_string(a.lr);
    if (a.alpha >= 0.0) raw["train.alpha"] = std::to_string(a.alpha);
    if (a.beta >= 0.0) raw["train.beta"] = std::to_string(a.beta);
    if (a.epochs > 0) raw["train.epochs"] = std::to_string(a.epochs);
    if (a.batch_size > 0) raw["train.batch_size"] = std::to_string(a.batch_size);
    if (a.eval_every >= 0) raw["train.eval_every"] = std::to_string(a.eval_every);
    if (a.log_every >= 0) raw["train.log_every"] = std::to_string(a.log_every);
    if (a.seed_given) raw["train.seed"] = std::to_string(a.seed);
    else if (raw.find("train.seed") == raw.end()) {
      if (const char* env = std::getenv("VLPLAB_SEED")) raw["train.seed"] = env;
    }
    cfg = materialize(raw);
  } catch (const Error& e) {
    std::fprintf(stderr, "train: %s\n", e.what());
    return kExitUsage;
  }

  try {
    Dataset train_ds = load_dataset(a.data + "/train");
    Dataset test_ds;
    if (fs::exists(a.data + "/test/samples.jsonl")) test_ds = load_dataset(a.data + "/test");
    ClassPromptSet prompts = load_prompts(a.data + "/prompts.json");

    fs::create_directories(a.out);
    const std::string manifest_path = a.out + "/manifest.json";
    const std::string started = now_iso();
    write_manifest(manifest_path, cfg, a, started, "");

    TrainResult res = run_epochs(cfg, train_ds, test_ds, prompts, a.out);
    write_manifest(manifest_path, cfg, a, started, now_iso());
    std::printf("method: %s\nrecipe: %s\nsteps: %lld\nfinal zero-shot accuracy: %.4f\n"
                "logit scales (weak/strong): %.3f / %.3f\nmetrics: %s\ncheckpoint: %s\n",
                method_name(cfg.method).c_str(), recipe_name(cfg.recipe).c_str(),
                static_cast<long long>(res.steps), res.final_zeroshot, res.logit_scale_weak,
                res.logit_scale_strong, res.metrics_path.c_str(), res.checkpoint_path.c_str());
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "train: %s\n", e.what());
    return map_error(e);
  }
}

struct EvalArgs {
  std::string checkpoint, data, prompts, csv;
};

int cmd_eval(const EvalArgs& a) {
  try {
    Checkpoint ck;
    try {
      ck = load_checkpoint(a.checkpoint);
    } catch (const Error& e) {
      if (e.code() == Errc::CorruptRecord) {
        std::fprintf(stderr, "eval: %s\n", e.what());
        return kExitHash;
      }
      throw;
    }
    // Cross-check against the run manifest when the checkpoint lives inside a
    // run directory.
    const fs::path run_manifest = fs::path(a.checkpoint).parent_path() / "manifest.json";
    if (fs::exists(run_manifest)) {
      std::ifstream is(run_manifest);
      json m;
      try {
        is >> m;
        const std::string run_hash = m.at("config_hash");
        if (run_hash != hash_hex(ck.config_hash)) {
          std::fprintf(stderr, "eval: config hash mismatch between run manifest (%s) and "
                               "checkpoint (%s)\n",
                       run_hash.c_str(), hash_hex(ck.config_hash).c_str());
          return kExitHash;
        }
      } catch (const json::exception& e) {
        std::fprintf(stderr, "eval: corrupt run manifest: %s\n", e.what());
        return kExitHash;
      }
    }

    Dataset ds = load_dataset(a.data);
    ClassPromptSet prompts = load_prompts(a.prompts);
    std::vector<Tensor> images;
    std::vector<std::string> labels;
    for (const auto& s : ds.samples) {
      images.push_back(s.image);
      labels.push_back(s.class_label);
    }
    auto res = zeroshot_classify(ck.state, images, labels, prompts, ck.recipe == "improved");
    std::printf("zero-shot accuracy: %.4f (%zu images, %zu classes)\n", res.accuracy,
                images.size(), prompts.classes.size());
    for (size_t c = 0; c < prompts.classes.size(); ++c) {
      const int64_t tot = res.per_class_total[c];
      std::printf("  %-16s n=%-4lld correct=%-4lld acc=%.4f\n",
                  prompts.classes[c].first.c_str(), static_cast<long long>(tot),
                  static_cast<long long>(res.per_class_correct[c]),
                  tot > 0 ? static_cast<double>(res.per_class_correct[c]) /
                                static_cast<double>(tot)
                          : 0.0);
    }
    if (!a.csv.empty()) {
      std::ofstream os(a.csv, std::ios::binary);
      if (!os) throw Error(Errc::IoError, "cannot write " + a.csv);
      os << "class,n,correct,accuracy\n";
      for (size_t c = 0; c < prompts.classes.size(); ++c) {
        const int64_t tot = res.per_class_total[c];
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%.10g",
                      static_cast<long long>(tot),
                      static_cast<long long>(res.per_class_correct[c]),
                      tot > 0 ? static_cast<double>(res.per_class_correct[c]) /
                                    static_cast<double>(tot)
                              : 0.0);
        os << prompts.classes[c].first << "," << buf << "\n";
      }
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "eval: %s\n", e.what());
    return map_error(e, true);
  }
}

int cmd_verify(const std::string& corrupt) {
  auto checks = run_verification(corrupt);
  bool all = true;
  std::printf("%-52s %-6s %s\n", "check", "result", "detail");
  for (const auto& c : checks) {
    std::printf("%-52s %-6s %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.detail.c_str());
    all = all && c.pass;
  }
  std::printf("%zu checks, %s\n", checks.size(), all ? "all passed" : "FAILURES present");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);  // deterministic reduction order, one core
  CLI::App app{"vlplab: desk-scale vision-language pre-training laboratory"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* sc_gen = app.add_subcommand("gen-data", "generate the synthetic captioned dataset");
  sc_gen->add_option("--out", gen.out, "output directory")->required();
  sc_gen->add_option("--seed", gen.seed, "generation seed");
  sc_gen->add_option("--train-per-class", gen.train_per_class, "training samples per class");
  sc_gen->add_option("--test-per-class", gen.test_per_class, "held-out samples per class");
  sc_gen->add_option("--image-size", gen.image_size, "square image size");
  sc_gen->add_option("--noise", gen.noise, "background noise amplitude");

  TrainArgs tr;
  auto* sc_train = app.add_subcommand("train", "train a method on a dataset directory");
  sc_train->add_option("--data", tr.data, "dataset directory (train/ test/ prompts.json)")
      ->required();
  sc_train->add_option("--out", tr.out, "run output directory")->required();
  sc_train->add_option("--config", tr.config_file, "key = value config file");
  sc_train->add_option("--preset", tr.preset_name,
                       "config preset: desk|cc3m-like|yfcc-like|paper");
  sc_train->add_option("--method", tr.method,
                       "CLIP|SiamLIP|BYOLIP|BarLIP|SwALIP|SwALIP-modified");
  sc_train->add_option("--recipe", tr.recipe, "base|improved");
  sc_train->add_option("--num-augs", tr.num_augs, "strong views per modality");
  sc_train->add_option("--label-smoothing", tr.label_smoothing, "smoothing factor");
  sc_train->add_option("--lr", tr.lr, "peak learning rate");
  sc_train->add_option("--alpha", tr.alpha, "contrastive weight");
  sc_train->add_option("--beta", tr.beta, "non-contrastive weight");
  sc_train->add_option("--epochs", tr.epochs, "training epochs");
  sc_train->add_option("--batch-size", tr.batch_size, "batch size");
  sc_train->add_option("--eval-every", tr.eval_every, "zero-shot eval period in epochs");
  sc_train->add_option("--log-every", tr.log_every, "metrics row period in steps");
  auto* seed_opt = sc_train->add_option("--seed", tr.seed, "training seed");

  EvalArgs ev;
  auto* sc_eval = app.add_subcommand("eval", "zero-shot evaluate a checkpoint");
  sc_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required();
  sc_eval->add_option("--data", ev.data, "dataset split directory (samples.jsonl)")->required();
  sc_eval->add_option("--prompts", ev.prompts, "class prompt JSON file")->required();
  sc_eval->add_option("--csv", ev.csv, "write per-class results CSV");

  std::string corrupt;
  auto* sc_verify = app.add_subcommand("verify", "run the property battery");
  sc_verify->add_option("--corrupt", corrupt,
                        "test hook: perturb the named loss gradient to exercise the detector");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  tr.seed_given = seed_opt->count() > 0;
  if (sc_gen->parsed()) return cmd_gen_data(gen);
  if (sc_train->parsed()) return cmd_train(tr);
  if (sc_eval->parsed()) return cmd_eval(ev);
  if (sc_verify->parsed()) return cmd_verify(corrupt);
  return kExitUsage;
}
