#include "vlplab/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "vlplab/imageaug.hpp"
#include "vlplab/tensor_io.hpp"

namespace vlplab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Rgb {
  double r, g, b;
};

Rgb color_value(const std::string& name) {
  if (name == "red") return {0.85, 0.10, 0.10};
  if (name == "green") return {0.10, 0.75, 0.15};
  if (name == "blue") return {0.12, 0.20, 0.85};
  if (name == "yellow") return {0.85, 0.80, 0.10};
  if (name == "magenta") return {0.80, 0.12, 0.80};
  if (name == "cyan") return {0.10, 0.78, 0.80};
  throw Error(Errc::BadConfig, "no color value for '" + name + "'");
}

bool inside_shape(const std::string& shape, double x, double y, double cx, double cy, double r) {
  if (shape == "circle") return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  if (shape == "square") return std::max(std::abs(x - cx), std::abs(y - cy)) <= r;
  if (shape == "triangle") {
    // upward triangle: apex (cx, cy - r), base corners (cx +- r, cy + r)
    const double x0 = cx, y0 = cy - r;
    const double x1 = cx - r, y1 = cy + r;
    const double x2 = cx + r, y2 = cy + r;
    const double d0 = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
    const double d1 = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
    const double d2 = (x0 - x2) * (y - y2) - (y0 - y2) * (x - x2);
    const bool neg = (d0 < 0) || (d1 < 0) || (d2 < 0);
    const bool pos = (d0 > 0) || (d1 > 0) || (d2 > 0);
    return !(neg && pos);
  }
  throw Error(Errc::BadConfig, "no renderer for shape '" + shape + "'");
}

Tensor render_sample(const std::string& color, const std::string& shape, int64_t size,
                     double noise, Rng& rng) {
  Tensor img({3, size, size});
  const Rgb c = color_value(color);
  const double s = static_cast<double>(size);
  const double cx = rng.uniform(0.32, 0.68) * s;
  const double cy = rng.uniform(0.32, 0.68) * s;
  const double r = rng.uniform(0.17, 0.29) * s;
  const double brightness = rng.uniform(0.85, 1.0);
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const double bg = 0.5 + rng.uniform(-noise, noise);
      double rr = bg, gg = bg, bb = bg;
      if (inside_shape(shape, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, cx, cy,
                       r)) {
        rr = c.r * brightness;
        gg = c.g * brightness;
        bb = c.b * brightness;
      }
      img.at(0 * size * size + y * size + x) = std::clamp(rr, 0.0, 1.0);
      img.at(1 * size * size + y * size + x) = std::clamp(gg, 0.0, 1.0);
      img.at(2 * size * size + y * size + x) = std::clamp(bb, 0.0, 1.0);
    }
  return img;
}

const char* kCaptionTemplates[] = {
    "a photo of a %s %s",
    "a %s %s on a gray background",
    "the picture shows a %s %s",
    "one small %s %s",
};
constexpr size_t kNumTemplates = 4;

std::string format_caption(const char* tmpl, const std::string& color, const std::string& shape) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), tmpl, color.c_str(), shape.c_str());
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

int64_t write_split(const DataGenConfig& cfg, const std::string& dir, int64_t per_class,
                    const char* split_tag) {
  fs::create_directories(dir + "/images");
  std::ofstream jsonl(dir + "/samples.jsonl", std::ios::binary);
  if (!jsonl) throw Error(Errc::IoError, "cannot write " + dir + "/samples.jsonl");
  int64_t bytes = 0;
  int64_t index = 0;
  for (const auto& color : cfg.colors)
    for (const auto& shape : cfg.shapes) {
      const std::string label = color + " " + shape;
      for (int64_t k = 0; k < per_class; ++k) {
        Rng rng(derive_seed(cfg.seed, split_tag, fnv1a64(label), static_cast<uint64_t>(k)));
        Tensor img = render_sample(color, shape, cfg.image_size, cfg.noise, rng);
        char fname[64];
        std::snprintf(fname, sizeof(fname), "images/img_%05lld.tnsr",
                      static_cast<long long>(index));
        write_tnsr(dir + "/" + fname, img);
        bytes += 4 + 4 + 3 * 4 + img.numel() * 4;

        // 2..4 distinct caption templates per sample
        const int n_caps = 2 + static_cast<int>(rng.uniform_int(3));
        size_t order[kNumTemplates] = {0, 1, 2, 3};
        for (size_t i = kNumTemplates; i > 1; --i) {
          size_t j = rng.uniform_int(i);
          std::swap(order[i - 1], order[j]);
        }
        // Fixed key order keeps gen-data byte-identical across runs.
        jsonl << "{\"image\": \"" << fname << "\", \"captions\": [";
        for (int ci = 0; ci < n_caps; ++ci) {
          if (ci) jsonl << ", ";
          jsonl << '"' << json_escape(format_caption(kCaptionTemplates[order[static_cast<size_t>(ci)]],
                                                     color, shape))
                << '"';
        }
        jsonl << "], \"class\": \"" << json_escape(label) << "\"}\n";
        ++index;
      }
    }
  jsonl.flush();
  bytes += static_cast<int64_t>(fs::file_size(dir + "/samples.jsonl"));
  return bytes;
}

}  // namespace

DataGenSummary generate_synthetic_dataset(const DataGenConfig& cfg, const std::string& out_dir) {
  if (cfg.colors.empty() || cfg.shapes.empty() || cfg.train_per_class < 1 || cfg.image_size < 4)
    throw Error(Errc::BadConfig, "dataset config needs colors, shapes, samples, and size >= 4");
  DataGenSummary sum;
  sum.n_classes = static_cast<int64_t>(cfg.colors.size() * cfg.shapes.size());
  sum.n_train = sum.n_classes * cfg.train_per_class;
  sum.n_test = sum.n_classes * cfg.test_per_class;
  sum.bytes_written += write_split(cfg, out_dir + "/train", cfg.train_per_class, "train");
  if (cfg.test_per_class > 0)
    sum.bytes_written += write_split(cfg, out_dir + "/test", cfg.test_per_class, "test");

  json prompts = json::object();
  for (const auto& color : cfg.colors)
    for (const auto& shape : cfg.shapes) {
      const std::string label = color + " " + shape;
      prompts[label] = {"a photo of a " + label, "an image of a " + label, "a small " + label};
    }
  std::ofstream os(out_dir + "/prompts.json", std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot write " + out_dir + "/prompts.json");
  os << prompts.dump(2) << "\n";
  sum.bytes_written += static_cast<int64_t>(fs::file_size(out_dir + "/prompts.json"));
  return sum;
}

Dataset load_dataset(const std::string& dir) {
  const std::string path = dir + "/samples.jsonl";
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open " + path);
  Dataset ds;
  std::set<std::string> classes;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::CorruptRecord,
                  path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Sample s;
    try {
      s.image_path = rec.at("image").get<std::string>();
      s.captions = rec.at("captions").get<std::vector<std::string>>();
      if (rec.contains("class")) s.class_label = rec.at("class").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::CorruptRecord,
                  path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (s.captions.empty())
      throw Error(Errc::CorruptRecord,
                  path + ":" + std::to_string(lineno) + ": empty caption list");
    s.image = read_tnsr(dir + "/" + s.image_path);
    if (s.image.rank() != 3 || s.image.dim(0) != 3)
      throw Error(Errc::CorruptRecord, path + ":" + std::to_string(lineno) +
                                           ": image is not (3,H,W): " + s.image.dims_str());
    if (!s.class_label.empty()) classes.insert(s.class_label);
    ds.samples.push_back(std::move(s));
  }
  ds.classes.assign(classes.begin(), classes.end());
  return ds;
}

ClassPromptSet load_prompts(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, path + ": " + e.what());
  }
  ClassPromptSet out;
  for (const auto& [cls, plist] : j.items()) {
    std::vector<std::string> prompts = plist.get<std::vector<std::string>>();
    if (prompts.empty())
      throw Error(Errc::CorruptRecord, "class '" + cls + "' has no prompts");
    out.classes.emplace_back(cls, std::move(prompts));
  }
  if (out.classes.empty()) throw Error(Errc::NoClasses, "prompt file defines no classes");
  return out;
}

namespace {

// Row-normalized mean of row-normalized embeddings (prompt ensembling).
Tensor ensemble_rows(const Tensor& m) {
  Tensor normd = l2_normalize_rows(m);
  Tensor mean({1, m.cols()});
  for (int64_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < m.rows(); ++i) s += normd.at(i, j);
    mean.at(0, j) = s / static_cast<double>(m.rows());
  }
  return l2_normalize_rows(mean);
}

}  // namespace

ZeroshotResult zeroshot_classify(ModelState& s, const std::vector<Tensor>& images,
                                 const std::vector<std::string>& labels,
                                 const ClassPromptSet& prompts, bool improved_recipe) {
  if (prompts.classes.empty()) throw Error(Errc::NoClasses, "empty prompt set");
  const int64_t n_classes = static_cast<int64_t>(prompts.classes.size());

  // Class text embeddings per branch.
  GradTape t;
  ParamVars pv;
  pv.vars.reserve(s.params.size());
  for (const auto& p : s.params) pv.vars.push_back(t.constant(p.value));

  Tensor class_weak({n_classes, s.cfg.proj_dim});
  Tensor class_strong({n_classes, s.cfg.proj_dim});
  for (int64_t c = 0; c < n_classes; ++c) {
    std::vector<TokenSequence> toks;
    for (const auto& prompt : prompts.classes[static_cast<size_t>(c)].second)
      toks.push_back(tokenize(prompt));
    TokenBatch batch = make_token_batch(toks, s.cfg.text_buckets);
    Var embed = encode_texts(t, pv, s, batch, 0.0, 0);
    Tensor weak = t.value(project_weak(t, pv, s, Modality::Text, embed));
    Tensor strong =
        t.value(project_strong(t, pv, s, Modality::Text, embed, Mode::Eval, s.bn_txt));
    Tensor w = ensemble_rows(weak);
    Tensor st = ensemble_rows(strong);
    for (int64_t j = 0; j < s.cfg.proj_dim; ++j) {
      class_weak.at(c, j) = w.at(0, j);
      class_strong.at(c, j) = st.at(0, j);
    }
  }

  // Image embeddings per branch (batched); resize when the stored size
  // differs from the encoder's input size.
  std::vector<Tensor> sized;
  sized.reserve(images.size());
  for (const auto& img : images) {
    if (img.dim(1) != s.cfg.image_size || img.dim(2) != s.cfg.image_size)
      sized.push_back(img_resize(img, s.cfg.image_size, s.cfg.image_size));
    else
      sized.push_back(img);
  }
  Tensor flat = flatten_images(sized);
  Var e_img = encode_images(t, pv, s, flat);
  Tensor img_weak = t.value(project_weak(t, pv, s, Modality::Image, e_img));
  Tensor img_strong =
      t.value(project_strong(t, pv, s, Modality::Image, e_img, Mode::Eval, s.bn_img));

  Tensor sim = cosine_sim_matrix(img_weak, class_weak);
  if (improved_recipe) {
    Tensor sim_s = cosine_sim_matrix(img_strong, class_strong);
    sim = scale(add(sim, sim_s), 0.5);
  }

  ZeroshotResult res;
  res.per_class_total.assign(static_cast<size_t>(n_classes), 0);
  res.per_class_correct.assign(static_cast<size_t>(n_classes), 0);
  int64_t correct = 0, labeled = 0;
  for (int64_t i = 0; i < sim.rows(); ++i) {
    int best = 0;
    for (int64_t c = 1; c < n_classes; ++c)
      if (sim.at(i, c) > sim.at(i, best)) best = static_cast<int>(c);
    res.predictions.push_back(best);
    if (i < static_cast<int64_t>(labels.size()) && !labels[static_cast<size_t>(i)].empty()) {
      ++labeled;
      int64_t truth = -1;
      for (int64_t c = 0; c < n_classes; ++c)
        if (prompts.classes[static_cast<size_t>(c)].first == labels[static_cast<size_t>(i)]) {
          truth = c;
          break;
        }
      if (truth >= 0) {
        ++res.per_class_total[static_cast<size_t>(truth)];
        if (truth == best) {
          ++correct;
          ++res.per_class_correct[static_cast<size_t>(truth)];
        }
      }
    }
  }
  res.accuracy = labeled > 0 ? static_cast<double>(correct) / static_cast<double>(labeled) : 0.0;
  return res;
}

}  // namespace vlplab
