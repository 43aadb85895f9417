#pragma once

#include <string>
#include <vector>

#include "vlplab/model.hpp"
#include "vlplab/tensor.hpp"

namespace vlplab {

struct Sample {
  std::string image_path;
  Tensor image;  // (3,H,W)
  std::vector<std::string> captions;
  std::string class_label;  // evaluation only, never seen by the loss
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> classes;  // sorted unique labels present
};

// Ordered class -> prompt templates.
struct ClassPromptSet {
  std::vector<std::pair<std::string, std::vector<std::string>>> classes;
};

struct DataGenConfig {
  std::vector<std::string> colors = {"red", "green", "blue"};
  std::vector<std::string> shapes = {"circle", "square", "triangle"};
  int64_t train_per_class = 100;
  int64_t test_per_class = 20;
  int64_t image_size = 32;
  double noise = 0.06;
  uint64_t seed = 7;
};

struct DataGenSummary {
  int64_t n_classes = 0;
  int64_t n_train = 0;
  int64_t n_test = 0;
  int64_t bytes_written = 0;
};

// Renders colored shapes on a noisy gray background into out_dir/train and
// out_dir/test (TNSR images + samples.jsonl each) plus out_dir/prompts.json.
// Deterministic given the seed.
DataGenSummary generate_synthetic_dataset(const DataGenConfig& cfg, const std::string& out_dir);

// Reads dir/samples.jsonl; images load lazily is not needed at this scale, so
// they are materialized eagerly. Errors: CorruptRecord (with line number),
// MissingImageFile.
Dataset load_dataset(const std::string& dir);

ClassPromptSet load_prompts(const std::string& path);

struct ZeroshotResult {
  double accuracy = 0.0;
  std::vector<int> predictions;            // class index per image
  std::vector<int64_t> per_class_total;    // aligned with prompt set order
  std::vector<int64_t> per_class_correct;
};

// Encode class prompts through the text pathway, ensemble per class and
// branch, score images by cosine similarity, averaging the weak and strong
// branches under the improved recipe (base recipe: weak branch only).
// Ties break toward the lowest class index.
ZeroshotResult zeroshot_classify(ModelState& s, const std::vector<Tensor>& images,
                                 const std::vector<std::string>& labels,
                                 const ClassPromptSet& prompts, bool improved_recipe);

}  // namespace vlplab
