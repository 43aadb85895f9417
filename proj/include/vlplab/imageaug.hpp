#pragma once

#include "vlplab/rng.hpp"
#include "vlplab/tensor.hpp"

namespace vlplab {

// Images are Tensors with dims (3, H, W), channel-major, values in [0,1].

struct ImageAugConfig {
  int64_t out_size = 32;
  double weak_scale_lo = 0.5, weak_scale_hi = 1.0;
  double strong_scale_lo = 0.08, strong_scale_hi = 1.0;
  double jitter_contrast = 0.4, jitter_brightness = 0.4, jitter_saturation = 0.4;
  double jitter_hue = 0.1;
  double jitter_prob = 0.8;
  double grayscale_prob = 0.2;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;
  double blur_prob = 0.5;
  double flip_prob = 0.5;
};

enum class ImageMode { Weak, Strong };

// Deterministic sub-transforms (no randomness) -----------------------------

Tensor img_brightness(const Tensor& img, double factor);
// Blend toward the image's mean luma.
Tensor img_contrast(const Tensor& img, double factor);
// Blend toward per-pixel luma.
Tensor img_saturation(const Tensor& img, double factor);
// Rotate chroma by `turns` full revolutions in a luma/chroma space; gray
// pixels are fixed points.
Tensor img_hue_rotate(const Tensor& img, double turns);
Tensor img_grayscale(const Tensor& img);
Tensor img_flip_horizontal(const Tensor& img);
Tensor img_gaussian_blur(const Tensor& img, double sigma);
// Bilinear resize with half-pixel centers.
Tensor img_resize(const Tensor& img, int64_t out_h, int64_t out_w);
Tensor img_clamp01(Tensor img);

// Randomized operations (RNG draw order is fixed; see implementation) ------

// Crop area ~ U(lo,hi) * H*W, aspect ratio log-uniform in [3/4, 4/3], then
// bilinear resize to out_size x out_size. Falls back to the largest centered
// square crop after 10 failed attempts.
Tensor random_resized_crop(const Tensor& img, int64_t out_size, double scale_lo, double scale_hi,
                           Rng& rng);
// With probability prob, apply brightness/contrast/saturation/hue in a
// random order, then clamp.
Tensor color_jitter(const Tensor& img, double c, double b, double s, double h, double prob,
                    Rng& rng);
Tensor to_grayscale(const Tensor& img, double prob, Rng& rng);
Tensor gaussian_blur(const Tensor& img, double sigma_lo, double sigma_hi, double prob, Rng& rng);
Tensor horizontal_flip(const Tensor& img, double prob, Rng& rng);

// weak: random crop only (scale (0.5,1)); strong: crop (0.08,1) then jitter,
// grayscale, blur, flip in that order.
Tensor augment_image(const Tensor& img, ImageMode mode, const ImageAugConfig& cfg, Rng& rng);

}  // namespace vlplab
