#include "vlplab/imageaug.hpp"

#include <algorithm>
#include <cmath>

namespace vlplab {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;  // ITU-R BT.601

struct Shape3 {
  int64_t h, w;
};

Shape3 check_image(const Tensor& img, const char* who) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw Error(Errc::ShapeMismatch, std::string(who) + " expects a (3,H,W) image, got " +
                                         img.dims_str());
  return {img.dim(1), img.dim(2)};
}

double px(const Tensor& img, int64_t c, int64_t y, int64_t x, int64_t h, int64_t w) {
  (void)h;
  return img.at(c * h * w + y * w + x);
}

double& px(Tensor& img, int64_t c, int64_t y, int64_t x, int64_t h, int64_t w) {
  (void)h;
  return img.at(c * h * w + y * w + x);
}

double luma_at(const Tensor& img, int64_t y, int64_t x, int64_t h, int64_t w) {
  const double r = px(img, 0, y, x, h, w), g = px(img, 1, y, x, h, w),
               b = px(img, 2, y, x, h, w);
  // Exact fixed point for already-gray pixels.
  if (r == g && g == b) return r;
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

// Index into the infinite edge-inclusive mirror extension, which is periodic
// with period 2n. This keeps a normalized blur kernel exactly
// mass-preserving for any radius.
int64_t reflect_index(int64_t i, int64_t n) {
  const int64_t period = 2 * n;
  int64_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

Tensor img_clamp01(Tensor img) {
  for (int64_t i = 0; i < img.numel(); ++i) img.at(i) = std::clamp(img.at(i), 0.0, 1.0);
  return img;
}

Tensor img_brightness(const Tensor& img, double factor) {
  return scale(img, factor);
}

Tensor img_contrast(const Tensor& img, double factor) {
  auto [h, w] = check_image(img, "img_contrast");
  double mean = 0.0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) mean += luma_at(img, y, x, h, w);
  mean /= static_cast<double>(h * w);
  Tensor out(img.dims());
  for (int64_t i = 0; i < img.numel(); ++i) out.at(i) = factor * img.at(i) + (1.0 - factor) * mean;
  return out;
}

Tensor img_saturation(const Tensor& img, double factor) {
  auto [h, w] = check_image(img, "img_saturation");
  Tensor out(img.dims());
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double l = luma_at(img, y, x, h, w);
      for (int64_t c = 0; c < 3; ++c)
        px(out, c, y, x, h, w) = factor * px(img, c, y, x, h, w) + (1.0 - factor) * l;
    }
  return out;
}

Tensor img_hue_rotate(const Tensor& img, double turns) {
  auto [h, w] = check_image(img, "img_hue_rotate");
  if (turns == 0.0) return img;  // the matrix round trip is only ~1e-4 accurate
  const double theta = 2.0 * 3.14159265358979323846 * turns;
  const double ct = std::cos(theta), st = std::sin(theta);
  Tensor out(img.dims());
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double r = px(img, 0, y, x, h, w), g = px(img, 1, y, x, h, w),
                   b = px(img, 2, y, x, h, w);
      // RGB -> YIQ, rotate the IQ chroma plane, back to RGB. Gray pixels have
      // I = Q = 0 and pass through.
      const double yy = 0.299 * r + 0.587 * g + 0.114 * b;
      const double ii = 0.595716 * r - 0.274453 * g - 0.321263 * b;
      const double qq = 0.211456 * r - 0.522591 * g + 0.311135 * b;
      const double ir = ct * ii - st * qq;
      const double qr = st * ii + ct * qq;
      px(out, 0, y, x, h, w) = yy + 0.9563 * ir + 0.6210 * qr;
      px(out, 1, y, x, h, w) = yy - 0.2721 * ir - 0.6474 * qr;
      px(out, 2, y, x, h, w) = yy - 1.1070 * ir + 1.7046 * qr;
    }
  return out;
}

Tensor img_grayscale(const Tensor& img) {
  auto [h, w] = check_image(img, "img_grayscale");
  Tensor out(img.dims());
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double l = luma_at(img, y, x, h, w);
      for (int64_t c = 0; c < 3; ++c) px(out, c, y, x, h, w) = l;
    }
  return out;
}

Tensor img_flip_horizontal(const Tensor& img) {
  auto [h, w] = check_image(img, "img_flip_horizontal");
  Tensor out(img.dims());
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) px(out, c, y, x, h, w) = px(img, c, y, w - 1 - x, h, w);
  return out;
}

Tensor img_gaussian_blur(const Tensor& img, double sigma) {
  auto [h, w] = check_image(img, "img_gaussian_blur");
  if (sigma <= 0.0) throw Error(Errc::BadConfig, "blur sigma must be positive");
  const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] =
        std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    ksum += kernel[static_cast<size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= ksum;

  Tensor tmp(img.dims()), out(img.dims());
  // horizontal pass
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int64_t k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<size_t>(k + radius)] *
                 px(img, c, y, reflect_index(x + k, w), h, w);
        px(tmp, c, y, x, h, w) = acc;
      }
  // vertical pass
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int64_t k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<size_t>(k + radius)] *
                 px(tmp, c, reflect_index(y + k, h), x, h, w);
        px(out, c, y, x, h, w) = acc;
      }
  return out;
}

Tensor img_resize(const Tensor& img, int64_t out_h, int64_t out_w) {
  auto [h, w] = check_image(img, "img_resize");
  if (out_h == h && out_w == w) return img;
  Tensor out({3, out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(h - 1));
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(w - 1));
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (int64_t c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * px(img, c, y0, x0, h, w) + wx * px(img, c, y0, x1, h, w);
        const double bot = (1.0 - wx) * px(img, c, y1, x0, h, w) + wx * px(img, c, y1, x1, h, w);
        px(out, c, y, x, out_h, out_w) = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

Tensor random_resized_crop(const Tensor& img, int64_t out_size, double scale_lo, double scale_hi,
                           Rng& rng) {
  auto [h, w] = check_image(img, "random_resized_crop");
  if (h < 2 || w < 2) throw Error(Errc::ShapeMismatch, "image too small to crop");
  if (out_size < 2) throw Error(Errc::BadConfig, "out_size must be >= 2");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0))
    throw Error(Errc::BadConfig, "crop scale range must satisfy 0 < lo <= hi <= 1");

  const double area = static_cast<double>(h * w);
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  int64_t cw = 0, ch = 0, cx = 0, cy = 0;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = rng.uniform(scale_lo, scale_hi) * area;
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int64_t tw = static_cast<int64_t>(std::lround(std::sqrt(target * ratio)));
    const int64_t th = static_cast<int64_t>(std::lround(std::sqrt(target / ratio)));
    if (tw >= 1 && th >= 1 && tw <= w && th <= h) {
      cw = tw;
      ch = th;
      cx = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(w - tw + 1)));
      cy = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(h - th + 1)));
      found = true;
    }
  }
  if (!found) {
    // centered square crop of the largest valid size
    const int64_t side = std::min(h, w);
    cw = ch = side;
    cx = (w - side) / 2;
    cy = (h - side) / 2;
  }

  Tensor crop({3, ch, cw});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < ch; ++y)
      for (int64_t x = 0; x < cw; ++x)
        px(crop, c, y, x, ch, cw) = px(img, c, cy + y, cx + x, h, w);
  return img_resize(crop, out_size, out_size);
}

Tensor color_jitter(const Tensor& img, double c, double b, double s, double h, double prob,
                    Rng& rng) {
  check_image(img, "color_jitter");
  if (c < 0.0 || b < 0.0 || s < 0.0 || h < 0.0)
    throw Error(Errc::BadConfig, "jitter factors must be >= 0");
  if (!rng.bernoulli(prob)) return img;
  // Draw order: application permutation (Fisher-Yates), then one factor per
  // sub-transform in the permuted order.
  int order[4] = {0, 1, 2, 3};
  for (int i = 4; i > 1; --i) {
    int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  Tensor out = img;
  for (int step = 0; step < 4; ++step) {
    switch (order[step]) {
      case 0:
        out = img_brightness(out, rng.uniform(1.0 - b, 1.0 + b));
        break;
      case 1:
        out = img_contrast(out, rng.uniform(1.0 - c, 1.0 + c));
        break;
      case 2:
        out = img_saturation(out, rng.uniform(1.0 - s, 1.0 + s));
        break;
      case 3:
        out = img_hue_rotate(out, rng.uniform(-h, h));
        break;
    }
  }
  return img_clamp01(std::move(out));
}

Tensor to_grayscale(const Tensor& img, double prob, Rng& rng) {
  check_image(img, "to_grayscale");
  if (!rng.bernoulli(prob)) return img;
  return img_grayscale(img);
}

Tensor gaussian_blur(const Tensor& img, double sigma_lo, double sigma_hi, double prob, Rng& rng) {
  check_image(img, "gaussian_blur");
  if (!(sigma_lo > 0.0 && sigma_lo <= sigma_hi))
    throw Error(Errc::BadConfig, "blur sigma range must be positive");
  if (!rng.bernoulli(prob)) return img;
  return img_gaussian_blur(img, rng.uniform(sigma_lo, sigma_hi));
}

Tensor horizontal_flip(const Tensor& img, double prob, Rng& rng) {
  check_image(img, "horizontal_flip");
  if (!rng.bernoulli(prob)) return img;
  return img_flip_horizontal(img);
}

Tensor augment_image(const Tensor& img, ImageMode mode, const ImageAugConfig& cfg, Rng& rng) {
  if (mode == ImageMode::Weak)
    return random_resized_crop(img, cfg.out_size, cfg.weak_scale_lo, cfg.weak_scale_hi, rng);
  Tensor out = random_resized_crop(img, cfg.out_size, cfg.strong_scale_lo, cfg.strong_scale_hi, rng);
  out = color_jitter(out, cfg.jitter_contrast, cfg.jitter_brightness, cfg.jitter_saturation,
                     cfg.jitter_hue, cfg.jitter_prob, rng);
  out = to_grayscale(out, cfg.grayscale_prob, rng);
  out = gaussian_blur(out, cfg.blur_sigma_lo, cfg.blur_sigma_hi, cfg.blur_prob, rng);
  out = horizontal_flip(out, cfg.flip_prob, rng);
  return img_clamp01(std::move(out));
}

}  // namespace vlplab
