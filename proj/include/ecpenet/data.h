#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ecpenet/image_io.h"
#include "ecpenet/random.h"

namespace ecpenet {

/// Non-negative blur kernel summing to one, stored row-major.
struct Kernel {
  int height = 1;
  int width = 1;
  std::vector<double> taps{1.0};

  double at(int y, int x) const { return taps[static_cast<std::size_t>(y * width + x)]; }
  double sum() const;
  static Kernel delta() { return {}; }
};

struct Point2 {
  double x = 0;
  double y = 0;
};

/// Averages one bilinear point-spread contribution per camera position
/// (frame), then trims to the non-zero bounding box.
Kernel rasterize_trajectory(std::span<const Point2> frames);

/// Random piecewise-linear, gently curving sub-pixel trajectory sampled at
/// quarter-pixel frame spacing. The kernel fits in max_support x max_support.
Kernel synth_kernel(Rng& rng, int max_support);

struct BlurPair {
  Image sharp;
  Image blurred;        // clean blur plus noise, clamped to [0, 1]
  Image blurred_clean;  // before noise; augmentation re-draws noise from here
  Kernel kernel;
  double noise_sigma = 0;
};

/// Valid-interior convolution of `sharp` with `kernel`; the sharp image is
/// cropped to the same interior. Gaussian noise of `sigma` is added and the
/// result clamped to [0, 1].
BlurPair make_blur_pair(const Image& sharp, const Kernel& kernel, double sigma, Rng& rng);

Image add_noise(const Image& image, double sigma, Rng& rng);

Image crop(const Image& image, std::int64_t y, std::int64_t x, std::int64_t height, std::int64_t width);

struct ScalePyramid {
  std::vector<Image> levels;  // finest first
};

/// Catmull-Rom cubic (a = -0.5).
double cubic_weight(double t);

/// Factor-1/2 bicubic resampling with edge-replicated taps.
Image downsample_half(const Image& image);

/// Crops (top-left anchored) to a multiple of 2^(scales-1), then halves
/// repeatedly.
ScalePyramid build_pyramid(const Image& image, int scales);

/// Transform d in [0, 8): bit 0 flips columns, bit 1 flips rows, bit 2
/// transposes (needs a square image).
Image apply_dihedral(const Image& image, int transform);

/// Random dihedral transform of both images (flips only when not square),
/// then a fresh noise draw on the blurred one.
BlurPair augment(const BlurPair& pair, Rng& rng);

/// `count` aligned random size x size crops.
std::vector<BlurPair> crop_patches(const BlurPair& pair, std::int64_t size, int count, Rng& rng);

/// Sharp synthetic scene: smooth background, filled polygons, and glyph-like
/// strokes, with saturated dark and bright regions.
Image procedural_image(Rng& rng, std::int64_t height, std::int64_t width);

struct SynthOptions {
  int count = 20;                // procedural pairs; ignored when sources are given
  std::int64_t image_size = 96;  // side of every procedural pair
  int kernel_size = 9;           // maximum kernel support (odd)
  double noise_sigma = 0.01;
  bool delta_kernel = false;     // identity kernel: blur is the sharp image plus noise
};

/// One pair per source image (or `count` procedural scenes), each with its
/// own random kernel, all drawn from a single generator seeded by `seed`.
std::vector<BlurPair> synth_dataset(const SynthOptions& options, std::uint64_t seed,
                                    std::span<const Image> sources = {});

/// Pairs from `dir/sharp/*` and `dir/blur/*` matched by file name.
std::vector<BlurPair> load_dataset(const std::filesystem::path& dir);

/// Stacks (1, C, H, W) images into one (N, C, H, W) tensor of type T.
template <typename T>
Tensor<T> stack(std::span<const Image> images) {
  require(!images.empty(), "stack: no images");
  const Shape s = images.front().shape();
  Tensor<T> out(Shape{static_cast<std::int64_t>(images.size()), s.c, s.h, s.w});
  const std::int64_t per = s.c * s.h * s.w;
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].shape() == s, "stack: image shapes differ");
    for (std::int64_t k = 0; k < per; ++k) {
      out[static_cast<std::int64_t>(i) * per + k] = static_cast<T>(images[i][k]);
    }
  }
  return out;
}

}  // namespace ecpenet
