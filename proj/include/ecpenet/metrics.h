#pragma once

#include <array>
#include <cstdint>

#include "ecpenet/image_io.h"

namespace ecpenet {

/// 10 log10(1 / MSE) for images in [0, 1]; +infinity for identical inputs.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows of the
/// channel-mean grayscale images; K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);

struct ChannelStats {
  double mean_dark = 0;
  double mean_bright = 0;
  int window = 1;
  std::array<std::int64_t, 256> histogram{};  // dark-channel values, bin = min(255, floor(256 v))
};

/// Dark/bright channel statistics using the ECPeL extractors.
ChannelStats channel_stats(const Image& image, int window);

}  // namespace ecpenet
