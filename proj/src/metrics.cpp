#include "ecpenet/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ecpenet/ecpel.h"

namespace ecpenet {

namespace {

void require_same(const Image& a, const Image& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(who) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

std::vector<double> grayscale(const Image& img) {
  const Shape s = img.shape();
  std::vector<double> out(static_cast<std::size_t>(s.h * s.w), 0.0);
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t p = 0; p < s.plane(); ++p) out[static_cast<std::size_t>(p)] += img[c * s.plane() + p];
  }
  for (double& v : out) v /= static_cast<double>(s.c);
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  require(a.numel() > 0, "psnr: empty images");
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  require(a.shape().n == 1, "ssim: expects single images");
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const std::int64_t h = a.shape().h, w = a.shape().w;
  if (h < kWindow || w < kWindow) {
    throw ContractViolation("ssim: image " + a.shape().str() + " smaller than the 11x11 window");
  }
  double kernel[kWindow][kWindow];
  double norm = 0;
  for (int y = 0; y < kWindow; ++y) {
    for (int x = 0; x < kWindow; ++x) {
      const double dy = y - kWindow / 2, dx = x - kWindow / 2;
      kernel[y][x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
      norm += kernel[y][x];
    }
  }
  for (auto& row : kernel) {
    for (double& v : row) v /= norm;
  }

  const std::vector<double> ga = grayscale(a), gb = grayscale(b);
  double total = 0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y + kWindow <= h; ++y) {
    for (std::int64_t x = 0; x + kWindow <= w; ++x) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = 0; i < kWindow; ++i) {
        for (int j = 0; j < kWindow; ++j) {
          const double k = kernel[i][j];
          const double u = ga[static_cast<std::size_t>((y + i) * w + x + j)];
          const double v = gb[static_cast<std::size_t>((y + i) * w + x + j)];
          mx += k * u;
          my += k * v;
          xx += k * u * u;
          yy += k * v * v;
          xy += k * u * v;
        }
      }
      const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
      total += ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

ChannelStats channel_stats(const Image& image, int window) {
  require(image.shape().n == 1, "channel_stats: expects a single image");
  const ExtremeChannel<double> dark = dark_extract(image, window);
  const ExtremeChannel<double> bright = bright_extract(image, window);
  ChannelStats stats;
  stats.window = window;
  const double count = static_cast<double>(dark.values.numel());
  for (double v : dark.values.data()) {
    stats.mean_dark += v;
    const auto bin = static_cast<std::int64_t>(std::floor(v * 256.0));
    ++stats.histogram[static_cast<std::size_t>(std::clamp<std::int64_t>(bin, 0, 255))];
  }
  for (double v : bright.values.data()) stats.mean_bright += v;
  stats.mean_dark /= count;
  stats.mean_bright /= count;
  return stats;
}

}  // namespace ecpenet
