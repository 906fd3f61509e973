#include "ecpenet/data.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ecpenet {

namespace fs = std::filesystem;

double Kernel::sum() const {
  double s = 0;
  for (double v : taps) s += v;
  return s;
}

Kernel rasterize_trajectory(std::span<const Point2> frames) {
  if (frames.empty()) return Kernel::delta();
  double min_x = frames[0].x, max_x = frames[0].x, min_y = frames[0].y, max_y = frames[0].y;
  for (const Point2& p : frames) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const auto x0 = static_cast<int>(std::floor(min_x));
  const auto y0 = static_cast<int>(std::floor(min_y));
  const int width = static_cast<int>(std::floor(max_x)) - x0 + 2;
  const int height = static_cast<int>(std::floor(max_y)) - y0 + 2;
  std::vector<double> grid(static_cast<std::size_t>(width * height), 0.0);
  const double share = 1.0 / static_cast<double>(frames.size());
  for (const Point2& p : frames) {
    const double fx = std::floor(p.x), fy = std::floor(p.y);
    const double tx = p.x - fx, ty = p.y - fy;
    const int gx = static_cast<int>(fx) - x0, gy = static_cast<int>(fy) - y0;
    const double w[2][2] = {{(1 - ty) * (1 - tx), (1 - ty) * tx}, {ty * (1 - tx), ty * tx}};
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        if (w[dy][dx] > 0) grid[static_cast<std::size_t>((gy + dy) * width + gx + dx)] += share * w[dy][dx];
      }
    }
  }
  int top = height, bottom = -1, left = width, right = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (grid[static_cast<std::size_t>(y * width + x)] > 0) {
        top = std::min(top, y);
        bottom = std::max(bottom, y);
        left = std::min(left, x);
        right = std::max(right, x);
      }
    }
  }
  Kernel k;
  k.height = bottom - top + 1;
  k.width = right - left + 1;
  k.taps.assign(static_cast<std::size_t>(k.height * k.width), 0.0);
  double total = 0;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const double v = grid[static_cast<std::size_t>((y + top) * width + x + left)];
      k.taps[static_cast<std::size_t>(y * k.width + x)] = v;
      total += v;
    }
  }
  for (double& v : k.taps) v /= total;
  return k;
}

Kernel synth_kernel(Rng& rng, int max_support) {
  if (max_support < 3 || max_support % 2 == 0) {
    throw ContractViolation("synth_kernel: max support must be odd and >= 3, got " +
                            std::to_string(max_support));
  }
  // Arc length is bounded so the bilinear footprint stays within max_support.
  const double length = uniform(rng, 0.0, static_cast<double>(max_support - 2));
  const int segments = 1 + static_cast<int>(uniform_index(rng, 3));
  const double curvature = uniform(rng, 0.0, 1.0);
  double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  std::vector<Point2> vertices{{0.0, 0.0}};
  for (int s = 0; s < segments; ++s) {
    if (s > 0) heading += curvature * standard_normal(rng);
    const Point2 last = vertices.back();
    const double step = length / segments;
    vertices.push_back({last.x + step * std::cos(heading), last.y + step * std::sin(heading)});
  }

  constexpr double kFrameSpacing = 0.25;
  const auto frame_count = static_cast<int>(std::ceil(length / kFrameSpacing)) + 1;
  std::vector<Point2> frames;
  frames.reserve(static_cast<std::size_t>(frame_count));
  const double seg_len = length / segments;
  for (int f = 0; f < frame_count; ++f) {
    const double arc = frame_count == 1 ? 0.0 : length * f / (frame_count - 1);
    int s = seg_len > 0 ? std::min(segments - 1, static_cast<int>(arc / seg_len)) : 0;
    const double t = seg_len > 0 ? (arc - s * seg_len) / seg_len : 0.0;
    const Point2 a = vertices[static_cast<std::size_t>(s)];
    const Point2 b = vertices[static_cast<std::size_t>(s + 1)];
    frames.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
  }
  return rasterize_trajectory(frames);
}

Image add_noise(const Image& image, double sigma, Rng& rng) {
  Image out = image;
  if (sigma <= 0) return out;
  for (double& v : out.data()) v = std::clamp(v + sigma * standard_normal(rng), 0.0, 1.0);
  return out;
}

BlurPair make_blur_pair(const Image& sharp, const Kernel& kernel, double sigma, Rng& rng) {
  const Shape s = sharp.shape();
  require(s.n == 1, "make_blur_pair: expects a single image, got " + s.str());
  if (kernel.height > s.h || kernel.width > s.w) {
    throw ContractViolation("make_blur_pair: kernel " + std::to_string(kernel.height) + "x" +
                            std::to_string(kernel.width) + " larger than image " + s.str());
  }
  const std::int64_t oh = s.h - kernel.height + 1;
  const std::int64_t ow = s.w - kernel.width + 1;
  Image blurred(Shape{1, s.c, oh, ow});
  for (std::int64_t c = 0; c < s.c; ++c) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t x = 0; x < ow; ++x) {
        double acc = 0;
        for (int a = 0; a < kernel.height; ++a) {
          for (int b = 0; b < kernel.width; ++b) {
            acc += kernel.at(a, b) * sharp.at(0, c, y + kernel.height - 1 - a, x + kernel.width - 1 - b);
          }
        }
        blurred.at(0, c, y, x) = acc;
      }
    }
  }
  BlurPair pair;
  pair.sharp = crop(sharp, kernel.height - 1 - kernel.height / 2, kernel.width - 1 - kernel.width / 2, oh, ow);
  pair.blurred_clean = std::move(blurred);
  pair.blurred = add_noise(pair.blurred_clean, sigma, rng);
  pair.kernel = kernel;
  pair.noise_sigma = sigma;
  return pair;
}

Image crop(const Image& image, std::int64_t y, std::int64_t x, std::int64_t height, std::int64_t width) {
  const Shape s = image.shape();
  if (y < 0 || x < 0 || height < 0 || width < 0 || y + height > s.h || x + width > s.w) {
    throw ContractViolation("crop: window (" + std::to_string(y) + ", " + std::to_string(x) + ", " +
                            std::to_string(height) + ", " + std::to_string(width) +
                            ") outside image " + s.str());
  }
  Image out(Shape{s.n, s.c, height, width});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t r = 0; r < height; ++r) {
        for (std::int64_t q = 0; q < width; ++q) out.at(n, c, r, q) = image.at(n, c, y + r, x + q);
      }
    }
  }
  return out;
}

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0;
}

Image downsample_half(const Image& image) {
  const Shape s = image.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ContractViolation("downsample_half: odd dimensions " + s.str());
  }
  // Output sample i sits at input coordinate 2i + 0.5 (pixel-centre aligned).
  double weights[4];
  for (int k = 0; k < 4; ++k) weights[k] = cubic_weight(0.5 + 1.0 - k);
  const std::int64_t oh = s.h / 2, ow = s.w / 2;
  Image rows(Shape{s.n, s.c, oh, s.w});
  Image out(Shape{s.n, s.c, oh, ow});
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t x = 0; x < s.w; ++x) {
          double acc = 0;
          for (int k = 0; k < 4; ++k) {
            const std::int64_t y = std::clamp<std::int64_t>(2 * i - 1 + k, 0, s.h - 1);
            acc += weights[k] * image.at(n, c, y, x);
          }
          rows.at(n, c, i, x) = acc;
        }
      }
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j) {
          double acc = 0;
          for (int k = 0; k < 4; ++k) {
            const std::int64_t x = std::clamp<std::int64_t>(2 * j - 1 + k, 0, s.w - 1);
            acc += weights[k] * rows.at(n, c, i, x);
          }
          out.at(n, c, i, j) = acc;
        }
      }
    }
  }
  return out;
}

ScalePyramid build_pyramid(const Image& image, int scales) {
  require(scales >= 1, "build_pyramid: scales must be positive");
  const std::int64_t factor = std::int64_t{1} << (scales - 1);
  const Shape s = image.shape();
  if (s.h < factor || s.w < factor) {
    throw ContractViolation("build_pyramid: image " + s.str() + " too small for " +
                            std::to_string(scales) + " scales");
  }
  ScalePyramid pyramid;
  pyramid.levels.push_back(crop(image, 0, 0, s.h / factor * factor, s.w / factor * factor));
  for (int j = 1; j < scales; ++j) pyramid.levels.push_back(downsample_half(pyramid.levels.back()));
  return pyramid;
}

Image apply_dihedral(const Image& image, int transform) {
  require(transform >= 0 && transform < 8, "apply_dihedral: transform must be in [0, 8)");
  const Shape s = image.shape();
  const bool transpose = (transform & 4) != 0;
  if (transpose && s.h != s.w) {
    throw ContractViolation("apply_dihedral: transposing transform on non-square image " + s.str());
  }
  Image out(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x) {
          const std::int64_t yy = (transform & 2) ? s.h - 1 - y : y;
          const std::int64_t xx = (transform & 1) ? s.w - 1 - x : x;
          out.at(n, c, y, x) = transpose ? image.at(n, c, xx, yy) : image.at(n, c, yy, xx);
        }
      }
    }
  }
  return out;
}

BlurPair augment(const BlurPair& pair, Rng& rng) {
  const Shape s = pair.sharp.shape();
  const int transform = static_cast<int>(uniform_index(rng, s.h == s.w ? 8 : 4));
  BlurPair out;
  out.sharp = apply_dihedral(pair.sharp, transform);
  out.blurred_clean = apply_dihedral(pair.blurred_clean, transform);
  out.blurred = add_noise(out.blurred_clean, pair.noise_sigma, rng);
  out.kernel = pair.kernel;
  out.noise_sigma = pair.noise_sigma;
  return out;
}

std::vector<BlurPair> crop_patches(const BlurPair& pair, std::int64_t size, int count, Rng& rng) {
  const Shape s = pair.sharp.shape();
  if (size < 1 || size > s.h || size > s.w) {
    throw ContractViolation("crop_patches: patch size " + std::to_string(size) + " does not fit " +
                            s.str());
  }
  std::vector<BlurPair> out;
  for (int i = 0; i < count; ++i) {
    const std::int64_t y = uniform_index(rng, s.h - size + 1);
    const std::int64_t x = uniform_index(rng, s.w - size + 1);
    BlurPair p;
    p.sharp = crop(pair.sharp, y, x, size, size);
    p.blurred = crop(pair.blurred, y, x, size, size);
    p.blurred_clean = crop(pair.blurred_clean, y, x, size, size);
    p.kernel = pair.kernel;
    p.noise_sigma = pair.noise_sigma;
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

struct Color {
  double v[3];
};

Color random_color(Rng& rng) {
  const double pick = unit_uniform(rng);
  if (pick < 0.25) return {{0.0, 0.0, 0.0}};
  if (pick < 0.5) return {{1.0, 1.0, 1.0}};
  return {{unit_uniform(rng), unit_uniform(rng), unit_uniform(rng)}};
}

bool inside(const std::vector<Point2>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

double segment_distance(Point2 a, Point2 b, double x, double y) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((x - a.x) * dx + (y - a.y) * dy) / len2, 0.0, 1.0) : 0.0;
  const double px = a.x + t * dx - x, py = a.y + t * dy - y;
  return std::sqrt(px * px + py * py);
}

}  // namespace

Image procedural_image(Rng& rng, std::int64_t height, std::int64_t width) {
  require(height > 0 && width > 0, "procedural_image: empty size");
  Image img(Shape{1, 3, height, width});
  Color corners[4];
  for (Color& c : corners) {
    for (double& v : c.v) v = uniform(rng, 0.15, 0.85);
  }
  for (std::int64_t y = 0; y < height; ++y) {
    const double ty = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
    for (std::int64_t x = 0; x < width; ++x) {
      const double tx = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
      for (int c = 0; c < 3; ++c) {
        img.at(0, c, y, x) = (1 - ty) * ((1 - tx) * corners[0].v[c] + tx * corners[1].v[c]) +
                             ty * ((1 - tx) * corners[2].v[c] + tx * corners[3].v[c]);
      }
    }
  }

  const double extent = static_cast<double>(std::min(height, width));
  const int polygons = 6 + static_cast<int>(uniform_index(rng, 7));
  for (int p = 0; p < polygons; ++p) {
    const Point2 centre{uniform(rng, 0, static_cast<double>(width)), uniform(rng, 0, static_cast<double>(height))};
    const double radius = uniform(rng, extent / 10, extent / 3);
    const int vertices = 3 + static_cast<int>(uniform_index(rng, 4));
    std::vector<double> angles;
    for (int v = 0; v < vertices; ++v) angles.push_back(uniform(rng, 0, 2 * std::numbers::pi));
    std::sort(angles.begin(), angles.end());
    std::vector<Point2> poly;
    for (double a : angles) {
      const double r = radius * uniform(rng, 0.5, 1.0);
      poly.push_back({centre.x + r * std::cos(a), centre.y + r * std::sin(a)});
    }
    const Color color = random_color(rng);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        if (!inside(poly, x + 0.5, y + 0.5)) continue;
        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = color.v[c];
      }
    }
  }

  const int strokes = 3 + static_cast<int>(uniform_index(rng, 4));
  for (int s = 0; s < strokes; ++s) {
    const Point2 a{uniform(rng, 0, static_cast<double>(width)), uniform(rng, 0, static_cast<double>(height))};
    const double len = uniform(rng, extent / 8, extent / 2);
    const double angle = uniform(rng, 0, 2 * std::numbers::pi);
    const Point2 b{a.x + len * std::cos(angle), a.y + len * std::sin(angle)};
    const double half = uniform(rng, 0.5, 1.5);
    const double value = unit_uniform(rng) < 0.5 ? 0.0 : 1.0;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        if (segment_distance(a, b, x + 0.5, y + 0.5) > half) continue;
        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = value;
      }
    }
  }
  return img;
}

std::vector<BlurPair> synth_dataset(const SynthOptions& options, std::uint64_t seed,
                                    std::span<const Image> sources) {
  require(options.kernel_size >= 3 && options.kernel_size % 2 == 1, "synth_dataset: kernel_size must be odd and >= 3");
  require(options.noise_sigma >= 0, "synth_dataset: noise_sigma must be >= 0");
  Rng rng(seed);
  std::vector<BlurPair> out;
  const auto kernel = [&] { return options.delta_kernel ? Kernel::delta() : synth_kernel(rng, options.kernel_size); };
  if (!sources.empty()) {
    for (const Image& source : sources) {
      const Kernel k = kernel();
      out.push_back(make_blur_pair(source, k, options.noise_sigma, rng));
    }
    return out;
  }
  require(options.count >= 1 && options.image_size >= 1, "synth_dataset: count and image_size must be positive");
  const std::int64_t side = options.image_size + options.kernel_size - 1;
  for (int i = 0; i < options.count; ++i) {
    const Image sharp = procedural_image(rng, side, side);
    const Kernel k = kernel();
    BlurPair full = make_blur_pair(sharp, k, options.noise_sigma, rng);
    BlurPair pair;
    pair.sharp = crop(full.sharp, 0, 0, options.image_size, options.image_size);
    pair.blurred = crop(full.blurred, 0, 0, options.image_size, options.image_size);
    pair.blurred_clean = crop(full.blurred_clean, 0, 0, options.image_size, options.image_size);
    pair.kernel = std::move(full.kernel);
    pair.noise_sigma = full.noise_sigma;
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<BlurPair> load_dataset(const fs::path& dir) {
  const fs::path sharp_dir = dir / "sharp";
  const fs::path blur_dir = dir / "blur";
  if (!fs::is_directory(sharp_dir) || !fs::is_directory(blur_dir)) {
    throw DataError("dataset " + dir.string() + " needs sharp/ and blur/ subdirectories");
  }
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(sharp_dir)) {
    if (entry.is_regular_file()) names.push_back(entry.path().filename());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError("dataset " + dir.string() + " has no images");
  std::vector<BlurPair> pairs;
  for (const fs::path& name : names) {
    if (!fs::exists(blur_dir / name)) throw DataError("missing blurred counterpart for " + name.string());
    BlurPair p;
    p.sharp = read_image(sharp_dir / name);
    p.blurred = read_image(blur_dir / name);
    if (p.sharp.shape() != p.blurred.shape()) {
      throw DataError("size mismatch between sharp and blurred " + name.string());
    }
    p.blurred_clean = p.blurred;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace ecpenet
