#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ecpenet/random.h"
#include "ecpenet/tensor.h"

namespace ecpenet::testing {

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(rng, lo, hi));
  return t;
}

// Values on a coarse grid so that ties actually occur.
inline Tensor<double> quantized_tensor(const Shape& shape, Rng& rng, int levels) {
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(uniform_index(rng, levels)) / levels;
  return t;
}

struct ExtremeOracle {
  Tensor<double> values;
  std::vector<std::int64_t> index;
};

// Brute force over the clamped window and every channel; ties resolved toward
// the smallest flat (c, y, x) index.
inline ExtremeOracle brute_force_extreme(const Tensor<double>& x, int window, bool dark) {
  const Shape s = x.shape();
  const std::int64_t r = window / 2;
  ExtremeOracle o{Tensor<double>(Shape{s.n, 1, s.h, s.w}), {}};
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t h = 0; h < s.h; ++h)
      for (std::int64_t w = 0; w < s.w; ++w) {
        double best = 0;
        std::int64_t best_idx = -1;
        for (std::int64_t c = 0; c < s.c; ++c)
          for (std::int64_t y = std::max<std::int64_t>(0, h - r); y <= std::min(s.h - 1, h + r); ++y)
            for (std::int64_t xx = std::max<std::int64_t>(0, w - r); xx <= std::min(s.w - 1, w + r); ++xx) {
              const double v = x.at(n, c, y, xx);
              const std::int64_t idx = (c * s.h + y) * s.w + xx;
              const bool better = best_idx < 0 || (dark ? v < best : v > best) || (v == best && idx < best_idx);
              if (better) {
                best = v;
                best_idx = idx;
              }
            }
        o.values.at(n, 0, h, w) = best;
        o.index.push_back(best_idx);
      }
  return o;
}

}  // namespace ecpenet::testing
