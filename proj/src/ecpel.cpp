#include "ecpenet/ecpel.h"

#include <algorithm>
#include <array>
#include <string>

namespace ecpenet {

namespace {

template <typename T>
struct Candidate {
  T value;
  std::int64_t flat;
};

template <typename T>
bool better(const Candidate<T>& a, const Candidate<T>& b, Extreme kind) {
  if (a.value != b.value) return kind == Extreme::kDark ? a.value < b.value : a.value > b.value;
  return a.flat < b.flat;
}

void check_window(int window) {
  if (window < 1 || window % 2 == 0) {
    throw ContractViolation("extreme channel window must be odd and positive, got " +
                            std::to_string(window));
  }
}

}  // namespace

template <typename T>
ExtremeChannel<T> extract_extreme(const Tensor<T>& input, int window, Extreme kind) {
  check_window(window);
  const Shape s = input.shape();
  require(s.c >= 1, "extreme channel extraction needs at least one channel, got " + s.str());
  const std::int64_t hw = s.plane();
  const std::int64_t radius = window / 2;

  ExtremeChannel<T> out;
  out.values = Tensor<T>(Shape{s.n, 1, s.h, s.w});
  out.masks.input_shape = s;
  out.masks.window = window;
  out.masks.index.resize(static_cast<std::size_t>(s.n * hw));

  // Channel reduction first, then separable row/column passes. The candidate
  // order is total, so the separable result equals the full-window argmin.
  std::vector<Candidate<T>> pixel(static_cast<std::size_t>(hw));
  std::vector<Candidate<T>> rows(static_cast<std::size_t>(hw));
  for (std::int64_t n = 0; n < s.n; ++n) {
    const T* base = input.ptr() + n * s.c * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      Candidate<T> best{base[p], p};
      for (std::int64_t c = 1; c < s.c; ++c) {
        const Candidate<T> cand{base[c * hw + p], c * hw + p};
        if (better(cand, best, kind)) best = cand;
      }
      pixel[static_cast<std::size_t>(p)] = best;
    }
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t x = 0; x < s.w; ++x) {
        const std::int64_t x0 = std::max<std::int64_t>(0, x - radius);
        const std::int64_t x1 = std::min<std::int64_t>(s.w - 1, x + radius);
        Candidate<T> best = pixel[static_cast<std::size_t>(y * s.w + x0)];
        for (std::int64_t xx = x0 + 1; xx <= x1; ++xx) {
          const Candidate<T>& cand = pixel[static_cast<std::size_t>(y * s.w + xx)];
          if (better(cand, best, kind)) best = cand;
        }
        rows[static_cast<std::size_t>(y * s.w + x)] = best;
      }
    }
    for (std::int64_t y = 0; y < s.h; ++y) {
      const std::int64_t y0 = std::max<std::int64_t>(0, y - radius);
      const std::int64_t y1 = std::min<std::int64_t>(s.h - 1, y + radius);
      for (std::int64_t x = 0; x < s.w; ++x) {
        Candidate<T> best = rows[static_cast<std::size_t>(y0 * s.w + x)];
        for (std::int64_t yy = y0 + 1; yy <= y1; ++yy) {
          const Candidate<T>& cand = rows[static_cast<std::size_t>(yy * s.w + x)];
          if (better(cand, best, kind)) best = cand;
        }
        const std::int64_t o = n * hw + y * s.w + x;
        out.values[o] = best.value;
        out.masks.index[static_cast<std::size_t>(o)] = best.flat;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> extract_backward(const Tensor<T>& upstream, const ExtremeChannelMasks& masks) {
  const Shape s = masks.input_shape;
  const std::int64_t hw = s.plane();
  const std::int64_t chw = s.c * hw;
  if (upstream.shape() != Shape{s.n, 1, s.h, s.w} ||
      static_cast<std::int64_t>(masks.index.size()) != s.n * hw) {
    throw InternalError("extract_backward: upstream " + upstream.shape().str() +
                        " does not match mask for input " + s.str());
  }
  Tensor<T> grad(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const std::int64_t i = masks.index[static_cast<std::size_t>(n * hw + p)];
      if (i < 0 || i >= chw) {
        throw InternalError("extract_backward: mask index " + std::to_string(i) +
                            " outside input " + s.str());
      }
      grad[n * chw + i] += upstream[n * hw + p];
    }
  }
  return grad;
}

namespace {

template <typename T>
ExtremeVar<T> record_extract(Var<T> input, int window, Extreme kind, ExtractBackwardFn<T> backward) {
  ExtremeChannel<T> result = extract_extreme(input.value(), window, kind);
  auto masks = std::make_shared<const ExtremeChannelMasks>(std::move(result.masks));
  const std::size_t x_id = input.id();
  Var<T> values = input.tape().record(
      kind == Extreme::kDark ? "dark_extract" : "bright_extract", std::move(result.values), {x_id},
      [=](Tape<T>& t, std::size_t self) {
        const Tensor<T> routed = backward(t.grad(self), *masks);
        Tensor<T>& gx = t.accumulator(x_id);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += routed[i];
      });
  return {values, masks};
}

}  // namespace

template <typename T>
ExtremeVar<T> dark_extract(Var<T> input, int window, ExtractBackwardFn<T> backward) {
  return record_extract(input, window, Extreme::kDark, backward);
}

template <typename T>
ExtremeVar<T> bright_extract(Var<T> input, int window, ExtractBackwardFn<T> backward) {
  return record_extract(input, window, Extreme::kBright, backward);
}

template <typename T>
ECPeLOutput<T> ecpel_forward(Var<T> features, const ECPeLParams<T>& params, int window,
                             ExtractBackwardFn<T> backward) {
  const std::int64_t c = features.shape().c;
  for (const ConvParams<T>* m : {&params.theta, &params.alpha, &params.beta}) {
    if (m->in_channels() != c) {
      throw ContractViolation("ecpel: mapping expects " + std::to_string(m->in_channels()) +
                              " input channels, features have " + std::to_string(c));
    }
  }
  require(params.alpha.out_channels() == kPriorChannels &&
              params.beta.out_channels() == kPriorChannels,
          "ecpel: prior branches must have 3 output channels");

  ECPeLOutput<T> out;
  Var<T> mapped = apply(params.theta, features);
  out.lambda = sigmoid(apply(params.alpha, features));
  out.omega = sigmoid(apply(params.beta, features));
  const std::array<Var<T>, 3> parts{out.lambda, mapped, out.omega};
  out.features = concat_channels<T>(parts);
  out.dark = dark_extract(out.lambda, window, backward);
  out.bright = bright_extract(out.omega, window, backward);
  return out;
}

#define ECPENET_INSTANTIATE(T)                                                                \
  template ExtremeChannel<T> extract_extreme(const Tensor<T>&, int, Extreme);                 \
  template Tensor<T> extract_backward(const Tensor<T>&, const ExtremeChannelMasks&);          \
  template ExtremeVar<T> dark_extract(Var<T>, int, ExtractBackwardFn<T>);                     \
  template ExtremeVar<T> bright_extract(Var<T>, int, ExtractBackwardFn<T>);                   \
  template ECPeLOutput<T> ecpel_forward(Var<T>, const ECPeLParams<T>&, int, ExtractBackwardFn<T>);

ECPENET_INSTANTIATE(float)
ECPENET_INSTANTIATE(double)

#undef ECPENET_INSTANTIATE

}  // namespace ecpenet
