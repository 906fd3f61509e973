#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ecpenet/autograd.h"
#include "ecpenet/layers.h"

namespace ecpenet {

enum class Extreme { kDark, kBright };

/// Per-output-pixel flat (c, h, w) index of the selected input element, one
/// entry per (n, h, w) of the extracted map.
struct ExtremeChannelMasks {
  Shape input_shape;
  int window = 1;
  std::vector<std::int64_t> index;
};

template <typename T>
struct ExtremeChannel {
  Tensor<T> values;  // (N, 1, H, W)
  ExtremeChannelMasks masks;
};

/// Min (dark) or max (bright) over all channels and a window x window
/// neighbourhood clamped at the borders. Ties go to the smallest flat index.
template <typename T>
ExtremeChannel<T> extract_extreme(const Tensor<T>& input, int window, Extreme kind);

template <typename T>
ExtremeChannel<T> dark_extract(const Tensor<T>& input, int window) {
  return extract_extreme(input, window, Extreme::kDark);
}
template <typename T>
ExtremeChannel<T> bright_extract(const Tensor<T>& input, int window) {
  return extract_extreme(input, window, Extreme::kBright);
}

/// Routes each upstream entry to the input element its mask selected.
template <typename T>
Tensor<T> extract_backward(const Tensor<T>& upstream, const ExtremeChannelMasks& masks);

template <typename T>
using ExtractBackwardFn = Tensor<T> (*)(const Tensor<T>&, const ExtremeChannelMasks&);

template <typename T>
struct ExtremeVar {
  Var<T> values;
  std::shared_ptr<const ExtremeChannelMasks> masks;
};

/// Tape versions. `backward` replaces the routing rule (used by mutation tests).
template <typename T>
ExtremeVar<T> dark_extract(Var<T> input, int window,
                           ExtractBackwardFn<T> backward = &extract_backward<T>);
template <typename T>
ExtremeVar<T> bright_extract(Var<T> input, int window,
                             ExtractBackwardFn<T> backward = &extract_backward<T>);

/// Three mappings of the extreme channel prior layer. Both prior branches are
/// squashed by a sigmoid so that their extracted channels live in (0, 1).
template <typename T>
struct ECPeLParams {
  ConvParams<T> theta;  // f^l, PReLU-activated
  ConvParams<T> alpha;  // Lambda, dark-prior branch
  ConvParams<T> beta;   // Omega, bright-prior branch
};

inline constexpr std::int64_t kPriorChannels = 3;

template <typename T>
struct ECPeLOutput {
  Var<T> features;  // [Lambda, f^l, Omega]
  Var<T> lambda;
  Var<T> omega;
  ExtremeVar<T> dark;
  ExtremeVar<T> bright;
};

template <typename T>
ECPeLOutput<T> ecpel_forward(Var<T> features, const ECPeLParams<T>& params, int window,
                             ExtractBackwardFn<T> backward = &extract_backward<T>);

}  // namespace ecpenet
