#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ecpenet/autograd.h"
#include "ecpenet/ecpel.h"
#include "ecpenet/layers.h"

namespace ecpenet {

struct NetworkConfig {
  int scales = 3;
  int channels = 64;
  int rir_blocks = 16;
  int res_blocks_per_rir = 4;
  std::vector<int> windows{31, 19, 11};  // finest to coarsest
  bool ecp_enabled = true;  // false swaps ECPeL for a plain convolution of the same width
  bool ife_enabled = true;  // false drops the fine-to-coarse encoder injection

  /// Throws ContractViolation naming the first invalid field.
  void validate() const;

  /// 2 scales, 8 channels, 1 RIRBlock of 1 ResBlock, windows {5, 3}.
  static NetworkConfig tiny();
};

template <typename T>
struct EncoderParams {
  ConvParams<T> conv_in;             // 3 -> C
  std::optional<ECPeLParams<T>> ecpel;
  std::optional<ConvParams<T>> plain;  // replaces ECPeL when the prior is ablated
  ConvParams<T> conv_a;              // C + 6 -> C
  ConvParams<T> conv_b;
  ConvParams<T> conv_c;
  std::optional<ConvParams<T>> fuse;  // (C + 4C) -> C, scales fed by a finer encoder
};

template <typename T>
struct ResBlockParams {
  ConvParams<T> conv1;  // PReLU-activated
  ConvParams<T> conv2;
};

template <typename T>
struct RIRBlockParams {
  std::vector<ResBlockParams<T>> res;
  ConvParams<T> tail;
};

template <typename T>
struct MapperParams {
  std::vector<RIRBlockParams<T>> rir;
  ConvParams<T> tail;
};

template <typename T>
struct DecoderParams {
  std::optional<ConvParams<T>> fuse;  // 2C -> C, scales fed by a coarser decoder
  ConvParams<T> conv_a;
  ConvParams<T> conv_b;
  std::optional<ConvParams<T>> conv_up;  // C -> 4C before pixel shuffle, all but the finest
  ConvParams<T> conv_out;                // C -> 3, no activation
};

/// All trainable variables. The feature mapper exists once and is referenced
/// by every scale.
template <typename T>
class NetworkParams {
 public:
  /// Allocates every parameter (weights and biases zero, slopes 0.25).
  explicit NetworkParams(NetworkConfig config);
  NetworkParams(NetworkParams&&) noexcept = default;
  NetworkParams& operator=(NetworkParams&&) noexcept = default;
  NetworkParams(const NetworkParams&) = delete;
  NetworkParams& operator=(const NetworkParams&) = delete;

  NetworkParams clone() const;
  template <typename U>
  NetworkParams<U> cast() const;

  const NetworkConfig& config() const { return config_; }
  ParameterStore<T>& store() { return *store_; }
  const ParameterStore<T>& store() const { return *store_; }
  std::vector<Parameter<T>*> parameters() { return store_->all(); }
  std::int64_t parameter_count() const { return store_->element_count(); }

  std::vector<EncoderParams<T>> encoders;
  MapperParams<T> mapper;
  std::vector<DecoderParams<T>> decoders;

 private:
  NetworkConfig config_;
  std::unique_ptr<ParameterStore<T>> store_;
};

/// Xavier-uniform weights from `seed`, zero biases, PReLU slopes 0.25.
template <typename T>
NetworkParams<T> build_network(const NetworkConfig& config, std::uint64_t seed);

template <typename T>
struct NetworkOutput {
  std::vector<Var<T>> predictions;   // finest first
  std::vector<ExtremeVar<T>> dark;   // empty when ECP is ablated
  std::vector<ExtremeVar<T>> bright;
};

template <typename T>
Var<T> feature_mapper(Var<T> features, const MapperParams<T>& params);

/// Runs encoders finest to coarsest, the shared mapper per scale, then
/// decoders coarsest to finest. Each prediction is a residual on its input.
template <typename T>
NetworkOutput<T> forward(Tape<T>& tape, NetworkParams<T>& params, const std::vector<Tensor<T>>& inputs,
                         ExtractBackwardFn<T> backward = &extract_backward<T>);

}  // namespace ecpenet
