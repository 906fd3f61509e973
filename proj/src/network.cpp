#include "ecpenet/network.h"

#include <array>
#include <cmath>
#include <random>
#include <string>

namespace ecpenet {

void NetworkConfig::validate() const {
  if (scales < 2) throw ContractViolation("network config: scales must be >= 2, got " + std::to_string(scales));
  if (channels < 1) throw ContractViolation("network config: channels must be >= 1");
  if (rir_blocks < 0) throw ContractViolation("network config: rir_blocks must be >= 0");
  if (res_blocks_per_rir < 0) throw ContractViolation("network config: res_blocks_per_rir must be >= 0");
  if (static_cast<int>(windows.size()) != scales) {
    throw ContractViolation("network config: windows has " + std::to_string(windows.size()) +
                            " entries for " + std::to_string(scales) + " scales");
  }
  for (int w : windows) {
    if (w < 1 || w % 2 == 0) {
      throw ContractViolation("network config: windows must be odd and positive, got " +
                              std::to_string(w));
    }
  }
}

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.scales = 2;
  c.channels = 8;
  c.rir_blocks = 1;
  c.res_blocks_per_rir = 1;
  c.windows = {5, 3};
  return c;
}

template <typename T>
NetworkParams<T>::NetworkParams(NetworkConfig config)
    : config_(std::move(config)), store_(std::make_unique<ParameterStore<T>>()) {
  config_.validate();
  ParameterStore<T>& s = *store_;
  const std::int64_t c = config_.channels;
  constexpr int k = 3;
  for (int j = 0; j < config_.scales; ++j) {
    const std::string p = "enc" + std::to_string(j) + ".";
    EncoderParams<T> e;
    e.conv_in = s.conv(p + "conv_in", 3, c, k, true);
    if (config_.ecp_enabled) {
      ECPeLParams<T> l;
      l.theta = s.conv(p + "ecpel.theta", c, c, k, true);
      l.alpha = s.conv(p + "ecpel.alpha", c, kPriorChannels, k, false);
      l.beta = s.conv(p + "ecpel.beta", c, kPriorChannels, k, false);
      e.ecpel = l;
    } else {
      e.plain = s.conv(p + "plain", c, c + 2 * kPriorChannels, k, true);
    }
    e.conv_a = s.conv(p + "conv_a", c + 2 * kPriorChannels, c, k, true);
    e.conv_b = s.conv(p + "conv_b", c, c, k, true);
    e.conv_c = s.conv(p + "conv_c", c, c, k, true);
    if (j > 0 && config_.ife_enabled) e.fuse = s.conv(p + "fuse", 5 * c, c, k, true);
    encoders.push_back(e);
  }
  for (int r = 0; r < config_.rir_blocks; ++r) {
    const std::string p = "mapper.rir" + std::to_string(r) + ".";
    RIRBlockParams<T> block;
    for (int b = 0; b < config_.res_blocks_per_rir; ++b) {
      const std::string q = p + "res" + std::to_string(b) + ".";
      block.res.push_back({s.conv(q + "conv1", c, c, k, true), s.conv(q + "conv2", c, c, k, false)});
    }
    block.tail = s.conv(p + "tail", c, c, k, false);
    mapper.rir.push_back(std::move(block));
  }
  mapper.tail = s.conv("mapper.tail", c, c, k, false);
  for (int j = 0; j < config_.scales; ++j) {
    const std::string p = "dec" + std::to_string(j) + ".";
    DecoderParams<T> d;
    if (j < config_.scales - 1) d.fuse = s.conv(p + "fuse", 2 * c, c, k, true);
    d.conv_a = s.conv(p + "conv_a", c, c, k, true);
    d.conv_b = s.conv(p + "conv_b", c, c, k, true);
    if (j > 0) d.conv_up = s.conv(p + "conv_up", c, 4 * c, k, false);
    d.conv_out = s.conv(p + "conv_out", c, 3, k, false);
    decoders.push_back(d);
  }
}

template <typename T>
NetworkParams<T> NetworkParams<T>::clone() const {
  return cast<T>();
}

template <typename T>
template <typename U>
NetworkParams<U> NetworkParams<T>::cast() const {
  NetworkParams<U> out(config_);
  for (std::size_t i = 0; i < store_->size(); ++i) {
    out.store()[i].value = (*store_)[i].value.template cast<U>();
  }
  return out;
}

namespace {

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

template <typename T>
NetworkParams<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams<T> params(config);
  std::mt19937_64 rng(seed);
  ParameterStore<T>& store = params.store();
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter<T>& p = store[i];
    const Shape s = p.value.shape();
    if (!p.name.ends_with(".weight")) continue;
    const double fan_in = static_cast<double>(s.c * s.h * s.w);
    const double fan_out = static_cast<double>(s.n * s.h * s.w);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (T& v : p.value.data()) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * limit);
  }
  return params;
}

template <typename T>
Var<T> feature_mapper(Var<T> features, const MapperParams<T>& params) {
  const std::int64_t expected = params.tail.in_channels();
  if (features.shape().c != expected) {
    throw ContractViolation("feature_mapper: expected " + std::to_string(expected) +
                            " channels, got " + features.shape().str());
  }
  Var<T> h = features;
  for (const RIRBlockParams<T>& block : params.rir) {
    const Var<T> block_in = h;
    for (const ResBlockParams<T>& res : block.res) {
      h = add(h, apply(res.conv2, apply(res.conv1, h)));
    }
    h = add(block_in, apply(block.tail, h));
  }
  return add(features, apply(params.tail, h));
}

template <typename T>
NetworkOutput<T> forward(Tape<T>& tape, NetworkParams<T>& params, const std::vector<Tensor<T>>& inputs,
                         ExtractBackwardFn<T> backward) {
  const NetworkConfig& cfg = params.config();
  const int scales = cfg.scales;
  if (static_cast<int>(inputs.size()) != scales) {
    throw ContractViolation("forward: pyramid has " + std::to_string(inputs.size()) +
                            " levels, network expects " + std::to_string(scales));
  }
  for (int j = 0; j < scales; ++j) {
    const Shape s = inputs[static_cast<std::size_t>(j)].shape();
    require(s.c == 3, "forward: level " + std::to_string(j) + " must have 3 channels, got " + s.str());
    if (j > 0) {
      const Shape f = inputs[static_cast<std::size_t>(j - 1)].shape();
      if (s.n != f.n || f.h != 2 * s.h || f.w != 2 * s.w) {
        throw ContractViolation("forward: level " + std::to_string(j) + " shape " + s.str() +
                                " is not half of level " + std::to_string(j - 1) + " shape " +
                                f.str());
      }
    }
  }

  NetworkOutput<T> out;
  std::vector<Var<T>> images, encoded;
  for (int j = 0; j < scales; ++j) {
    const EncoderParams<T>& enc = params.encoders[static_cast<std::size_t>(j)];
    Var<T> x = tape.constant(inputs[static_cast<std::size_t>(j)]);
    images.push_back(x);
    Var<T> h = apply(enc.conv_in, x);
    if (enc.ecpel) {
      ECPeLOutput<T> prior = ecpel_forward(h, *enc.ecpel, cfg.windows[static_cast<std::size_t>(j)], backward);
      h = prior.features;
      out.dark.push_back(prior.dark);
      out.bright.push_back(prior.bright);
    } else {
      h = apply(*enc.plain, h);
    }
    h = apply(enc.conv_a, h);
    h = apply(enc.conv_b, h);
    h = apply(enc.conv_c, h);
    if (enc.fuse) {
      const std::array<Var<T>, 2> parts{h, pixel_unshuffle(encoded.back(), 2)};
      h = apply(*enc.fuse, concat_channels<T>(parts));
    }
    encoded.push_back(h);
  }

  std::vector<Var<T>> mapped;
  for (const Var<T>& e : encoded) mapped.push_back(feature_mapper(e, params.mapper));

  out.predictions.resize(static_cast<std::size_t>(scales));
  Var<T> upsampled;
  for (int j = scales - 1; j >= 0; --j) {
    const DecoderParams<T>& dec = params.decoders[static_cast<std::size_t>(j)];
    Var<T> d = mapped[static_cast<std::size_t>(j)];
    if (dec.fuse) {
      const std::array<Var<T>, 2> parts{d, upsampled};
      d = apply(*dec.fuse, concat_channels<T>(parts));
    }
    d = apply(dec.conv_a, d);
    d = apply(dec.conv_b, d);
    if (dec.conv_up) upsampled = pixel_shuffle(apply(*dec.conv_up, d), 2);
    out.predictions[static_cast<std::size_t>(j)] =
        add(images[static_cast<std::size_t>(j)], apply(dec.conv_out, d));
  }
  return out;
}

template class NetworkParams<float>;
template class NetworkParams<double>;
template NetworkParams<double> NetworkParams<float>::cast<double>() const;
template NetworkParams<float> NetworkParams<double>::cast<float>() const;

#define ECPENET_INSTANTIATE(T)                                                               \
  template NetworkParams<T> build_network(const NetworkConfig&, std::uint64_t);              \
  template Var<T> feature_mapper(Var<T>, const MapperParams<T>&);                            \
  template NetworkOutput<T> forward(Tape<T>&, NetworkParams<T>&, const std::vector<Tensor<T>>&, \
                                    ExtractBackwardFn<T>);

ECPENET_INSTANTIATE(float)
ECPENET_INSTANTIATE(double)

#undef ECPENET_INSTANTIATE

}  // namespace ecpenet
