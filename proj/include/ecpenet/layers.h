#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ecpenet/autograd.h"

namespace ecpenet {

/// Convolution weights (C_out, C_in, k, k), bias (1, C_out, 1, 1) and, for
/// activated layers, one PReLU slope per output channel.
template <typename T>
struct ConvParams {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  Parameter<T>* slope = nullptr;

  std::int64_t in_channels() const { return weight->value.shape().c; }
  std::int64_t out_channels() const { return weight->value.shape().n; }
  bool activated() const { return slope != nullptr; }
};

/// Owns parameters at stable addresses, in creation order.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& create(std::string name, Shape shape, T fill = T(0)) {
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(shape, fill);
    p->zero_grad();
    items_.push_back(std::move(p));
    return *items_.back();
  }

  ConvParams<T> conv(const std::string& prefix, std::int64_t in, std::int64_t out, int kernel,
                     bool activated) {
    ConvParams<T> c;
    c.weight = &create(prefix + ".weight", Shape{out, in, kernel, kernel});
    c.bias = &create(prefix + ".bias", Shape{1, out, 1, 1});
    if (activated) c.slope = &create(prefix + ".slope", Shape{1, out, 1, 1}, T(0.25));
    return c;
  }

  std::size_t size() const { return items_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *items_[i]; }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : items_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }

  std::int64_t element_count() const {
    std::int64_t total = 0;
    for (const auto& p : items_) total += p->value.numel();
    return total;
  }

  void zero_grad() {
    for (auto& p : items_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> items_;
};

/// conv2d followed by PReLU when the layer has slopes.
template <typename T>
Var<T> apply(const ConvParams<T>& layer, Var<T> input) {
  Tape<T>& tape = input.tape();
  Var<T> out = conv2d(input, tape.parameter(*layer.weight), tape.parameter(*layer.bias));
  if (layer.activated()) out = prelu(out, tape.parameter(*layer.slope));
  return out;
}

}  // namespace ecpenet
