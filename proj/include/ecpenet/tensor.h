#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ecpenet {

// Raised when a caller breaks an operation's documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an internal invariant (e.g. forward/backward bookkeeping) breaks.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
  }
};

/// Dense 4-axis array in (N, C, H, W) row-major order.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw ContractViolation("negative tensor dimension " + shape.str());
    }
    values_.assign(static_cast<std::size_t>(shape.numel()), fill);
  }
  Tensor(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    if (static_cast<std::int64_t>(values_.size()) != shape.numel()) {
      throw ContractViolation("value count " + std::to_string(values_.size()) +
                              " does not match shape " + shape.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return values_.empty(); }

  std::span<T> data() { return values_; }
  std::span<const T> data() const { return values_; }
  T* ptr() { return values_.data(); }
  const T* ptr() const { return values_.data(); }
  const std::vector<T>& values() const { return values_; }

  std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return values_[static_cast<std::size_t>(offset(n, c, h, w))];
  }
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return values_[static_cast<std::size_t>(offset(n, c, h, w))];
  }
  T& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  T operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    for (T v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace ecpenet
