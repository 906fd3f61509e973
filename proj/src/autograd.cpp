#include "ecpenet/autograd.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace ecpenet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

const Shape kScalar{1, 1, 1, 1};

template <typename T>
Tape<T>& same_tape(std::initializer_list<Var<T>> vars) {
  Tape<T>* tape = nullptr;
  for (const Var<T>& v : vars) {
    require(v.valid(), "operation received an unbound variable");
    if (tape == nullptr) tape = &v.tape();
    if (tape != &v.tape()) throw ContractViolation("operands belong to different tapes");
  }
  return *tape;
}

// Source index along one axis for every (tap, output position) pair; -1 marks
// a zero-padded position.
std::vector<std::int64_t> source_indices(std::int64_t extent, int kernel, Padding padding) {
  const int pad = kernel / 2;
  std::vector<std::int64_t> table(static_cast<std::size_t>(kernel * extent));
  for (int k = 0; k < kernel; ++k) {
    for (std::int64_t i = 0; i < extent; ++i) {
      std::int64_t s = i + k - pad;
      if (s < 0 || s >= extent) {
        s = padding == Padding::kEdgeReplicate ? std::clamp<std::int64_t>(s, 0, extent - 1) : -1;
      }
      table[static_cast<std::size_t>(k * extent + i)] = s;
    }
  }
  return table;
}

template <typename T>
void im2col(const T* image, std::int64_t channels, std::int64_t height, std::int64_t width, int kernel,
            const std::vector<std::int64_t>& rows, const std::vector<std::int64_t>& cols, T* out) {
  const std::int64_t hw = height * width;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* plane = image + c * hw;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = out + ((c * kernel + ky) * kernel + kx) * hw;
        const std::int64_t* col_src = cols.data() + kx * width;
        for (std::int64_t y = 0; y < height; ++y) {
          const std::int64_t sy = rows[static_cast<std::size_t>(ky * height + y)];
          T* row = dst + y * width;
          if (sy < 0) {
            std::fill(row, row + width, T(0));
            continue;
          }
          const T* src = plane + sy * width;
          for (std::int64_t x = 0; x < width; ++x) {
            const std::int64_t sx = col_src[x];
            row[x] = sx < 0 ? T(0) : src[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* columns, std::int64_t channels, std::int64_t height, std::int64_t width,
            int kernel, const std::vector<std::int64_t>& rows, const std::vector<std::int64_t>& cols,
            T* image) {
  const std::int64_t hw = height * width;
  for (std::int64_t c = 0; c < channels; ++c) {
    T* plane = image + c * hw;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = columns + ((c * kernel + ky) * kernel + kx) * hw;
        const std::int64_t* col_src = cols.data() + kx * width;
        for (std::int64_t y = 0; y < height; ++y) {
          const std::int64_t sy = rows[static_cast<std::size_t>(ky * height + y)];
          if (sy < 0) continue;
          T* dst = plane + sy * width;
          const T* row = src + y * width;
          for (std::int64_t x = 0; x < width; ++x) {
            const std::int64_t sx = col_src[x];
            if (sx >= 0) dst[sx] += row[x];
          }
        }
      }
    }
  }
}

void check_conv_shapes(const Shape& in, const Shape& weight, const Shape& bias) {
  if (weight.c != in.c) {
    throw ContractViolation("conv2d: input " + in.str() + " has " + std::to_string(in.c) +
                            " channels but kernel " + weight.str() + " expects " +
                            std::to_string(weight.c));
  }
  require(weight.h == weight.w && weight.h % 2 == 1,
          "conv2d: kernel must be square with odd size, got " + weight.str());
  require(bias.numel() == weight.n,
          "conv2d: bias " + bias.str() + " does not match kernel " + weight.str());
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  Node node;
  node.op = "parameter";
  node.value = param.value;
  node.requires_grad = true;
  node.param = &param;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&param, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs,
                       BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (std::size_t i : inputs) node.requires_grad = node.requires_grad || nodes_[i].requires_grad;
  node.inputs = std::move(inputs);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::grad(std::size_t id) {
  return accumulator(id);
}

template <typename T>
Tensor<T>& Tape<T>::accumulator(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  require(&loss.tape() == this, "backward: loss belongs to another tape");
  require(loss.value().numel() == 1,
          "backward: loss must be a scalar, got shape " + loss.value().shape().str());
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor<T>();
  }
  accumulator(loss.id()).fill(T(1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.requires_grad || !node.backward) continue;
    node.backward(*this, i);
  }
  for (Node& node : nodes_) {
    if (node.param == nullptr || !node.has_grad) continue;
    Parameter<T>& p = *node.param;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    add_into(p.grad, node.grad);
  }
}

template <typename T>
Tensor<T> Tape<T>::gradient(Var<T> v) const {
  const Node& node = nodes_[v.id()];
  return node.has_grad ? node.grad : Tensor<T>(node.value.shape());
}

template <typename T>
std::size_t Tape<T>::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) return i;
  }
  return nodes_.size();
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         Padding padding) {
  const Shape in = input.shape();
  check_conv_shapes(in, weight.shape(), bias.shape());
  const int k = static_cast<int>(weight.shape().h);
  const std::int64_t c_out = weight.shape().n;
  const std::int64_t hw = in.plane();
  const std::int64_t taps = in.c * k * k;

  Tensor<T> out(Shape{in.n, c_out, in.h, in.w});
  const auto rows = source_indices(in.h, k, padding);
  const auto cols = source_indices(in.w, k, padding);
  std::vector<T> columns(static_cast<std::size_t>(taps * hw));
  ConstMatrixMap<T> w(weight.ptr(), c_out, taps);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.ptr(), c_out);
  for (std::int64_t n = 0; n < in.n; ++n) {
    im2col(input.ptr() + n * in.c * hw, in.c, in.h, in.w, k, rows, cols, columns.data());
    MatrixMap<T> o(out.ptr() + n * c_out * hw, c_out, hw);
    o.noalias() = w * ConstMatrixMap<T>(columns.data(), taps, hw);
    o.colwise() += b;
  }
  return out;
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, Padding padding) {
  Tape<T>& tape = same_tape({input, weight, bias});
  Tensor<T> out = conv2d_forward(input.value(), weight.value(), bias.value(), padding);
  const std::size_t in_id = input.id(), w_id = weight.id(), b_id = bias.id();
  return tape.record(
      "conv2d", std::move(out), {in_id, w_id, b_id}, [=](Tape<T>& t, std::size_t self) {
        const Tensor<T>& x = t.value(in_id);
        const Tensor<T>& wt = t.value(w_id);
        const Shape in = x.shape();
        const int k = static_cast<int>(wt.shape().h);
        const std::int64_t c_out = wt.shape().n;
        const std::int64_t hw = in.plane();
        const std::int64_t taps = in.c * k * k;
        const Tensor<T>& g = t.grad(self);
        const bool need_w = t.requires_grad(w_id);
        const bool need_b = t.requires_grad(b_id);
        const bool need_x = t.requires_grad(in_id);

        const auto rows = source_indices(in.h, k, padding);
        const auto cols = source_indices(in.w, k, padding);
        std::vector<T> columns(static_cast<std::size_t>(taps * hw));
        ConstMatrixMap<T> w(wt.ptr(), c_out, taps);
        for (std::int64_t n = 0; n < in.n; ++n) {
          ConstMatrixMap<T> go(g.ptr() + n * c_out * hw, c_out, hw);
          if (need_w) {
            im2col(x.ptr() + n * in.c * hw, in.c, in.h, in.w, k, rows, cols, columns.data());
            MatrixMap<T> gw(t.accumulator(w_id).ptr(), c_out, taps);
            gw.noalias() += go * ConstMatrixMap<T>(columns.data(), taps, hw).transpose();
          }
          if (need_b) {
            // Plain loop: a vectorized reduction's order would depend on buffer alignment.
            Tensor<T>& gb = t.accumulator(b_id);
            const T* row = g.ptr() + n * c_out * hw;
            for (std::int64_t o = 0; o < c_out; ++o, row += hw) {
              T acc = 0;
              for (std::int64_t i = 0; i < hw; ++i) acc += row[i];
              gb[o] += acc;
            }
          }
          if (need_x) {
            MatrixMap<T> gc(columns.data(), taps, hw);
            gc.noalias() = w.transpose() * go;
            col2im(columns.data(), in.c, in.h, in.w, k, rows, cols,
                   t.accumulator(in_id).ptr() + n * in.c * hw);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Pointwise ops

template <typename T>
Var<T> prelu(Var<T> input, Var<T> slopes) {
  Tape<T>& tape = same_tape({input, slopes});
  const Shape s = input.shape();
  require(slopes.value().numel() == s.c, "prelu: " + std::to_string(slopes.value().numel()) +
                                             " slopes for " + std::to_string(s.c) + " channels");
  Tensor<T> out(s);
  const Tensor<T>& x = input.value();
  const Tensor<T>& a = slopes.value();
  const std::int64_t hw = s.plane();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const std::int64_t base = (n * s.c + c) * hw;
      for (std::int64_t i = base; i < base + hw; ++i) out[i] = x[i] >= T(0) ? x[i] : a[c] * x[i];
    }
  }
  const std::size_t x_id = input.id(), a_id = slopes.id();
  return tape.record("prelu", std::move(out), {x_id, a_id}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& x = t.value(x_id);
    const Tensor<T>& a = t.value(a_id);
    const Tensor<T>& g = t.grad(self);
    const Shape s = x.shape();
    const std::int64_t hw = s.plane();
    const bool need_x = t.requires_grad(x_id);
    const bool need_a = t.requires_grad(a_id);
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::int64_t base = (n * s.c + c) * hw;
        if (need_x) {
          Tensor<T>& gx = t.accumulator(x_id);
          for (std::int64_t i = base; i < base + hw; ++i) gx[i] += x[i] >= T(0) ? g[i] : a[c] * g[i];
        }
        if (need_a) {
          T acc = 0;
          for (std::int64_t i = base; i < base + hw; ++i) {
            if (x[i] < T(0)) acc += x[i] * g[i];
          }
          t.accumulator(a_id)[c] += acc;
        }
      }
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> input) {
  Tape<T>& tape = same_tape({input});
  Tensor<T> out(input.shape());
  const Tensor<T>& x = input.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
  const std::size_t x_id = input.id();
  return tape.record("sigmoid", std::move(out), {x_id}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.accumulator(x_id);
    for (std::int64_t i = 0; i < y.numel(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape({a, b});
  require(a.shape() == b.shape(), "add: shape " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  add_into(out, b.value());
  const std::size_t a_id = a.id(), b_id = b.id();
  return tape.record("add", std::move(out), {a_id, b_id}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(a_id)) add_into(t.accumulator(a_id), g);
    if (t.requires_grad(b_id)) add_into(t.accumulator(b_id), g);
  });
}

// ---------------------------------------------------------------------------
// Shuffle pair

namespace {

// Calls fn(coarse_offset, fine_offset) for every element of the rearrangement
// between a fine (N, C, H, W) tensor and its coarse (N, C*f*f, H/f, W/f) form.
template <typename Fn>
void for_each_phase(const Shape& fine, int factor, Fn&& fn) {
  const std::int64_t f = factor;
  const std::int64_t ch = fine.h / f, cw = fine.w / f;
  const std::int64_t coarse_c = fine.c * f * f;
  for (std::int64_t n = 0; n < fine.n; ++n) {
    for (std::int64_t py = 0; py < f; ++py) {
      for (std::int64_t px = 0; px < f; ++px) {
        for (std::int64_t c = 0; c < fine.c; ++c) {
          const std::int64_t oc = (py * f + px) * fine.c + c;
          for (std::int64_t y = 0; y < ch; ++y) {
            const std::int64_t coarse_row = ((n * coarse_c + oc) * ch + y) * cw;
            const std::int64_t fine_row = ((n * fine.c + c) * fine.h + y * f + py) * fine.w + px;
            for (std::int64_t x = 0; x < cw; ++x) fn(coarse_row + x, fine_row + x * f);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, int factor) {
  const Shape s = input.shape();
  require(factor >= 1, "pixel_unshuffle: factor must be positive");
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ContractViolation("pixel_unshuffle: spatial size " + s.str() + " not divisible by " +
                            std::to_string(factor));
  }
  Tensor<T> out(Shape{s.n, s.c * factor * factor, s.h / factor, s.w / factor});
  for_each_phase(s, factor, [&](std::int64_t coarse, std::int64_t fine) { out[coarse] = input[fine]; });
  return out;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int factor) {
  const Shape s = input.shape();
  require(factor >= 1, "pixel_shuffle: factor must be positive");
  const std::int64_t ff = static_cast<std::int64_t>(factor) * factor;
  if (s.c % ff != 0) {
    throw ContractViolation("pixel_shuffle: channel count " + std::to_string(s.c) +
                            " not divisible by " + std::to_string(ff));
  }
  const Shape fine{s.n, s.c / ff, s.h * factor, s.w * factor};
  Tensor<T> out(fine);
  for_each_phase(fine, factor, [&](std::int64_t coarse, std::int64_t f) { out[f] = input[coarse]; });
  return out;
}

template <typename T>
Var<T> pixel_unshuffle(Var<T> input, int factor) {
  Tape<T>& tape = same_tape({input});
  const std::size_t x_id = input.id();
  return tape.record("pixel_unshuffle", pixel_unshuffle(input.value(), factor), {x_id},
                     [=](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.grad(self);
                       Tensor<T>& gx = t.accumulator(x_id);
                       for_each_phase(gx.shape(), factor, [&](std::int64_t coarse, std::int64_t fine) {
                         gx[fine] += g[coarse];
                       });
                     });
}

template <typename T>
Var<T> pixel_shuffle(Var<T> input, int factor) {
  Tape<T>& tape = same_tape({input});
  const std::size_t x_id = input.id();
  Tensor<T> out = pixel_shuffle(input.value(), factor);
  return tape.record("pixel_shuffle", std::move(out), {x_id}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.accumulator(x_id);
    for_each_phase(g.shape(), factor,
                   [&](std::int64_t coarse, std::int64_t fine) { gx[coarse] += g[fine]; });
  });
}

// ---------------------------------------------------------------------------
// concat

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> inputs) {
  require(!inputs.empty(), "concat_channels: no inputs");
  Tape<T>& tape = inputs.front().tape();
  const Shape first = inputs.front().shape();
  std::int64_t channels = 0;
  std::vector<std::size_t> ids;
  for (const Var<T>& v : inputs) {
    require(&v.tape() == &tape, "concat_channels: operands belong to different tapes");
    const Shape s = v.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ContractViolation("concat_channels: shape " + s.str() + " incompatible with " +
                              first.str());
    }
    channels += s.c;
    ids.push_back(v.id());
  }
  const Shape out_shape{first.n, channels, first.h, first.w};
  Tensor<T> out(out_shape);
  const std::int64_t hw = first.plane();
  std::int64_t c0 = 0;
  for (const Var<T>& v : inputs) {
    const Tensor<T>& x = v.value();
    const std::int64_t c = x.shape().c;
    for (std::int64_t n = 0; n < first.n; ++n) {
      std::copy_n(x.ptr() + n * c * hw, c * hw, out.ptr() + (n * channels + c0) * hw);
    }
    c0 += c;
  }
  return tape.record("concat_channels", std::move(out), ids, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad(self);
    std::int64_t c0 = 0;
    for (std::size_t id : ids) {
      const std::int64_t c = t.value(id).shape().c;
      if (t.requires_grad(id)) {
        Tensor<T>& gx = t.accumulator(id);
        for (std::int64_t n = 0; n < out_shape.n; ++n) {
          const T* src = g.ptr() + (n * channels + c0) * hw;
          T* dst = gx.ptr() + n * c * hw;
          for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
        }
      }
      c0 += c;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

template <typename T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

}  // namespace

template <typename T>
Var<T> l1_distance(Var<T> a, Var<T> b) {
  Tape<T>& tape = same_tape({a, b});
  if (a.shape() != b.shape()) {
    throw ContractViolation("l1_distance: shape " + a.shape().str() + " vs " + b.shape().str());
  }
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  const std::int64_t count = x.numel();
  require(count > 0, "l1_distance: empty operands");
  double acc = 0;
  for (std::int64_t i = 0; i < count; ++i) acc += std::abs(static_cast<double>(x[i]) - y[i]);
  Tensor<T> out(kScalar, static_cast<T>(acc / static_cast<double>(count)));
  const std::size_t a_id = a.id(), b_id = b.id();
  return tape.record("l1_distance", std::move(out), {a_id, b_id}, [=](Tape<T>& t, std::size_t self) {
    const T scale = t.grad(self)[0] / static_cast<T>(count);
    const Tensor<T>& x = t.value(a_id);
    const Tensor<T>& y = t.value(b_id);
    if (t.requires_grad(a_id)) {
      Tensor<T>& gx = t.accumulator(a_id);
      for (std::int64_t i = 0; i < count; ++i) gx[i] += scale * sign(x[i] - y[i]);
    }
    if (t.requires_grad(b_id)) {
      Tensor<T>& gy = t.accumulator(b_id);
      for (std::int64_t i = 0; i < count; ++i) gy[i] -= scale * sign(x[i] - y[i]);
    }
  });
}

template <typename T>
Var<T> l1_to_constant(Var<T> a, T target) {
  Tape<T>& tape = same_tape({a});
  const Tensor<T>& x = a.value();
  const std::int64_t count = x.numel();
  require(count > 0, "l1_to_constant: empty operand");
  double acc = 0;
  for (std::int64_t i = 0; i < count; ++i) acc += std::abs(static_cast<double>(x[i]) - target);
  Tensor<T> out(kScalar, static_cast<T>(acc / static_cast<double>(count)));
  const std::size_t a_id = a.id();
  return tape.record("l1_to_constant", std::move(out), {a_id}, [=](Tape<T>& t, std::size_t self) {
    const T scale = t.grad(self)[0] / static_cast<T>(count);
    const Tensor<T>& x = t.value(a_id);
    Tensor<T>& gx = t.accumulator(a_id);
    for (std::int64_t i = 0; i < count; ++i) gx[i] += scale * sign(x[i] - target);
  });
}

template <typename T>
Var<T> sum(Var<T> input) {
  Tape<T>& tape = same_tape({input});
  double acc = 0;
  for (T v : input.value().data()) acc += v;
  const std::size_t x_id = input.id();
  return tape.record("sum", Tensor<T>(kScalar, static_cast<T>(acc)), {x_id},
                     [=](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       Tensor<T>& gx = t.accumulator(x_id);
                       for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
                     });
}

template <typename T>
Var<T> inner_product(Var<T> a, const Tensor<T>& weights) {
  Tape<T>& tape = same_tape({a});
  if (a.shape() != weights.shape()) {
    throw ContractViolation("inner_product: shape " + a.shape().str() + " vs " + weights.shape().str());
  }
  double acc = 0;
  for (std::int64_t i = 0; i < weights.numel(); ++i) acc += static_cast<double>(a.value()[i]) * weights[i];
  const std::size_t a_id = a.id();
  return tape.record("inner_product", Tensor<T>(kScalar, static_cast<T>(acc)), {a_id},
                     [=](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       Tensor<T>& ga = t.accumulator(a_id);
                       for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g * weights[i];
                     });
}

template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> terms, std::span<const T> weights) {
  require(!terms.empty(), "weighted_sum: no terms");
  require(terms.size() == weights.size(), "weighted_sum: term/weight count mismatch");
  Tape<T>& tape = terms.front().tape();
  std::vector<std::size_t> ids;
  T acc = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(&terms[i].tape() == &tape, "weighted_sum: operands belong to different tapes");
    require(terms[i].value().numel() == 1, "weighted_sum: terms must be scalars");
    acc += weights[i] * terms[i].value()[0];
    ids.push_back(terms[i].id());
  }
  std::vector<T> w(weights.begin(), weights.end());
  return tape.record("weighted_sum", Tensor<T>(kScalar, acc), ids,
                     [=](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (t.requires_grad(ids[i])) t.accumulator(ids[i])[0] += w[i] * g;
                       }
                     });
}

// ---------------------------------------------------------------------------
// Finite differences

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& fn, const Tensor<T>& x, T h) {
  Tensor<T> probe = x;
  Tensor<T> grad(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const T original = probe[i];
    probe[i] = original + h;
    const T up = fn(probe);
    probe[i] = original - h;
    const T down = fn(probe);
    probe[i] = original;
    grad[i] = (up - down) / (T(2) * h);
  }
  return grad;
}

template <typename T>
double relative_error(const Tensor<T>& analytic, const Tensor<T>& numeric) {
  require(analytic.shape() == numeric.shape(), "relative_error: shape mismatch");
  double diff = 0, scale = 0;
  for (std::int64_t i = 0; i < analytic.numel(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(analytic[i]) - numeric[i]));
    scale = std::max({scale, std::abs(static_cast<double>(analytic[i])),
                      std::abs(static_cast<double>(numeric[i]))});
  }
  return scale == 0 ? diff : diff / scale;
}

#define ECPENET_INSTANTIATE(T)                                                                   \
  template class Tape<T>;                                                                        \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, Padding);                                       \
  template Var<T> prelu(Var<T>, Var<T>);                                                         \
  template Var<T> sigmoid(Var<T>);                                                               \
  template Var<T> add(Var<T>, Var<T>);                                                           \
  template Var<T> pixel_unshuffle(Var<T>, int);                                                  \
  template Var<T> pixel_shuffle(Var<T>, int);                                                    \
  template Var<T> concat_channels(std::span<const Var<T>>);                                      \
  template Var<T> l1_distance(Var<T>, Var<T>);                                                   \
  template Var<T> l1_to_constant(Var<T>, T);                                                     \
  template Var<T> sum(Var<T>);                                                                   \
  template Var<T> inner_product(Var<T>, const Tensor<T>&);                                       \
  template Var<T> weighted_sum(std::span<const Var<T>>, std::span<const T>);                     \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                    Padding);                                                    \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                                     \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                       \
  template Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>&, const Tensor<T>&, \
                                      T);                                                        \
  template double relative_error(const Tensor<T>&, const Tensor<T>&);

ECPENET_INSTANTIATE(float)
ECPENET_INSTANTIATE(double)

#undef ECPENET_INSTANTIATE

}  // namespace ecpenet
