#include "terraexpr/ops.hpp"

#include <cmath>
#include <sstream>

#include "kernels.hpp"

namespace terraexpr {

namespace {

template <typename T>
using NodeRef = std::shared_ptr<detail::Node<T>>;

template <typename T>
using BackwardFn = std::function<void(detail::Node<T>&)>;

template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                           const std::vector<const BasicTensor<T>*>& inputs, BackwardFn<T> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  node->sequence = detail::next_sequence();
  for (std::size_t i = 0; i < node->data.size(); ++i) {
    if (!std::isfinite(node->data[i])) {
      std::ostringstream msg;
      msg << "non-finite value " << node->data[i] << " produced by " << op << "#" << node->sequence
          << " at flat index " << i;
      throw NonFiniteError(msg.str());
    }
  }
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto* input : inputs) needs_grad = needs_grad || input->requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto* input : inputs) node->parents.push_back(input->node());
    node->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(node));
}

template <typename T>
bool wants(const detail::Node<T>& self, std::size_t parent) {
  return self.parents[parent]->requires_grad;
}

template <typename T>
std::vector<T>& grad_of(detail::Node<T>& self, std::size_t parent) {
  return self.parents[parent]->ensure_grad();
}

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

const char* elementwise_name(ElementwiseOp kind) {
  switch (kind) {
    case ElementwiseOp::add: return "add";
    case ElementwiseOp::sub: return "sub";
    case ElementwiseOp::mul: return "mul";
    case ElementwiseOp::div: return "div";
    case ElementwiseOp::pow: return "pow";
    case ElementwiseOp::max: return "max";
  }
  return "elementwise";
}

template <typename T>
BasicTensor<T> unary(const char* op, const BasicTensor<T>& x, std::vector<T> out,
                     std::function<T(T x, T y)> derivative) {
  return make_result<T>(op, x.shape(), std::move(out), {&x}, [derivative](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    const auto& xs = self.parents[0]->data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * derivative(xs[i], self.data[i]);
  });
}

}  // namespace

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp kind, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && a.numel() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw ShapeError(std::string(elementwise_name(kind)) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = ad[a_scalar ? 0 : i];
    const T y = bd[b_scalar ? 0 : i];
    switch (kind) {
      case ElementwiseOp::add: out[i] = x + y; break;
      case ElementwiseOp::sub: out[i] = x - y; break;
      case ElementwiseOp::mul: out[i] = x * y; break;
      case ElementwiseOp::div:
        if (y == T(0)) throw DomainError("div: division by zero at flat index " + std::to_string(i));
        out[i] = x / y;
        break;
      case ElementwiseOp::pow:
        if (x < T(0) && std::trunc(y) != y) {
          throw DomainError("pow: negative base with non-integer exponent");
        }
        if (x == T(0) && y < T(0)) throw DomainError("pow: zero base with negative exponent");
        out[i] = std::pow(x, y);
        break;
      case ElementwiseOp::max: out[i] = x >= y ? x : y; break;
    }
  }
  return make_result<T>(elementwise_name(kind), shape, std::move(out), {&a, &b},
                        [kind, a_scalar, b_scalar](detail::Node<T>& self) {
    const auto& xs = self.parents[0]->data;
    const auto& ys = self.parents[1]->data;
    const bool need_a = wants(self, 0);
    const bool need_b = wants(self, 1);
    std::vector<T>* ga = need_a ? &grad_of(self, 0) : nullptr;
    std::vector<T>* gb = need_b ? &grad_of(self, 1) : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const std::size_t ia = a_scalar ? 0 : i;
      const std::size_t ib = b_scalar ? 0 : i;
      const T g = self.grad[i];
      const T x = xs[ia];
      const T y = ys[ib];
      T da = T(0);
      T db = T(0);
      switch (kind) {
        case ElementwiseOp::add: da = g; db = g; break;
        case ElementwiseOp::sub: da = g; db = -g; break;
        case ElementwiseOp::mul: da = g * y; db = g * x; break;
        case ElementwiseOp::div: da = g / y; db = -g * x / (y * y); break;
        case ElementwiseOp::pow:
          if (need_a) da = y == T(0) ? T(0) : g * y * std::pow(x, y - T(1));
          if (need_b) db = x > T(0) ? g * self.data[i] * std::log(x) : T(0);
          break;
        case ElementwiseOp::max:
          if (x >= y) da = g; else db = g;
          break;
      }
      if (ga) (*ga)[ia] += da;
      if (gb) (*gb)[ib] += db;
    }
  });
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp kind, const BasicTensor<T>& a, T b) {
  return elementwise(kind, a, BasicTensor<T>::scalar(b));
}

template <typename T>
BasicTensor<T> operator-(T a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::sub, BasicTensor<T>::scalar(a), b);
}

template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = -v;
  return unary<T>("neg", a, std::move(out), [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xs[i]);
  return unary<T>("exp", x, std::move(out), [](T, T y) { return y; });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(xs[i] > T(0))) {
      throw DomainError("log of non-positive value at flat index " + std::to_string(i));
    }
    out[i] = std::log(xs[i]);
  }
  return unary<T>("log", x, std::move(out), [](T v, T) { return T(1) / v; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] > T(0) ? xs[i] : T(0);
  return unary<T>("relu", x, std::move(out), [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] > T(0) ? xs[i] : slope * xs[i];
  return unary<T>("leaky_relu", x, std::move(out),
                  [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xs[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return unary<T>("sigmoid", x, std::move(out), [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xs[i]);
  return unary<T>("tanh", x, std::move(out), [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(xs[i]);
  return unary<T>("abs", x, std::move(out),
                  [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] * xs[i];
  return unary<T>("square", x, std::move(out), [](T v, T) { return T(2) * v; });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {1}, {total}, {&x}, [](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (auto& g : gx) g += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  const T count = static_cast<T>(x.numel());
  return make_result<T>("mean", {1}, {total / count}, {&x}, [count](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    const T g = self.grad[0] / count;
    for (auto& v : gx) v += g;
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {&x}, [](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> gather(const BasicTensor<T>& x, std::span<const std::size_t> index, Shape shape) {
  if (shape_numel(shape) != index.size()) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for shape " +
                     shape_string(shape));
  }
  const auto xs = x.data();
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xs.size()) throw ShapeError("gather: index out of range");
    out[i] = xs[index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result<T>("gather", std::move(shape), std::move(out), {&x},
                        [idx = std::move(idx)](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  kernels::gemm(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [m, n, k](detail::Node<T>& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    if (wants(self, 0)) {
      std::vector<T> bt(n * k);
      kernels::transpose(k, n, bv.data(), bt.data());
      kernels::gemm_acc(m, k, n, self.grad.data(), bt.data(), grad_of(self, 0).data());
    }
    if (wants(self, 1)) {
      std::vector<T> at(k * m);
      kernels::transpose(m, k, av.data(), at.data());
      kernels::gemm_acc(k, n, m, at.data(), self.grad.data(), grad_of(self, 1).data());
    }
  });
}

template <typename T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  require_rank(x.shape(), 2, "add_row_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.numel() != cols) throw ShapeError("add_row_bias: bias length mismatch");
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bs = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bs[c];
  return make_result<T>("add_row_bias", x.shape(), std::move(out), {&x, &bias},
                        [rows, cols](detail::Node<T>& self) {
    if (wants(self, 0)) {
      auto& gx = grad_of(self, 0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& gb = grad_of(self, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += self.grad[r * cols + c];
    }
  });
}

template <typename T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  require_rank(x.shape(), 4, "add_channel_bias");
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (bias.numel() != channels) throw ShapeError("add_channel_bias: bias length mismatch");
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bs = bias.data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) out[(n * channels + c) * plane + p] += bs[c];
  return make_result<T>("add_channel_bias", x.shape(), std::move(out), {&x, &bias},
                        [batch, channels, plane](detail::Node<T>& self) {
    if (wants(self, 0)) {
      auto& gx = grad_of(self, 0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& gb = grad_of(self, 1);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t p = 0; p < plane; ++p) gb[c] += self.grad[(n * channels + c) * plane + p];
    }
  });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding) {
  require_rank(input.shape(), 4, "conv2d");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  if (stride == 0) throw ShapeError("conv2d: stride must be at least 1");
  kernels::ConvGeometry g{};
  g.batch = input.dim(0);
  g.channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.filters = kernel.dim(0);
  g.kernel = kernel.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (kernel.dim(1) != g.channels || kernel.dim(3) != g.kernel) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) + " incompatible with input " +
                     shape_string(input.shape()));
  }
  if (g.kernel > g.height + 2 * padding || g.kernel > g.width + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.out_height = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_width = (g.width + 2 * padding - g.kernel) / stride + 1;

  const std::size_t patch = g.patch(), ncols = g.columns(), positions = g.positions();
  std::vector<T> cols(patch * ncols);
  kernels::im2col(g, input.data().data(), cols.data());
  std::vector<T> mat(g.filters * ncols);
  kernels::gemm(g.filters, ncols, patch, kernel.data().data(), cols.data(), mat.data());
  std::vector<T> out(g.batch * g.filters * positions);
  for (std::size_t f = 0; f < g.filters; ++f)
    for (std::size_t n = 0; n < g.batch; ++n)
      std::copy_n(mat.data() + f * ncols + n * positions, positions,
                  out.data() + (n * g.filters + f) * positions);

  const bool keep_cols = GradMode::enabled() && kernel.requires_grad();
  return make_result<T>("conv2d", {g.batch, g.filters, g.out_height, g.out_width}, std::move(out),
                        {&input, &kernel},
                        [g, cols = keep_cols ? std::move(cols) : std::vector<T>{}](detail::Node<T>& self) {
    const std::size_t patch = g.patch(), ncols = g.columns(), positions = g.positions();
    std::vector<T> gmat(g.filters * ncols);
    for (std::size_t f = 0; f < g.filters; ++f)
      for (std::size_t n = 0; n < g.batch; ++n)
        std::copy_n(self.grad.data() + (n * g.filters + f) * positions, positions,
                    gmat.data() + f * ncols + n * positions);
    if (wants(self, 1)) {
      std::vector<T> cols_t(ncols * patch);
      kernels::transpose(patch, ncols, cols.data(), cols_t.data());
      kernels::gemm_acc(g.filters, patch, ncols, gmat.data(), cols_t.data(), grad_of(self, 1).data());
    }
    if (wants(self, 0)) {
      const auto& w = self.parents[1]->data;
      std::vector<T> wt(patch * g.filters);
      kernels::transpose(g.filters, patch, w.data(), wt.data());
      std::vector<T> dcols(patch * ncols);
      kernels::gemm(patch, ncols, g.filters, wt.data(), gmat.data(), dcols.data());
      kernels::col2im_acc(g, dcols.data(), grad_of(self, 0).data());
    }
  });
}

template <typename T>
BasicTensor<T> pool2d(PoolKind kind, const BasicTensor<T>& input, std::size_t window,
                      std::size_t stride) {
  require_rank(input.shape(), 4, "pool2d");
  if (stride == 0 || window == 0) throw ShapeError("pool2d: window and stride must be positive");
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window > h || window > w) throw ShapeError("pool2d: window larger than input");
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  const auto xs = input.data();
  std::vector<T> out(planes * oh * ow);
  std::vector<std::size_t> argmax(kind == PoolKind::max ? out.size() : 0);
  const T area = static_cast<T>(window * window);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = (p * oh + oy) * ow + ox;
        if (kind == PoolKind::max) {
          std::size_t best = p * h * w + (oy * stride) * w + ox * stride;
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t i = p * h * w + (oy * stride + ky) * w + ox * stride + kx;
              if (xs[i] > xs[best]) best = i;
            }
          out[o] = xs[best];
          argmax[o] = best;
        } else {
          T total = T(0);
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx)
              total += xs[p * h * w + (oy * stride + ky) * w + ox * stride + kx];
          out[o] = total / area;
        }
      }
    }
  }
  Shape shape{input.dim(0), input.dim(1), oh, ow};
  return make_result<T>(kind == PoolKind::max ? "max_pool2d" : "avg_pool2d", std::move(shape),
                        std::move(out), {&input},
                        [kind, argmax = std::move(argmax), planes, h, w, oh, ow, window, stride,
                         area](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    if (kind == PoolKind::max) {
      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
      return;
    }
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T g = self.grad[(p * oh + oy) * ow + ox] / area;
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx)
              gx[p * h * w + (oy * stride + ky) * w + ox * stride + kx] += g;
        }
  });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t planes = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
  const auto xs = x.data();
  std::vector<T> out(planes);
  const T count = static_cast<T>(area);
  for (std::size_t p = 0; p < planes; ++p) {
    T total = T(0);
    for (std::size_t i = 0; i < area; ++i) total += xs[p * area + i];
    out[p] = total / count;
  }
  return make_result<T>("global_avg_pool", {x.dim(0), x.dim(1)}, std::move(out), {&x},
                        [planes, area, count](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t p = 0; p < planes; ++p) {
      const T g = self.grad[p] / count;
      for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += g;
    }
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.numel() / k;
  const auto xs = logits.data();
  std::vector<T> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xs.data() + r * k;
    T peak = row[0];
    for (std::size_t j = 1; j < k; ++j) peak = std::max(peak, row[j]);
    T total = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      out[r * k + j] = std::exp(row[j] - peak);
      total += out[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= total;
  }
  return make_result<T>("softmax", logits.shape(), std::move(out), {&logits},
                        [rows, k](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t j = 0; j < k; ++j) dot += self.grad[r * k + j] * self.data[r * k + j];
      for (std::size_t j = 0; j < k; ++j)
        gx[r * k + j] += self.data[r * k + j] * (self.grad[r * k + j] - dot);
    }
  });
}

template <typename T>
BasicTensor<T> select_per_row(const BasicTensor<T>& x, std::span<const std::size_t> index) {
  require_rank(x.shape(), 2, "select_per_row");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (index.size() != rows) throw ShapeError("select_per_row: one index per row required");
  std::vector<std::size_t> flat(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= cols) {
      throw std::out_of_range("select_per_row: index " + std::to_string(index[r]) +
                              " out of range for " + std::to_string(cols) + " columns");
    }
    flat[r] = r * cols + index[r];
  }
  return gather(x, std::span<const std::size_t>(flat), Shape{rows});
}

template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BatchNormStats<T>& running, bool training,
                            T momentum, T eps) {
  require_rank(x.shape(), 4, "batch_norm2d");
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != channels || beta.numel() != channels || running.mean.size() != channels ||
      running.var.size() != channels) {
    throw ShapeError("batch_norm2d: parameter length does not match channel count");
  }
  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();
  const std::size_t count = batch * plane;
  std::vector<T> invstd(channels);
  std::vector<T> xhat(x.numel());
  std::vector<T> out(x.numel());
  for (std::size_t c = 0; c < channels; ++c) {
    T mu, var;
    if (training) {
      T total = T(0);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t p = 0; p < plane; ++p) total += xs[(n * channels + c) * plane + p];
      mu = total / static_cast<T>(count);
      T sq = T(0);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t p = 0; p < plane; ++p) {
          const T d = xs[(n * channels + c) * plane + p] - mu;
          sq += d * d;
        }
      var = sq / static_cast<T>(count);
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
      running.mean[c] = (T(1) - momentum) * running.mean[c] + momentum * mu;
      running.var[c] = (T(1) - momentum) * running.var[c] + momentum * unbiased;
    } else {
      mu = running.mean[c];
      var = running.var[c];
    }
    invstd[c] = T(1) / std::sqrt(var + eps);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (n * channels + c) * plane + p;
        xhat[i] = (xs[i] - mu) * invstd[c];
        out[i] = gs[c] * xhat[i] + bs[c];
      }
  }
  return make_result<T>(
      "batch_norm2d", x.shape(), std::move(out), {&x, &gamma, &beta},
      [training, batch, channels, plane, invstd = std::move(invstd),
       xhat = std::move(xhat)](detail::Node<T>& self) {
        const auto& gs = self.parents[1]->data;
        const std::size_t count = batch * plane;
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_g = T(0), sum_gx = T(0);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t p = 0; p < plane; ++p) {
              const std::size_t i = (n * channels + c) * plane + p;
              sum_g += self.grad[i];
              sum_gx += self.grad[i] * xhat[i];
            }
          if (wants(self, 1)) grad_of(self, 1)[c] += sum_gx;
          if (wants(self, 2)) grad_of(self, 2)[c] += sum_g;
          if (!wants(self, 0)) continue;
          auto& gx = grad_of(self, 0);
          const T scale = gs[c] * invstd[c];
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t p = 0; p < plane; ++p) {
              const std::size_t i = (n * channels + c) * plane + p;
              if (training) {
                gx[i] += scale * (self.grad[i] - sum_g / static_cast<T>(count) -
                                  xhat[i] * sum_gx / static_cast<T>(count));
              } else {
                gx[i] += scale * self.grad[i];
              }
            }
        }
      });
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const std::size_t batch = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  const std::size_t plane = h * w;
  std::vector<std::size_t> offsets;
  std::size_t channels = 0;
  for (const auto& p : parts) {
    require_rank(p.shape(), 4, "concat_channels");
    if (p.dim(0) != batch || p.dim(2) != h || p.dim(3) != w) {
      throw ShapeError("concat_channels: batch/spatial extents differ");
    }
    offsets.push_back(channels);
    channels += p.dim(1);
  }
  std::vector<T> out(batch * channels * plane);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t ck = parts[k].dim(1);
    for (std::size_t n = 0; n < batch; ++n)
      std::copy_n(src.data() + n * ck * plane, ck * plane,
                  out.data() + (n * channels + offsets[k]) * plane);
  }
  std::vector<const BasicTensor<T>*> inputs;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    inputs.push_back(&p);
    widths.push_back(p.dim(1));
  }
  return make_result<T>("concat_channels", {batch, channels, h, w}, std::move(out), inputs,
                        [batch, channels, plane, offsets, widths](detail::Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      if (!wants(self, k)) continue;
      auto& gk = grad_of(self, k);
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = self.grad.data() + (n * channels + offsets[k]) * plane;
        T* dst = gk.data() + n * widths[k] * plane;
        for (std::size_t i = 0; i < widths[k] * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> tile_spatial(const BasicTensor<T>& x, std::size_t height, std::size_t width) {
  require_rank(x.shape(), 2, "tile_spatial");
  const std::size_t rows = x.dim(0), cols = x.dim(1), plane = height * width;
  const auto xs = x.data();
  std::vector<T> out(rows * cols * plane);
  for (std::size_t i = 0; i < rows * cols; ++i) std::fill_n(out.data() + i * plane, plane, xs[i]);
  return make_result<T>("tile_spatial", {rows, cols, height, width}, std::move(out), {&x},
                        [plane](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      T total = T(0);
      for (std::size_t p = 0; p < plane; ++p) total += self.grad[i * plane + p];
      gx[i] += total;
    }
  });
}

template <typename T>
BasicTensor<T> shift_difference(const BasicTensor<T>& x, std::size_t axis) {
  require_rank(x.shape(), 4, "shift_difference");
  if (axis != 2 && axis != 3) throw ShapeError("shift_difference: axis must be 2 or 3");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if ((axis == 2 && h < 2) || (axis == 3 && w < 2)) throw ShapeError("shift_difference: extent < 2");
  const std::size_t oh = axis == 2 ? h - 1 : h, ow = axis == 3 ? w - 1 : w;
  const std::size_t step = axis == 2 ? w : 1;
  const auto xs = x.data();
  std::vector<T> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t c = 0; c < ow; ++c) {
        const std::size_t i = p * h * w + y * w + c;
        out[(p * oh + y) * ow + c] = xs[i + step] - xs[i];
      }
  return make_result<T>("shift_difference", {x.dim(0), x.dim(1), oh, ow}, std::move(out), {&x},
                        [planes, h, w, oh, ow, step](detail::Node<T>& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t c = 0; c < ow; ++c) {
          const std::size_t i = p * h * w + y * w + c;
          const T g = self.grad[(p * oh + y) * ow + c];
          gx[i + step] += g;
          gx[i] -= g;
        }
  });
}

template <typename T>
BasicTensor<T> row_mean_broadcast(const BasicTensor<T>& x) {
  require_rank(x.shape(), 2, "row_mean_broadcast");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto xs = x.data();
  std::vector<T> means(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) means[c] += xs[r * cols + c];
  for (auto& m : means) m /= static_cast<T>(rows);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) std::copy(means.begin(), means.end(), out.begin() + r * cols);
  return make_result<T>("row_mean_broadcast", x.shape(), std::move(out), {&x},
                        [rows, cols](detail::Node<T>& self) {
    std::vector<T> col_sum(cols, T(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) col_sum[c] += self.grad[r * cols + c];
    auto& gx = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += col_sum[c] / static_cast<T>(rows);
  });
}

template <typename T>
BasicTensor<T> attention_blend(const BasicTensor<T>& attention, const BasicTensor<T>& image,
                               const BasicTensor<T>& color) {
  require_rank(image.shape(), 4, "attention_blend");
  if (image.shape() != color.shape()) throw ShapeError("attention_blend: image/color shape mismatch");
  const std::size_t batch = image.dim(0), channels = image.dim(1), plane = image.dim(2) * image.dim(3);
  if (attention.shape() != Shape{batch, 1, image.dim(2), image.dim(3)}) {
    throw ShapeError("attention_blend: attention must be [N,1,H,W]");
  }
  const auto as = attention.data();
  const auto is = image.data();
  const auto cs = color.data();
  std::vector<T> out(image.numel());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const T a = as[n * plane + p];
        const std::size_t i = (n * channels + c) * plane + p;
        out[i] = a * is[i] + (T(1) - a) * cs[i];
      }
  return make_result<T>("attention_blend", image.shape(), std::move(out), {&attention, &image, &color},
                        [batch, channels, plane](detail::Node<T>& self) {
    const auto& as = self.parents[0]->data;
    const auto& is = self.parents[1]->data;
    const auto& cs = self.parents[2]->data;
    std::vector<T>* ga = wants(self, 0) ? &grad_of(self, 0) : nullptr;
    std::vector<T>* gi = wants(self, 1) ? &grad_of(self, 1) : nullptr;
    std::vector<T>* gc = wants(self, 2) ? &grad_of(self, 2) : nullptr;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = (n * channels + c) * plane + p;
          const T a = as[n * plane + p];
          const T g = self.grad[i];
          if (ga) (*ga)[n * plane + p] += g * (is[i] - cs[i]);
          if (gi) (*gi)[i] += g * a;
          if (gc) (*gc)[i] += g * (T(1) - a);
        }
  });
}

#define TERRAEXPR_INSTANTIATE_OPS(T)                                                                 \
  template BasicTensor<T> elementwise(ElementwiseOp, const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> elementwise(ElementwiseOp, const BasicTensor<T>&, T);                      \
  template BasicTensor<T> operator-(T, const BasicTensor<T>&);                                       \
  template BasicTensor<T> operator-(const BasicTensor<T>&);                                          \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                                \
  template BasicTensor<T> log(const BasicTensor<T>&);                                                \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                               \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                            \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                               \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                                \
  template BasicTensor<T> square(const BasicTensor<T>&);                                             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                               \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                     \
  template BasicTensor<T> gather(const BasicTensor<T>&, std::span<const std::size_t>, Shape);        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> add_row_bias(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> add_channel_bias(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,          \
                                 std::size_t);                                                       \
  template BasicTensor<T> pool2d(PoolKind, const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                    \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                            \
  template BasicTensor<T> select_per_row(const BasicTensor<T>&, std::span<const std::size_t>);       \
  template BasicTensor<T> batch_norm2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                       const BasicTensor<T>&, BatchNormStats<T>&, bool, T, T);       \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);                       \
  template BasicTensor<T> tile_spatial(const BasicTensor<T>&, std::size_t, std::size_t);             \
  template BasicTensor<T> shift_difference(const BasicTensor<T>&, std::size_t);                      \
  template BasicTensor<T> row_mean_broadcast(const BasicTensor<T>&);                                 \
  template BasicTensor<T> attention_blend(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                          const BasicTensor<T>&);

TERRAEXPR_INSTANTIATE_OPS(double)
TERRAEXPR_INSTANTIATE_OPS(float)

#undef TERRAEXPR_INSTANTIATE_OPS

}  // namespace terraexpr
