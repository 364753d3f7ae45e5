#include "vitas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kernels.hpp"

namespace vitas::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
T* grad_target(detail::Node<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] != sb[i]) {
      throw ShapeError(std::string(op) + ": extent mismatch on axis " + std::to_string(i) + " (" +
                       shape_string(sa) + " vs " + shape_string(sb) + ")");
    }
  }
}

struct AxisSplit {
  std::int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename T>
Tensor<T> unary(const Tensor<T>& a, T (*f)(T), T (*df)(T, T)) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = f(v);
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [df](detail::Node<T>& self) {
    T* g = grad_target(self, 0);
    if (!g) return;
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = grad_target(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  op_counters().elementwise_mul += out.size();
  return detail::make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](detail::Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (T* g = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [factor](detail::Node<T>& self) {
    if (T* g = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v += offset;
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      a,
      [](T x) {
        // Split on sign so exp never overflows.
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  return unary<T>(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2)))); },
      [](T x, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
        const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * T(M_PI));
        return cdf + x * pdf;
      });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary<T>(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> rsqrt(const Tensor<T>& a, T eps) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = T(1) / std::sqrt(v + eps);
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.value[i];
        g[i] += self.grad[i] * T(-0.5) * y * y * y;
      }
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
    throw ShapeError("matmul: expected matching rank 2 or 3, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const bool batched = a.rank() == 3;
  const std::int64_t batch = batched ? a.dim(0) : 1;
  if (batched && b.dim(0) != batch) throw ShapeError("matmul: batch extent mismatch on axis 0");
  const std::int64_t m = a.dim(-2), k = a.dim(-1);
  const std::int64_t kb = transpose_b ? b.dim(-1) : b.dim(-2);
  const std::int64_t n = transpose_b ? b.dim(-2) : b.dim(-1);
  if (kb != k) {
    throw ShapeError("matmul: inner extent mismatch (axis " + std::to_string(a.rank() - 1) + " of lhs is " +
                     std::to_string(k) + ", rhs contracts " + std::to_string(kb) + ")");
  }
  std::vector<T> out(static_cast<std::size_t>(batch * m * n), T(0));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::int64_t i = 0; i < batch; ++i) {
    if (transpose_b) {
      kernels::gemm_nt(m, n, k, av + i * m * k, bv + i * n * k, out.data() + i * m * n);
    } else {
      kernels::gemm_nn(m, n, k, av + i * m * k, bv + i * k * n, out.data() + i * m * n);
    }
  }
  op_counters().matmul_mac += static_cast<std::uint64_t>(batch * m * n * k);
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return detail::make_result<T>(
      std::move(shape), std::move(out), {a.node(), b.node()}, [batch, m, n, k, transpose_b](detail::Node<T>& self) {
        const T* av = self.inputs[0]->value.data();
        const T* bv = self.inputs[1]->value.data();
        const T* gy = self.grad.data();
        T* ga = grad_target(self, 0);
        T* gb = grad_target(self, 1);
        for (std::int64_t i = 0; i < batch; ++i) {
          const T* gyi = gy + i * m * n;
          if (ga) {
            // dA = dY * B  (B stored [n,k])  or  dY * B^T (B stored [k,n])
            if (transpose_b) {
              kernels::gemm_nn(m, k, n, gyi, bv + i * n * k, ga + i * m * k);
            } else {
              kernels::gemm_nt(m, k, n, gyi, bv + i * k * n, ga + i * m * k);
            }
          }
          if (gb) {
            if (transpose_b) {
              // dB[n,k] = dY^T A
              kernels::gemm_tn(m, n, k, gyi, av + i * m * k, gb + i * n * k);
            } else {
              // dB[k,n] = A^T dY
              kernels::gemm_tn(m, k, n, av + i * m * k, gyi, gb + i * k * n);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_string(weight.shape()));
  const std::int64_t in = weight.dim(1), outc = weight.dim(0);
  if (x.dim(-1) != in) {
    throw ShapeError("linear: input axis " + std::to_string(x.rank() - 1) + " has extent " +
                     std::to_string(x.dim(-1)) + ", weight expects " + std::to_string(in));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outc)) {
    throw ShapeError("linear: bias must be [" + std::to_string(outc) + "], got " + shape_string(bias.shape()));
  }
  const std::int64_t rows = x.numel() / in;
  std::vector<T> out(static_cast<std::size_t>(rows * outc), T(0));
  if (bias.defined()) {
    auto bv = bias.values();
    for (std::int64_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * outc);
  }
  kernels::gemm_nt(rows, outc, in, x.values().data(), weight.values().data(), out.data());
  op_counters().matmul_mac += static_cast<std::uint64_t>(rows * outc * in);
  Shape shape = x.shape();
  shape.back() = outc;
  std::vector<NodePtr<T>> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return detail::make_result<T>(std::move(shape), std::move(out), std::move(inputs),
                                [rows, in, outc](detail::Node<T>& self) {
                                  const T* gy = self.grad.data();
                                  if (T* gx = grad_target(self, 0)) {
                                    kernels::gemm_nn(rows, in, outc, gy, self.inputs[1]->value.data(), gx);
                                  }
                                  if (T* gw = grad_target(self, 1)) {
                                    kernels::gemm_tn(rows, outc, in, gy, self.inputs[0]->value.data(), gw);
                                  }
                                  if (self.inputs.size() > 2) {
                                    if (T* gb = grad_target(self, 2)) {
                                      for (std::int64_t r = 0; r < rows; ++r) {
                                        for (std::int64_t o = 0; o < outc; ++o) gb[o] += gy[r * outc + o];
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be [c,h,w], got " + shape_string(input.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: weight must be [c_out,c_in,k,k], got " + shape_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: channel axis 0 of input has extent " + std::to_string(input.dim(0)) +
                     ", weight axis 1 expects " + std::to_string(weight.dim(1)));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  const std::int64_t cout = weight.dim(0), cin = input.dim(0), kk = weight.dim(2);
  const std::int64_t h = input.dim(1), w = input.dim(2);
  const std::int64_t oh = (h + 2 * pad - kk) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kk) / stride + 1;
  if (h + 2 * pad < kk || oh < 1) throw ShapeError("conv2d: kernel larger than padded input on axis 1");
  if (w + 2 * pad < kk || ow < 1) throw ShapeError("conv2d: kernel larger than padded input on axis 2");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "]");
  }
  const kernels::ConvGeometry geo{cin, h, w, kk, stride, pad, oh, ow};
  const std::int64_t kdim = cin * kk * kk, pix = oh * ow;
  std::vector<T> col(static_cast<std::size_t>(kdim * pix));
  kernels::im2col(geo, input.values().data(), col.data());
  std::vector<T> out(static_cast<std::size_t>(cout * pix), T(0));
  if (bias.defined()) {
    for (std::int64_t o = 0; o < cout; ++o) std::fill_n(out.begin() + o * pix, pix, bias.values()[o]);
  }
  kernels::gemm_nn(cout, pix, kdim, weight.values().data(), col.data(), out.data());
  op_counters().matmul_mac += static_cast<std::uint64_t>(cout * pix * kdim);
  std::vector<NodePtr<T>> inputs{input.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return detail::make_result<T>(
      Shape{cout, oh, ow}, std::move(out), std::move(inputs),
      [geo, cout, kdim, pix, col = std::move(col)](detail::Node<T>& self) {
        const T* gy = self.grad.data();
        if (T* gw = grad_target(self, 1)) kernels::gemm_nt(cout, kdim, pix, gy, col.data(), gw);
        if (T* gx = grad_target(self, 0)) {
          std::vector<T> gcol(static_cast<std::size_t>(kdim * pix), T(0));
          kernels::gemm_tn(cout, kdim, pix, self.inputs[1]->value.data(), gy, gcol.data());
          kernels::col2im(geo, gcol.data(), gx);
        }
        if (self.inputs.size() > 2) {
          if (T* gb = grad_target(self, 2)) {
            for (std::int64_t o = 0; o < cout; ++o) {
              T s = 0;
              for (std::int64_t p = 0; p < pix; ++p) s += gy[o * pix + p];
              gb[o] += s;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride) {
  if (input.rank() != 3) {
    throw ShapeError("conv_transpose2d: input must be [c,h,w], got " + shape_string(input.shape()));
  }
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv_transpose2d: weight must be [c_in,c_out,k,k], got " + shape_string(weight.shape()));
  }
  if (weight.dim(0) != input.dim(0)) {
    throw ShapeError("conv_transpose2d: channel axis 0 of input has extent " + std::to_string(input.dim(0)) +
                     ", weight axis 0 expects " + std::to_string(weight.dim(0)));
  }
  const std::int64_t kk = weight.dim(2);
  if (stride < 1 || kk < stride || (kk - stride) % 2 != 0) {
    throw ShapeError("conv_transpose2d: kernel " + std::to_string(kk) + " incompatible with stride " +
                     std::to_string(stride));
  }
  const std::int64_t cin = input.dim(0), cout = weight.dim(1);
  const std::int64_t h = input.dim(1), w = input.dim(2);
  const int pad = static_cast<int>((kk - stride) / 2);
  const std::int64_t oh = h * stride, ow = w * stride;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv_transpose2d: bias must be [" + std::to_string(cout) + "]");
  }
  // The transpose maps [cout, oh, ow] -> [cin, h, w] as a forward conv.
  const kernels::ConvGeometry geo{cout, oh, ow, kk, stride, pad, h, w};
  const std::int64_t kdim = cout * kk * kk, pix = h * w;
  std::vector<T> col(static_cast<std::size_t>(kdim * pix), T(0));
  kernels::gemm_tn(cin, kdim, pix, weight.values().data(), input.values().data(), col.data());
  op_counters().matmul_mac += static_cast<std::uint64_t>(cin * kdim * pix);
  std::vector<T> out(static_cast<std::size_t>(cout * oh * ow), T(0));
  kernels::col2im(geo, col.data(), out.data());
  if (bias.defined()) {
    for (std::int64_t o = 0; o < cout; ++o) {
      const T b = bias.values()[o];
      for (std::int64_t p = 0; p < oh * ow; ++p) out[o * oh * ow + p] += b;
    }
  }
  std::vector<NodePtr<T>> inputs{input.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return detail::make_result<T>(
      Shape{cout, oh, ow}, std::move(out), std::move(inputs), [geo, cin, cout, kdim, pix, oh, ow](detail::Node<T>& self) {
        const T* gy = self.grad.data();
        T* gx = grad_target(self, 0);
        T* gw = grad_target(self, 1);
        if (gx || gw) {
          std::vector<T> gcol(static_cast<std::size_t>(kdim * pix));
          kernels::im2col(geo, gy, gcol.data());
          if (gx) kernels::gemm_nn(cin, pix, kdim, self.inputs[1]->value.data(), gcol.data(), gx);
          if (gw) kernels::gemm_nt(cin, kdim, pix, self.inputs[0]->value.data(), gcol.data(), gw);
        }
        if (self.inputs.size() > 2) {
          if (T* gb = grad_target(self, 2)) {
            for (std::int64_t o = 0; o < cout; ++o) {
              T s = 0;
              for (std::int64_t p = 0; p < oh * ow; ++p) s += gy[o * oh * ow + p];
              gb[o] += s;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input, int axis) {
  const int ax = normalize_axis(axis, input.rank());
  const auto sp = split_axis(input.shape(), ax);
  std::vector<T> out(input.values().begin(), input.values().end());
  if (sp.inner == 1) {
    const std::int64_t len = sp.len;
    for (std::int64_t o = 0; o < sp.outer; ++o) kernels::softmax_row(out.data() + o * len, len);
  }
  for (std::int64_t o = 0; o < sp.outer && sp.inner > 1; ++o) {
    for (std::int64_t i = 0; i < sp.inner; ++i) {
      T* base = out.data() + o * sp.len * sp.inner + i;
      T mx = base[0];
      for (std::int64_t j = 1; j < sp.len; ++j) mx = std::max(mx, base[j * sp.inner]);
      T total = 0;
      for (std::int64_t j = 0; j < sp.len; ++j) {
        T& v = base[j * sp.inner];
        v = std::exp(v - mx);
        total += v;
      }
      const T inv = T(1) / total;
      for (std::int64_t j = 0; j < sp.len; ++j) base[j * sp.inner] *= inv;
    }
  }
  return detail::make_result<T>(input.shape(), std::move(out), {input.node()}, [sp](detail::Node<T>& self) {
    T* g = grad_target(self, 0);
    if (!g) return;
    if (sp.inner == 1) {
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        const T* y = self.value.data() + o * sp.len;
        const T* gy = self.grad.data() + o * sp.len;
        T* gx = g + o * sp.len;
        T dot = 0;
#pragma omp simd reduction(+ : dot)
        for (std::int64_t j = 0; j < sp.len; ++j) dot += y[j] * gy[j];
#pragma omp simd
        for (std::int64_t j = 0; j < sp.len; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
      return;
    }
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const std::int64_t off = o * sp.len * sp.inner + i;
        const T* y = self.value.data() + off;
        const T* gy = self.grad.data() + off;
        T dot = 0;
        for (std::int64_t j = 0; j < sp.len; ++j) dot += y[j * sp.inner] * gy[j * sp.inner];
        for (std::int64_t j = 0; j < sp.len; ++j) {
          g[off + j * sp.inner] += y[j * sp.inner] * (gy[j * sp.inner] - dot);
        }
      }
    }
  });
}

namespace {

// Shared normalization core: `rows` groups of `len` contiguous values, with an
// affine parameter index given by `param_of(row, j)`.
template <typename T, typename ParamIndex>
Tensor<T> normalize_rows(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                         std::int64_t rows, std::int64_t len, ParamIndex param_of) {
  std::vector<T> out(static_cast<std::size_t>(rows * len));
  std::vector<T> xhat(out.size());
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  const T* x = input.values().data();
  const T* gm = gamma.values().data();
  const T* bt = beta.values().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    T mu = 0;
    for (std::int64_t j = 0; j < len; ++j) mu += xr[j];
    mu /= static_cast<T>(len);
    T var = 0;
    for (std::int64_t j = 0; j < len; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(len);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (std::int64_t j = 0; j < len; ++j) {
      const T xh = (xr[j] - mu) * is;
      xhat[r * len + j] = xh;
      const auto p = param_of(r, j);
      out[r * len + j] = xh * gm[p] + bt[p];
    }
  }
  return detail::make_result<T>(
      input.shape(), std::move(out), {input.node(), gamma.node(), beta.node()},
      [rows, len, param_of, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        const T* gy = self.grad.data();
        const T* gm = self.inputs[1]->value.data();
        T* gx = grad_target(self, 0);
        T* gg = grad_target(self, 1);
        T* gb = grad_target(self, 2);
        for (std::int64_t r = 0; r < rows; ++r) {
          T mean_dxh = 0, mean_dxh_xh = 0;
          for (std::int64_t j = 0; j < len; ++j) {
            const auto i = r * len + j;
            const auto p = param_of(r, j);
            const T dxh = gy[i] * gm[p];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[i];
            if (gg) gg[p] += gy[i] * xhat[i];
            if (gb) gb[p] += gy[i];
          }
          if (!gx) continue;
          mean_dxh /= static_cast<T>(len);
          mean_dxh_xh /= static_cast<T>(len);
          const T is = inv_std[static_cast<std::size_t>(r)];
          for (std::int64_t j = 0; j < len; ++j) {
            const auto i = r * len + j;
            const T dxh = gy[i] * gm[param_of(r, j)];
            gx[i] += is * (dxh - mean_dxh - xhat[i] * mean_dxh_xh);
          }
        }
      });
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::int64_t c = input.dim(-1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: gamma/beta extent must equal last axis (" + std::to_string(c) + ")");
  }
  return normalize_rows<T>(input, gamma, beta, eps, input.numel() / c, c,
                           [](std::int64_t, std::int64_t j) { return j; });
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, int groups, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (input.rank() != 3) throw ShapeError("group_norm: input must be [c,h,w], got " + shape_string(input.shape()));
  const std::int64_t c = input.dim(0);
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("group_norm: channel axis 0 extent " + std::to_string(c) + " not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.numel() != c || beta.numel() != c) throw ShapeError("group_norm: gamma/beta extent must equal channels");
  const std::int64_t per_group = c / groups;
  const std::int64_t hw = input.dim(1) * input.dim(2);
  const std::int64_t len = per_group * hw;
  return normalize_rows<T>(input, gamma, beta, eps, groups, len,
                           [per_group, hw](std::int64_t r, std::int64_t j) { return r * per_group + j / hw; });
}

template <typename T>
Tensor<T> broadcast_replicate(const Tensor<T>& input, int axis, std::int64_t factor) {
  const int ax = normalize_axis(axis, input.rank());
  const std::int64_t extent = input.dim(ax);
  if (factor < 1) throw ShapeError("broadcast_replicate: factor must be >= 1");
  if (extent == factor) return input;
  if (extent != 1) {
    throw ShapeError("broadcast_replicate: axis " + std::to_string(ax) + " has extent " + std::to_string(extent) +
                     ", expected 1 or " + std::to_string(factor));
  }
  auto sp = split_axis(input.shape(), ax);
  Shape shape = input.shape();
  shape[static_cast<std::size_t>(ax)] = factor;
  std::vector<T> out(static_cast<std::size_t>(sp.outer * factor * sp.inner));
  const T* x = input.values().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t f = 0; f < factor; ++f) {
      std::copy_n(x + o * sp.inner, sp.inner, out.data() + (o * factor + f) * sp.inner);
    }
  }
  return detail::make_result<T>(std::move(shape), std::move(out), {input.node()}, [sp, factor](detail::Node<T>& self) {
    T* g = grad_target(self, 0);
    if (!g) return;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t f = 0; f < factor; ++f) {
        const T* gy = self.grad.data() + (o * factor + f) * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) g[o * sp.inner + i] += gy[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, input.rank());
  const auto sp = split_axis(input.shape(), ax);
  std::vector<T> out(static_cast<std::size_t>(sp.outer * sp.inner), T(0));
  const T* x = input.values().data();
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t j = 0; j < sp.len; ++j) {
      const T* row = x + (o * sp.len + j) * sp.inner;
      T* dst = out.data() + o * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += row[i];
    }
  }
  Shape shape = input.shape();
  if (keepdim) {
    shape[static_cast<std::size_t>(ax)] = 1;
  } else {
    shape.erase(shape.begin() + ax);
    if (shape.empty()) shape.push_back(1);
  }
  return detail::make_result<T>(std::move(shape), std::move(out), {input.node()}, [sp](detail::Node<T>& self) {
    T* g = grad_target(self, 0);
    if (!g) return;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t j = 0; j < sp.len; ++j) {
        T* dst = g + (o * sp.len + j) * sp.inner;
        const T* gy = self.grad.data() + o * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += gy[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& input, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, input.rank());
  return scale(sum(input, ax, keepdim), T(1) / static_cast<T>(input.dim(ax)));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& input) {
  T s = 0;
  for (auto v : input.values()) s += v;
  return detail::make_result<T>(Shape{1}, std::vector<T>{s}, {input.node()}, [](detail::Node<T>& self) {
    T* g = grad_target(self, 0);
    if (!g) return;
    const auto n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& input) {
  return scale(sum_all(input), T(1) / static_cast<T>(input.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(input.shape()) + " as " + shape_string(shape));
  }
  std::vector<T> out(input.values().begin(), input.values().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {input.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& input, const std::vector<int>& order) {
  const int r = input.rank();
  if (static_cast<int>(order.size()) != r) throw ShapeError("permute: order length must equal rank");
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (int a : order) {
    if (a < 0 || a >= r || used[static_cast<std::size_t>(a)]) throw ShapeError("permute: invalid axis order");
    used[static_cast<std::size_t>(a)] = true;
  }
  const Shape& in_shape = input.shape();
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(i) + 1] * in_shape[static_cast<std::size_t>(i) + 1];
  }
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  const std::int64_t n = input.numel();
  std::vector<std::int64_t> index(static_cast<std::size_t>(n));
  std::vector<std::int64_t> pos(static_cast<std::size_t>(r), 0);
  for (std::int64_t flat = 0; flat < n; ++flat) {
    std::int64_t src = 0;
    for (int i = 0; i < r; ++i) src += pos[static_cast<std::size_t>(i)] * in_stride[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    index[static_cast<std::size_t>(flat)] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++pos[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
      pos[static_cast<std::size_t>(i)] = 0;
    }
  }
  return gather(input, index, std::move(out_shape));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& input, const std::vector<std::int64_t>& index, Shape out_shape) {
  if (shape_numel(out_shape) != static_cast<std::int64_t>(index.size())) {
    throw ShapeError("gather: index count does not match output shape " + shape_string(out_shape));
  }
  const std::int64_t n = input.numel();
  const T* x = input.values().data();
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto src = index[i];
    if (src < -1 || src >= n) throw ShapeError("gather: index out of range");
    out[i] = src < 0 ? T(0) : x[src];
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {input.node()},
                                [index](detail::Node<T>& self) {
                                  T* g = grad_target(self, 0);
                                  if (!g) return;
                                  for (std::size_t i = 0; i < index.size(); ++i) {
                                    if (index[i] >= 0) g[index[i]] += self.grad[i];
                                  }
                                });
}

namespace {

struct BilinearTap {
  std::int64_t lo, hi;
  double frac;
};

std::vector<BilinearTap> bilinear_taps(std::int64_t in, std::int64_t out) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
    auto lo = static_cast<std::int64_t>(src);
    lo = std::min(lo, in - 1);
    const std::int64_t hi = lo < in - 1 ? lo + 1 : lo;
    taps[static_cast<std::size_t>(o)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w) {
  if (input.rank() != 3) {
    throw ShapeError("bilinear_resize: input must be [c,h,w], got " + shape_string(input.shape()));
  }
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output extents must be positive");
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h == out_h && w == out_w) return input;
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  std::vector<T> out(static_cast<std::size_t>(c * out_h * out_w));
  const T* x = input.values().data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T* xc = x + ch * h * w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(a.frac);
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(b.frac);
        const T top = xc[a.lo * w + b.lo] * (T(1) - fx) + xc[a.lo * w + b.hi] * fx;
        const T bot = xc[a.hi * w + b.lo] * (T(1) - fx) + xc[a.hi * w + b.hi] * fx;
        out[(ch * out_h + oy) * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return detail::make_result<T>(
      Shape{c, out_h, out_w}, std::move(out), {input.node()},
      [c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](detail::Node<T>& self) {
        T* g = grad_target(self, 0);
        if (!g) return;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          T* gc = g + ch * h * w;
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const auto& a = ty[static_cast<std::size_t>(oy)];
            const T fy = static_cast<T>(a.frac);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
              const auto& b = tx[static_cast<std::size_t>(ox)];
              const T fx = static_cast<T>(b.frac);
              const T gy = self.grad[(ch * out_h + oy) * out_w + ox];
              gc[a.lo * w + b.lo] += gy * (T(1) - fy) * (T(1) - fx);
              gc[a.lo * w + b.hi] += gy * (T(1) - fy) * fx;
              gc[a.hi * w + b.lo] += gy * fy * (T(1) - fx);
              gc[a.hi * w + b.hi] += gy * fy * fx;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, int axis) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  const int ax = normalize_axis(axis, inputs[0].rank());
  Shape shape = inputs[0].shape();
  std::int64_t total = 0;
  for (const auto& t : inputs) {
    if (t.rank() != inputs[0].rank()) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < t.rank(); ++i) {
      if (i != ax && t.dim(i) != shape[static_cast<std::size_t>(i)]) {
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(i));
      }
    }
    total += t.dim(ax);
  }
  shape[static_cast<std::size_t>(ax)] = total;
  const auto sp = split_axis(shape, ax);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  std::vector<NodePtr<T>> nodes;
  for (const auto& t : inputs) {
    const std::int64_t len = t.dim(ax);
    const T* x = t.values().data();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      std::copy_n(x + o * len * sp.inner, len * sp.inner, out.data() + (o * total + off) * sp.inner);
    }
    offsets.push_back(off);
    off += len;
    nodes.push_back(t.node());
  }
  return detail::make_result<T>(std::move(shape), std::move(out), std::move(nodes),
                                [sp, total, offsets](detail::Node<T>& self) {
                                  for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                    T* g = grad_target(self, k);
                                    if (!g) continue;
                                    const std::int64_t len =
                                        static_cast<std::int64_t>(self.inputs[k]->value.size()) / (sp.outer * sp.inner);
                                    for (std::int64_t o = 0; o < sp.outer; ++o) {
                                      const T* src = self.grad.data() + (o * total + offsets[k]) * sp.inner;
                                      T* dst = g + o * len * sp.inner;
                                      for (std::int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> smooth_l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<std::uint8_t>& mask) {
  require_same_shape(pred, target, "smooth_l1_loss");
  if (static_cast<std::int64_t>(mask.size()) != pred.numel()) {
    throw ShapeError("smooth_l1_loss: mask size does not match prediction");
  }
  const auto count = std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
  if (count == 0) throw std::invalid_argument("smooth_l1_loss: empty valid mask");
  const T* p = pred.values().data();
  const T* t = target.values().data();
  T total = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const T e = std::abs(p[i] - t[i]);
    total += e < T(1) ? T(0.5) * e * e : e - T(0.5);
  }
  const T inv = T(1) / static_cast<T>(count);
  return detail::make_result<T>(Shape{1}, std::vector<T>{total * inv}, {pred.node(), target.node()},
                                [mask, inv](detail::Node<T>& self) {
                                  const auto& p = self.inputs[0]->value;
                                  const auto& t = self.inputs[1]->value;
                                  T* gp = grad_target(self, 0);
                                  T* gt = grad_target(self, 1);
                                  const T gy = self.grad[0] * inv;
                                  for (std::size_t i = 0; i < mask.size(); ++i) {
                                    if (!mask[i]) continue;
                                    const T d = p[i] - t[i];
                                    const T slope = std::abs(d) < T(1) ? d : (d > 0 ? T(1) : T(-1));
                                    if (gp) gp[i] += gy * slope;
                                    if (gt) gt[i] -= gy * slope;
                                  }
                                });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& input, int axis, T eps) {
  const int ax = normalize_axis(axis, input.rank());
  auto norm_sq = sum(mul(input, input), ax, true);
  auto inv = broadcast_replicate(rsqrt(norm_sq, eps), ax, input.dim(ax));
  return mul(input, inv);
}

#define VITAS_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> gelu(const Tensor<T>&);                                                          \
  template Tensor<T> exp(const Tensor<T>&);                                                           \
  template Tensor<T> rsqrt(const Tensor<T>&, T);                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                                \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);          \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);     \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);             \
  template Tensor<T> group_norm(const Tensor<T>&, int, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> broadcast_replicate(const Tensor<T>&, int, std::int64_t);                        \
  template Tensor<T> sum(const Tensor<T>&, int, bool);                                                \
  template Tensor<T> mean(const Tensor<T>&, int, bool);                                               \
  template Tensor<T> sum_all(const Tensor<T>&);                                                       \
  template Tensor<T> mean_all(const Tensor<T>&);                                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                              \
  template Tensor<T> gather(const Tensor<T>&, const std::vector<std::int64_t>&, Shape);               \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::int64_t, std::int64_t);                   \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                      \
  template Tensor<T> smooth_l1_loss(const Tensor<T>&, const Tensor<T>&, const std::vector<std::uint8_t>&); \
  template Tensor<T> l2_normalize(const Tensor<T>&, int, T);

VITAS_INSTANTIATE_OPS(float)
VITAS_INSTANTIATE_OPS(double)

}  // namespace vitas::ops
