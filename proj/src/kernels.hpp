#pragma once

#include <cstdint>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <type_traits>
#include <vector>

// Raw row-major kernels shared by the differentiable ops. All accumulate into
// the destination.
namespace vitas::kernels {

/// Loops shorter than this vectorize poorly; the kernels below transpose an
/// operand so that the innermost loop runs over a long axis instead.
inline constexpr std::int64_t kShortLoop = 16;

template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst) {
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

/// C[M,N] += A[M,K] * B[N,K]^T, dot-product form (long K).
template <typename T>
void gemm_dot(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    for (std::int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T s = 0;
#pragma omp simd reduction(+ : s)
      for (std::int64_t k = 0; k < K; ++k) s += a[k] * b[k];
      C[i * N + j] += s;
    }
  }
}

/// C[M,N] += A[M,K] * B[K,N], row-update form (long N).
template <typename T>
void gemm_axpy(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::int64_t k = 0; k < K; ++k) {
      const T av = a[k];
      if (av == T(0)) continue;
      const T* b = B + k * N;
#pragma omp simd
      for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  if (N >= kShortLoop || K < kShortLoop) return gemm_axpy(M, N, K, A, B, C);
  std::vector<T> bt(static_cast<std::size_t>(N * K));
  transpose(K, N, B, bt.data());
  gemm_dot(M, N, K, A, bt.data(), C);
}

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  if (K >= kShortLoop || N < kShortLoop) return gemm_dot(M, N, K, A, B, C);
  std::vector<T> bt(static_cast<std::size_t>(N * K));
  transpose(N, K, B, bt.data());
  gemm_axpy(M, N, K, A, bt.data(), C);
}

/// C[P,Q] += X[R,P]^T * Y[R,Q]
template <typename T>
void gemm_tn(std::int64_t R, std::int64_t P, std::int64_t Q, const T* X, const T* Y, T* C) {
  if (Q < kShortLoop && R >= kShortLoop) {
    std::vector<T> xt(static_cast<std::size_t>(R * P)), yt(static_cast<std::size_t>(R * Q));
    transpose(R, P, X, xt.data());
    transpose(R, Q, Y, yt.data());
    return gemm_dot(P, Q, R, xt.data(), yt.data(), C);
  }
  for (std::int64_t r = 0; r < R; ++r) {
    const T* x = X + r * P;
    const T* y = Y + r * Q;
    for (std::int64_t p = 0; p < P; ++p) {
      const T xv = x[p];
      if (xv == T(0)) continue;
      T* c = C + p * Q;
#pragma omp simd
      for (std::int64_t q = 0; q < Q; ++q) c[q] += xv * y[q];
    }
  }
}

struct ConvGeometry {
  std::int64_t channels, height, width, kernel;
  int stride, pad;
  std::int64_t out_h, out_w;
};

/// col[(c,ky,kx), (oy,ox)] = image[c, oy*s-p+ky, ox*s-p+kx] (0 outside).
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const std::int64_t pix = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * pix;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            const bool inside = iy >= 0 && iy < g.height && ix >= 0 && ix < g.width;
            row[oy * g.out_w + ox] = inside ? image[(c * g.height + iy) * g.width + ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds columns back into the image.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image) {
  const std::int64_t pix = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * pix;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.width) continue;
            image[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

using f32x8 = float __attribute__((vector_size(32)));
using i32x8 = std::int32_t __attribute__((vector_size(32)));

/// Branch-free expf, within 2 ulp on [-87, 88]. Generic over float and f32x8.
template <typename V, typename I>
inline V exp_poly(V x) {
  x = x > 88.0f ? V{} + 88.0f : x;
  x = x < -87.0f ? V{} - 87.0f : x;
  constexpr float kRound = 12582912.0f;  // 1.5 * 2^23
  const V n = (x * 1.44269504088896341f + kRound) - kRound;
  const V r = (x - n * 0.693359375f) + n * 2.12194440e-4f;
  V p = V{} + 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  I bits;
  if constexpr (std::is_same_v<V, float>) {
    bits = (static_cast<std::int32_t>(n) + 127) << 23;
  } else {
    bits = (__builtin_convertvector(n, I) + 127) << 23;
  }
  V scale;
  std::memcpy(&scale, &bits, sizeof(V));
  return p * scale;
}

inline float exp_fast(float x) { return exp_poly<float, std::int32_t>(x); }
inline double exp_fast(double x) { return std::exp(x); }

/// In-place softmax over one contiguous row.
template <typename T>
void softmax_row(T* row, std::int64_t len) {
  if constexpr (std::is_same_v<T, float>) {
    if (len >= 8) {
      const std::int64_t body = len - len % 8;
      f32x8 vmax, v;
      std::memcpy(&vmax, row, sizeof vmax);
      for (std::int64_t j = 8; j < body; j += 8) {
        std::memcpy(&v, row + j, sizeof v);
        vmax = v > vmax ? v : vmax;
      }
      float mx = vmax[0];
      for (int l = 1; l < 8; ++l) mx = vmax[l] > mx ? vmax[l] : mx;
      for (std::int64_t j = body; j < len; ++j) mx = row[j] > mx ? row[j] : mx;
      f32x8 vsum{};
      for (std::int64_t j = 0; j < body; j += 8) {
        std::memcpy(&v, row + j, sizeof v);
        v = exp_poly<f32x8, i32x8>(v - mx);
        vsum += v;
        std::memcpy(row + j, &v, sizeof v);
      }
      float total = 0;
      for (int l = 0; l < 8; ++l) total += vsum[l];
      for (std::int64_t j = body; j < len; ++j) {
        row[j] = exp_fast(row[j] - mx);
        total += row[j];
      }
      const float inv = 1.0f / total;
      for (std::int64_t j = 0; j < len; ++j) row[j] *= inv;
      return;
    }
  }
  T mx = row[0];
  for (std::int64_t j = 1; j < len; ++j) mx = row[j] > mx ? row[j] : mx;
  T total = 0;
  for (std::int64_t j = 0; j < len; ++j) {
    row[j] = exp_fast(row[j] - mx);
    total += row[j];
  }
  const T inv = T(1) / total;
  for (std::int64_t j = 0; j < len; ++j) row[j] *= inv;
}

}  // namespace vitas::kernels
