#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

// Dense kernels shared by matmul and conv2d. Every output element is summed
// over the inner index in ascending order starting from its initial value, so
// results equal a naive triple loop bit for bit (fp contraction is disabled in
// the build).
namespace terraexpr::kernels {

inline constexpr std::size_t kBlockCols = 256;
inline constexpr std::size_t kBlockInner = 128;

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockCols) {
    const std::size_t j1 = std::min(n, j0 + kBlockCols);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockInner) {
      const std::size_t p1 = std::min(k, p0 + kBlockInner);
      for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = p0; p < p1; ++p) {
          const T av = arow[p];
          const T* brow = b + p * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

// C[m,n] = A[m,k] * B[k,n]
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::fill(c, c + m * n, T(0));
  gemm_acc(m, n, k, a, b, c);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t r1 = std::min(rows, r0 + tile);
      const std::size_t c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_height * out_width; }
  std::size_t columns() const { return batch * positions(); }
};

// cols[(c*k + ky)*k + kx][n*P + oy*Wo + ox]
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* cols) {
  const std::size_t ncols = g.columns();
  const std::size_t plane = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * ncols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* src = input + (n * g.channels + c) * plane;
          T* dst = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
            T* out = dst + oy * g.out_width;
            if (iy < 0 || iy >= static_cast<long>(g.height)) {
              std::fill(out, out + g.out_width, T(0));
              continue;
            }
            const T* line = src + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
              out[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0)
                                                                      : line[static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const ConvGeometry& g, const T* cols, T* input_grad) {
  const std::size_t ncols = g.columns();
  const std::size_t plane = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * ncols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          T* dst = input_grad + (n * g.channels + c) * plane;
          const T* src = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            T* line = dst + static_cast<std::size_t>(iy) * g.width;
            const T* in = src + oy * g.out_width;
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
              if (ix >= 0 && ix < static_cast<long>(g.width)) line[static_cast<std::size_t>(ix)] += in[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace terraexpr::kernels
