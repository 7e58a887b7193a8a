#include <algorithm>
#include <cmath>
#include <string>

#include "fsca/errors.hpp"
#include "fsca/kernels.hpp"

namespace fsca::kernels {

Conv2dGeometry conv2d_geometry(std::size_t c_in, std::size_t height, std::size_t width,
                               std::size_t c_out, std::size_t kernel_h, std::size_t kernel_w,
                               std::size_t stride, std::size_t pad) {
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw DimensionError("conv2d: kernels must have odd extents, got " +
                         std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
  }
  const std::size_t padded_h = height + 2 * pad;
  const std::size_t padded_w = width + 2 * pad;
  if (padded_h < kernel_h || padded_w < kernel_w) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  if ((padded_h - kernel_h) % stride != 0 || (padded_w - kernel_w) % stride != 0) {
    throw DimensionError("conv2d: output extent is not integral for input " +
                         std::to_string(height) + "x" + std::to_string(width) + ", kernel " +
                         std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                         ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  Conv2dGeometry g;
  g.c_in = c_in;
  g.height = height;
  g.width = width;
  g.c_out = c_out;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.pad = pad;
  g.out_h = (padded_h - kernel_h) / stride + 1;
  g.out_w = (padded_w - kernel_w) / stride + 1;
  return g;
}

namespace serial {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y) {
  for (std::size_t co = 0; co < g.c_out; ++co) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        double acc = b.empty() ? 0.0 : b[co];
        for (std::size_t ci = 0; ci < g.c_in; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
              acc += w[((co * g.c_in + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                     x[(ci * g.height + iy) * g.width + ix];
            }
          }
        }
        y[(co * g.out_h + oy) * g.out_w + ox] = acc;
      }
    }
  }
}

void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_y,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b) {
  for (std::size_t co = 0; co < g.c_out; ++co) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const double gy = grad_y[(co * g.out_h + oy) * g.out_w + ox];
        if (!grad_b.empty()) grad_b[co] += gy;
        for (std::size_t ci = 0; ci < g.c_in; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
              const std::size_t wi = ((co * g.c_in + ci) * g.kernel_h + ky) * g.kernel_w + kx;
              const std::size_t xi = (ci * g.height + iy) * g.width + ix;
              if (!grad_w.empty()) grad_w[wi] += gy * x[xi];
              if (!grad_x.empty()) grad_x[xi] += gy * w[wi];
            }
          }
        }
      }
    }
  }
}

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_backward(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                     std::span<const double> b, std::span<const double> grad_c,
                     std::span<double> grad_a, std::span<double> grad_b) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grad_c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) {
        if (!grad_a.empty()) grad_a[i * k + p] += g * b[p * n + j];
        if (!grad_b.empty()) grad_b[p * n + j] += a[i * k + p] * g;
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* out = y.data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
}

}  // namespace serial
}  // namespace fsca::kernels
