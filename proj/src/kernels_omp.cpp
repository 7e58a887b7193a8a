#include <algorithm>
#include <cmath>
#include <vector>

#include "fsca/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fsca::kernels {
namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::ptrdiff_t;

bool is_pointwise(const Conv2dGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

// cols[k × P], k = (ci·kh + ky)·kw + kx, P = out_h·out_w
void im2col(const Conv2dGeometry& g, std::span<const double> x, std::vector<double>& cols) {
  const std::size_t rows = g.patch_size();
  const std::size_t pixels = g.out_pixels();
  cols.assign(rows * pixels, 0.0);
#pragma omp parallel for schedule(static) if (rows * pixels > kParallelWork)
  for (Index k = 0; k < static_cast<Index>(rows); ++k) {
    const std::size_t kx = k % g.kernel_w;
    const std::size_t ky = (k / g.kernel_w) % g.kernel_h;
    const std::size_t ci = k / (g.kernel_w * g.kernel_h);
    double* out = cols.data() + k * pixels;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
      if (iy < 0 || iy >= static_cast<Index>(g.height)) continue;
      const double* row = x.data() + (ci * g.height + iy) * g.width;
      double* dst = out + oy * g.out_w;
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
        if (ix >= 0 && ix < static_cast<Index>(g.width)) dst[ox] = row[ix];
      }
    }
  }
}

// Inverse scatter of im2col; each input channel is owned by one thread.
void col2im_add(const Conv2dGeometry& g, const std::vector<double>& cols, std::span<double> gx) {
  const std::size_t pixels = g.out_pixels();
  const std::size_t taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static) if (g.patch_size() * pixels > kParallelWork)
  for (Index ci = 0; ci < static_cast<Index>(g.c_in); ++ci) {
    for (std::size_t t = 0; t < taps; ++t) {
      const std::size_t ky = t / g.kernel_w;
      const std::size_t kx = t % g.kernel_w;
      const double* src = cols.data() + (ci * taps + t) * pixels;
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
        if (iy < 0 || iy >= static_cast<Index>(g.height)) continue;
        double* row = gx.data() + (ci * g.height + iy) * g.width;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
          if (ix >= 0 && ix < static_cast<Index>(g.width)) row[ix] += src[oy * g.out_w + ox];
        }
      }
    }
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y) {
  const std::size_t rows = g.patch_size();
  const std::size_t pixels = g.out_pixels();
  std::vector<double> scratch;
  const double* cols = x.data();
  if (!is_pointwise(g)) {
    im2col(g, x, scratch);
    cols = scratch.data();
  }
#pragma omp parallel for schedule(static) if (g.c_out * rows * pixels > kParallelWork)
  for (Index co = 0; co < static_cast<Index>(g.c_out); ++co) {
    double* out = y.data() + co * pixels;
    std::fill(out, out + pixels, b.empty() ? 0.0 : b[co]);
    const double* wrow = w.data() + co * rows;
    for (std::size_t k = 0; k < rows; ++k) {
      const double wk = wrow[k];
      const double* src = cols + k * pixels;
      for (std::size_t p = 0; p < pixels; ++p) out[p] += wk * src[p];
    }
  }
}

void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_y,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b) {
  const std::size_t rows = g.patch_size();
  const std::size_t pixels = g.out_pixels();
  const std::size_t work = g.c_out * rows * pixels;

  if (!grad_b.empty()) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* gy = grad_y.data() + co * pixels;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < pixels; ++p) acc += gy[p];
      grad_b[co] += acc;
    }
  }

  if (!grad_w.empty()) {
    std::vector<double> scratch;
    const double* cols = x.data();
    if (!is_pointwise(g)) {
      im2col(g, x, scratch);
      cols = scratch.data();
    }
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (Index co = 0; co < static_cast<Index>(g.c_out); ++co) {
      const double* gy = grad_y.data() + co * pixels;
      double* gw = grad_w.data() + co * rows;
      for (std::size_t k = 0; k < rows; ++k) {
        const double* src = cols + k * pixels;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t p = 0; p < pixels; ++p) acc += gy[p] * src[p];
        gw[k] += acc;
      }
    }
  }

  if (!grad_x.empty()) {
    std::vector<double> gcols(rows * pixels, 0.0);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
    for (Index k = 0; k < static_cast<Index>(rows); ++k) {
      double* dst = gcols.data() + k * pixels;
      for (std::size_t co = 0; co < g.c_out; ++co) {
        const double wk = w[co * rows + k];
        const double* gy = grad_y.data() + co * pixels;
        for (std::size_t p = 0; p < pixels; ++p) dst[p] += wk * gy[p];
      }
    }
    if (is_pointwise(g)) {
      for (std::size_t i = 0; i < gcols.size(); ++i) grad_x[i] += gcols[i];
    } else {
      col2im_add(g, gcols, grad_x);
    }
  }
}

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    double* out = c.data() + i * n;
    std::fill(out, out + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += aip * brow[j];
    }
  }
}

void matmul_backward(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                     std::span<const double> b, std::span<const double> grad_c,
                     std::span<double> grad_a, std::span<double> grad_b) {
  if (!grad_a.empty()) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      const double* g = grad_c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b.data() + p * n;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
        grad_a[i * k + p] += acc;
      }
    }
  }
  if (!grad_b.empty()) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (Index p = 0; p < static_cast<Index>(k); ++p) {
      double* out = grad_b.data() + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double aip = a[i * k + p];
        const double* g = grad_c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += aip * g[j];
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const double* in = x.data() + r * cols;
    double* out = y.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      total += out[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
  }
}

}  // namespace fsca::kernels
