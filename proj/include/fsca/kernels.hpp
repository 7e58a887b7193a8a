#pragma once

// Numeric inner loops used by the differentiable ops.
//
// Every kernel exists twice: `kernels::serial` holds straightforward loop
// nests kept as the reference, and `kernels` holds the OpenMP versions used
// by the ops. The parallel versions partition work by output element so each
// value is produced by exactly one thread in a fixed order, which keeps
// results bitwise stable across thread counts.
//
// Gradient kernels accumulate (+=) into their outputs.

#include <cstddef>
#include <span>

namespace fsca::kernels {

struct Conv2dGeometry {
  std::size_t c_in = 0, height = 0, width = 0;
  std::size_t c_out = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, pad = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t patch_size() const { return c_in * kernel_h * kernel_w; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

/// Validates the extents and fills in out_h/out_w. Throws DimensionError.
Conv2dGeometry conv2d_geometry(std::size_t c_in, std::size_t height, std::size_t width,
                               std::size_t c_out, std::size_t kernel_h, std::size_t kernel_w,
                               std::size_t stride, std::size_t pad);

namespace serial {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y);
// Any of grad_x / grad_w / grad_b may be empty to skip it.
void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_y,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b);

// c[m×n] = a[m×k] · b[k×n]
void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c);
// grad_a += grad_c · bᵀ ; grad_b += aᵀ · grad_c
void matmul_backward(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                     std::span<const double> b, std::span<const double> grad_c,
                     std::span<double> grad_a, std::span<double> grad_b);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

}  // namespace serial

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y);
void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x,
                     std::span<const double> w, std::span<const double> grad_y,
                     std::span<double> grad_x, std::span<double> grad_w,
                     std::span<double> grad_b);

void matmul(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
            std::span<const double> b, std::span<double> c);
void matmul_backward(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
                     std::span<const double> b, std::span<const double> grad_c,
                     std::span<double> grad_a, std::span<double> grad_b);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace fsca::kernels
