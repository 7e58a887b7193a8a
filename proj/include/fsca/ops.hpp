#pragma once

#include <cstddef>
#include <vector>

#include "fsca/tensor.hpp"

// Differentiable operations over Tensor. Each op validates shapes (throwing
// DimensionError), computes its forward value and, when any input requires
// gradients, records a backward rule.

namespace fsca {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// mean((a - b)^2)
Tensor mse(const Tensor& a, const Tensor& b);

// Layout.
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // 2-D only
/// Concatenation along the leading axis.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [begin, end) of the leading axis.
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);
/// Stacks equally shaped tensors into a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
Tensor diagonal(const Tensor& a);  // n×n -> n

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[n×m] + bias[m] broadcast over rows.
Tensor add_row_bias(const Tensor& a, const Tensor& bias);
/// Each row divided by max(‖row‖₂, eps).
Tensor normalize_rows(const Tensor& a, double eps = 1e-8);

// Images, laid out C×H×W.
/// Cross-correlation with zero padding. w: C_out×C_in×kh×kw, b: C_out or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad);
/// Block sums over non-overlapping factor×factor windows.
Tensor sum_pool2d(const Tensor& x, std::size_t factor);
/// Average over the spatial extent: C×H×W -> C.
Tensor mean_spatial(const Tensor& x);

// Row-wise normalisations of an n×m matrix (max-subtracted).
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Diagonal-Gaussian log densities. mu, logvar, x are all N×d.
/// out[i] = log N(x_i; mu_i, exp(logvar_i))
Tensor gaussian_logprob_pairs(const Tensor& mu, const Tensor& logvar, const Tensor& x);
/// out[i][j] = log N(x_j; mu_i, exp(logvar_i))
Tensor gaussian_logprob_matrix(const Tensor& mu, const Tensor& logvar, const Tensor& x);

}  // namespace fsca
