#include "fsca/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fsca/errors.hpp"
#include "fsca/kernels.hpp"

namespace fsca {
namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

// Gradient buffer of parent `i`, or nullptr when that parent needs none.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

std::span<double> grad_span(Node& self, std::size_t i) {
  auto* g = parent_grad(self, i);
  return g ? std::span<double>(*g) : std::span<double>();
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ½·ln(2π)

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (self.data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lower bound exceeds upper bound");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::clamp(v, lo, hi);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [lo, hi](Node& self) {
    const auto& x = self.parents[0]->data;
    auto& g = *parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= lo && x[i] <= hi) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make_result({}, {total}, {a}, [](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make_result({}, {total / n}, {a}, [n](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (auto& v : g) v += self.grad[0] / n;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.numel() == 0) throw DimensionError("mse of empty tensors");
  const double n = static_cast<double>(a.numel());
  const auto x = a.data(), y = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  return Tensor::make_result({}, {total / n}, {a, b}, [n](Node& self) {
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    const double k = 2.0 * self.grad[0] / n;
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] += k * (x[i] - y[i]);
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < x.size(); ++i) (*g)[i] -= k * (x[i] - y[i]);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = x[r * cols + c];
  }
  return Tensor::make_result({cols, rows}, std::move(out), {a}, [rows, cols](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
      throw DimensionError("concat: incompatible shapes " + shape_str(parts[0].shape()) +
                           " and " + shape_str(p.shape()));
    }
    lead += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return Tensor::make_result(std::move(shape), std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->data.size();
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin > end || end > a.dim(0)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t inner = a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<double> out(a.data().begin() + begin * inner, a.data().begin() + end * inner);
  return Tensor::make_result(std::move(shape), std::move(out), {a},
                             [offset = begin * inner](Node& self) {
                               auto& g = *parent_grad(self, 0);
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 g[offset + i] += self.grad[i];
                               }
                             });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape& inner = parts[0].shape();
  std::vector<double> out;
  out.reserve(parts.size() * parts[0].numel());
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw DimensionError("stack: shape mismatch " + shape_str(inner) + " vs " +
                           shape_str(p.shape()));
    }
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor::make_result(std::move(shape), std::move(out), parts, [](Node& self) {
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[p * n + i];
      }
    }
  });
}

Tensor diagonal(const Tensor& a) {
  require_rank(a, 2, "diagonal");
  const std::size_t n = a.dim(0);
  if (a.dim(1) != n) throw DimensionError("diagonal: matrix is not square " + shape_str(a.shape()));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i * n + i];
  return Tensor::make_result({n}, std::move(out), {a}, [n](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::matmul(m, k, n, a.data(), b.data(), out);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    kernels::matmul_backward(m, k, n, self.parents[0]->data, self.parents[1]->data, self.grad,
                             grad_span(self, 0), grad_span(self, 1));
  });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_row_bias");
  require_rank(bias, 1, "add_row_bias");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (bias.dim(0) != cols) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " vs matrix " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.data()[c];
  }
  return Tensor::make_result(a.shape(), std::move(out), {a, bias}, [rows, cols](Node& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c];
      }
    }
  });
}

Tensor normalize_rows(const Tensor& a, double eps) {
  require_rank(a, 2, "normalize_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.numel());
  std::vector<double> norms(rows);
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += x[r * cols + c] * x[r * cols + c];
    norms[r] = std::sqrt(sq);
    const double d = std::max(norms[r], eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] / d;
  }
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [rows, cols, eps, norms = std::move(norms)](Node& self) {
        auto& g = *parent_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.data.data() + r * cols;
          const double* gy = self.grad.data() + r * cols;
          if (norms[r] > eps) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += y[c] * gy[c];
            for (std::size_t c = 0; c < cols; ++c) {
              g[r * cols + c] += (gy[c] - y[c] * dot) / norms[r];
            }
          } else {
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += gy[c] / eps;
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " expects " +
                         std::to_string(w.dim(1)) + " input channels, input is " +
                         shape_str(x.shape()));
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != w.dim(0))) {
    throw DimensionError("conv2d: bias " + shape_str(b.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  const auto geom = kernels::conv2d_geometry(x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2),
                                             w.dim(3), stride, pad);
  std::vector<double> out(geom.c_out * geom.out_pixels());
  kernels::conv2d_forward(geom, x.data(), w.data(),
                          has_bias ? b.data() : std::span<const double>(), out);
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return Tensor::make_result({geom.c_out, geom.out_h, geom.out_w}, std::move(out), inputs,
                             [geom, has_bias](Node& self) {
                               kernels::conv2d_backward(
                                   geom, self.parents[0]->data, self.parents[1]->data, self.grad,
                                   grad_span(self, 0), grad_span(self, 1),
                                   has_bias ? grad_span(self, 2) : std::span<double>());
                             });
}

Tensor sum_pool2d(const Tensor& x, std::size_t factor) {
  require_rank(x, 3, "sum_pool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (factor == 0 || h % factor != 0 || w % factor != 0) {
    throw DimensionError("sum_pool2d: extents " + shape_str(x.shape()) +
                         " not divisible by factor " + std::to_string(factor));
  }
  const std::size_t oh = h / factor, ow = w / factor;
  std::vector<double> out(c * oh * ow, 0.0);
  const auto in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(ch * oh + y / factor) * ow + xx / factor] += in[(ch * h + y) * w + xx];
      }
    }
  }
  return Tensor::make_result({c, oh, ow}, std::move(out), {x}, [=](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          g[(ch * h + y) * w + xx] += self.grad[(ch * oh + y / factor) * ow + xx / factor];
        }
      }
    }
  });
}

Tensor mean_spatial(const Tensor& x) {
  require_rank(x, 3, "mean_spatial");
  const std::size_t c = x.dim(0), area = x.dim(1) * x.dim(2);
  if (area == 0) throw DimensionError("mean_spatial: empty spatial extent");
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += x.data()[ch * area + i];
    out[ch] = acc / static_cast<double>(area);
  }
  return Tensor::make_result({c}, std::move(out), {x}, [c, area](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = self.grad[ch] / static_cast<double>(area);
      for (std::size_t i = 0; i < area; ++i) g[ch * area + i] += v;
    }
  });
}

namespace {

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  require_finite(x, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (cols == 0) throw DimensionError("softmax_rows: zero columns");
  std::vector<double> out(x.numel());
  kernels::softmax_rows(rows, cols, x.data(), out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * gy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (gy[c] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank(x, 2, "log_softmax_rows");
  require_finite(x, "log_softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (cols == 0) throw DimensionError("log_softmax_rows: zero columns");
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& self) {
    auto& g = *parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += gy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += gy[c] - std::exp(y[c]) * total;
    }
  });
}

namespace {

void require_gaussian_args(const Tensor& mu, const Tensor& logvar, const Tensor& x,
                           const char* op) {
  require_rank(mu, 2, op);
  require_same_shape(mu, logvar, op);
  require_rank(x, 2, op);
  if (x.dim(1) != mu.dim(1)) {
    throw DimensionError(std::string(op) + ": sample dimension " + shape_str(x.shape()) +
                         " vs parameters " + shape_str(mu.shape()));
  }
}

}  // namespace

Tensor gaussian_logprob_pairs(const Tensor& mu, const Tensor& logvar, const Tensor& x) {
  require_gaussian_args(mu, logvar, x, "gaussian_logprob_pairs");
  if (x.dim(0) != mu.dim(0)) {
    throw DimensionError("gaussian_logprob_pairs: row counts differ");
  }
  const std::size_t n = mu.dim(0), d = mu.dim(1);
  std::vector<double> out(n);
  const auto m = mu.data(), lv = logvar.data(), xs = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t at = i * d + k;
      const double diff = xs[at] - m[at];
      acc += -kHalfLog2Pi - 0.5 * lv[at] - 0.5 * diff * diff * std::exp(-lv[at]);
    }
    out[i] = acc;
  }
  return Tensor::make_result({n}, std::move(out), {mu, logvar, x}, [n, d](Node& self) {
    const auto& m = self.parents[0]->data;
    const auto& lv = self.parents[1]->data;
    const auto& xs = self.parents[2]->data;
    auto* gm = parent_grad(self, 0);
    auto* glv = parent_grad(self, 1);
    auto* gx = parent_grad(self, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = self.grad[i];
      for (std::size_t k = 0; k < d; ++k) {
        const std::size_t at = i * d + k;
        const double prec = std::exp(-lv[at]);
        const double diff = xs[at] - m[at];
        if (gm) (*gm)[at] += gi * diff * prec;
        if (glv) (*glv)[at] += gi * (-0.5 + 0.5 * diff * diff * prec);
        if (gx) (*gx)[at] -= gi * diff * prec;
      }
    }
  });
}

Tensor gaussian_logprob_matrix(const Tensor& mu, const Tensor& logvar, const Tensor& x) {
  require_gaussian_args(mu, logvar, x, "gaussian_logprob_matrix");
  const std::size_t n = mu.dim(0), cols = x.dim(0), d = mu.dim(1);
  std::vector<double> out(n * cols);
  const auto m = mu.data(), lv = logvar.data(), xs = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    double base = 0.0;
    for (std::size_t k = 0; k < d; ++k) base += -kHalfLog2Pi - 0.5 * lv[i * d + k];
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = base;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xs[j * d + k] - m[i * d + k];
        acc -= 0.5 * diff * diff * std::exp(-lv[i * d + k]);
      }
      out[i * cols + j] = acc;
    }
  }
  return Tensor::make_result({n, cols}, std::move(out), {mu, logvar, x}, [n, cols, d](Node& self) {
    const auto& m = self.parents[0]->data;
    const auto& lv = self.parents[1]->data;
    const auto& xs = self.parents[2]->data;
    auto* gm = parent_grad(self, 0);
    auto* glv = parent_grad(self, 1);
    auto* gx = parent_grad(self, 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double prec = std::exp(-lv[i * d + k]);
        double acc_m = 0.0, acc_lv = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double g = self.grad[i * cols + j];
          const double diff = xs[j * d + k] - m[i * d + k];
          acc_m += g * diff * prec;
          acc_lv += g * (-0.5 + 0.5 * diff * diff * prec);
          if (gx) (*gx)[j * d + k] -= g * diff * prec;
        }
        if (gm) (*gm)[i * d + k] += acc_m;
        if (glv) (*glv)[i * d + k] += acc_lv;
      }
    }
  });
}

}  // namespace fsca
