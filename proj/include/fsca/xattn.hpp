#pragma once

#include <cstddef>

#include "fsca/netblocks.hpp"
#include "fsca/tensor.hpp"

namespace fsca {

enum class FeatureKind { base, di, ds };

const char* feature_kind_name(FeatureKind kind);

/// C×h×w features flattened to n×C tokens (n = h·w, row-major positions).
struct TokenGrid {
  Tensor tokens;
  std::size_t height = 0, width = 0;
  FeatureKind kind = FeatureKind::base;

  std::size_t count() const { return height * width; }
  std::size_t channels() const { return tokens.dim(1); }
};

TokenGrid to_tokens(const Tensor& features, FeatureKind kind);
/// Inverse of to_tokens: n×C -> C×h×w.
Tensor from_tokens(const TokenGrid& grid);

/// Softmax(Q·Kᵀ/√d_k), rows index queries. Exposed for inspection and tests.
Tensor attention_weights(const Tensor& queries, const Tensor& keys);

/// Softmax(Q·Kᵀ/√d_k)·V with Q from `query` and K = V from `key_value`.
/// Both grids must carry the same feature kind and channel count.
/// `projections`, when given, maps tokens through learned Q/K/V matrices first.
TokenGrid cross_attend(const TokenGrid& query, const TokenGrid& key_value,
                       const AttentionProjections* projections = nullptr);

/// original + attended, elementwise.
TokenGrid fuse_residual(const TokenGrid& original, const TokenGrid& attended);

/// Channel concatenation [DI ‖ DS] -> 2C×h×w.
Tensor build_ds_di(const Tensor& fusion_di, const Tensor& fusion_ds);

/// Fills f_fusion_di / f_fusion_ds / f_dsdi of `target`. With a partner, each
/// feature kind attends to the partner's same-kind features; without one the
/// attention term is dropped and the fused features equal the originals.
void fuse_features(const NetParams& params, FeatureBundle& target, const FeatureBundle* partner);

}  // namespace fsca
