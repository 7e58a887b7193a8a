#include "fsca/xattn.hpp"

#include <cmath>
#include <string>

#include "fsca/errors.hpp"
#include "fsca/ops.hpp"

namespace fsca {

const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::base: return "base";
    case FeatureKind::di: return "di";
    case FeatureKind::ds: return "ds";
  }
  return "?";
}

TokenGrid to_tokens(const Tensor& features, FeatureKind kind) {
  if (features.rank() != 3) {
    throw DimensionError("to_tokens: expected C×h×w features, got " + shape_str(features.shape()));
  }
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  return {transpose(reshape(features, {c, h * w})), h, w, kind};
}

Tensor from_tokens(const TokenGrid& grid) {
  const std::size_t c = grid.channels();
  return reshape(transpose(grid.tokens), {c, grid.height, grid.width});
}

Tensor attention_weights(const Tensor& queries, const Tensor& keys) {
  if (queries.rank() != 2 || keys.rank() != 2 || queries.dim(1) != keys.dim(1)) {
    throw DimensionError("attention: key dimension mismatch " + shape_str(queries.shape()) +
                         " vs " + shape_str(keys.shape()));
  }
  const double d_k = static_cast<double>(keys.dim(1));
  return softmax_rows(scale(matmul(queries, transpose(keys)), 1.0 / std::sqrt(d_k)));
}

TokenGrid cross_attend(const TokenGrid& query, const TokenGrid& key_value,
                       const AttentionProjections* projections) {
  if (query.kind != key_value.kind) {
    throw ContractError(std::string("cross_attend: queries are ") + feature_kind_name(query.kind) +
                        " features but keys/values are " + feature_kind_name(key_value.kind));
  }
  if (query.channels() != key_value.channels()) {
    throw DimensionError("cross_attend: d_k mismatch " + std::to_string(query.channels()) +
                         " vs " + std::to_string(key_value.channels()));
  }
  Tensor q = query.tokens, k = key_value.tokens, v = key_value.tokens;
  if (projections) {
    q = matmul(q, projections->query);
    k = matmul(k, projections->key);
    v = matmul(v, projections->value);
  }
  return {matmul(attention_weights(q, k), v), query.height, query.width, query.kind};
}

TokenGrid fuse_residual(const TokenGrid& original, const TokenGrid& attended) {
  if (original.tokens.shape() != attended.tokens.shape()) {
    throw DimensionError("fuse_residual: shape mismatch " + shape_str(original.tokens.shape()) +
                         " vs " + shape_str(attended.tokens.shape()));
  }
  return {add(original.tokens, attended.tokens), original.height, original.width, original.kind};
}

Tensor build_ds_di(const Tensor& fusion_di, const Tensor& fusion_ds) {
  if (fusion_di.rank() != 3 || fusion_ds.rank() != 3 || fusion_di.dim(1) != fusion_ds.dim(1) ||
      fusion_di.dim(2) != fusion_ds.dim(2)) {
    throw DimensionError("build_ds_di: spatial mismatch " + shape_str(fusion_di.shape()) + " vs " +
                         shape_str(fusion_ds.shape()));
  }
  return concat({fusion_di, fusion_ds});
}

void fuse_features(const NetParams& params, FeatureBundle& target, const FeatureBundle* partner) {
  if (!partner) {
    target.f_fusion_di = target.f_di;
    target.f_fusion_ds = target.f_ds;
  } else {
    auto fuse = [&](const Tensor& own, const Tensor& other, FeatureKind kind,
                    const std::optional<AttentionProjections>& proj) {
      const TokenGrid q = to_tokens(own, kind);
      const TokenGrid kv = to_tokens(other, kind);
      const TokenGrid attended = cross_attend(q, kv, proj ? &*proj : nullptr);
      return from_tokens(fuse_residual(q, attended));
    };
    target.f_fusion_di = fuse(target.f_di, partner->f_di, FeatureKind::di, params.attn_di);
    target.f_fusion_ds = fuse(target.f_ds, partner->f_ds, FeatureKind::ds, params.attn_ds);
  }
  target.f_dsdi = build_ds_di(target.f_fusion_di, target.f_fusion_ds);
}

}  // namespace fsca
