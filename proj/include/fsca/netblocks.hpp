#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsca/tensor.hpp"

namespace fsca {

struct NetConfig {
  std::size_t in_channels = 1;
  // Four 3×3 conv+ReLU blocks; blocks 2 and 4 use stride 2. The last entry is C_b.
  std::array<std::size_t, 4> backbone_channels = {16, 32, 32, 32};
  std::size_t feature_channels = 16;  // C, per separated branch
  std::size_t latent_dim = 64;        // d_z
  bool attention_projections = false;
  // The last counter layer predicts density × density_scale; counter_forward
  // divides it back out, so counts stay in persons.
  double density_scale = 100.0;

  std::size_t base_channels() const { return backbone_channels[3]; }
  void validate() const;
};

struct Conv {
  Tensor weight;  // C_out×C_in×k×k
  Tensor bias;    // C_out
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Affine map on row vectors: y = x·weight + bias, weight is in×out.
struct Linear {
  Tensor weight;
  Tensor bias;
};

struct ProjectionHead {
  Conv spatial;    // 3×3, C_b -> C
  Conv pointwise;  // 1×1, C -> C
};

/// Optional learned token projections for attention ablations.
struct AttentionProjections {
  Tensor query, key, value;  // C×C
};

struct NetParams {
  NetConfig config;
  std::array<Conv, 4> backbone;
  ProjectionHead di_head;
  ProjectionHead ds_head;
  std::array<Conv, 3> decoder;
  std::array<Conv, 3> counter;
  Linear embed_di;  // C -> d_z
  Linear embed_ds;  // C -> d_z
  std::optional<AttentionProjections> attn_di;
  std::optional<AttentionProjections> attn_ds;

  /// Every trainable tensor exactly once, with stable dotted names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

/// He fan-in normal weights, zero biases, fully determined by `seed`.
NetParams init_net_params(const NetConfig& config, std::uint64_t seed);
Conv make_conv(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
               std::size_t pad, std::uint64_t seed);
Linear make_linear(std::size_t in, std::size_t out, std::uint64_t seed);

Tensor conv_forward(const Conv& conv, const Tensor& x);
/// x is a row vector (shape [in]) or a matrix (n×in).
Tensor linear_forward(const Linear& layer, const Tensor& x);

/// Per-sample feature products of one forward pass.
struct FeatureBundle {
  Tensor f_base;  // C_b×h×w
  Tensor f_di;    // C×h×w
  Tensor f_ds;    // C×h×w
  Tensor f_fusion_di;
  Tensor f_fusion_ds;
  Tensor f_dsdi;  // 2C×h×w
  int domain_id = 0;
};

/// image 1×H×W (H, W divisible by 4) -> f_base C_b×H/4×W/4.
Tensor backbone_forward(const NetParams& params, const Tensor& image);

struct SeparatedFeatures {
  Tensor di;
  Tensor ds;
};
SeparatedFeatures separate(const NetParams& params, const Tensor& f_base);

/// 2C×h×w -> 2C×h×w channel-preserving refinement.
Tensor decoder_forward(const NetParams& params, const Tensor& f_dsdi);
/// 2C×h×w -> 1×h×w nonnegative density.
Tensor counter_forward(const NetParams& params, const Tensor& refined);
/// Σ over all cells. Throws ContractError on negative entries.
double count_from_density(const Tensor& density);

// Checkpoint file: "FSCACKPT", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u32 extents, little-endian f32 data.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);
/// Copies matching names into `target`; every target tensor must be present
/// with identical shape. Extra entries in `source` are ignored.
void assign_parameters(const NamedTensors& target, const NamedTensors& source,
                       const std::string& origin);

}  // namespace fsca
