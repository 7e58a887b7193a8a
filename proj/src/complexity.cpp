#include "fsca/complexity.hpp"

#include "fsca/errors.hpp"

namespace fsca {

ComplexityReport count_params_flops(const std::vector<LayerShape>& layers) {
  ComplexityReport report;
  for (const auto& l : layers) {
    const auto extent = [&](std::size_t in) {
      const std::size_t padded = in + 2 * l.pad;
      if (l.stride == 0 || padded < l.kernel || (padded - l.kernel) % l.stride != 0) {
        throw DimensionError("layer '" + l.name + "': non-integral output extent");
      }
      return (padded - l.kernel) / l.stride + 1;
    };
    LayerCost cost;
    cost.name = l.name;
    cost.out_h = extent(l.in_h);
    cost.out_w = extent(l.in_w);
    const std::uint64_t weights =
        static_cast<std::uint64_t>(l.c_out) * l.c_in * l.kernel * l.kernel;
    cost.params = weights + (l.bias ? l.c_out : 0);
    cost.macs = weights * cost.out_h * cost.out_w;
    report.total_params += cost.params;
    report.total_macs += cost.macs;
    report.layers.push_back(std::move(cost));
  }
  return report;
}

std::vector<LayerShape> network_layers(const NetConfig& config, std::size_t height,
                                       std::size_t width) {
  config.validate();
  if (height % 4 || width % 4) throw DimensionError("network_layers: extents must be divisible by 4");
  const auto& bc = config.backbone_channels;
  const std::size_t c = config.feature_channels, cb = config.base_channels();
  const std::size_t h2 = height / 2, w2 = width / 2, h4 = height / 4, w4 = width / 4;
  std::vector<LayerShape> out = {
      {"backbone.0", config.in_channels, bc[0], 3, 1, 1, true, height, width},
      {"backbone.1", bc[0], bc[1], 3, 1, 1, true, h2, w2},
      {"backbone.2", bc[1], bc[2], 3, 1, 1, true, h2, w2},
      {"backbone.3", bc[2], bc[3], 3, 1, 1, true, h4, w4},
      {"di_head.spatial", cb, c, 3, 1, 1, true, h4, w4},
      {"di_head.pointwise", c, c, 1, 1, 0, true, h4, w4},
      {"ds_head.spatial", cb, c, 3, 1, 1, true, h4, w4},
      {"ds_head.pointwise", c, c, 1, 1, 0, true, h4, w4},
      {"decoder.0", 2 * c, c, 3, 1, 1, true, h4, w4},
      {"decoder.1", c, c, 1, 1, 0, true, h4, w4},
      {"decoder.2", c, 2 * c, 3, 1, 1, true, h4, w4},
      {"counter.0", 2 * c, c, 3, 1, 1, true, h4, w4},
      {"counter.1", c, c / 2, 3, 1, 1, true, h4, w4},
      {"counter.2", c / 2, 1, 3, 1, 1, true, h4, w4},
      {"embed_di", c, config.latent_dim, 1, 1, 0, true, 1, 1},
      {"embed_ds", c, config.latent_dim, 1, 1, 0, true, 1, 1},
  };
  if (config.attention_projections) {
    const std::size_t tokens = h4 * w4;
    for (const char* branch : {"attn_di", "attn_ds"}) {
      for (const char* role : {"query", "key", "value"}) {
        out.push_back({std::string(branch) + "." + role, c, c, 1, 1, 0, false, tokens, 1});
      }
    }
  }
  return out;
}

std::vector<LayerShape> full_decoder_layers(std::size_t h, std::size_t w) {
  return {{"decoder.0", 512, 256, 3, 1, 1, true, h, w},
          {"decoder.1", 256, 256, 1, 1, 0, true, h, w},
          {"decoder.2", 256, 512, 3, 1, 1, true, h, w}};
}

std::vector<LayerShape> full_counter_layers(std::size_t h, std::size_t w) {
  return {{"counter.0", 512, 256, 3, 1, 1, true, h, w},
          {"counter.1", 256, 128, 3, 1, 1, true, h, w},
          {"counter.2", 128, 1, 3, 1, 1, true, h, w}};
}

}  // namespace fsca
