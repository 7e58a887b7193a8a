#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsca/netblocks.hpp"

namespace fsca {

/// A square-kernel convolution as seen by the counter. Linear layers are 1×1
/// convolutions on a 1×1 map.
struct LayerShape {
  std::string name;
  std::size_t c_in = 0, c_out = 0, kernel = 1, stride = 1, pad = 0;
  bool bias = true;
  std::size_t in_h = 1, in_w = 1;
};

struct LayerCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;  // weights × output pixels
  std::size_t out_h = 0, out_w = 0;
};

struct ComplexityReport {
  std::vector<LayerCost> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
};

/// Throws DimensionError when a layer's output extent is not integral.
ComplexityReport count_params_flops(const std::vector<LayerShape>& layers);

/// Every parameterised layer of the network for an H×W input image.
std::vector<LayerShape> network_layers(const NetConfig& config, std::size_t height,
                                       std::size_t width);

/// The full-size decoder (512→256→256→512) and counter (512→256→128→1)
/// templates on an h×w feature map.
std::vector<LayerShape> full_decoder_layers(std::size_t h, std::size_t w);
std::vector<LayerShape> full_counter_layers(std::size_t h, std::size_t w);

}  // namespace fsca
