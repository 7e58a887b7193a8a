#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fsca {

struct TextureSpec {
  double frequency = 4.0;    // cycles per image width
  double orientation = 0.0;  // radians
  double amplitude = 0.1;
};

struct IlluminationSpec {
  double gain = 1.0;
  double offset = 0.0;
};

/// Nuisance parameters that make one synthetic domain look different from
/// another: background texture, illumination and sensor noise, plus crowd
/// size and head scale statistics.
struct DomainSpec {
  int domain_id = 0;
  std::size_t count_min = 5, count_max = 30;
  double head_sigma_min = 1.0, head_sigma_max = 2.0;  // px
  TextureSpec texture;
  IlluminationSpec illumination;
  double noise_std = 0.02;

  /// Throws ConfigError when ranges are inverted or a scale is negative.
  void validate() const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Scene {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<float> image;  // C×H×W, intensities in [0,1]
  std::vector<Point> points;
  int domain_id = 0;
  std::uint64_t seed = 0;
};

struct DensityMap {
  std::size_t height = 0, width = 0;
  std::vector<double> grid;  // persons per cell

  double total() const;
};

/// Image = clamp(gain·(texture + head blobs) + offset + noise, 0, 1), drawn
/// deterministically from (spec, seed). Throws ConfigError for degenerate specs.
Scene gen_scene(const DomainSpec& spec, std::uint64_t seed, std::size_t height = 64,
                std::size_t width = 64);

/// Sum of unit-mass Gaussian kernels, one per point. Each kernel is truncated
/// at 4σ, clipped to the image, then renormalised, so the map's mass equals the
/// number of points. Throws InputError for points outside the image.
DensityMap render_density_gt(const std::vector<Point>& points, double sigma, std::size_t height,
                             std::size_t width);

/// Per-sample seed used by generate_split; identical to what a sequential
/// loop would use, so parallel generation matches it.
std::uint64_t scene_seed(std::uint64_t base_seed, int domain_id, std::size_t index,
                         bool test_split);

/// `count` scenes for one domain and split, generated in parallel.
std::vector<Scene> generate_split(const DomainSpec& spec, std::uint64_t base_seed,
                                  std::size_t count, bool test_split, std::size_t height = 64,
                                  std::size_t width = 64);

/// The built-in synthetic domains. Index 0 and 1 form the default pair.
std::vector<DomainSpec> default_domains();

}  // namespace fsca
