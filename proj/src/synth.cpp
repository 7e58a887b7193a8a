#include "fsca/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fsca/errors.hpp"
#include "fsca/rng.hpp"

namespace fsca {

void DomainSpec::validate() const {
  const std::string who = "domain " + std::to_string(domain_id) + ": ";
  if (count_min > count_max) throw ConfigError(who + "count_range min exceeds max");
  if (!(head_sigma_min > 0.0) || head_sigma_min > head_sigma_max) {
    throw ConfigError(who + "head_sigma_range must satisfy 0 < min <= max");
  }
  if (texture.amplitude < 0.0) throw ConfigError(who + "texture amplitude must be >= 0");
  if (illumination.gain < 0.0) throw ConfigError(who + "illumination gain must be >= 0");
  if (noise_std < 0.0) throw ConfigError(who + "noise_std must be >= 0");
  if (!std::isfinite(texture.frequency) || !std::isfinite(texture.orientation) ||
      !std::isfinite(illumination.offset)) {
    throw ConfigError(who + "non-finite texture or illumination parameter");
  }
}

double DensityMap::total() const {
  double s = 0.0;
  for (double v : grid) s += v;
  return s;
}

Scene gen_scene(const DomainSpec& spec, std::uint64_t seed, std::size_t height,
                std::size_t width) {
  spec.validate();
  if (height == 0 || width == 0) throw ConfigError("gen_scene: empty image geometry");
  if (spec.count_max > height * width) {
    throw ConfigError("domain " + std::to_string(spec.domain_id) + ": max count " +
                      std::to_string(spec.count_max) + " exceeds image area");
  }

  Rng rng(seed);
  Scene scene;
  scene.height = height;
  scene.width = width;
  scene.channels = 1;
  scene.domain_id = spec.domain_id;
  scene.seed = seed;

  const auto count = static_cast<std::size_t>(rng.integer(
      static_cast<std::int64_t>(spec.count_min), static_cast<std::int64_t>(spec.count_max)));
  std::vector<double> sigmas(count);
  scene.points.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    scene.points[i] = {rng.uniform(0.0, static_cast<double>(width)),
                       rng.uniform(0.0, static_cast<double>(height))};
    sigmas[i] = rng.uniform(spec.head_sigma_min, spec.head_sigma_max);
  }
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  // Texture in [0, amplitude], then additive head blobs of unit peak.
  std::vector<double> canvas(height * width);
  const double kx = std::cos(spec.texture.orientation);
  const double ky = std::sin(spec.texture.orientation);
  const double omega = 2.0 * std::numbers::pi * spec.texture.frequency / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) + 0.5) * kx + (static_cast<double>(y) + 0.5) * ky;
      canvas[y * width + x] = spec.texture.amplitude * 0.5 * (1.0 + std::sin(omega * u + phase));
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = scene.points[i];
    const double s = sigmas[i];
    const double reach = 4.0 * s;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(p.y - reach));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(p.y + reach));
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(p.x - reach));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(p.x + reach));
    for (auto y = std::max<std::ptrdiff_t>(y0, 0);
         y <= std::min<std::ptrdiff_t>(y1, static_cast<std::ptrdiff_t>(height) - 1); ++y) {
      for (auto x = std::max<std::ptrdiff_t>(x0, 0);
           x <= std::min<std::ptrdiff_t>(x1, static_cast<std::ptrdiff_t>(width) - 1); ++x) {
        const double dx = static_cast<double>(x) + 0.5 - p.x;
        const double dy = static_cast<double>(y) + 0.5 - p.y;
        canvas[y * width + x] += std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
      }
    }
  }

  scene.image.resize(height * width);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    double v = spec.illumination.gain * canvas[i] + spec.illumination.offset;
    if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
    scene.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return scene;
}

DensityMap render_density_gt(const std::vector<Point>& points, double sigma, std::size_t height,
                             std::size_t width) {
  if (!(sigma > 0.0)) throw InputError("render_density_gt: sigma must be positive");
  DensityMap map;
  map.height = height;
  map.width = width;
  map.grid.assign(height * width, 0.0);

  const double reach = 4.0 * sigma;
  std::vector<std::pair<std::size_t, double>> taps;
  for (const auto& p : points) {
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width) && p.y >= 0.0 &&
          p.y < static_cast<double>(height))) {
      throw InputError("render_density_gt: point (" + std::to_string(p.x) + ", " +
                       std::to_string(p.y) + ") outside " + std::to_string(width) + "x" +
                       std::to_string(height) + " image");
    }
    taps.clear();
    double mass = 0.0;
    const auto y0 = std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(p.y - reach)), 0);
    const auto y1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::ceil(p.y + reach)),
                                             static_cast<std::ptrdiff_t>(height) - 1);
    const auto x0 = std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(p.x - reach)), 0);
    const auto x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::ceil(p.x + reach)),
                                             static_cast<std::ptrdiff_t>(width) - 1);
    for (auto y = y0; y <= y1; ++y) {
      for (auto x = x0; x <= x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - p.x;
        const double dy = static_cast<double>(y) + 0.5 - p.y;
        const double r2 = dx * dx + dy * dy;
        if (r2 > reach * reach) continue;
        const double v = std::exp(-r2 / (2.0 * sigma * sigma));
        if (v <= 0.0) continue;
        taps.emplace_back(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x), v);
        mass += v;
      }
    }
    if (taps.empty()) {
      // Kernel narrower than the pixel grid: the whole unit lands in the host pixel.
      const auto px = static_cast<std::size_t>(p.x);
      const auto py = static_cast<std::size_t>(p.y);
      map.grid[py * width + px] += 1.0;
      continue;
    }
    for (const auto& [at, v] : taps) map.grid[at] += v / mass;
  }
  return map;
}

std::uint64_t scene_seed(std::uint64_t base_seed, int domain_id, std::size_t index,
                         bool test_split) {
  const std::uint64_t stream = (static_cast<std::uint64_t>(domain_id) << 40) ^
                               (static_cast<std::uint64_t>(test_split) << 39) ^ index;
  return derive_seed(base_seed, stream);
}

std::vector<Scene> generate_split(const DomainSpec& spec, std::uint64_t base_seed,
                                  std::size_t count, bool test_split, std::size_t height,
                                  std::size_t width) {
  spec.validate();
  if (height == 0 || width == 0 || spec.count_max > height * width) {
    throw ConfigError("generate_split: image geometry cannot hold domain " +
                      std::to_string(spec.domain_id));
  }
  std::vector<Scene> scenes(count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    scenes[i] = gen_scene(spec, scene_seed(base_seed, spec.domain_id, i, test_split), height, width);
  }
  return scenes;
}

std::vector<DomainSpec> default_domains() {
  DomainSpec a;
  a.domain_id = 0;
  a.count_min = 10;
  a.count_max = 40;
  a.head_sigma_min = 1.0;
  a.head_sigma_max = 1.6;
  a.texture = {3.0, 0.0, 0.10};
  a.illumination = {1.0, 0.05};
  a.noise_std = 0.02;

  DomainSpec b;
  b.domain_id = 1;
  b.count_min = 10;
  b.count_max = 40;
  b.head_sigma_min = 2.0;
  b.head_sigma_max = 3.0;
  b.texture = {10.0, 0.8, 0.35};
  b.illumination = {0.45, 0.45};
  b.noise_std = 0.05;

  DomainSpec c;
  c.domain_id = 2;
  c.count_min = 10;
  c.count_max = 40;
  c.head_sigma_min = 1.4;
  c.head_sigma_max = 2.2;
  c.texture = {6.0, 1.6, 0.20};
  c.illumination = {0.7, 0.25};
  c.noise_std = 0.03;

  return {a, b, c};
}

}  // namespace fsca
