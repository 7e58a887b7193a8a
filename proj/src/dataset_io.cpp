#include "fsca/dataset_io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "fsca/config.hpp"
#include "fsca/errors.hpp"

namespace fsca {
namespace {

namespace fs = std::filesystem;

constexpr std::array<char, 8> kImageMagic = {'F', 'S', 'C', 'A', 'I', 'M', 'G', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open file for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string(), "write failed");
}

fs::path image_path(const fs::path& dir, const std::string& id) { return dir / (id + ".img"); }
fs::path points_path(const fs::path& dir, const std::string& id) {
  return dir / (id + ".points.json");
}

}  // namespace

const char* split_name(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "'");
}

void write_scene_image(const fs::path& path, const Scene& scene) {
  if (scene.image.size() != scene.height * scene.width * scene.channels) {
    throw ContractError("write_scene_image: pixel count does not match scene geometry");
  }
  std::string bytes(kImageMagic.begin(), kImageMagic.end());
  put_u32(bytes, static_cast<std::uint32_t>(scene.height));
  put_u32(bytes, static_cast<std::uint32_t>(scene.width));
  put_u32(bytes, static_cast<std::uint32_t>(scene.channels));
  bytes.reserve(bytes.size() + 4 * scene.image.size());
  for (float v : scene.image) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_file(path, bytes);
}

void read_scene_image(const fs::path& path, Scene& scene) {
  const std::string bytes = read_file(path);
  constexpr std::size_t header = kImageMagic.size() + 12;
  if (bytes.size() < kImageMagic.size() ||
      std::memcmp(bytes.data(), kImageMagic.data(), kImageMagic.size()) != 0) {
    throw FormatError(path.string(), "bad magic (expected FSCAIMG1)");
  }
  if (bytes.size() < header) throw FormatError(path.string(), "truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t h = get_u32(p + 8), w = get_u32(p + 12), c = get_u32(p + 16);
  const std::size_t n = h * w * c;
  if (bytes.size() != header + 4 * n) {
    throw FormatError(path.string(), "expected " + std::to_string(header + 4 * n) +
                                         " bytes for " + std::to_string(h) + "x" +
                                         std::to_string(w) + "x" + std::to_string(c) +
                                         ", found " + std::to_string(bytes.size()));
  }
  scene.height = h;
  scene.width = w;
  scene.channels = c;
  scene.image.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    scene.image[i] = std::bit_cast<float>(get_u32(p + header + 4 * i));
  }
}

void write_dataset(const fs::path& dir, const std::vector<Scene>& scenes,
                   const Manifest& manifest) {
  if (scenes.size() != manifest.samples.size()) {
    throw ContractError("write_dataset: " + std::to_string(scenes.size()) + " scenes but " +
                        std::to_string(manifest.samples.size()) + " manifest entries");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(dir.string(), "cannot create directory: " + ec.message());

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& id = manifest.samples[i].id;
    write_scene_image(image_path(dir, id), scenes[i]);
    Json pts = Json::array();
    for (const auto& pt : scenes[i].points) pts.push_back(Json::array({pt.x, pt.y}));
    write_file(points_path(dir, id), pts.dump() + "\n");
  }
  write_file(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_file = dir / "manifest.json";
  Dataset ds;
  try {
    ds.manifest = manifest_from_json(Json::parse(read_file(manifest_file)));
  } catch (const Json::exception& e) {
    throw FormatError(manifest_file.string(), std::string("invalid manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(manifest_file.string(), e.what());
  }
  if (ds.manifest.version != 1) {
    throw FormatError(manifest_file.string(),
                      "unsupported version " + std::to_string(ds.manifest.version));
  }

  std::set<int> known_domains;
  for (const auto& d : ds.manifest.domains) known_domains.insert(d.domain_id);
  std::set<std::string> ids;
  ds.scenes.resize(ds.manifest.samples.size());
  for (std::size_t i = 0; i < ds.manifest.samples.size(); ++i) {
    const auto& entry = ds.manifest.samples[i];
    if (!ids.insert(entry.id).second) {
      throw FormatError(manifest_file.string(), "duplicate sample id '" + entry.id + "'");
    }
    if (!known_domains.contains(entry.domain)) {
      throw FormatError(manifest_file.string(), "sample '" + entry.id +
                                                    "' references undeclared domain " +
                                                    std::to_string(entry.domain));
    }
    const fs::path img = image_path(dir, entry.id);
    const fs::path pts = points_path(dir, entry.id);
    if (!fs::exists(img) || !fs::exists(pts)) {
      throw FormatError(manifest_file.string(),
                        "sample '" + entry.id + "' listed but its files are missing");
    }
    Scene& scene = ds.scenes[i];
    read_scene_image(img, scene);
    scene.domain_id = entry.domain;
    scene.seed = entry.seed;
    try {
      const Json arr = Json::parse(read_file(pts));
      if (!arr.is_array()) throw FormatError(pts.string(), "points file is not an array");
      for (const auto& item : arr) {
        if (!item.is_array() || item.size() != 2) {
          throw FormatError(pts.string(), "point entries must be [x, y]");
        }
        scene.points.push_back({item[0].get<double>(), item[1].get<double>()});
      }
    } catch (const Json::exception& e) {
      throw FormatError(pts.string(), std::string("invalid points file: ") + e.what());
    }
  }
  return ds;
}

Dataset generate_dataset(const std::vector<DomainSpec>& domains, std::uint64_t seed,
                         std::size_t train_per_domain, std::size_t test_per_domain,
                         std::size_t height, std::size_t width) {
  Dataset ds;
  ds.manifest.domains = domains;
  for (const auto& spec : domains) {
    for (const Split split : {Split::train, Split::test}) {
      const bool is_test = split == Split::test;
      const std::size_t count = is_test ? test_per_domain : train_per_domain;
      auto scenes = generate_split(spec, seed, count, is_test, height, width);
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "d%d_%s_%04zu", spec.domain_id, split_name(split), i);
        ds.manifest.samples.push_back({id, spec.domain_id, split, scenes[i].seed});
        ds.scenes.push_back(std::move(scenes[i]));
      }
    }
  }
  return ds;
}

}  // namespace fsca
