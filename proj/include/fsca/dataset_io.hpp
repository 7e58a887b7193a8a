#pragma once

// On-disk dataset layout:
//
//   <dir>/manifest.json       {"version":1, "domains":[...], "samples":[{"id","domain","split",...}]}
//   <dir>/<id>.img            "FSCAIMG1", u32 H, u32 W, u32 C (LE), H·W·C LE float32
//   <dir>/<id>.points.json    [[x, y], ...]

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsca/synth.hpp"

namespace fsca {

enum class Split { train, test };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SampleEntry {
  std::string id;
  int domain = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;
};

struct Manifest {
  int version = 1;
  std::vector<DomainSpec> domains;
  std::vector<SampleEntry> samples;
};

struct Dataset {
  Manifest manifest;
  std::vector<Scene> scenes;  // index-aligned with manifest.samples
};

void write_scene_image(const std::filesystem::path& path, const Scene& scene);
/// Reads dimensions and pixels into `scene`. Throws FormatError naming the file.
void read_scene_image(const std::filesystem::path& path, Scene& scene);

void write_dataset(const std::filesystem::path& dir, const std::vector<Scene>& scenes,
                   const Manifest& manifest);
Dataset read_dataset(const std::filesystem::path& dir);

/// Generates train/test splits for every domain and builds the matching manifest.
Dataset generate_dataset(const std::vector<DomainSpec>& domains, std::uint64_t seed,
                         std::size_t train_per_domain, std::size_t test_per_domain,
                         std::size_t height = 64, std::size_t width = 64);

}  // namespace fsca
