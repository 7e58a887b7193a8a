#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsca/dataset_io.hpp"
#include "fsca/netblocks.hpp"
#include "fsca/synth.hpp"
#include "fsca/trainer.hpp"

namespace fsca {

using Json = nlohmann::ordered_json;

/// Synthetic data settings shared by `gen` and `protocol`.
struct DataConfig {
  std::vector<DomainSpec> domains = default_domains();
  std::size_t train_per_domain = 200;
  std::size_t test_per_domain = 50;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 7;

  void validate() const;
};

enum class ProtocolKind { table1, generalization, full };
const char* protocol_kind_name(ProtocolKind kind);
ProtocolKind parse_protocol_kind(const std::string& s);

struct ProtocolConfig {
  DataConfig data;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  ProtocolKind protocol = ProtocolKind::table1;
  std::size_t table1_domains = 2;        // the first k domains take part in table1
  std::vector<int> generalization_sources = {0, 1};  // remaining domains are held out
  // Partners per test image when a joint_fsca model is evaluated on one of
  // its training domains.
  std::size_t eval_partners = 4;

  void validate() const;
};

// JSON conversions. Parsers start from the defaults above, so any subset of
// fields may be given; unknown keys and wrongly typed values raise ConfigError.
Json domain_spec_to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const Json& j);
Json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const Json& j);
Json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const Json& j, NetConfig base = {});
Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json data_config_to_json(const DataConfig& cfg);
DataConfig data_config_from_json(const Json& j, DataConfig base = {});
Json protocol_config_to_json(const ProtocolConfig& cfg);
ProtocolConfig protocol_config_from_json(const Json& j, ProtocolConfig base = {});

/// Parses a JSON file; FormatError if unreadable or malformed.
Json load_json_file(const std::filesystem::path& path);

/// Applies "dotted.key=value" to a JSON document. The value is parsed as JSON
/// when possible and kept as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

/// FNV-1a 64 of the compact dump, as 16 hex digits.
std::string config_hash(const Json& j);

}  // namespace fsca
