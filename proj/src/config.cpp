#include "fsca/config.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "fsca/errors.hpp"

namespace fsca {
namespace {

// Reads the keys of one JSON object, rejecting anything not consumed.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type (" + it->dump() + ")");
    }
  }

  template <class T>
  void get_nonneg(const char* key, T& out) {
    auto it = j_.find(key);
    if (it != j_.end() && it->is_number() && it->template get<double>() < 0) {
      throw ConfigError(where_ + "." + key + ": must be non-negative");
    }
    get(key, out);
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class T>
void get_pair(Reader& r, const char* key, T& lo, T& hi) {
  const Json* v = r.sub(key);
  if (!v) return;
  if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
    throw ConfigError(r.where(key) + ": expected [min, max]");
  }
  if ((*v)[0].get<double>() < 0 || (*v)[1].get<double>() < 0) {
    throw ConfigError(r.where(key) + ": values must be non-negative");
  }
  lo = (*v)[0].get<T>();
  hi = (*v)[1].get<T>();
}

}  // namespace

void DataConfig::validate() const {
  if (domains.empty()) throw ConfigError("data: at least one domain is required");
  std::set<int> ids;
  for (const auto& d : domains) {
    d.validate();
    if (!ids.insert(d.domain_id).second) {
      throw ConfigError("data: duplicate domain_id " + std::to_string(d.domain_id));
    }
  }
  if (height == 0 || width == 0 || height % 4 || width % 4) {
    throw ConfigError("data: height and width must be positive multiples of 4");
  }
}

const char* protocol_kind_name(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::table1: return "table1";
    case ProtocolKind::generalization: return "generalization";
    case ProtocolKind::full: return "full";
  }
  return "?";
}

ProtocolKind parse_protocol_kind(const std::string& s) {
  if (s == "table1") return ProtocolKind::table1;
  if (s == "generalization") return ProtocolKind::generalization;
  if (s == "full") return ProtocolKind::full;
  throw ConfigError("unknown protocol '" + s + "' (expected table1, generalization or full)");
}

void ProtocolConfig::validate() const {
  data.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("protocol: seeds must not be empty");
  const bool t1 = protocol != ProtocolKind::generalization;
  const bool gen = protocol != ProtocolKind::table1;
  if (t1 && (table1_domains < 2 || table1_domains > data.domains.size())) {
    throw ConfigError("protocol: table1 needs at least 2 domains (table1_domains = " +
                      std::to_string(table1_domains) + ", available " +
                      std::to_string(data.domains.size()) + ")");
  }
  if (gen) {
    if (data.domains.size() < 3) {
      throw ConfigError("protocol: generalization needs at least 3 domains, got " +
                        std::to_string(data.domains.size()));
    }
    std::set<int> known;
    for (const auto& d : data.domains) known.insert(d.domain_id);
    std::set<int> sources(generalization_sources.begin(), generalization_sources.end());
    if (sources.size() < 2) throw ConfigError("protocol: generalization needs >= 2 source domains");
    for (int s : sources) {
      if (!known.contains(s)) throw ConfigError("protocol: unknown source domain " + std::to_string(s));
    }
    if (sources.size() >= known.size()) {
      throw ConfigError("protocol: generalization needs at least one held-out domain");
    }
  }
  if (eval_partners == 0) throw ConfigError("protocol: eval_partners must be positive");
  if (data.train_per_domain == 0 || data.test_per_domain == 0) throw ConfigError("protocol: every domain needs train and test scenes");
}

Json domain_spec_to_json(const DomainSpec& s) {
  Json j;
  j["domain_id"] = s.domain_id;
  j["count_range"] = {s.count_min, s.count_max};
  j["head_sigma_range"] = {s.head_sigma_min, s.head_sigma_max};
  j["bg_texture"] = {{"frequency", s.texture.frequency},
                     {"orientation", s.texture.orientation},
                     {"amplitude", s.texture.amplitude}};
  j["illumination"] = {{"gain", s.illumination.gain}, {"offset", s.illumination.offset}};
  j["noise_std"] = s.noise_std;
  return j;
}

DomainSpec domain_spec_from_json(const Json& j) {
  DomainSpec s;
  Reader r(j, "domain");
  r.get("domain_id", s.domain_id);
  get_pair(r, "count_range", s.count_min, s.count_max);
  get_pair(r, "head_sigma_range", s.head_sigma_min, s.head_sigma_max);
  if (const Json* t = r.sub("bg_texture")) {
    Reader rt(*t, "domain.bg_texture");
    rt.get("frequency", s.texture.frequency);
    rt.get("orientation", s.texture.orientation);
    rt.get("amplitude", s.texture.amplitude);
    rt.finish();
  }
  if (const Json* il = r.sub("illumination")) {
    Reader ri(*il, "domain.illumination");
    ri.get("gain", s.illumination.gain);
    ri.get("offset", s.illumination.offset);
    ri.finish();
  }
  r.get("noise_std", s.noise_std);
  r.finish();
  s.validate();
  return s;
}

Json manifest_to_json(const Manifest& m) {
  Json j;
  j["version"] = m.version;
  j["domains"] = Json::array();
  for (const auto& d : m.domains) j["domains"].push_back(domain_spec_to_json(d));
  j["samples"] = Json::array();
  for (const auto& s : m.samples) {
    j["samples"].push_back(
        {{"id", s.id}, {"domain", s.domain}, {"split", split_name(s.split)}, {"seed", s.seed}});
  }
  return j;
}

Manifest manifest_from_json(const Json& j) {
  Manifest m;
  Reader r(j, "manifest");
  r.get("version", m.version);
  const Json* domains = r.sub("domains");
  const Json* samples = r.sub("samples");
  r.finish();
  if (!domains || !domains->is_array()) throw ConfigError("manifest: 'domains' array is required");
  if (!samples || !samples->is_array()) throw ConfigError("manifest: 'samples' array is required");
  for (const auto& d : *domains) m.domains.push_back(domain_spec_from_json(d));
  for (const auto& s : *samples) {
    SampleEntry e;
    Reader rs(s, "manifest.samples[]");
    std::string split = "train";
    rs.get("id", e.id);
    rs.get("domain", e.domain);
    rs.get("split", split);
    rs.get("seed", e.seed);
    rs.finish();
    if (e.id.empty()) throw ConfigError("manifest: sample without id");
    e.split = parse_split(split);
    m.samples.push_back(std::move(e));
  }
  return m;
}

Json net_config_to_json(const NetConfig& c) {
  Json j;
  j["in_channels"] = c.in_channels;
  j["backbone_channels"] = c.backbone_channels;
  j["feature_channels"] = c.feature_channels;
  j["latent_dim"] = c.latent_dim;
  j["attention_projections"] = c.attention_projections;
  j["density_scale"] = c.density_scale;
  return j;
}

NetConfig net_config_from_json(const Json& j, NetConfig c) {
  Reader r(j, "net");
  r.get_nonneg("in_channels", c.in_channels);
  r.get("backbone_channels", c.backbone_channels);
  r.get_nonneg("feature_channels", c.feature_channels);
  r.get_nonneg("latent_dim", c.latent_dim);
  r.get("attention_projections", c.attention_projections);
  r.get("density_scale", c.density_scale);
  r.finish();
  c.validate();
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["lr_main"] = c.lr_main;
  j["lr_q"] = c.lr_q;
  j["seed"] = c.seed;
  j["club_pairing"] = club_pairing_name(c.club_pairing);
  j["mi_pairing"] = mi_pairing_name(c.mi_pairing);
  j["tau"] = c.tau;
  j["q_steps"] = c.q_steps;
  j["gt_sigma"] = c.gt_sigma;
  j["density_stride"] = c.density_stride;
  j["net"] = net_config_to_json(c.net);
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  Reader r(j, "train");
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get_nonneg("steps", c.steps);
  r.get_nonneg("batch_size", c.batch_size);
  r.get("lr_main", c.lr_main);
  r.get("lr_q", c.lr_q);
  r.get_nonneg("seed", c.seed);
  std::string pairing = club_pairing_name(c.club_pairing);
  r.get("club_pairing", pairing);
  c.club_pairing = parse_club_pairing(pairing);
  std::string mi = mi_pairing_name(c.mi_pairing);
  r.get("mi_pairing", mi);
  c.mi_pairing = parse_mi_pairing(mi);
  r.get("tau", c.tau);
  r.get_nonneg("q_steps", c.q_steps);
  r.get("gt_sigma", c.gt_sigma);
  r.get_nonneg("density_stride", c.density_stride);
  if (const Json* net = r.sub("net")) c.net = net_config_from_json(*net, c.net);
  r.finish();
  c.validate();
  return c;
}

Json data_config_to_json(const DataConfig& c) {
  Json j;
  j["domains"] = Json::array();
  for (const auto& d : c.domains) j["domains"].push_back(domain_spec_to_json(d));
  j["train_per_domain"] = c.train_per_domain;
  j["test_per_domain"] = c.test_per_domain;
  j["height"] = c.height;
  j["width"] = c.width;
  j["seed"] = c.seed;
  return j;
}

DataConfig data_config_from_json(const Json& j, DataConfig c) {
  Reader r(j, "data");
  if (const Json* domains = r.sub("domains")) {
    if (!domains->is_array()) throw ConfigError("data.domains: expected an array");
    c.domains.clear();
    for (const auto& d : *domains) c.domains.push_back(domain_spec_from_json(d));
  }
  r.get_nonneg("train_per_domain", c.train_per_domain);
  r.get_nonneg("test_per_domain", c.test_per_domain);
  r.get_nonneg("height", c.height);
  r.get_nonneg("width", c.width);
  r.get_nonneg("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

Json protocol_config_to_json(const ProtocolConfig& c) {
  Json j;
  j["protocol"] = protocol_kind_name(c.protocol);
  j["seeds"] = c.seeds;
  j["table1_domains"] = c.table1_domains;
  j["generalization_sources"] = c.generalization_sources;
  j["eval_partners"] = c.eval_partners;
  j["data"] = data_config_to_json(c.data);
  j["train"] = train_config_to_json(c.train);
  return j;
}

ProtocolConfig protocol_config_from_json(const Json& j, ProtocolConfig c) {
  Reader r(j, "config");
  std::string kind = protocol_kind_name(c.protocol);
  r.get("protocol", kind);
  c.protocol = parse_protocol_kind(kind);
  r.get("seeds", c.seeds);
  r.get_nonneg("table1_domains", c.table1_domains);
  r.get("generalization_sources", c.generalization_sources);
  r.get_nonneg("eval_partners", c.eval_partners);
  if (const Json* d = r.sub("data")) c.data = data_config_from_json(*d, c.data);
  if (const Json* t = r.sub("train")) c.train = train_config_from_json(*t, c.train);
  r.finish();
  c.validate();
  return c;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::exception&) {
    value = raw;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override '" + assignment + "': '" + part + "' is not inside an object");
      *node = Json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fsca
