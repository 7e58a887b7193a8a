#include "fsca/netblocks.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "fsca/errors.hpp"
#include "fsca/ops.hpp"
#include "fsca/rng.hpp"

namespace fsca {

void NetConfig::validate() const {
  if (in_channels == 0 || feature_channels == 0 || latent_dim == 0) {
    throw ConfigError("net: channel counts and latent_dim must be positive");
  }
  for (auto c : backbone_channels) {
    if (c == 0) throw ConfigError("net: backbone channels must be positive");
  }
  if (!(density_scale > 0.0)) throw ConfigError("net: density_scale must be > 0");
  if (feature_channels < 2) {
    throw ConfigError("net: feature_channels must be >= 2 (the counter narrows to C/2)");
  }
}

Conv make_conv(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
               std::size_t pad, std::uint64_t seed) {
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(c_in * kernel * kernel));
  std::vector<double> w(c_out * c_in * kernel * kernel);
  for (auto& v : w) v = rng.normal(0.0, stddev);
  Conv conv;
  conv.weight = Tensor::from_data({c_out, c_in, kernel, kernel}, std::move(w), true);
  conv.bias = Tensor::zeros({c_out}, true);
  conv.stride = stride;
  conv.pad = pad;
  return conv;
}

Linear make_linear(std::size_t in, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  const double stddev = std::sqrt(1.0 / static_cast<double>(in));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.normal(0.0, stddev);
  return {Tensor::from_data({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

namespace {

AttentionProjections make_projections(std::size_t c, std::uint64_t seed) {
  // Query and key start near the identity; the value map starts near zero so
  // the attention branch begins as a small residual.
  auto near = [c](double diagonal, std::uint64_t s) {
    Rng rng(s);
    std::vector<double> w(c * c);
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        w[i * c + j] = (i == j ? diagonal : 0.0) + rng.normal(0.0, 0.01);
      }
    }
    return Tensor::from_data({c, c}, std::move(w), true);
  };
  return {near(1.0, derive_seed(seed, 0)), near(1.0, derive_seed(seed, 1)),
          near(0.0, derive_seed(seed, 2))};
}

}  // namespace

NetParams init_net_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  NetParams p;
  p.config = config;
  const auto& bc = config.backbone_channels;
  const std::size_t c = config.feature_channels;
  const std::size_t cb = config.base_channels();
  std::uint64_t stream = 0;
  auto next = [&] { return derive_seed(seed, stream++); };

  std::size_t c_in = config.in_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    p.backbone[i] = make_conv(c_in, bc[i], 3, 1, 1, next());
    c_in = bc[i];
  }
  p.di_head = {make_conv(cb, c, 3, 1, 1, next()), make_conv(c, c, 1, 1, 0, next())};
  p.ds_head = {make_conv(cb, c, 3, 1, 1, next()), make_conv(c, c, 1, 1, 0, next())};
  p.decoder[0] = make_conv(2 * c, c, 3, 1, 1, next());
  p.decoder[1] = make_conv(c, c, 1, 1, 0, next());
  p.decoder[2] = make_conv(c, 2 * c, 3, 1, 1, next());
  p.counter[0] = make_conv(2 * c, c, 3, 1, 1, next());
  p.counter[1] = make_conv(c, c / 2, 3, 1, 1, next());
  p.counter[2] = make_conv(c / 2, 1, 3, 1, 1, next());
  p.embed_di = make_linear(c, config.latent_dim, next());
  p.embed_ds = make_linear(c, config.latent_dim, next());
  if (config.attention_projections) {
    p.attn_di = make_projections(c, next());
    p.attn_ds = make_projections(c, next());
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> NetParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto conv = [&](const std::string& name, const Conv& cv) {
    out.emplace_back(name + ".weight", cv.weight);
    out.emplace_back(name + ".bias", cv.bias);
  };
  for (std::size_t i = 0; i < backbone.size(); ++i) conv("backbone." + std::to_string(i), backbone[i]);
  conv("di_head.spatial", di_head.spatial);
  conv("di_head.pointwise", di_head.pointwise);
  conv("ds_head.spatial", ds_head.spatial);
  conv("ds_head.pointwise", ds_head.pointwise);
  for (std::size_t i = 0; i < decoder.size(); ++i) conv("decoder." + std::to_string(i), decoder[i]);
  for (std::size_t i = 0; i < counter.size(); ++i) conv("counter." + std::to_string(i), counter[i]);
  out.emplace_back("embed_di.weight", embed_di.weight);
  out.emplace_back("embed_di.bias", embed_di.bias);
  out.emplace_back("embed_ds.weight", embed_ds.weight);
  out.emplace_back("embed_ds.bias", embed_ds.bias);
  for (const auto& [name, proj] : {std::pair{"attn_di", &attn_di}, std::pair{"attn_ds", &attn_ds}}) {
    if (!*proj) continue;
    out.emplace_back(std::string(name) + ".query", (*proj)->query);
    out.emplace_back(std::string(name) + ".key", (*proj)->key);
    out.emplace_back(std::string(name) + ".value", (*proj)->value);
  }
  return out;
}

std::vector<Tensor> NetParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor conv_forward(const Conv& conv, const Tensor& x) {
  return conv2d(x, conv.weight, conv.bias, conv.stride, conv.pad);
}

Tensor linear_forward(const Linear& layer, const Tensor& x) {
  if (x.rank() == 1) {
    const Tensor row = reshape(x, {1, x.dim(0)});
    return reshape(add_row_bias(matmul(row, layer.weight), layer.bias), {layer.weight.dim(1)});
  }
  return add_row_bias(matmul(x, layer.weight), layer.bias);
}

namespace {

// 2×2 average pooling; halves both spatial extents.
Tensor downsample(const Tensor& x) { return scale(sum_pool2d(x, 2), 0.25); }

Tensor head_forward(const ProjectionHead& head, const Tensor& f_base) {
  return conv_forward(head.pointwise, relu(conv_forward(head.spatial, f_base)));
}

void require_channels(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 3 || x.dim(0) != channels) {
    throw DimensionError(std::string(who) + ": expected " + std::to_string(channels) +
                         " input channels, got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor backbone_forward(const NetParams& params, const Tensor& image) {
  require_channels(image, params.config.in_channels, "backbone_forward");
  if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0) {
    throw DimensionError("backbone_forward: image extents " + shape_str(image.shape()) +
                         " must be divisible by 4");
  }
  Tensor x = relu(conv_forward(params.backbone[0], image));
  x = relu(conv_forward(params.backbone[1], downsample(x)));
  x = relu(conv_forward(params.backbone[2], x));
  x = relu(conv_forward(params.backbone[3], downsample(x)));
  return x;
}

SeparatedFeatures separate(const NetParams& params, const Tensor& f_base) {
  require_channels(f_base, params.config.base_channels(), "separate");
  return {head_forward(params.di_head, f_base), head_forward(params.ds_head, f_base)};
}

Tensor decoder_forward(const NetParams& params, const Tensor& f_dsdi) {
  require_channels(f_dsdi, 2 * params.config.feature_channels, "decoder_forward");
  Tensor x = relu(conv_forward(params.decoder[0], f_dsdi));
  x = relu(conv_forward(params.decoder[1], x));
  return conv_forward(params.decoder[2], x);
}

Tensor counter_forward(const NetParams& params, const Tensor& refined) {
  require_channels(refined, 2 * params.config.feature_channels, "counter_forward");
  Tensor x = relu(conv_forward(params.counter[0], refined));
  x = relu(conv_forward(params.counter[1], x));
  return scale(relu(conv_forward(params.counter[2], x)), 1.0 / params.config.density_scale);
}

double count_from_density(const Tensor& density) {
  double total = 0.0;
  for (double v : density.data()) {
    if (v < 0.0) throw ContractError("count_from_density: negative density entry");
    total += v;
  }
  return total;
}

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'S', 'C', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(path_, "truncated checkpoint");
  }
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::string bytes(kCheckpointMagic, kCheckpointMagic + 8);
  put_u32(bytes, kCheckpointVersion);
  put_u32(bytes, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(bytes, static_cast<std::uint32_t>(name.size()));
    bytes += name;
    put_u32(bytes, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(bytes, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open checkpoint for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string(), "checkpoint write failed");
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open checkpoint");
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError(path.string(), "bad magic (expected FSCACKPT)");
  }
  ByteReader reader(bytes.substr(8), path.string());
  const auto version = reader.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string(), "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = reader.u32();
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = reader.take(reader.u32());
    const auto rank = reader.u32();
    Shape shape(rank);
    for (auto& e : shape) e = reader.u32();
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<double>(std::bit_cast<float>(reader.u32()));
    out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data), true));
  }
  if (!reader.done()) throw FormatError(path.string(), "trailing bytes after last tensor");
  return out;
}

void assign_parameters(const NamedTensors& target, const NamedTensors& source,
                       const std::string& origin) {
  std::map<std::string, Tensor> lookup(source.begin(), source.end());
  for (const auto& [name, t] : target) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw FormatError(origin, "missing tensor '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw FormatError(origin, "tensor '" + name + "' has shape " +
                                    shape_str(it->second.shape()) + ", expected " +
                                    shape_str(t.shape()));
    }
    Tensor dst = t;
    auto values = dst.mutable_data();
    const auto src = it->second.data();
    std::copy(src.begin(), src.end(), values.begin());
  }
}

}  // namespace fsca
