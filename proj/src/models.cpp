#include "mge/models.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mge {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "convstack") return ModelKind::convstack;
  if (name == "resnet") return ModelKind::resnet;
  if (name == "unet") return ModelKind::unet;
  throw std::runtime_error("unknown model kind '" + name + "'");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::convstack: return "convstack";
    case ModelKind::resnet: return "resnet";
    case ModelKind::unet: return "unet";
  }
  throw std::runtime_error("unknown model kind");
}

ModelConfig convstack_config(int in_ch, int out_ch) {
  ModelConfig cfg;
  cfg.kind = ModelKind::convstack;
  cfg.channels = {in_ch, 16, 16, out_ch};
  return cfg;
}

ModelConfig resnet_config(int in_ch, int out_ch) {
  ModelConfig cfg;
  cfg.kind = ModelKind::resnet;
  cfg.channels = {in_ch, 32, out_ch};
  cfg.depth = 2;
  return cfg;
}

ModelConfig unet_config(int in_ch, int out_ch) {
  ModelConfig cfg;
  cfg.kind = ModelKind::unet;
  cfg.channels = {in_ch, 8, 16, out_ch};
  return cfg;
}

ModelConfig default_model_config(ModelKind kind, int in_ch, int out_ch) {
  switch (kind) {
    case ModelKind::convstack: return convstack_config(in_ch, out_ch);
    case ModelKind::resnet: return resnet_config(in_ch, out_ch);
    case ModelKind::unet: return unet_config(in_ch, out_ch);
  }
  throw std::runtime_error("unknown model kind");
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.kernel_size < 1 || cfg_.kernel_size % 2 == 0)
    throw std::runtime_error("Model: kernel_size " + std::to_string(cfg_.kernel_size) +
                             " must be odd and positive");
  for (int c : cfg_.channels)
    if (c <= 0) throw std::runtime_error("Model: channel counts must be positive");
  const int k = cfg_.kernel_size;
  switch (cfg_.kind) {
    case ModelKind::convstack: {
      if (cfg_.channels.size() < 2)
        throw std::runtime_error("convstack: need at least [C_in, C_out] channels");
      const int n = static_cast<int>(cfg_.channels.size()) - 1;
      for (int i = 0; i < n; ++i)
        convs_.push_back({"conv" + std::to_string(i + 1), cfg_.channels[static_cast<std::size_t>(i)],
                          cfg_.channels[static_cast<std::size_t>(i + 1)], k, i == n - 1});
      break;
    }
    case ModelKind::resnet: {
      if (cfg_.channels.size() != 3)
        throw std::runtime_error("resnet: channels must be [C_in, hidden, C_out], got " +
                                 std::to_string(cfg_.channels.size()) + " entries");
      if (cfg_.depth < 1) throw std::runtime_error("resnet: depth must be at least 1");
      const int hid = cfg_.channels[1];
      convs_.push_back({"stem", cfg_.channels[0], hid, k, false});
      for (int b = 1; b <= cfg_.depth; ++b) {
        convs_.push_back({"block" + std::to_string(b) + ".res1", hid, hid, k, false});
        convs_.push_back({"block" + std::to_string(b) + ".res2", hid, hid, k, false});
      }
      convs_.push_back({"head", hid, cfg_.channels[2], k, true});
      break;
    }
    case ModelKind::unet: {
      if (cfg_.channels.size() < 4)
        throw std::runtime_error("unet: channels must be [C_in, f_1, ..., f_levels, C_out] "
                                 "with at least 2 levels");
      unet_levels_ = static_cast<int>(cfg_.channels.size()) - 2;
      const auto f = [&](int i) { return cfg_.channels[static_cast<std::size_t>(i)]; };
      // Encoder levels 1..L-1 at decreasing resolution.
      for (int i = 1; i <= unet_levels_ - 1; ++i) {
        const std::string base = "enc" + std::to_string(i);
        convs_.push_back({base + ".conv", f(i - 1), f(i), k, false});
        convs_.push_back({base + ".res1", f(i), f(i), k, false});
        convs_.push_back({base + ".res2", f(i), f(i), k, false});
      }
      // Bottleneck convolutions are 1x1: at the minimum input extent
      // 2^levels the bottom plane is 2x2, below the interior kernel size.
      convs_.push_back({"bottom.conv", f(unet_levels_ - 1), f(unet_levels_), 1, false});
      convs_.push_back({"bottom.res1", f(unet_levels_), f(unet_levels_), 1, false});
      convs_.push_back({"bottom.res2", f(unet_levels_), f(unet_levels_), 1, false});
      for (int i = unet_levels_ - 1; i >= 1; --i) {
        const std::string base = "dec" + std::to_string(i);
        const int below = f(i + 1);
        convs_.push_back({base + ".conv", below + f(i), f(i), k, false});
        convs_.push_back({base + ".res1", f(i), f(i), k, false});
        convs_.push_back({base + ".res2", f(i), f(i), k, false});
      }
      convs_.push_back({"head", f(1), cfg_.channels[cfg_.channels.size() - 1], k, true});
      break;
    }
  }
}

int Model::in_channels() const { return cfg_.channels.front(); }
int Model::out_channels() const { return cfg_.channels.back(); }

int Model::min_spatial() const {
  if (cfg_.kind == ModelKind::unet) return 1 << unet_levels_;
  return cfg_.kernel_size;
}

int Model::spatial_divisor() const {
  if (cfg_.kind == ModelKind::unet) return 1 << (unet_levels_ - 1);
  return 1;
}

void Model::check_spatial(int H, int W) const {
  const int m = min_spatial();
  if (H < m)
    throw std::runtime_error(model_kind_name(cfg_.kind) + ": input height " +
                             std::to_string(H) + " below minimum spatial extent " +
                             std::to_string(m));
  if (W < m)
    throw std::runtime_error(model_kind_name(cfg_.kind) + ": input width " +
                             std::to_string(W) + " below minimum spatial extent " +
                             std::to_string(m));
  const int d = spatial_divisor();
  if (H % d != 0 || W % d != 0)
    throw std::runtime_error(model_kind_name(cfg_.kind) + ": input " + std::to_string(H) +
                             "x" + std::to_string(W) + " not divisible by " +
                             std::to_string(d));
}

Params Model::init_params(Rng& rng) const {
  Params p;
  for (const ConvSpec& c : convs_) {
    Tensor w({c.cout, c.cin, c.k, c.k});
    if (!(c.final_layer && cfg_.zero_init_final)) {
      const double a = 1.0 / std::sqrt(static_cast<double>(c.cin) * c.k * c.k);
      for (double& v : w.data) v = rng.uniform(-a, a);
    }
    p.add(c.name + ".weight", std::move(w));
    p.add(c.name + ".bias", Tensor({c.cout}));
  }
  return p;
}

const Model::ConvSpec& Model::spec(const std::string& name) const {
  for (const ConvSpec& c : convs_)
    if (c.name == name) return c;
  throw std::runtime_error("Model: no conv named '" + name + "'");
}

Tape::NodeId Model::apply_conv(Tape& tape,
                               const std::unordered_map<std::string, Tape::NodeId>& params,
                               const std::string& name, Tape::NodeId x) const {
  const ConvSpec& c = spec(name);
  const auto wit = params.find(name + ".weight");
  const auto bit = params.find(name + ".bias");
  if (wit == params.end() || bit == params.end())
    throw std::runtime_error("Model::forward: parameter '" + name + "' missing from tape");
  return tape.conv2d(x, wit->second, bit->second, (c.k - 1) / 2);
}

Tape::NodeId Model::forward(Tape& tape,
                            const std::unordered_map<std::string, Tape::NodeId>& params,
                            Tape::NodeId input) const {
  const Tensor& in = tape.value(input);
  if (in.ndim() != 4)
    throw std::runtime_error("Model::forward: input must be [N,C,H,W], got " +
                             shape_str(in.shape));
  if (in.dim(1) != in_channels())
    throw std::runtime_error("Model::forward: input channels " + std::to_string(in.dim(1)) +
                             " != model input channels " + std::to_string(in_channels()));
  check_spatial(in.dim(2), in.dim(3));

  const auto res_block = [&](Tape::NodeId x, const std::string& base) {
    return tape.add(x, apply_conv(tape, params, base + ".res2",
                                  tape.relu(apply_conv(tape, params, base + ".res1", x))));
  };

  switch (cfg_.kind) {
    case ModelKind::convstack: {
      Tape::NodeId x = input;
      for (std::size_t i = 0; i < convs_.size(); ++i) {
        x = apply_conv(tape, params, convs_[i].name, x);
        if (i + 1 < convs_.size()) x = tape.relu(x);
      }
      return x;
    }
    case ModelKind::resnet: {
      Tape::NodeId x = tape.relu(apply_conv(tape, params, "stem", input));
      for (int b = 1; b <= cfg_.depth; ++b) x = res_block(x, "block" + std::to_string(b));
      return apply_conv(tape, params, "head", x);
    }
    case ModelKind::unet: {
      std::vector<Tape::NodeId> skips;
      Tape::NodeId x = input;
      for (int i = 1; i <= unet_levels_ - 1; ++i) {
        const std::string base = "enc" + std::to_string(i);
        Tape::NodeId e = tape.relu(apply_conv(tape, params, base + ".conv", x));
        e = res_block(e, base);
        skips.push_back(e);
        x = tape.avgpool2(e);
      }
      x = tape.relu(apply_conv(tape, params, "bottom.conv", x));
      x = res_block(x, "bottom");
      for (int i = unet_levels_ - 1; i >= 1; --i) {
        const std::string base = "dec" + std::to_string(i);
        Tape::NodeId up = tape.upsample_nearest2(x);
        Tape::NodeId skip = skips[static_cast<std::size_t>(i - 1)];
        if (cfg_.unet_disable_skips)
          skip = tape.leaf(Tensor(tape.value(skip).shape));
        x = tape.concat_channels(up, skip);
        x = tape.relu(apply_conv(tape, params, base + ".conv", x));
        x = res_block(x, base);
      }
      return apply_conv(tape, params, "head", x);
    }
  }
  throw std::runtime_error("Model::forward: unknown model kind");
}

// Checkpoint layout (little-endian): the 8-byte magic "MGEPARAM", u32
// version (currently 1), u32 entry count; then per entry: u32 name length,
// name bytes, u32 ndim, i32 dims, and the f64 payload as raw bits in
// row-major order. Entries appear in parameter insertion order.
namespace {

constexpr char kMagic[8] = {'M', 'G', 'E', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint '" + path + "': truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Params& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint '" + path + "': cannot open for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod(out, static_cast<std::int32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint '" + path + "': write failed");
}

Params load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint '" + path + "': cannot open");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint '" + path + "': bad magic");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint '" + path + "': unsupported version " +
                             std::to_string(version));
  const auto count = read_pod<std::uint32_t>(in, path);
  if (count > 1u << 20)
    throw std::runtime_error("checkpoint '" + path + "': implausible entry count");
  Params params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    if (name_len > 1u << 16)
      throw std::runtime_error("checkpoint '" + path + "': implausible name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint '" + path + "': truncated file");
    const auto ndim = read_pod<std::uint32_t>(in, path);
    if (ndim > 8)
      throw std::runtime_error("checkpoint '" + path + "': implausible rank");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = read_pod<std::int32_t>(in, path);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint '" + path + "': truncated file");
    params.add(std::move(name), std::move(t));
  }
  return params;
}

}  // namespace mge
