#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mge/rng.hpp"
#include "mge/tape.hpp"
#include "mge/tensor.hpp"

namespace mge {

enum class ModelKind { convstack, resnet, unet };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::convstack;
  // convstack: [C_in, hidden..., C_out], one conv per adjacent pair.
  // resnet:    [C_in, hidden, C_out] with `depth` residual blocks.
  // unet:      [C_in, f_1, ..., f_levels, C_out]; f_levels is the bottleneck.
  std::vector<int> channels;
  int depth = 2;        // resnet: number of residual blocks
  int kernel_size = 3;  // interior convolutions (unet bottleneck uses 1x1)
  bool zero_init_final = true;
  bool unet_disable_skips = false;  // test hook: feeds zeros instead of skips
};

// Desk-scale defaults.
ModelConfig convstack_config(int in_ch, int out_ch);  // [C, 16, 16, C]
ModelConfig resnet_config(int in_ch, int out_ch);     // 2 blocks, 32 hidden
ModelConfig unet_config(int in_ch, int out_ch);       // 2 levels, (8, 16)
ModelConfig default_model_config(ModelKind kind, int in_ch, int out_ch);

// Image-to-image network. Parameters are resolution independent: the same
// Params forward at any spatial size that passes check_spatial().
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  int in_channels() const;
  int out_channels() const;
  // Smallest accepted spatial extent.
  int min_spatial() const;
  // H and W must be divisible by this (unet pooling chain).
  int spatial_divisor() const;
  void check_spatial(int H, int W) const;

  // Weights uniform in [-a, a] with a = 1/sqrt(fan_in); biases zero; the
  // final layer is fully zero-initialized when cfg.zero_init_final is set,
  // so the initial prediction is identically zero.
  Params init_params(Rng& rng) const;

  Tape::NodeId forward(Tape& tape,
                       const std::unordered_map<std::string, Tape::NodeId>& params,
                       Tape::NodeId input) const;

 private:
  struct ConvSpec {
    std::string name;
    int cin = 0, cout = 0, k = 3;
    bool final_layer = false;
  };
  const ConvSpec& spec(const std::string& name) const;
  Tape::NodeId apply_conv(Tape& tape,
                          const std::unordered_map<std::string, Tape::NodeId>& params,
                          const std::string& name, Tape::NodeId x) const;

  ModelConfig cfg_;
  std::vector<ConvSpec> convs_;  // construction order fixes init order
  int unet_levels_ = 0;
};

// Versioned binary container of named tensors; see save_checkpoint() in
// models.cpp for the exact layout. Round-trips bit exactly.
void save_checkpoint(const std::string& path, const Params& params);
Params load_checkpoint(const std::string& path);

}  // namespace mge
