#pragma once

#include <torch/torch.h>

#include <memory>

#include "cloudmae/cloud_head.hpp"

namespace cloudmae {

struct UNetConfig {
  int64_t depth = 4;  // resolution levels
  int64_t base_channels = 20;
  int64_t blocks_per_level = 2;
  int64_t in_channels = 11;
  int64_t out_channels = 90;

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

struct ResBlockImpl : torch::nn::Module {
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::GroupNorm gn1{nullptr}, gn2{nullptr};
};
TORCH_MODULE(ResBlock);

struct ResUNetImpl : torch::nn::Module {
  explicit ResUNetImpl(UNetConfig config);

  torch::Tensor forward_features(const torch::Tensor& image);  // [B, base, H, W]
  torch::Tensor forward(const torch::Tensor& image);           // [B, 90, H, W]

  UNetConfig config;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::ModuleList enc_blocks, downs, ups, fuses, dec_blocks;
  torch::nn::Conv2d head_out{nullptr};
};
TORCH_MODULE(ResUNet);

ResUNet build_unet(const UNetConfig& config, uint64_t init_seed = 1);

// same fine-tune/predict surface as the ViT regressor
std::unique_ptr<VolumeBackend> make_unet_backend(ResUNet model);
VolumeGrid predict_volume(ResUNet& model, const SceneSample& sample);

}  // namespace cloudmae
