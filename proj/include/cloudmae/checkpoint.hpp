#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cloudmae {

// single-file checkpoint: magic, header JSON, then named float32 blobs in
// header order; shared by pre-training, fine-tuning, and the U-Net so
// encoders transfer between stages
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, torch::Tensor> tensors;
};

// moments keyed by parameter name so optimizer state serializes by name
struct AdamState {
  int64_t step_count = 0;
  std::map<std::string, torch::Tensor> m;
  std::map<std::string, torch::Tensor> v;
};

void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<std::pair<std::string, torch::Tensor>>& params,
                     const AdamState* adam = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// copies tensors into same-named module parameters; with `required_prefixes`
// non-empty, only those name prefixes transfer and each must match something
void load_parameters(torch::nn::Module& module, const Checkpoint& ckpt,
                     const std::vector<std::string>& required_prefixes = {});

AdamState adam_state_from_checkpoint(const Checkpoint& ckpt);

}  // namespace cloudmae
