#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "cloudmae/checkpoint.hpp"
#include "cloudmae/sample_store.hpp"

namespace cloudmae {

// Adam over named parameters; moments live in AdamState so checkpoints can
// capture the full optimizer exactly
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, AdamState state = {}) : lr_(lr), state_(std::move(state)) {}

  void step(const std::vector<std::pair<std::string, torch::Tensor>>& params);
  void zero_grad(const std::vector<std::pair<std::string, torch::Tensor>>& params);
  const AdamState& state() const { return state_; }
  double lr() const { return lr_; }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  AdamState state_;
};

// trainable (requires_grad) parameters in name order
std::vector<std::pair<std::string, torch::Tensor>> trainable_parameters(
    torch::nn::Module& module);
std::vector<std::pair<std::string, torch::Tensor>> all_parameters(
    torch::nn::Module& module);
int64_t count_parameters(const torch::nn::Module& module, bool trainable_only = false);

// deterministic re-initialization keyed by (seed, parameter name)
void init_parameters(torch::nn::Module& module, uint64_t seed);

// dataset reader with optional whole-sample memory cache (desk-scale sets fit)
class SampleLoader {
 public:
  SampleLoader(std::filesystem::path dataset_root, Split split, bool cache = true);
  const SceneSample& get(const std::string& id);
  const std::filesystem::path& root() const { return root_; }
  Split split() const { return split_; }

 private:
  std::filesystem::path root_;
  Split split_;
  bool cache_;
  std::unordered_map<std::string, SceneSample> cached_;
  SceneSample scratch_;
};

struct TrainLogEntry {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_psnr = 0.0;  // fine-tuning only
  double val_ssim = 0.0;  // fine-tuning only
  double seconds = 0.0;
};

void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainLogEntry>& log, bool with_quality);

}  // namespace cloudmae
