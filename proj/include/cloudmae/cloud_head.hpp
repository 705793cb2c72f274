#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cloudmae/mae_core.hpp"

namespace cloudmae {

struct VolumeGrid {
  torch::Tensor values;  // [90, 256, 256] normalized reflectivity
  double dbz_min = kDbzMin;
  double dbz_max = kDbzMax;
};

enum class FinetuneRegime { from_scratch, frozen_backbone, unfrozen_backbone };
const char* regime_name(FinetuneRegime r);
FinetuneRegime regime_from_name(const std::string& name);

// transposed-conv stage widths for the regression head; the list ends with the
// feature width in front of the pointwise output layer
std::vector<int64_t> default_head_channels(const ViTConfig& config);

struct VolumeRegressorImpl : torch::nn::Module {
  explicit VolumeRegressorImpl(ViTConfig config);

  torch::Tensor token_embedding(int64_t timestamp, const torch::Tensor& latlon,
                                torch::ScalarType dtype) const;
  // encoder + upsampling trunk, stops before the pointwise layer
  torch::Tensor forward_features(const torch::Tensor& tokens,
                                 const torch::Tensor& embeddings);
  // full volume [B, 90, H, W]
  torch::Tensor forward_volume(const torch::Tensor& tokens,
                               const torch::Tensor& embeddings);

  void freeze_encoder();

  ViTConfig config;
  // encoder mirrors the MAE naming so checkpoints transfer by name
  torch::nn::Linear patch_embed{nullptr};
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::ModuleList head_stages;
  torch::nn::Conv2d head_out{nullptr};
};
TORCH_MODULE(VolumeRegressor);

VolumeRegressor build_head(const ViTConfig& config, uint64_t init_seed = 1);
void load_encoder_from_checkpoint(VolumeRegressor& model,
                                  const std::filesystem::path& ckpt_path);

// column j of the result is volume[:, row_j, col_j] (nearest-pixel indexing)
torch::Tensor gather_track(const VolumeGrid& volume, const OverpassTrack& track);
torch::Tensor gather_columns(const torch::Tensor& values, const OverpassTrack& track);

// mean squared error over all 90*L slice entries
torch::Tensor track_loss(const torch::Tensor& pred_slice,
                         const torch::Tensor& target_slice);

// shared surface for the regressor and the U-Net baseline so fine-tuning and
// evaluation run one code path
class VolumeBackend {
 public:
  virtual ~VolumeBackend() = default;
  virtual torch::Tensor features_batch(const std::vector<const SceneSample*>& batch) = 0;
  virtual std::pair<torch::Tensor, torch::Tensor> output_projection() const = 0;
  virtual torch::Tensor volume_values(const SceneSample& sample) = 0;
  virtual torch::nn::Module& module() = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual std::string kind() const = 0;
};

std::unique_ptr<VolumeBackend> make_vit_backend(VolumeRegressor model);

// never reads sample.track; eval-mode deterministic
VolumeGrid predict_volume(VolumeBackend& backend, const SceneSample& sample);
VolumeGrid predict_volume(VolumeRegressor& model, const SceneSample& sample);

// training-path slice prediction: gather trunk features on the track, then the
// pointwise projection (same map the full volume applies per pixel)
torch::Tensor predict_track_slice(VolumeBackend& backend, const torch::Tensor& features,
                                  int64_t batch_index, const OverpassTrack& track);

struct FinetuneHyper {
  double lr = 1.5e-4;
  int64_t batch_size = 4;
  int64_t epochs = 50;
  double subsample_fraction = 0.50;
  uint64_t seed = 0;
};

TrainResult finetune(VolumeBackend& backend, FinetuneRegime regime,
                     const std::filesystem::path& data_root, const FinetuneHyper& hyper,
                     const std::filesystem::path& out_dir,
                     nlohmann::json provenance = nlohmann::json::object(),
                     const std::filesystem::path& resume_from = {});

}  // namespace cloudmae
