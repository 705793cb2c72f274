#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "cloudmae/geo_encoding.hpp"
#include "cloudmae/sample_store.hpp"
#include "cloudmae/tokenizer.hpp"
#include "cloudmae/training.hpp"

namespace cloudmae {

enum class ViTScale { small, base, custom };

const char* scale_name(ViTScale s);
ViTScale scale_from_name(const std::string& name);

struct ViTConfig {
  ViTScale scale = ViTScale::small;
  int64_t token_size = 8;  // p, {8, 16} for the named scales
  int64_t image_size = 256;
  int64_t in_channels = 11;
  int64_t embed_dim = 384;
  int64_t depth = 12;
  int64_t heads = 6;
  double mlp_ratio = 4.0;
  int64_t decoder_dim = 256;
  int64_t decoder_depth = 4;
  int64_t decoder_heads = 8;
  bool use_time = false;
  bool use_coords = false;
  std::vector<int64_t> head_channels;  // regression head stages; empty = default

  static ViTConfig named(ViTScale scale, int64_t token_size, bool use_time = false,
                         bool use_coords = false);

  int64_t grid_size() const { return image_size / token_size; }
  int64_t token_count() const { return grid_size() * grid_size(); }
  int64_t token_width() const { return in_channels * token_size * token_size; }
  EncodingConfig encoding() const {
    return make_encoding_config(embed_dim, use_time, use_coords);
  }
  void validate() const;  // named-scale width/shape invariants

  nlohmann::json to_json() const;
  static ViTConfig from_json(const nlohmann::json& j);
};

struct TransformerBlockImpl : torch::nn::Module {
  TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x);  // [B, T, D]

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear qkv{nullptr}, proj{nullptr}, fc1{nullptr}, fc2{nullptr};
  int64_t heads_;
};
TORCH_MODULE(TransformerBlock);

struct MaskedAutoencoderImpl : torch::nn::Module {
  explicit MaskedAutoencoderImpl(ViTConfig config);

  // per-sample additive token embedding [T, embed_dim] in the given dtype
  torch::Tensor token_embedding(int64_t timestamp, const torch::Tensor& latlon,
                                torch::ScalarType dtype) const;

  // encoder sees gathered visible tokens only; decoder fills masked slots with
  // the shared mask token and predicts every token's pixel vector
  torch::Tensor forward_batch(const torch::Tensor& tokens,       // [B, T, P]
                              const torch::Tensor& embeddings,   // [B, T, E]
                              const std::vector<MaskPlan>& plans);

  // encoder-only path (all tokens visible); used by the regression stage
  torch::Tensor encode_all(const torch::Tensor& tokens,
                           const torch::Tensor& embeddings);

  ViTConfig config;
  torch::nn::Linear patch_embed{nullptr};
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear decoder_embed{nullptr};
  torch::nn::ModuleList decoder_blocks;
  torch::nn::LayerNorm decoder_norm{nullptr};
  torch::nn::Linear decoder_pred{nullptr};
  torch::Tensor mask_token;   // [decoder_dim]
  torch::Tensor decoder_pos;  // buffer [T, decoder_dim], fixed sinusoidal
};
TORCH_MODULE(MaskedAutoencoder);

MaskedAutoencoder build_mae(const ViTConfig& config, uint64_t init_seed = 1);

// single-sample forward per the op contract
torch::Tensor mae_forward(MaskedAutoencoder& model, const SceneSample& sample,
                          const MaskPlan& plan);

// mean squared error over masked token entries only
torch::Tensor masked_mse(const torch::Tensor& pred, const torch::Tensor& target,
                         const MaskPlan& plan);
torch::Tensor masked_mse_batch(const torch::Tensor& pred, const torch::Tensor& target,
                               const std::vector<MaskPlan>& plans);

struct PretrainHyper {
  double lr = 1.5e-4;
  int64_t batch_size = 8;
  int64_t epochs = 50;
  double subsample_fraction = 0.10;
  double mask_ratio = 0.75;
  uint64_t seed = 0;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::vector<TrainLogEntry> log;
  double best_val_loss = 0.0;
  int64_t best_epoch = -1;
};

// Adam at hyper.lr, per-epoch subsampling, lowest-val-loss checkpointing;
// emits train_log.jsonl under out_dir; optionally resumes from a last-epoch
// checkpoint (counter-keyed streams make the continuation exact)
TrainResult pretrain(MaskedAutoencoder& model, const std::filesystem::path& data_root,
                     const PretrainHyper& hyper, const std::filesystem::path& out_dir,
                     const std::filesystem::path& resume_from = {});

}  // namespace cloudmae
