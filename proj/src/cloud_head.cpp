#include "cloudmae/cloud_head.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "cloudmae/eval_metrics.hpp"
#include "cloudmae/rng.hpp"

namespace cloudmae {

using nlohmann::json;
using torch::indexing::Slice;

const char* regime_name(FinetuneRegime r) {
  switch (r) {
    case FinetuneRegime::from_scratch: return "from_scratch";
    case FinetuneRegime::frozen_backbone: return "frozen_backbone";
    case FinetuneRegime::unfrozen_backbone: return "unfrozen_backbone";
  }
  throw std::logic_error("unknown regime");
}

FinetuneRegime regime_from_name(const std::string& name) {
  for (FinetuneRegime r : {FinetuneRegime::from_scratch, FinetuneRegime::frozen_backbone,
                           FinetuneRegime::unfrozen_backbone})
    if (name == regime_name(r)) return r;
  throw std::invalid_argument("unknown fine-tune regime: " + name);
}

std::vector<int64_t> default_head_channels(const ViTConfig& config) {
  if (!config.head_channels.empty()) return config.head_channels;
  if (config.scale != ViTScale::custom) {
    // widths land the published trainable totals (345k head, ~22M unfrozen)
    if (config.token_size == 8) return {72, 56, 90};
    return {128, 64, 48, 90};
  }
  int64_t stages = 0;
  for (int64_t p = config.token_size; p > 1; p /= 2) ++stages;
  std::vector<int64_t> channels;
  int64_t c = std::max<int64_t>(8, config.embed_dim / 2);
  for (int64_t i = 0; i < stages; ++i) {
    channels.push_back(c);
    c = std::max<int64_t>(8, c * 2 / 3);
  }
  return channels;
}

VolumeRegressorImpl::VolumeRegressorImpl(ViTConfig cfg) : config(std::move(cfg)) {
  config.validate();
  const int64_t grid = config.grid_size();
  int64_t upsample = config.image_size / grid;
  if ((upsample & (upsample - 1)) != 0)
    throw std::invalid_argument("token grid must upsample to the image by powers of 2");

  patch_embed = register_module(
      "patch_embed", torch::nn::Linear(config.token_width(), config.embed_dim));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < config.depth; ++i)
    blocks->push_back(TransformerBlock(config.embed_dim, config.heads, config.mlp_ratio));
  norm = register_module(
      "norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.embed_dim})));

  std::vector<int64_t> channels = default_head_channels(config);
  int64_t expected_stages = 0;
  for (int64_t p = config.token_size; p > 1; p /= 2) ++expected_stages;
  if (static_cast<int64_t>(channels.size()) != expected_stages)
    throw std::invalid_argument("head needs one stride-2 stage per factor of 2");

  head_stages = register_module("head_stages", torch::nn::ModuleList());
  int64_t in_ch = config.embed_dim;
  for (int64_t out_ch : channels) {
    head_stages->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in_ch, out_ch, 3)
            .stride(2)
            .padding(1)
            .output_padding(1)));
    in_ch = out_ch;
  }
  head_out = register_module(
      "head_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, kHeightBins, 1)));
}

torch::Tensor VolumeRegressorImpl::token_embedding(int64_t timestamp,
                                                   const torch::Tensor& latlon,
                                                   torch::ScalarType dtype) const {
  torch::Tensor centers;
  if (config.use_coords)
    centers = token_latlon_centers(latlon, config.token_size);
  return compose_token_embedding(config.grid_size(), config.grid_size(),
                                 config.encoding(), timestamp, centers)
      .to(dtype);
}

torch::Tensor VolumeRegressorImpl::forward_features(const torch::Tensor& tokens,
                                                    const torch::Tensor& embeddings) {
  const int64_t b = tokens.size(0), grid = config.grid_size();
  torch::Tensor x = patch_embed(tokens) + embeddings;
  for (const auto& block : *blocks) x = block->as<TransformerBlockImpl>()->forward(x);
  x = norm(x);  // [B, T, E]
  x = x.transpose(1, 2).reshape({b, config.embed_dim, grid, grid});
  for (const auto& stage : *head_stages)
    x = torch::gelu(stage->as<torch::nn::ConvTranspose2dImpl>()->forward(x));
  return x;
}

torch::Tensor VolumeRegressorImpl::forward_volume(const torch::Tensor& tokens,
                                                  const torch::Tensor& embeddings) {
  return head_out(forward_features(tokens, embeddings));
}

void VolumeRegressorImpl::freeze_encoder() {
  for (const auto& item : named_parameters()) {
    const std::string& name = item.key();
    if (name.rfind("patch_embed", 0) == 0 || name.rfind("blocks", 0) == 0 ||
        name.rfind("norm.", 0) == 0)
      item.value().set_requires_grad(false);
  }
}

VolumeRegressor build_head(const ViTConfig& config, uint64_t init_seed) {
  VolumeRegressor model(config);
  init_parameters(*model, init_seed);
  return model;
}

void load_encoder_from_checkpoint(VolumeRegressor& model,
                                  const std::filesystem::path& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  load_parameters(*model, ckpt, {"patch_embed", "blocks", "norm"});
}

torch::Tensor gather_columns(const torch::Tensor& values, const OverpassTrack& track) {
  if (values.dim() != 3) throw std::invalid_argument("gather expects [Z, H, W] values");
  const int64_t len = track.length();
  if (len < 1) throw std::invalid_argument("empty track");
  auto path = track.pixel_path.accessor<int32_t, 2>();
  torch::Tensor rows = torch::empty({len}, torch::kInt64);
  torch::Tensor cols = torch::empty({len}, torch::kInt64);
  for (int64_t j = 0; j < len; ++j) {
    if (path[j][0] < 0 || path[j][0] >= values.size(1) || path[j][1] < 0 ||
        path[j][1] >= values.size(2))
      throw std::invalid_argument("track path outside the volume raster");
    rows[j] = path[j][0];
    cols[j] = path[j][1];
  }
  return values.index({Slice(), rows, cols});
}

torch::Tensor gather_track(const VolumeGrid& volume, const OverpassTrack& track) {
  return gather_columns(volume.values, track);
}

torch::Tensor track_loss(const torch::Tensor& pred_slice,
                         const torch::Tensor& target_slice) {
  if (pred_slice.dim() != 2 || pred_slice.size(1) < 1)
    throw std::invalid_argument("track_loss: empty slice");
  if (!pred_slice.sizes().equals(target_slice.sizes()))
    throw std::invalid_argument("track_loss: shape mismatch");
  return (pred_slice - target_slice.to(pred_slice.dtype())).square().mean();
}

namespace {

class ViTBackend final : public VolumeBackend {
 public:
  explicit ViTBackend(VolumeRegressor model) : model_(std::move(model)) {}

  torch::Tensor features_batch(const std::vector<const SceneSample*>& batch) override {
    const auto dtype = model_->patch_embed->weight.scalar_type();
    std::vector<torch::Tensor> tokens, embeds;
    for (const SceneSample* s : batch) {
      tokens.push_back(
          image_to_tokens(s->image, model_->config.token_size).tokens.to(dtype));
      embeds.push_back(model_->token_embedding(s->timestamp, s->latlon, dtype));
    }
    return model_->forward_features(torch::stack(tokens), torch::stack(embeds));
  }

  std::pair<torch::Tensor, torch::Tensor> output_projection() const override {
    return {model_->head_out->weight.reshape({kHeightBins, -1}),
            model_->head_out->bias};
  }

  torch::Tensor volume_values(const SceneSample& sample) override {
    const auto dtype = model_->patch_embed->weight.scalar_type();
    torch::Tensor tokens =
        image_to_tokens(sample.image, model_->config.token_size).tokens.to(dtype);
    torch::Tensor embed =
        model_->token_embedding(sample.timestamp, sample.latlon, dtype);
    return model_->forward_volume(tokens.unsqueeze(0), embed.unsqueeze(0)).squeeze(0);
  }

  torch::nn::Module& module() override { return *model_; }
  json config_json() const override { return model_->config.to_json(); }
  std::string kind() const override { return "volume_regressor"; }

 private:
  VolumeRegressor model_;
};

}  // namespace

std::unique_ptr<VolumeBackend> make_vit_backend(VolumeRegressor model) {
  return std::make_unique<ViTBackend>(std::move(model));
}

VolumeGrid predict_volume(VolumeBackend& backend, const SceneSample& sample) {
  torch::NoGradGuard no_grad;
  backend.module().eval();
  VolumeGrid grid;
  grid.values = backend.volume_values(sample).to(torch::kFloat32);
  return grid;
}

VolumeGrid predict_volume(VolumeRegressor& model, const SceneSample& sample) {
  ViTBackend backend(model);
  return predict_volume(backend, sample);
}

torch::Tensor predict_track_slice(VolumeBackend& backend, const torch::Tensor& features,
                                  int64_t batch_index, const OverpassTrack& track) {
  torch::Tensor cols = gather_columns(features[batch_index], track);  // [C, L]
  auto [w, bias] = backend.output_projection();
  return w.to(cols.dtype()).matmul(cols) + bias.to(cols.dtype()).unsqueeze(1);
}

TrainResult finetune(VolumeBackend& backend, FinetuneRegime regime,
                     const std::filesystem::path& data_root, const FinetuneHyper& hyper,
                     const std::filesystem::path& out_dir, json provenance,
                     const std::filesystem::path& resume_from) {
  DatasetManifest train_manifest = read_manifest(data_root, Split::finetune_train);
  DatasetManifest val_manifest = read_manifest(data_root, Split::finetune_val);
  if (train_manifest.size() == 0 || val_manifest.size() == 0)
    throw std::invalid_argument("finetune: empty train or val manifest");
  SampleLoader train_loader(data_root, Split::finetune_train);
  SampleLoader val_loader(data_root, Split::finetune_val);
  std::filesystem::create_directories(out_dir);

  torch::nn::Module& module = backend.module();
  auto trainables = trainable_parameters(module);
  if (trainables.empty()) throw std::invalid_argument("finetune: nothing trainable");

  AdamOptimizer adam(hyper.lr);
  int64_t start_epoch = 0;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  if (!resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_from);
    load_parameters(module, ckpt);
    adam = AdamOptimizer(hyper.lr, adam_state_from_checkpoint(ckpt));
    start_epoch = ckpt.header.at("epoch").get<int64_t>() + 1;
    result.best_val_loss = ckpt.header.at("best_val_loss").get<double>();
    result.best_epoch = ckpt.header.at("best_epoch").get<int64_t>();
  }

  auto checkpoint_header = [&](int64_t epoch) {
    json h;
    h["kind"] = backend.kind();
    h["config"] = backend.config_json();
    h["regime"] = regime_name(regime);
    h["epoch"] = epoch;
    h["best_val_loss"] = result.best_val_loss;
    h["best_epoch"] = result.best_epoch;
    h["seed"] = hyper.seed;
    h["data_seed"] = train_manifest.seed;
    h["lr"] = hyper.lr;
    h["provenance"] = provenance;
    return h;
  };

  for (int64_t epoch = start_epoch; epoch < hyper.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> ids =
        epoch_subsample(train_manifest, hyper.subsample_fraction, epoch, hyper.seed);

    module.train();
    double loss_sum = 0.0;
    int64_t steps = 0;
    for (size_t lo = 0; lo < ids.size(); lo += static_cast<size_t>(hyper.batch_size)) {
      size_t hi = std::min(ids.size(), lo + static_cast<size_t>(hyper.batch_size));
      std::vector<const SceneSample*> batch;
      for (size_t i = lo; i < hi; ++i) batch.push_back(&train_loader.get(ids[i]));
      torch::Tensor features = backend.features_batch(batch);
      torch::Tensor loss = torch::zeros({}, features.options());
      for (size_t i = 0; i < batch.size(); ++i) {
        const OverpassTrack& track = *batch[i]->track;
        torch::Tensor pred =
            predict_track_slice(backend, features, static_cast<int64_t>(i), track);
        loss = loss + track_loss(pred, track.reflectivity);
      }
      loss = loss / static_cast<double>(batch.size());
      const double loss_val = loss.item<double>();
      if (!std::isfinite(loss_val))
        throw std::runtime_error("fine-tuning diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      adam.zero_grad(trainables);
      loss.backward();
      adam.step(trainables);
      loss_sum += loss_val;
      ++steps;
    }

    module.eval();
    double val_mse = 0.0, val_psnr = 0.0, val_ssim = 0.0;
    int64_t psnr_count = 0;
    {
      torch::NoGradGuard no_grad;
      for (size_t i = 0; i < val_manifest.size(); ++i) {
        const SceneSample& s = val_loader.get(val_manifest.sample_ids[i]);
        std::vector<const SceneSample*> one = {&s};
        torch::Tensor features = backend.features_batch(one);
        torch::Tensor pred = predict_track_slice(backend, features, 0, *s.track);
        val_mse += track_loss(pred, s.track->reflectivity).item<double>();
        torch::Tensor clipped = pred.to(torch::kFloat32).clamp(0.0, 1.0);
        double p = psnr(clipped, s.track->reflectivity);
        if (std::isfinite(p)) {
          val_psnr += p;
          ++psnr_count;
        }
        val_ssim += ssim(clipped, s.track->reflectivity);
      }
    }
    const double n_val = static_cast<double>(val_manifest.size());

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    entry.val_loss = val_mse / n_val;
    entry.val_psnr = psnr_count > 0 ? val_psnr / static_cast<double>(psnr_count) : 0.0;
    entry.val_ssim = val_ssim / n_val;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);

    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      result.best_checkpoint = out_dir / "ckpt_best.bin";
      save_checkpoint(result.best_checkpoint, checkpoint_header(epoch),
                      all_parameters(module));
    }
    result.last_checkpoint = out_dir / "ckpt_last.bin";
    save_checkpoint(result.last_checkpoint, checkpoint_header(epoch),
                    all_parameters(module), &adam.state());
  }

  if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
  write_train_log(out_dir / "train_log.jsonl", result.log, /*with_quality=*/true);
  return result;
}

}  // namespace cloudmae
