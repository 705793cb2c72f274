#include "cloudmae/mae_core.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "cloudmae/rng.hpp"

namespace cloudmae {

using nlohmann::json;
using torch::indexing::Slice;

const char* scale_name(ViTScale s) {
  switch (s) {
    case ViTScale::small: return "small";
    case ViTScale::base: return "base";
    case ViTScale::custom: return "custom";
  }
  throw std::logic_error("unknown scale");
}

ViTScale scale_from_name(const std::string& name) {
  for (ViTScale s : {ViTScale::small, ViTScale::base, ViTScale::custom})
    if (name == scale_name(s)) return s;
  throw std::invalid_argument("unknown ViT scale: " + name);
}

ViTConfig ViTConfig::named(ViTScale scale, int64_t token_size, bool use_time,
                           bool use_coords) {
  ViTConfig cfg;
  cfg.scale = scale;
  cfg.token_size = token_size;
  cfg.use_time = use_time;
  cfg.use_coords = use_coords;
  switch (scale) {
    case ViTScale::small:
      cfg.embed_dim = 384;
      cfg.heads = 6;
      break;
    case ViTScale::base:
      cfg.embed_dim = 768;
      cfg.heads = 12;
      break;
    case ViTScale::custom:
      throw std::invalid_argument("custom configs are built field by field");
  }
  cfg.depth = 12;
  cfg.validate();
  return cfg;
}

void ViTConfig::validate() const {
  if (scale == ViTScale::small && (embed_dim != 384 || depth != 12 || heads != 6))
    throw std::invalid_argument("small scale pins embed_dim 384, depth 12, heads 6");
  if (scale == ViTScale::base && (embed_dim != 768 || depth != 12 || heads != 12))
    throw std::invalid_argument("base scale pins embed_dim 768, depth 12, heads 12");
  if (scale != ViTScale::custom && token_size != 8 && token_size != 16)
    throw std::invalid_argument("token size must be 8 or 16");
  if (token_size <= 0 || image_size % token_size != 0)
    throw std::invalid_argument("token size must divide image size");
  if (embed_dim % heads != 0 || decoder_dim % decoder_heads != 0)
    throw std::invalid_argument("width must be divisible by head count");
  validate_encoding_config(encoding());
}

json ViTConfig::to_json() const {
  json j;
  j["scale"] = scale_name(scale);
  j["token_size"] = token_size;
  j["image_size"] = image_size;
  j["in_channels"] = in_channels;
  j["embed_dim"] = embed_dim;
  j["depth"] = depth;
  j["heads"] = heads;
  j["mlp_ratio"] = mlp_ratio;
  j["decoder_dim"] = decoder_dim;
  j["decoder_depth"] = decoder_depth;
  j["decoder_heads"] = decoder_heads;
  j["use_time"] = use_time;
  j["use_coords"] = use_coords;
  if (!head_channels.empty()) j["head_channels"] = head_channels;
  return j;
}

ViTConfig ViTConfig::from_json(const json& j) {
  ViTConfig cfg;
  cfg.scale = scale_from_name(j.at("scale").get<std::string>());
  cfg.token_size = j.at("token_size").get<int64_t>();
  cfg.image_size = j.value("image_size", int64_t{256});
  cfg.in_channels = j.value("in_channels", int64_t{11});
  cfg.embed_dim = j.at("embed_dim").get<int64_t>();
  cfg.depth = j.at("depth").get<int64_t>();
  cfg.heads = j.at("heads").get<int64_t>();
  cfg.mlp_ratio = j.value("mlp_ratio", 4.0);
  cfg.decoder_dim = j.value("decoder_dim", int64_t{256});
  cfg.decoder_depth = j.value("decoder_depth", int64_t{4});
  cfg.decoder_heads = j.value("decoder_heads", int64_t{8});
  cfg.use_time = j.value("use_time", false);
  cfg.use_coords = j.value("use_coords", false);
  if (j.contains("head_channels"))
    cfg.head_channels = j.at("head_channels").get<std::vector<int64_t>>();
  cfg.validate();
  return cfg;
}

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio)
    : heads_(heads) {
  const int64_t hidden = static_cast<int64_t>(dim * mlp_ratio);
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  qkv = register_module("qkv", torch::nn::Linear(dim, dim * 3));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x) {
  const int64_t b = x.size(0), t = x.size(1), d = x.size(2);
  const int64_t dh = d / heads_;

  torch::Tensor h = norm1(x);
  torch::Tensor packed = qkv(h).reshape({b, t, 3, heads_, dh}).permute({2, 0, 3, 1, 4});
  torch::Tensor q = packed[0], k = packed[1], v = packed[2];  // [B, H, T, dh]
  torch::Tensor attn = torch::softmax(
      q.matmul(k.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh)), -1);
  torch::Tensor out = attn.matmul(v).transpose(1, 2).reshape({b, t, d});
  torch::Tensor y = x + proj(out);

  return y + fc2(torch::gelu(fc1(norm2(y))));
}

MaskedAutoencoderImpl::MaskedAutoencoderImpl(ViTConfig cfg) : config(std::move(cfg)) {
  config.validate();
  patch_embed = register_module(
      "patch_embed", torch::nn::Linear(config.token_width(), config.embed_dim));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < config.depth; ++i)
    blocks->push_back(TransformerBlock(config.embed_dim, config.heads, config.mlp_ratio));
  norm = register_module("norm",
                         torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.embed_dim})));

  decoder_embed = register_module(
      "decoder_embed", torch::nn::Linear(config.embed_dim, config.decoder_dim));
  decoder_blocks = register_module("decoder_blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < config.decoder_depth; ++i)
    decoder_blocks->push_back(
        TransformerBlock(config.decoder_dim, config.decoder_heads, config.mlp_ratio));
  decoder_norm = register_module(
      "decoder_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.decoder_dim})));
  decoder_pred = register_module(
      "decoder_pred", torch::nn::Linear(config.decoder_dim, config.token_width()));
  mask_token = register_parameter("mask_token", torch::zeros({config.decoder_dim}));
  decoder_pos = register_buffer(
      "decoder_pos",
      posembed_sincos_grid(config.grid_size(), config.grid_size(), config.decoder_dim)
          .to(torch::kFloat32));
}

torch::Tensor MaskedAutoencoderImpl::token_embedding(int64_t timestamp,
                                                     const torch::Tensor& latlon,
                                                     torch::ScalarType dtype) const {
  torch::Tensor centers;
  if (config.use_coords)
    centers = token_latlon_centers(latlon, config.token_size);
  return compose_token_embedding(config.grid_size(), config.grid_size(),
                                 config.encoding(), timestamp, centers)
      .to(dtype);
}

torch::Tensor MaskedAutoencoderImpl::forward_batch(const torch::Tensor& tokens,
                                                   const torch::Tensor& embeddings,
                                                   const std::vector<MaskPlan>& plans) {
  const int64_t b = tokens.size(0), t = tokens.size(1);
  if (t != config.token_count())
    throw std::invalid_argument("token count does not match the configured grid");
  if (static_cast<int64_t>(plans.size()) != b)
    throw std::invalid_argument("one mask plan per batch sample required");
  const int64_t visible = static_cast<int64_t>(plans[0].visible_idx.size());
  for (const MaskPlan& p : plans) {
    if (p.total() != t) throw std::invalid_argument("mask plan size mismatch");
    if (static_cast<int64_t>(p.visible_idx.size()) != visible)
      throw std::invalid_argument("mask plans in a batch must share a ratio");
  }

  torch::Tensor vis = torch::empty({b, visible}, torch::kInt64);
  for (int64_t i = 0; i < b; ++i)
    vis[i] = index_tensor(plans[static_cast<size_t>(i)].visible_idx);
  torch::Tensor rows = torch::arange(b, torch::kInt64).unsqueeze(1).expand({b, visible});

  // encoder never sees masked token contents: gather before embedding
  torch::Tensor x = tokens.index({rows, vis});
  torch::Tensor emb = embeddings.index({rows, vis});
  x = patch_embed(x) + emb;
  for (const auto& block : *blocks) x = block->as<TransformerBlockImpl>()->forward(x);
  x = norm(x);

  torch::Tensor y = decoder_embed(x);  // [B, V, Dd]
  torch::Tensor full =
      mask_token.view({1, 1, config.decoder_dim}).repeat({b, t, 1});
  full = full.index_put({rows, vis}, y);
  full = full + decoder_pos.unsqueeze(0).to(full.dtype());
  for (const auto& block : *decoder_blocks)
    full = block->as<TransformerBlockImpl>()->forward(full);
  return decoder_pred(decoder_norm(full));
}

torch::Tensor MaskedAutoencoderImpl::encode_all(const torch::Tensor& tokens,
                                                const torch::Tensor& embeddings) {
  torch::Tensor x = patch_embed(tokens) + embeddings;
  for (const auto& block : *blocks) x = block->as<TransformerBlockImpl>()->forward(x);
  return norm(x);
}

MaskedAutoencoder build_mae(const ViTConfig& config, uint64_t init_seed) {
  MaskedAutoencoder model(config);
  init_parameters(*model, init_seed);
  return model;
}

torch::Tensor mae_forward(MaskedAutoencoder& model, const SceneSample& sample,
                          const MaskPlan& plan) {
  const auto dtype = model->patch_embed->weight.scalar_type();
  torch::Tensor tokens =
      image_to_tokens(sample.image, model->config.token_size).tokens.to(dtype);
  torch::Tensor embed =
      model->token_embedding(sample.timestamp, sample.latlon, dtype);
  return model
      ->forward_batch(tokens.unsqueeze(0), embed.unsqueeze(0), {plan})
      .squeeze(0);
}

torch::Tensor masked_mse(const torch::Tensor& pred, const torch::Tensor& target,
                         const MaskPlan& plan) {
  if (!pred.sizes().equals(target.sizes()))
    throw std::invalid_argument("masked_mse: shape mismatch");
  if (plan.masked_idx.empty()) throw std::invalid_argument("masked_mse: empty masked set");
  torch::Tensor idx = index_tensor(plan.masked_idx);
  torch::Tensor d = pred.index_select(0, idx) - target.index_select(0, idx);
  return d.square().mean();
}

torch::Tensor masked_mse_batch(const torch::Tensor& pred, const torch::Tensor& target,
                               const std::vector<MaskPlan>& plans) {
  const int64_t b = pred.size(0);
  torch::Tensor total = torch::zeros({}, pred.options());
  for (int64_t i = 0; i < b; ++i)
    total = total + masked_mse(pred[i], target[i], plans[static_cast<size_t>(i)]);
  return total / static_cast<double>(b);
}

namespace {

struct BatchInputs {
  torch::Tensor tokens;  // [B, T, P]
  torch::Tensor embeds;  // [B, T, E]
};

BatchInputs stack_batch(MaskedAutoencoderImpl& model, SampleLoader& loader,
                        const std::vector<std::string>& ids, size_t lo, size_t hi) {
  const auto dtype = model.patch_embed->weight.scalar_type();
  std::vector<torch::Tensor> tokens, embeds;
  for (size_t i = lo; i < hi; ++i) {
    const SceneSample& s = loader.get(ids[i]);
    tokens.push_back(image_to_tokens(s.image, model.config.token_size).tokens.to(dtype));
    embeds.push_back(model.token_embedding(s.timestamp, s.latlon, dtype));
  }
  return {torch::stack(tokens), torch::stack(embeds)};
}

}  // namespace

TrainResult pretrain(MaskedAutoencoder& model, const std::filesystem::path& data_root,
                     const PretrainHyper& hyper, const std::filesystem::path& out_dir,
                     const std::filesystem::path& resume_from) {
  DatasetManifest train_manifest = read_manifest(data_root, Split::pretrain_train);
  DatasetManifest val_manifest = read_manifest(data_root, Split::pretrain_val);
  if (train_manifest.size() == 0 || val_manifest.size() == 0)
    throw std::invalid_argument("pretrain: empty train or val manifest");
  SampleLoader train_loader(data_root, Split::pretrain_train);
  SampleLoader val_loader(data_root, Split::pretrain_val);
  std::filesystem::create_directories(out_dir);

  auto trainables = trainable_parameters(*model);
  AdamOptimizer adam(hyper.lr);
  int64_t start_epoch = 0;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  if (!resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_from);
    load_parameters(*model, ckpt);
    adam = AdamOptimizer(hyper.lr, adam_state_from_checkpoint(ckpt));
    start_epoch = ckpt.header.at("epoch").get<int64_t>() + 1;
    result.best_val_loss = ckpt.header.at("best_val_loss").get<double>();
    result.best_epoch = ckpt.header.at("best_epoch").get<int64_t>();
  }

  auto checkpoint_header = [&](int64_t epoch) {
    json h;
    h["kind"] = "mae";
    h["config"] = model->config.to_json();
    h["epoch"] = epoch;
    h["best_val_loss"] = result.best_val_loss;
    h["best_epoch"] = result.best_epoch;
    h["seed"] = hyper.seed;
    h["data_seed"] = train_manifest.seed;
    h["lr"] = hyper.lr;
    return h;
  };

  const auto t_dtype = model->patch_embed->weight.scalar_type();
  (void)t_dtype;
  for (int64_t epoch = start_epoch; epoch < hyper.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> ids =
        epoch_subsample(train_manifest, hyper.subsample_fraction, epoch, hyper.seed);

    model->train();
    double loss_sum = 0.0;
    int64_t steps = 0;
    for (size_t lo = 0; lo < ids.size(); lo += static_cast<size_t>(hyper.batch_size)) {
      size_t hi = std::min(ids.size(), lo + static_cast<size_t>(hyper.batch_size));
      BatchInputs in = stack_batch(*model, train_loader, ids, lo, hi);
      std::vector<MaskPlan> plans;
      for (size_t i = lo; i < hi; ++i)
        plans.push_back(sample_mask(
            model->config.token_count(), hyper.mask_ratio,
            CounterRng::keyed(hyper.seed, 0x3357u, static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(i))
                .next_u64()));
      torch::Tensor pred = model->forward_batch(in.tokens, in.embeds, plans);
      torch::Tensor loss = masked_mse_batch(pred, in.tokens, plans);
      const double loss_val = loss.item<double>();
      if (!std::isfinite(loss_val))
        throw std::runtime_error("pre-training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      adam.zero_grad(trainables);
      loss.backward();
      adam.step(trainables);
      loss_sum += loss_val;
      ++steps;
    }

    model->eval();
    double val_sum = 0.0;
    {
      torch::NoGradGuard no_grad;
      for (size_t i = 0; i < val_manifest.size(); ++i) {
        const SceneSample& s = val_loader.get(val_manifest.sample_ids[i]);
        MaskPlan plan = sample_mask(
            model->config.token_count(), hyper.mask_ratio,
            CounterRng::keyed(hyper.seed, 0xA11Du, static_cast<uint64_t>(i)).next_u64());
        torch::Tensor pred = mae_forward(model, s, plan);
        torch::Tensor tokens =
            image_to_tokens(s.image, model->config.token_size)
                .tokens.to(pred.dtype());
        val_sum += masked_mse(pred, tokens, plan).item<double>();
      }
    }
    const double val_loss = val_sum / static_cast<double>(val_manifest.size());

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    entry.val_loss = val_loss;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.best_checkpoint = out_dir / "ckpt_best.bin";
      save_checkpoint(result.best_checkpoint, checkpoint_header(epoch),
                      all_parameters(*model));
    }
    result.last_checkpoint = out_dir / "ckpt_last.bin";
    save_checkpoint(result.last_checkpoint, checkpoint_header(epoch),
                    all_parameters(*model), &adam.state());
  }

  if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
  write_train_log(out_dir / "train_log.jsonl", result.log, /*with_quality=*/false);
  return result;
}

}  // namespace cloudmae
