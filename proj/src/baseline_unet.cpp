#include "cloudmae/baseline_unet.hpp"

#include <stdexcept>

namespace cloudmae {

using nlohmann::json;

json UNetConfig::to_json() const {
  json j;
  j["depth"] = depth;
  j["base_channels"] = base_channels;
  j["blocks_per_level"] = blocks_per_level;
  j["in_channels"] = in_channels;
  j["out_channels"] = out_channels;
  return j;
}

UNetConfig UNetConfig::from_json(const json& j) {
  UNetConfig cfg;
  cfg.depth = j.value("depth", int64_t{4});
  cfg.base_channels = j.value("base_channels", int64_t{20});
  cfg.blocks_per_level = j.value("blocks_per_level", int64_t{2});
  cfg.in_channels = j.value("in_channels", int64_t{11});
  cfg.out_channels = j.value("out_channels", int64_t{90});
  return cfg;
}

namespace {

int64_t norm_groups(int64_t channels) {
  for (int64_t g : {4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

}  // namespace

ResBlockImpl::ResBlockImpl(int64_t channels) {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  gn1 = register_module("gn1", torch::nn::GroupNorm(norm_groups(channels), channels));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  gn2 = register_module("gn2", torch::nn::GroupNorm(norm_groups(channels), channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  torch::Tensor h = torch::relu(gn1(conv1(x)));
  return torch::relu(x + gn2(conv2(h)));
}

ResUNetImpl::ResUNetImpl(UNetConfig cfg) : config(cfg) {
  if (config.depth < 2) throw std::invalid_argument("unet depth must be >= 2");
  stem = register_module(
      "stem", torch::nn::Conv2d(
                  torch::nn::Conv2dOptions(config.in_channels, config.base_channels, 3)
                      .padding(1)));
  enc_blocks = register_module("enc_blocks", torch::nn::ModuleList());
  downs = register_module("downs", torch::nn::ModuleList());
  ups = register_module("ups", torch::nn::ModuleList());
  fuses = register_module("fuses", torch::nn::ModuleList());
  dec_blocks = register_module("dec_blocks", torch::nn::ModuleList());

  auto level_channels = [&](int64_t level) { return config.base_channels << level; };

  for (int64_t level = 0; level < config.depth; ++level) {
    const int64_t c = level_channels(level);
    auto stack = torch::nn::Sequential();
    for (int64_t b = 0; b < config.blocks_per_level; ++b) stack->push_back(ResBlock(c));
    enc_blocks->push_back(stack);
    if (level + 1 < config.depth)
      downs->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(c, level_channels(level + 1), 3).stride(2).padding(1)));
  }
  for (int64_t level = config.depth - 2; level >= 0; --level) {
    const int64_t c = level_channels(level);
    ups->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(level_channels(level + 1), c, 2).stride(2)));
    fuses->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, c, 3).padding(1)));
    auto stack = torch::nn::Sequential();
    for (int64_t b = 0; b < config.blocks_per_level; ++b) stack->push_back(ResBlock(c));
    dec_blocks->push_back(stack);
  }
  head_out = register_module(
      "head_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(config.base_channels,
                                                             config.out_channels, 1)));
}

torch::Tensor ResUNetImpl::forward_features(const torch::Tensor& image) {
  std::vector<torch::Tensor> skips;
  torch::Tensor x = stem(image);
  for (size_t level = 0; level < enc_blocks->size(); ++level) {
    x = enc_blocks[level]->as<torch::nn::SequentialImpl>()->forward(x);
    if (level + 1 < enc_blocks->size()) {
      skips.push_back(x);
      x = torch::relu(downs[level]->as<torch::nn::Conv2dImpl>()->forward(x));
    }
  }
  for (size_t i = 0; i < ups->size(); ++i) {
    x = ups[i]->as<torch::nn::ConvTranspose2dImpl>()->forward(x);
    torch::Tensor skip = skips[skips.size() - 1 - i];
    x = torch::relu(fuses[i]->as<torch::nn::Conv2dImpl>()->forward(torch::cat({x, skip}, 1)));
    x = dec_blocks[i]->as<torch::nn::SequentialImpl>()->forward(x);
  }
  return x;
}

torch::Tensor ResUNetImpl::forward(const torch::Tensor& image) {
  return head_out(forward_features(image));
}

ResUNet build_unet(const UNetConfig& config, uint64_t init_seed) {
  ResUNet model(config);
  init_parameters(*model, init_seed);
  return model;
}

namespace {

class UNetBackend final : public VolumeBackend {
 public:
  explicit UNetBackend(ResUNet model) : model_(std::move(model)) {}

  torch::Tensor features_batch(const std::vector<const SceneSample*>& batch) override {
    const auto dtype = model_->stem->weight.scalar_type();
    std::vector<torch::Tensor> images;
    for (const SceneSample* s : batch) images.push_back(s->image.to(dtype));
    return model_->forward_features(torch::stack(images));
  }

  std::pair<torch::Tensor, torch::Tensor> output_projection() const override {
    return {model_->head_out->weight.reshape({model_->config.out_channels, -1}),
            model_->head_out->bias};
  }

  torch::Tensor volume_values(const SceneSample& sample) override {
    const auto dtype = model_->stem->weight.scalar_type();
    return model_->forward(sample.image.to(dtype).unsqueeze(0)).squeeze(0);
  }

  torch::nn::Module& module() override { return *model_; }
  nlohmann::json config_json() const override { return model_->config.to_json(); }
  std::string kind() const override { return "unet"; }

 private:
  ResUNet model_;
};

}  // namespace

std::unique_ptr<VolumeBackend> make_unet_backend(ResUNet model) {
  return std::make_unique<UNetBackend>(std::move(model));
}

VolumeGrid predict_volume(ResUNet& model, const SceneSample& sample) {
  UNetBackend backend(model);
  return predict_volume(backend, sample);
}

}  // namespace cloudmae
