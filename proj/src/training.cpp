#include "cloudmae/training.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

#include "cloudmae/rng.hpp"

namespace cloudmae {

void AdamOptimizer::step(
    const std::vector<std::pair<std::string, torch::Tensor>>& params) {
  torch::NoGradGuard no_grad;
  ++state_.step_count;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step_count));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step_count));
  for (const auto& [name, p] : params) {
    if (!p.grad().defined()) continue;
    torch::Tensor g = p.grad();
    auto mit = state_.m.find(name);
    if (mit == state_.m.end()) {
      state_.m[name] = torch::zeros_like(p);
      state_.v[name] = torch::zeros_like(p);
      mit = state_.m.find(name);
    }
    torch::Tensor& m = mit->second;
    torch::Tensor& v = state_.v[name];
    m.mul_(beta1_).add_(g, 1.0 - beta1_);
    v.mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    torch::Tensor m_hat = m / bc1;
    torch::Tensor v_hat = v / bc2;
    p.addcdiv_(m_hat, v_hat.sqrt().add_(eps_), -lr_);
  }
}

void AdamOptimizer::zero_grad(
    const std::vector<std::pair<std::string, torch::Tensor>>& params) {
  for (const auto& [name, p] : params) {
    (void)name;
    if (p.grad().defined()) p.mutable_grad().reset();
  }
}

std::vector<std::pair<std::string, torch::Tensor>> trainable_parameters(
    torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters())
    if (item.value().requires_grad()) out.emplace_back(item.key(), item.value());
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> all_parameters(
    torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters())
    out.emplace_back(item.key(), item.value());
  return out;
}

int64_t count_parameters(const torch::nn::Module& module, bool trainable_only) {
  int64_t total = 0;
  for (const auto& p : module.parameters())
    if (!trainable_only || p.requires_grad()) total += p.numel();
  return total;
}

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void init_parameters(torch::nn::Module& module, uint64_t seed) {
  torch::NoGradGuard no_grad;
  for (const auto& item : module.named_parameters()) {
    const std::string& name = item.key();
    torch::Tensor p = item.value();
    auto rng = CounterRng::keyed(seed, fnv1a(name));

    const bool is_bias = name.size() >= 5 && name.rfind(".bias") == name.size() - 5;
    const bool is_norm = name.find("norm") != std::string::npos;
    if (is_norm) {
      p.fill_(is_bias ? 0.0 : 1.0);
      continue;
    }
    if (is_bias) {
      p.zero_();
      continue;
    }
    double stddev = 0.02;  // transformer-style default
    if (p.dim() == 4) {    // conv / transposed-conv kernels
      int64_t fan_in = p.size(1) * p.size(2) * p.size(3);
      stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    }
    torch::Tensor cpu = torch::empty_like(p, torch::kFloat32);
    float* ptr = cpu.data_ptr<float>();
    for (int64_t i = 0; i < cpu.numel(); ++i)
      ptr[i] = static_cast<float>(rng.normal(0.0, stddev));
    p.copy_(cpu.to(p.dtype()));
  }
}

SampleLoader::SampleLoader(std::filesystem::path dataset_root, Split split, bool cache)
    : root_(std::move(dataset_root)), split_(split), cache_(cache) {}

const SceneSample& SampleLoader::get(const std::string& id) {
  if (cache_) {
    auto it = cached_.find(id);
    if (it != cached_.end()) return it->second;
    auto [pos, inserted] = cached_.emplace(id, read_sample(sample_dir(root_, split_, id)));
    (void)inserted;
    return pos->second;
  }
  scratch_ = read_sample(sample_dir(root_, split_, id));
  return scratch_;
}

void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainLogEntry>& log, bool with_quality) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write train log: " + path.string());
  for (const TrainLogEntry& e : log) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    if (with_quality) {
      j["val_psnr"] = e.val_psnr;
      j["val_ssim"] = e.val_ssim;
    }
    j["seconds"] = e.seconds;
    out << j.dump() << "\n";
  }
}

}  // namespace cloudmae
