#include "cloudmae/tokenizer.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <stdexcept>

#include "cloudmae/rng.hpp"

namespace cloudmae {

TokenGrid image_to_tokens(const torch::Tensor& image, int64_t p) {
  if (image.dim() != 3)
    throw std::invalid_argument("image_to_tokens: image must be [C, H, W]");
  const int64_t c = image.size(0), h = image.size(1), w = image.size(2);
  if (p <= 0 || h % p != 0 || w % p != 0)
    throw std::invalid_argument("image_to_tokens: token size must divide image size");
  TokenGrid grid;
  grid.p = p;
  grid.grid_h = h / p;
  grid.grid_w = w / p;
  // [C, gh, p, gw, p] -> [gh, gw, C, p, p] -> [T, C*p*p]
  grid.tokens = image.reshape({c, grid.grid_h, p, grid.grid_w, p})
                    .permute({1, 3, 0, 2, 4})
                    .reshape({grid.grid_h * grid.grid_w, c * p * p})
                    .contiguous();
  return grid;
}

torch::Tensor tokens_to_image(const TokenGrid& grid, int64_t channels) {
  const int64_t p = grid.p;
  if (p <= 0 || grid.tokens.dim() != 2)
    throw std::invalid_argument("tokens_to_image: malformed grid");
  if (grid.tokens.size(0) != grid.grid_h * grid.grid_w ||
      grid.tokens.size(1) != channels * p * p)
    throw std::invalid_argument("tokens_to_image: inconsistent token count or width");
  return grid.tokens.reshape({grid.grid_h, grid.grid_w, channels, p, p})
      .permute({2, 0, 3, 1, 4})
      .reshape({channels, grid.grid_h * p, grid.grid_w * p})
      .contiguous();
}

MaskPlan sample_mask(int64_t total_tokens, double ratio, uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("sample_mask: ratio outside (0, 1)");
  if (total_tokens <= 0) throw std::invalid_argument("sample_mask: no tokens");
  // half-to-even so every platform draws the same count
  const int64_t n_masked = static_cast<int64_t>(
      std::nearbyint(ratio * static_cast<double>(total_tokens)));
  auto rng = CounterRng::keyed(seed, 0x3A5Cu);
  std::vector<int64_t> order = rng.permutation(total_tokens);
  MaskPlan plan;
  plan.ratio = ratio;
  plan.masked_idx.assign(order.begin(), order.begin() + n_masked);
  plan.visible_idx.assign(order.begin() + n_masked, order.end());
  std::sort(plan.masked_idx.begin(), plan.masked_idx.end());
  std::sort(plan.visible_idx.begin(), plan.visible_idx.end());
  return plan;
}

torch::Tensor index_tensor(const std::vector<int64_t>& idx) {
  torch::Tensor t = torch::empty({static_cast<int64_t>(idx.size())}, torch::kInt64);
  std::copy(idx.begin(), idx.end(), t.data_ptr<int64_t>());
  return t;
}

}  // namespace cloudmae
