#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace cloudmae {

struct TokenGrid {
  torch::Tensor tokens;  // [T, P], P = channels * p * p
  int64_t p = 0;         // token edge length in pixels
  int64_t grid_h = 0, grid_w = 0;

  int64_t count() const { return tokens.size(0); }
  int64_t width() const { return tokens.size(1); }
};

struct MaskPlan {
  std::vector<int64_t> masked_idx;   // sorted
  std::vector<int64_t> visible_idx;  // sorted
  double ratio = 0.0;

  int64_t total() const {
    return static_cast<int64_t>(masked_idx.size() + visible_idx.size());
  }
};

// lossless rearrangement: row-major over (grid_row, grid_col), channel-major
// inside a token. tokens_to_image(image_to_tokens(x)) == x exactly.
TokenGrid image_to_tokens(const torch::Tensor& image, int64_t p);
torch::Tensor tokens_to_image(const TokenGrid& grid, int64_t channels = 11);

// uniform without replacement; |masked| = round-half-even(ratio * T)
MaskPlan sample_mask(int64_t total_tokens, double ratio, uint64_t seed);

torch::Tensor index_tensor(const std::vector<int64_t>& idx);

}  // namespace cloudmae
