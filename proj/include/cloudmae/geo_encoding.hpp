#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace cloudmae {

struct EncodingConfig {
  int64_t embed_dim = 384;
  bool use_time = false;
  bool use_coords = false;
  int64_t d_pos = 384, d_time = 0, d_coord = 0;
};

// reserved channel groups: both flags on -> (E/2, E/4, E/4); a disabled
// segment's width goes back to the positional part
EncodingConfig make_encoding_config(int64_t embed_dim, bool use_time, bool use_coords);
void validate_encoding_config(const EncodingConfig& config);

// fixed 2D sin/cos table, [grid_h*grid_w, d_pos]; frequencies geometric from 1
// down to 1/10000, half the channels for rows, half for columns
torch::Tensor posembed_sincos_grid(int64_t grid_h, int64_t grid_w, int64_t d_pos);

// two cycles (day-of-year, time-of-day) at integer harmonics so midnight of
// one day and 24:00 of the previous encode identically; [d_time]
torch::Tensor encode_timestamp(int64_t timestamp, int64_t d_time);

// sin/cos harmonics of (lat/90, lon/180); input [T, 2] degrees, output [T, d_coord]
torch::Tensor encode_latlon(const torch::Tensor& token_centers, int64_t d_coord);

// mean lat/lon of each token's pixel block; latlon [2, H, W] -> [T, 2]
torch::Tensor token_latlon_centers(const torch::Tensor& latlon, int64_t p);

// [pos | time (broadcast) | coord] per token, [T, embed_dim]
torch::Tensor compose_token_embedding(int64_t grid_h, int64_t grid_w,
                                      const EncodingConfig& config, int64_t timestamp,
                                      const torch::Tensor& token_centers);

}  // namespace cloudmae
