#include "cloudmae/geo_encoding.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cloudmae/timeutil.hpp"

namespace cloudmae {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// interleaved (sin, cos) pairs of angle*omega_k, omega geometric 1 .. 1/10000
torch::Tensor sincos_expand(const torch::Tensor& values, int64_t n_pairs) {
  torch::Tensor omega = torch::empty({n_pairs}, torch::kFloat64);
  for (int64_t k = 0; k < n_pairs; ++k) {
    double e = n_pairs > 1 ? static_cast<double>(k) / static_cast<double>(n_pairs - 1)
                           : 0.0;
    omega[k] = std::pow(10000.0, -e);
  }
  torch::Tensor angles = values.to(torch::kFloat64).unsqueeze(-1) * omega;  // [..., n]
  return torch::stack({torch::sin(angles), torch::cos(angles)}, -1)
      .flatten(-2);  // [..., 2n]
}

// interleaved (sin, cos) pairs of 2*pi*frac*2^k; integer harmonics keep the
// encoding periodic in frac with period 1
torch::Tensor cyclic_expand(const torch::Tensor& frac, int64_t n_pairs) {
  torch::Tensor harmonics = torch::empty({n_pairs}, torch::kFloat64);
  for (int64_t k = 0; k < n_pairs; ++k)
    harmonics[k] = static_cast<double>(int64_t{1} << std::min<int64_t>(k, 40));
  torch::Tensor angles = kTwoPi * frac.to(torch::kFloat64).unsqueeze(-1) * harmonics;
  return torch::stack({torch::sin(angles), torch::cos(angles)}, -1).flatten(-2);
}

}  // namespace

EncodingConfig make_encoding_config(int64_t embed_dim, bool use_time, bool use_coords) {
  require(embed_dim > 0 && embed_dim % 16 == 0,
          "embed_dim must be a positive multiple of 16");
  EncodingConfig cfg;
  cfg.embed_dim = embed_dim;
  cfg.use_time = use_time;
  cfg.use_coords = use_coords;
  cfg.d_time = use_time ? embed_dim / 4 : 0;
  cfg.d_coord = use_coords ? embed_dim / 4 : 0;
  cfg.d_pos = embed_dim - cfg.d_time - cfg.d_coord;
  validate_encoding_config(cfg);
  return cfg;
}

void validate_encoding_config(const EncodingConfig& c) {
  require(c.d_pos >= 0 && c.d_time >= 0 && c.d_coord >= 0, "negative encoding split");
  require(c.d_pos + c.d_time + c.d_coord == c.embed_dim,
          "encoding split must sum to embed_dim");
  require(c.d_pos % 4 == 0 && c.d_time % 4 == 0 && c.d_coord % 4 == 0,
          "encoding split parts must be divisible by 4");
  require((c.d_time > 0) == c.use_time, "d_time > 0 iff use_time");
  require((c.d_coord > 0) == c.use_coords, "d_coord > 0 iff use_coords");
}

torch::Tensor posembed_sincos_grid(int64_t grid_h, int64_t grid_w, int64_t d_pos) {
  require(grid_h > 0 && grid_w > 0, "empty grid");
  require(d_pos > 0 && d_pos % 4 == 0, "d_pos must be a positive multiple of 4");
  const int64_t n_pairs = d_pos / 4;
  torch::Tensor rows = sincos_expand(torch::arange(grid_h, torch::kFloat64), n_pairs);
  torch::Tensor cols = sincos_expand(torch::arange(grid_w, torch::kFloat64), n_pairs);
  // [T, d_pos/2] each, row-major over (grid_row, grid_col)
  torch::Tensor row_part =
      rows.unsqueeze(1).expand({grid_h, grid_w, d_pos / 2}).reshape({-1, d_pos / 2});
  torch::Tensor col_part =
      cols.unsqueeze(0).expand({grid_h, grid_w, d_pos / 2}).reshape({-1, d_pos / 2});
  return torch::cat({row_part, col_part}, 1);
}

torch::Tensor encode_timestamp(int64_t timestamp, int64_t d_time) {
  require(d_time > 0 && d_time % 4 == 0, "d_time must be a positive multiple of 4");
  const int64_t n_pairs = d_time / 4;
  CivilDateTime c = from_unix_seconds(timestamp);
  double sod = seconds_of_day_utc(timestamp);
  double annual = (day_of_year_utc(timestamp) - 1 + sod / 86400.0) /
                  static_cast<double>(days_in_year(c.year));
  double diurnal = sod / 86400.0;
  torch::Tensor fracs = torch::tensor({annual, diurnal}, torch::kFloat64);
  return cyclic_expand(fracs, n_pairs).reshape({d_time});
}

torch::Tensor token_latlon_centers(const torch::Tensor& latlon, int64_t p) {
  require(latlon.dim() == 3 && latlon.size(0) == 2, "latlon must be [2, H, W]");
  const int64_t h = latlon.size(1), w = latlon.size(2);
  require(p > 0 && h % p == 0 && w % p == 0, "token size must divide latlon raster");
  return latlon.reshape({2, h / p, p, w / p, p})
      .mean({2, 4})          // [2, gh, gw]
      .permute({1, 2, 0})    // [gh, gw, 2]
      .reshape({-1, 2});
}

torch::Tensor encode_latlon(const torch::Tensor& token_centers, int64_t d_coord) {
  require(token_centers.dim() == 2 && token_centers.size(1) == 2,
          "token centers must be [T, 2]");
  require(d_coord > 0 && d_coord % 4 == 0, "d_coord must be a positive multiple of 4");
  torch::Tensor centers = token_centers.to(torch::kFloat64);
  torch::Tensor lat = centers.select(1, 0);
  torch::Tensor lon = centers.select(1, 1);
  if (lat.abs().max().item<double>() > 90.0)
    throw std::invalid_argument("latitude outside [-90, 90]");
  if (lon.abs().max().item<double>() > 180.0)
    throw std::invalid_argument("longitude outside [-180, 180]");
  const int64_t n_pairs = d_coord / 4;
  torch::Tensor lat_part = cyclic_expand(lat / 90.0, n_pairs);
  torch::Tensor lon_part = cyclic_expand(lon / 180.0, n_pairs);
  return torch::cat({lat_part, lon_part}, 1);
}

torch::Tensor compose_token_embedding(int64_t grid_h, int64_t grid_w,
                                      const EncodingConfig& config, int64_t timestamp,
                                      const torch::Tensor& token_centers) {
  validate_encoding_config(config);
  const int64_t total = grid_h * grid_w;
  std::vector<torch::Tensor> parts;
  if (config.d_pos > 0)
    parts.push_back(posembed_sincos_grid(grid_h, grid_w, config.d_pos));
  if (config.use_time)
    parts.push_back(
        encode_timestamp(timestamp, config.d_time).unsqueeze(0).expand({total, config.d_time}));
  if (config.use_coords) {
    if (token_centers.size(0) != total)
      throw std::invalid_argument("token centers do not match grid");
    parts.push_back(encode_latlon(token_centers, config.d_coord));
  }
  return torch::cat(parts, 1);
}

}  // namespace cloudmae
