#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cloudmae/sample_store.hpp"

namespace cloudmae {

// normalized reflectivity above this counts as cloud (-22.5 dBZ)
inline constexpr double kCloudThresholdNorm = (-22.5 - kDbzMin) / kDbzRange;

// cloud-type taxonomy: 0 No Cloud, 1 Cirrus, 2 Altostratus, 3 Altocumulus,
// 4 Stratus, 5 Stratocumulus, 6 Cumulus, 7 Nimbostratus, 8 Deep Convection
inline constexpr int kNumCloudTypes = 9;
const char* cloud_type_name(int code);

struct CloudStructure {
  int type_code = 1;  // 1..8
  double z = 0.0, row = 0.0, col = 0.0;
  double sigma_z = 1.0, sigma_r = 1.0, sigma_c = 1.0;
  double peak_dbz = kDbzMin;
};

// relative draw weights for structure types 1..8; clear sky dominates because
// most of the raster stays empty regardless
inline constexpr std::array<double, 8> kDefaultClassPrior = {0.22, 0.11, 0.11, 0.14,
                                                             0.14, 0.14, 0.05, 0.09};

struct SceneRecipe {
  uint64_t seed = 0;
  int n_structures = 0;
  double latitude_band_bias = 3.0;     // extra convective weight/intensity near equator
  torch::Tensor channel_response;      // float32 [11, 90], nonnegative rows
  int64_t timestamp = 0;               // unix seconds UTC
  double center_lat = 0.0, center_lon = 0.0;
  std::array<double, 8> class_prior = kDefaultClassPrior;
};

struct RasterizedScene {
  torch::Tensor volume;          // float32 [90, 256, 256] normalized, clipped to [0,1]
  torch::Tensor cloud_type_map;  // int32 [256, 256] dominant type per column
};

// 11 response rows peaking at distinct heights so cloud-top height maps to a
// distinct multi-channel signature
torch::Tensor default_channel_response();

// degrees per pixel of the synthetic raster (~3 km)
inline constexpr double kDegPerPixel = 0.027;
torch::Tensor latlon_grid(double center_lat, double center_lon);  // [2, 256, 256]

std::vector<CloudStructure> sample_structures(const SceneRecipe& recipe);
RasterizedScene rasterize_structures(const std::vector<CloudStructure>& structures);
RasterizedScene generate_volume(const SceneRecipe& recipe);

torch::Tensor render_image(const torch::Tensor& volume,
                           const torch::Tensor& cloud_type_map,
                           const SceneRecipe& recipe, double noise_sigma = 0.01);

// chord geometry helpers (the carve loop and its tests share these)
double chord_heading_deg(int r0, int c0, int r1, int c1);
bool chord_acceptable(int r0, int c0, int r1, int c1);

OverpassTrack carve_track(const SceneRecipe& recipe, const torch::Tensor& volume,
                          const torch::Tensor& cloud_type_map);

struct GeneratorConfig {
  uint64_t seed = 1;
  int n_scenes = 31;
  double noise_sigma = 0.01;
  double latitude_band_bias = 3.0;
  // chance that a train-day scene carries an overpass; val/test-day scenes
  // always do so evaluation splits stay populated
  double track_probability = 1.0;
  std::array<double, 8> class_prior = {0.22, 0.11, 0.11, 0.14,
                                       0.14, 0.14, 0.05, 0.09};  // types 1..8
  int min_structures = 3;
  int max_structures = 10;
  int year = 2010;
};

GeneratorConfig generator_config_from_json_file(const std::filesystem::path& path);

SceneSample generate_scene(const SceneRecipe& recipe, const std::string& id,
                           double noise_sigma, bool with_track = true);

// emits samples + all six manifests under out_root; deterministic in config
void build_dataset(const GeneratorConfig& config, const std::filesystem::path& out_root);

}  // namespace cloudmae
