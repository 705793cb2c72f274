#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cloudmae/sample_store.hpp"

namespace cloudmae {

// default cloud/no-cloud threshold in normalized units (-22.5 dBZ)
inline constexpr double kDefaultCloudThreshold = (-22.5 - kDbzMin) / kDbzRange;

struct EvalRecord {
  std::string sample_id;
  double rmse_dbz = 0.0;
  double percent_error = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double f1 = 0.0;
  double f1_weighted = 0.0;
  std::map<int, double> per_type_rmse;  // cloud type -> RMSE (dBZ), present types only
  double lat = 0.0, lon = 0.0;          // track midpoint
  int month = 1;

  nlohmann::json to_json() const;
  static EvalRecord from_json(const nlohmann::json& j);
};

// all slice metrics take [90, L] tensors with normalized values

double rmse_dbz(const torch::Tensor& pred, const torch::Tensor& target);
double percent_error(const torch::Tensor& pred, const torch::Tensor& target);
// +infinity when MSE == 0
double psnr(const torch::Tensor& pred, const torch::Tensor& target,
            double data_range = 1.0);
// 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03, mean over fully interior
// windows; throws if either slice dimension is below the window size
double ssim(const torch::Tensor& pred, const torch::Tensor& target,
            double data_range = 1.0);

struct F1Scores {
  double f1 = 0.0;
  double f1_weighted = 0.0;
};
// binarize both slices at threshold; f1 of the cloud class; f1_weighted =
// support-weighted mean of per-cloud-type F1 using the track's column labels
F1Scores cloud_mask_f1(const torch::Tensor& pred, const torch::Tensor& target,
                       const torch::Tensor& cloud_type,
                       double threshold = kDefaultCloudThreshold);

std::map<int, double> rmse_by_type(const torch::Tensor& pred,
                                   const torch::Tensor& target,
                                   const torch::Tensor& cloud_type);

EvalRecord evaluate_slice(const std::string& sample_id, const torch::Tensor& pred,
                          const torch::Tensor& target, const OverpassTrack& track,
                          const torch::Tensor& latlon, int64_t timestamp);

struct GeoGrid {
  torch::Tensor yearly;                 // [rows, cols] mean RMSE, NaN where empty
  std::map<int, torch::Tensor> monthly; // month -> same-shape grid
  double cell_deg = 5.0;
  double lat_min = -kFieldOfViewDeg, lon_min = -kFieldOfViewDeg;
  int64_t rows = 0, cols = 0;
};

GeoGrid rmse_geo_aggregate(const std::vector<EvalRecord>& records, double cell_deg);

// raw float32 grids + JSON legend under out_dir
void write_geo_grid(const GeoGrid& grid, const std::filesystem::path& out_dir,
                    const std::string& name);

void write_eval_records(const std::vector<EvalRecord>& records,
                        const std::filesystem::path& path);
std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path);

}  // namespace cloudmae
