#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cloudmae {

// fixed raster geometry of every stored scene
inline constexpr int64_t kChannels = 11;
inline constexpr int64_t kImageSize = 256;
inline constexpr int64_t kHeightBins = 90;

// declared linear mapping between normalized reflectivity and dBZ
inline constexpr double kDbzMin = -25.0;
inline constexpr double kDbzMax = 20.0;
inline constexpr double kDbzRange = kDbzMax - kDbzMin;  // 45

inline constexpr double kFieldOfViewDeg = 45.0;
inline constexpr double kMinCloudFraction = 0.20;  // fine-tune eligibility

inline double dbz_to_normalized(double dbz) { return (dbz - kDbzMin) / kDbzRange; }
inline double normalized_to_dbz(double v) { return kDbzMin + v * kDbzRange; }

struct OverpassTrack {
  torch::Tensor pixel_path;    // int32 [L, 2], (row, col) per profile column
  torch::Tensor reflectivity;  // float32 [90, L], normalized to [0, 1]
  torch::Tensor cloud_type;    // int32 [L], codes 0..8
  double cloud_fraction = 0.0;

  int64_t length() const { return pixel_path.size(0); }
};

struct SceneSample {
  std::string id;
  torch::Tensor image;   // float32 [11, 256, 256], normalized radiance in [0, 1]
  int64_t timestamp = 0; // unix seconds, UTC
  torch::Tensor latlon;  // float32 [2, 256, 256], degrees (lat, lon) per pixel
  std::optional<OverpassTrack> track;
};

enum class Split {
  pretrain_train,
  pretrain_val,
  pretrain_test,
  finetune_train,
  finetune_val,
  finetune_test,
};

enum class Stage { pretrain, finetune };

const char* split_name(Split s);
Split split_from_name(const std::string& name);
Stage split_stage(Split s);

struct DatasetManifest {
  Split split = Split::pretrain_train;
  std::vector<std::string> sample_ids;
  std::vector<int> day_of_month;  // parallel to sample_ids
  uint64_t seed = 0;

  size_t size() const { return sample_ids.size(); }
};

// throws std::invalid_argument naming the violated invariant
void validate_sample(const SceneSample& sample);

// writes <root>/<id>/{header.json, image.f32, latlon.f32, [track files]}
std::filesystem::path write_sample(const SceneSample& sample,
                                   const std::filesystem::path& root,
                                   bool overwrite = false);
SceneSample read_sample(const std::filesystem::path& sample_dir);

// day-group split rules; nullopt = day unused by the stage
std::optional<Split> split_by_day_groups(int day_of_month, Stage stage);

// deterministic without-replacement subsample of ceil(fraction * N) ids
std::vector<std::string> epoch_subsample(const DatasetManifest& manifest,
                                         double fraction, int64_t epoch,
                                         uint64_t seed);

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& dataset_root);
DatasetManifest read_manifest(const std::filesystem::path& dataset_root, Split split);

inline std::filesystem::path sample_dir(const std::filesystem::path& dataset_root,
                                        Split split, const std::string& id) {
  return dataset_root / split_name(split) / id;
}

}  // namespace cloudmae
