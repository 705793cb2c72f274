#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>

#include "cloudmae/sample_store.hpp"
#include "cloudmae/synth_atmosphere.hpp"
#include "cloudmae/timeutil.hpp"

namespace cloudmae::testing {

// deterministic valid sample with a short straight track
inline SceneSample make_valid_sample(uint64_t seed = 7,
                                     const std::string& id = "sample_a") {
  torch::manual_seed(static_cast<int64_t>(seed));
  SceneSample s;
  s.id = id;
  s.image = torch::rand({kChannels, kImageSize, kImageSize});
  s.timestamp = to_unix_seconds({2010, 3, 5, 13, 30, 0});
  s.latlon = latlon_grid(12.0, -20.0);

  OverpassTrack track;
  const int64_t len = 96;
  track.pixel_path = torch::empty({len, 2}, torch::kInt32);
  auto acc = track.pixel_path.accessor<int32_t, 2>();
  for (int64_t j = 0; j < len; ++j) {
    acc[j][0] = static_cast<int32_t>(40 + j);
    acc[j][1] = static_cast<int32_t>(100 + j / 3);
  }
  track.reflectivity = torch::rand({kHeightBins, len});
  track.cloud_type = torch::randint(0, 9, {len}, torch::kInt32);
  track.cloud_fraction = 0.5;
  s.track = std::move(track);
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("cloudmae_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() { std::filesystem::remove_all(dir_); }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace cloudmae::testing
