#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <vector>

namespace cloudmae {

struct PairedScores {
  std::vector<std::array<double, 2>> locations;  // (lat, lon) degrees
  std::vector<double> z1, z2;                    // per-location test RMSE
};

struct SuperiorityResult {
  std::vector<uint8_t> y;        // median-centered indicators, Y_i = 1{W_i < m}
  double proportion = 0.0;       // mean(Y)
  double raw_superiority = 0.0;  // mean(W < 0): observed fraction where model 1 wins
  double median = 0.0;
  bool applicable = true;        // false when every W is identical
};

// W = z1 - z2, m = sample median (upper-middle for even n, so exactly
// floor(n/2) strict-below entries absent ties)
SuperiorityResult superiority_indicators(const PairedScores& scores);

// k nearest locations to each point by great-circle distance, self excluded,
// ties broken by index; k is clamped to n-1 with a warning when n <= k
std::vector<std::vector<int32_t>> knn_index(
    const std::vector<std::array<double, 2>>& locations, int64_t k = 1000);

double great_circle_deg(const std::array<double, 2>& a, const std::array<double, 2>& b);

// empirical null: one replicate draws round(n/(k+1)) locations with
// replacement and averages their neighborhood means of Y; add-one smoothing
double bootstrap_pvalue(const std::vector<uint8_t>& y,
                        const std::vector<std::vector<int32_t>>& neighbors,
                        double observed_proportion, int64_t n_boot, uint64_t seed);

struct SpatialTestReport {
  int64_t n = 0;
  int64_t k = 0;
  int64_t n_boot = 0;
  double observed_proportion = 0.0;  // raw superiority fraction
  double centered_proportion = 0.0;
  double p_value = 1.0;
  uint64_t seed = 0;
  bool applicable = true;

  nlohmann::json to_json() const;
};

SpatialTestReport spatial_superiority_test(const PairedScores& scores, int64_t k = 1000,
                                           int64_t n_boot = 1999, uint64_t seed = 0);

}  // namespace cloudmae
