#include "cloudmae/spatial_test.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "cloudmae/rng.hpp"

namespace cloudmae {

SuperiorityResult superiority_indicators(const PairedScores& scores) {
  const size_t n = scores.z1.size();
  if (n < 2 || scores.z2.size() != n || scores.locations.size() != n)
    throw std::invalid_argument("paired scores need n >= 2 matched entries");
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) {
    w[i] = scores.z1[i] - scores.z2[i];
    if (!std::isfinite(w[i]))
      throw std::invalid_argument("non-finite score difference");
  }
  SuperiorityResult res;
  res.applicable =
      std::any_of(w.begin(), w.end(), [&](double v) { return v != w[0]; });

  std::vector<double> sorted = w;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(n / 2),
                   sorted.end());
  res.median = sorted[n / 2];

  res.y.resize(n);
  double ones = 0.0, raw = 0.0;
  for (size_t i = 0; i < n; ++i) {
    res.y[i] = w[i] < res.median ? 1 : 0;
    ones += res.y[i];
    raw += w[i] < 0.0 ? 1.0 : 0.0;
  }
  res.proportion = ones / static_cast<double>(n);
  res.raw_superiority = raw / static_cast<double>(n);
  return res;
}

double great_circle_deg(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double lat1 = a[0] * rad, lat2 = b[0] * rad;
  const double dlat = (b[0] - a[0]) * rad, dlon = (b[1] - a[1]) * rad;
  const double s = std::sin(dlat / 2), t = std::sin(dlon / 2);
  const double h = s * s + std::cos(lat1) * std::cos(lat2) * t * t;
  return 2.0 * std::asin(std::min(1.0, std::sqrt(h))) / rad;
}

std::vector<std::vector<int32_t>> knn_index(
    const std::vector<std::array<double, 2>>& locations, int64_t k) {
  const int64_t n = static_cast<int64_t>(locations.size());
  if (n < 2) throw std::invalid_argument("knn_index needs at least two locations");
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (n <= k) {
    std::cerr << "[spatial_test] warning: n = " << n << " <= k = " << k
              << "; clamping k to n - 1\n";
    k = n - 1;
  }
  std::vector<std::vector<int32_t>> out(static_cast<size_t>(n));
  std::vector<std::pair<double, int32_t>> dist(static_cast<size_t>(n - 1));
  for (int64_t i = 0; i < n; ++i) {
    size_t m = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[m++] = {great_circle_deg(locations[static_cast<size_t>(i)],
                                    locations[static_cast<size_t>(j)]),
                   static_cast<int32_t>(j)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    auto& row = out[static_cast<size_t>(i)];
    row.resize(static_cast<size_t>(k));
    for (int64_t j = 0; j < k; ++j) row[static_cast<size_t>(j)] = dist[static_cast<size_t>(j)].second;
  }
  return out;
}

double bootstrap_pvalue(const std::vector<uint8_t>& y,
                        const std::vector<std::vector<int32_t>>& neighbors,
                        double observed_proportion, int64_t n_boot, uint64_t seed) {
  const size_t n = y.size();
  if (n == 0 || neighbors.size() != n)
    throw std::invalid_argument("indicators and neighbor lists must align");
  if (n_boot < 1) throw std::invalid_argument("n_boot must be positive");
  if (n_boot < 100)
    std::cerr << "[spatial_test] warning: n_boot = " << n_boot
              << " caps p-value resolution at 1/" << (n_boot + 1) << "\n";

  // neighborhood mean of Y including the center
  std::vector<double> hood(n);
  size_t k = neighbors[0].size();
  for (size_t i = 0; i < n; ++i) {
    double s = y[i];
    for (int32_t j : neighbors[i]) s += y[static_cast<size_t>(j)];
    hood[i] = s / static_cast<double>(neighbors[i].size() + 1);
  }

  // one replicate = mean of round(n/(k+1)) resampled neighborhood blocks,
  // matching the Binomial(n, 1/2) variance under an independent null
  const int64_t blocks =
      std::max<int64_t>(1, std::llround(static_cast<double>(n) /
                                        static_cast<double>(k + 1)));
  auto rng = CounterRng::keyed(seed, 0xB007u);
  int64_t at_least = 0;
  for (int64_t b = 0; b < n_boot; ++b) {
    double total = 0.0;
    for (int64_t d = 0; d < blocks; ++d)
      total += hood[static_cast<size_t>(rng.below(n))];
    if (total / static_cast<double>(blocks) >= observed_proportion) ++at_least;
  }
  return static_cast<double>(1 + at_least) / static_cast<double>(1 + n_boot);
}

nlohmann::json SpatialTestReport::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["k"] = k;
  j["n_boot"] = n_boot;
  j["observed_proportion"] = observed_proportion;
  j["centered_proportion"] = centered_proportion;
  if (applicable)
    j["p_value"] = p_value;
  else
    j["p_value"] = nullptr;
  j["seed"] = seed;
  j["applicable"] = applicable;
  return j;
}

SpatialTestReport spatial_superiority_test(const PairedScores& scores, int64_t k,
                                           int64_t n_boot, uint64_t seed) {
  SpatialTestReport report;
  report.n = static_cast<int64_t>(scores.z1.size());
  report.n_boot = n_boot;
  report.seed = seed;

  SuperiorityResult sup = superiority_indicators(scores);
  report.centered_proportion = sup.proportion;
  report.observed_proportion = sup.raw_superiority;
  report.applicable = sup.applicable;
  if (!sup.applicable) {
    report.k = std::min<int64_t>(k, report.n - 1);
    report.p_value = 1.0;
    return report;
  }

  auto neighbors = knn_index(scores.locations, k);
  report.k = static_cast<int64_t>(neighbors[0].size());
  report.p_value = bootstrap_pvalue(sup.y, neighbors, sup.raw_superiority, n_boot, seed);
  return report;
}

}  // namespace cloudmae
