#include "cloudmae/synth_atmosphere.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "cloudmae/rng.hpp"
#include "cloudmae/timeutil.hpp"

namespace cloudmae {

using nlohmann::json;
using torch::indexing::Slice;

const char* cloud_type_name(int code) {
  static constexpr const char* kNames[] = {
      "No Cloud",      "Cirrus",  "Altostratus",   "Altocumulus",    "Stratus",
      "Stratocumulus", "Cumulus", "Nimbostratus",  "Deep Convection"};
  if (code < 0 || code >= kNumCloudTypes)
    throw std::invalid_argument("cloud type code outside 0..8");
  return kNames[code];
}

namespace {

struct TypePrior {
  double z_lo, z_hi;        // center height band (voxels of 90)
  double sz_lo, sz_hi;      // vertical extent
  double sr_lo, sr_hi;      // horizontal extent (rows and cols drawn independently)
  double dbz_lo, dbz_hi;    // peak intensity
};

// height/intensity bands per type; reflectivity ordering follows the taxonomy
// (thin high cirrus weak, nimbostratus and deep convection strongest)
const std::map<int, TypePrior>& type_priors() {
  static const std::map<int, TypePrior> kPriors = {
      {1, {60, 80, 2, 5, 10, 35, -20, 0}},    // Cirrus
      {2, {40, 60, 4, 8, 25, 50, -10, 5}},    // Altostratus
      {3, {40, 60, 3, 6, 6, 14, -10, 5}},     // Altocumulus
      {4, {5, 20, 3, 6, 25, 50, -12, 2}},     // Stratus
      {5, {8, 25, 3, 6, 10, 22, -8, 5}},      // Stratocumulus
      {6, {5, 35, 5, 10, 5, 12, -5, 10}},     // Cumulus
      {7, {20, 35, 12, 20, 20, 45, 0, 15}},   // Nimbostratus
      {8, {25, 45, 15, 25, 8, 25, 5, 20}},    // Deep Convection
  };
  return kPriors;
}

double equator_belt(double lat_deg) {
  return std::exp(-(lat_deg / 14.0) * (lat_deg / 14.0));
}

torch::Tensor gaussian_profile(int64_t lo, int64_t hi, double center, double sigma) {
  torch::Tensor x = torch::arange(lo, hi, torch::kFloat32);
  return torch::exp((x - center).square() * static_cast<float>(-0.5 / (sigma * sigma)));
}

}  // namespace

torch::Tensor default_channel_response() {
  torch::Tensor resp = torch::zeros({kChannels, kHeightBins}, torch::kFloat32);
  for (int64_t c = 0; c < kChannels; ++c) {
    double mu = 5.0 + 80.0 * static_cast<double>(c) / 10.0;
    resp[c] = gaussian_profile(0, kHeightBins, mu, 9.0);
  }
  return resp;
}

torch::Tensor latlon_grid(double center_lat, double center_lon) {
  torch::Tensor grid = torch::zeros({2, kImageSize, kImageSize}, torch::kFloat32);
  torch::Tensor r = torch::arange(0, kImageSize, torch::kFloat32);
  // north at row 0
  torch::Tensor lat = center_lat + (127.5 - r) * kDegPerPixel;
  torch::Tensor lon = center_lon + (r - 127.5) * kDegPerPixel;
  grid[0] = lat.unsqueeze(1).expand({kImageSize, kImageSize});
  grid[1] = lon.unsqueeze(0).expand({kImageSize, kImageSize});
  return grid;
}

std::vector<CloudStructure> sample_structures(const SceneRecipe& recipe) {
  auto rng = CounterRng::keyed(recipe.seed, 0x57u);
  std::vector<CloudStructure> out;
  out.reserve(static_cast<size_t>(std::max(0, recipe.n_structures)));
  for (int i = 0; i < recipe.n_structures; ++i) {
    CloudStructure s;
    s.row = rng.uniform(0.0, 255.0);
    s.col = rng.uniform(0.0, 255.0);
    double lat = recipe.center_lat + (127.5 - s.row) * kDegPerPixel;
    double belt = equator_belt(lat);

    std::array<double, 8> w = recipe.class_prior;
    w[6] *= 1.0 + recipe.latitude_band_bias * belt;  // Nimbostratus
    w[7] *= 1.0 + recipe.latitude_band_bias * belt;  // Deep Convection
    double total = 0.0;
    for (double v : w) total += v;
    double u = rng.uniform() * total;
    int type = 8;
    for (int t = 0; t < 8; ++t) {
      if (u < w[static_cast<size_t>(t)]) {
        type = t + 1;
        break;
      }
      u -= w[static_cast<size_t>(t)];
    }
    const TypePrior& p = type_priors().at(type);
    s.type_code = type;
    s.z = rng.uniform(p.z_lo, p.z_hi);
    s.sigma_z = rng.uniform(p.sz_lo, p.sz_hi);
    s.sigma_r = rng.uniform(p.sr_lo, p.sr_hi);
    s.sigma_c = rng.uniform(p.sr_lo, p.sr_hi);
    s.peak_dbz = rng.uniform(p.dbz_lo, p.dbz_hi);
    if (type >= 7) {
      // stronger convection toward the equator; imagery saturates at these
      // intensities, so location carries signal the image cannot
      double bias = recipe.latitude_band_bias;
      s.peak_dbz += 6.0 * belt * bias / (1.0 + bias);
    }
    s.peak_dbz = std::clamp(s.peak_dbz, kDbzMin, kDbzMax);
    out.push_back(s);
  }
  return out;
}

RasterizedScene rasterize_structures(const std::vector<CloudStructure>& structures) {
  RasterizedScene scene;
  scene.volume = torch::zeros({kHeightBins, kImageSize, kImageSize}, torch::kFloat32);
  scene.cloud_type_map = torch::zeros({kImageSize, kImageSize}, torch::kInt32);
  torch::Tensor best = torch::zeros({kImageSize, kImageSize}, torch::kFloat32);

  for (const CloudStructure& s : structures) {
    const double peak = dbz_to_normalized(s.peak_dbz);
    auto bounds = [](double center, double sigma, int64_t limit) {
      int64_t lo = static_cast<int64_t>(std::floor(center - 3.0 * sigma));
      int64_t hi = static_cast<int64_t>(std::ceil(center + 3.0 * sigma)) + 1;
      return std::pair<int64_t, int64_t>{std::clamp<int64_t>(lo, 0, limit),
                                         std::clamp<int64_t>(hi, 0, limit)};
    };
    auto [z0, z1] = bounds(s.z, s.sigma_z, kHeightBins);
    auto [r0, r1] = bounds(s.row, s.sigma_r, kImageSize);
    auto [c0, c1] = bounds(s.col, s.sigma_c, kImageSize);
    if (z0 >= z1 || r0 >= r1 || c0 >= c1) continue;

    torch::Tensor ez = gaussian_profile(z0, z1, s.z, s.sigma_z);
    torch::Tensor er = gaussian_profile(r0, r1, s.row, s.sigma_r);
    torch::Tensor ec = gaussian_profile(c0, c1, s.col, s.sigma_c);

    torch::Tensor footprint = static_cast<float>(peak) * er.unsqueeze(1) * ec.unsqueeze(0);
    scene.volume.index({Slice(z0, z1), Slice(r0, r1), Slice(c0, c1)}) +=
        ez.view({z1 - z0, 1, 1}) * footprint.unsqueeze(0);

    // dominant type per column = structure with the strongest column peak
    torch::Tensor window = best.index({Slice(r0, r1), Slice(c0, c1)});
    torch::Tensor stronger = footprint > window;
    best.index({Slice(r0, r1), Slice(c0, c1)}) = torch::where(stronger, footprint, window);
    torch::Tensor twin = scene.cloud_type_map.index({Slice(r0, r1), Slice(c0, c1)});
    scene.cloud_type_map.index({Slice(r0, r1), Slice(c0, c1)}) =
        torch::where(stronger, torch::full_like(twin, s.type_code), twin);
  }

  scene.volume.clamp_(0.0, 1.0);
  scene.cloud_type_map =
      torch::where(best >= static_cast<float>(kCloudThresholdNorm),
                   scene.cloud_type_map, torch::zeros_like(scene.cloud_type_map));
  return scene;
}

RasterizedScene generate_volume(const SceneRecipe& recipe) {
  return rasterize_structures(sample_structures(recipe));
}

torch::Tensor render_image(const torch::Tensor& volume,
                           const torch::Tensor& cloud_type_map,
                           const SceneRecipe& recipe, double noise_sigma) {
  if (volume.dim() != 3 || volume.size(0) != kHeightBins ||
      volume.size(1) != kImageSize || volume.size(2) != kImageSize)
    throw std::invalid_argument("render_image: volume shape must be [90, 256, 256]");
  if (cloud_type_map.dim() != 2 || cloud_type_map.size(0) != kImageSize ||
      cloud_type_map.size(1) != kImageSize)
    throw std::invalid_argument("render_image: cloud_type_map shape must be [256, 256]");
  const torch::Tensor& resp = recipe.channel_response;
  if (resp.dim() != 2 || resp.size(0) != kChannels || resp.size(1) != kHeightBins)
    throw std::invalid_argument("render_image: channel_response shape must be [11, 90]");

  const int64_t hw = kImageSize * kImageSize;
  torch::Tensor signal = resp.matmul(volume.reshape({kHeightBins, hw}));  // [11, HW]

  // cloud-top height in [0, 1]; 0 for clear columns
  torch::Tensor mask = (volume > static_cast<float>(kCloudThresholdNorm)).to(torch::kFloat32);
  torch::Tensor levels = torch::arange(1, kHeightBins + 1, torch::kFloat32).view({kHeightBins, 1, 1});
  torch::Tensor cth = (mask * levels).amax(0).reshape({hw}) /
                      static_cast<float>(kHeightBins);

  // stratiform decks brighten the low channels
  torch::Tensor types = cloud_type_map.reshape({hw});
  torch::Tensor stratiform =
      ((types == 2) | (types == 4) | (types == 5)).to(torch::kFloat32);

  torch::Tensor peak_level = std::get<1>(resp.max(1)).to(torch::kFloat32);  // [11]
  torch::Tensor cth_weight = 0.12f * peak_level / static_cast<float>(kHeightBins - 1);
  torch::Tensor background =
      0.06f + 0.015f * torch::arange(0, kChannels, torch::kFloat32);

  // saturating response: strong columns compress, so peak intensity is
  // ambiguous from imagery alone
  torch::Tensor out = background.unsqueeze(1) + 0.7f * torch::tanh(0.35f * signal) +
                      cth_weight.unsqueeze(1) * cth.unsqueeze(0);
  out += 0.05f * stratiform.unsqueeze(0) *
         (torch::arange(0, kChannels, torch::kFloat32) < 3).to(torch::kFloat32).unsqueeze(1);

  if (noise_sigma > 0.0) {
    auto rng = CounterRng::keyed(recipe.seed, 0x4015Eu);
    torch::Tensor noise = torch::empty({kChannels, hw}, torch::kFloat32);
    float* ptr = noise.data_ptr<float>();
    for (int64_t i = 0; i < kChannels * hw; ++i)
      ptr[i] = static_cast<float>(rng.normal() * noise_sigma);
    out += noise;
  }
  return out.clamp_(0.0, 1.0).reshape({kChannels, kImageSize, kImageSize});
}

double chord_heading_deg(int r0, int c0, int r1, int c1) {
  double dr = std::abs(r1 - r0);
  double dc = std::abs(c1 - c0);
  return std::atan2(dc, dr) * 180.0 / std::numbers::pi;
}

bool chord_acceptable(int r0, int c0, int r1, int c1) {
  int64_t len = std::max(std::abs(r1 - r0), std::abs(c1 - c0)) + 1;
  return chord_heading_deg(r0, c0, r1, c1) <= 15.0 && len >= 64 && len <= 362;
}

namespace {

// Bresenham raster; 8-connected by construction
std::vector<std::pair<int, int>> raster_chord(int r0, int c0, int r1, int c1) {
  std::vector<std::pair<int, int>> path;
  int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
  int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
  int err = dr - dc;
  int r = r0, c = c0;
  for (;;) {
    path.emplace_back(r, c);
    if (r == r1 && c == c1) break;
    int e2 = 2 * err;
    if (e2 > -dc) {
      err -= dc;
      r += sr;
    }
    if (e2 < dr) {
      err += dr;
      c += sc;
    }
  }
  return path;
}

std::pair<int, int> border_point(CounterRng& rng) {
  int edge = static_cast<int>(rng.below(4));
  int pos = static_cast<int>(rng.below(kImageSize));
  switch (edge) {
    case 0: return {0, pos};                                // top
    case 1: return {static_cast<int>(kImageSize) - 1, pos}; // bottom
    case 2: return {pos, 0};                                // left
    default: return {pos, static_cast<int>(kImageSize) - 1};
  }
}

}  // namespace

OverpassTrack carve_track(const SceneRecipe& recipe, const torch::Tensor& volume,
                          const torch::Tensor& cloud_type_map) {
  auto rng = CounterRng::keyed(recipe.seed, 0x7ACDu);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    auto [r0, c0] = border_point(rng);
    auto [r1, c1] = border_point(rng);
    if (r0 == r1 && c0 == c1) continue;
    if (!chord_acceptable(r0, c0, r1, c1)) continue;

    auto path = raster_chord(r0, c0, r1, c1);
    const int64_t len = static_cast<int64_t>(path.size());
    OverpassTrack track;
    track.pixel_path = torch::empty({len, 2}, torch::kInt32);
    auto acc = track.pixel_path.accessor<int32_t, 2>();
    torch::Tensor rows = torch::empty({len}, torch::kInt64);
    torch::Tensor cols = torch::empty({len}, torch::kInt64);
    for (int64_t j = 0; j < len; ++j) {
      acc[j][0] = path[static_cast<size_t>(j)].first;
      acc[j][1] = path[static_cast<size_t>(j)].second;
      rows[j] = path[static_cast<size_t>(j)].first;
      cols[j] = path[static_cast<size_t>(j)].second;
    }
    track.reflectivity = volume.index({Slice(), rows, cols}).contiguous();
    track.cloud_type = cloud_type_map.index({rows, cols}).contiguous();
    track.cloud_fraction =
        (track.reflectivity > static_cast<float>(kCloudThresholdNorm))
            .any(0)
            .to(torch::kFloat32)
            .mean()
            .item<float>();
    return track;
  }
  throw std::runtime_error("carve_track: no acceptable chord after 10000 attempts");
}

SceneSample generate_scene(const SceneRecipe& recipe, const std::string& id,
                           double noise_sigma, bool with_track) {
  RasterizedScene scene = generate_volume(recipe);
  SceneSample sample;
  sample.id = id;
  sample.timestamp = recipe.timestamp;
  sample.latlon = latlon_grid(recipe.center_lat, recipe.center_lon);
  sample.image = render_image(scene.volume, scene.cloud_type_map, recipe, noise_sigma);
  if (with_track) sample.track = carve_track(recipe, scene.volume, scene.cloud_type_map);
  return sample;
}

GeneratorConfig generator_config_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read generator config: " + path.string());
  json j = json::parse(in);
  GeneratorConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.n_scenes = j.value("n_scenes", cfg.n_scenes);
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.latitude_band_bias = j.value("latitude_band_bias", cfg.latitude_band_bias);
  cfg.track_probability = j.value("track_probability", cfg.track_probability);
  cfg.min_structures = j.value("min_structures", cfg.min_structures);
  cfg.max_structures = j.value("max_structures", cfg.max_structures);
  cfg.year = j.value("year", cfg.year);
  if (j.contains("class_prior")) {
    auto v = j.at("class_prior").get<std::vector<double>>();
    if (v.size() != 8)
      throw std::invalid_argument("class_prior must list 8 weights (types 1..8)");
    std::copy(v.begin(), v.end(), cfg.class_prior.begin());
  }
  if (cfg.n_scenes < 1) throw std::invalid_argument("n_scenes must be >= 1");
  if (cfg.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (cfg.latitude_band_bias < 0.0)
    throw std::invalid_argument("latitude_band_bias must be >= 0");
  if (cfg.track_probability < 0.0 || cfg.track_probability > 1.0)
    throw std::invalid_argument("track_probability outside [0, 1]");
  if (cfg.min_structures < 0 || cfg.max_structures < cfg.min_structures)
    throw std::invalid_argument("invalid structure count range");
  return cfg;
}

namespace {

struct SceneMeta {
  int day;
  bool with_track;
  SceneRecipe recipe;
};

SceneMeta scene_meta(const GeneratorConfig& config, int64_t index, int forced_day,
                     const torch::Tensor& response) {
  auto rng = CounterRng::keyed(config.seed, static_cast<uint64_t>(index), 0x5CE4Eu);
  int day = forced_day > 0 ? forced_day : static_cast<int>(index % 31) + 1;
  std::vector<int> months;
  for (int m = 1; m <= 12; ++m)
    if (days_in_month(config.year, m) >= day) months.push_back(m);
  int month = months[rng.below(months.size())];
  CivilDateTime c;
  c.year = config.year;
  c.month = month;
  c.day = day;
  c.hour = static_cast<int>(rng.below(24));
  c.minute = 15 * static_cast<int>(rng.below(4));

  SceneMeta meta;
  meta.day = day;
  // evaluation-day scenes always carry an overpass
  const bool eval_day = (day >= 20 && day <= 22) || (day >= 25 && day <= 27);
  meta.with_track = eval_day || rng.bernoulli(config.track_probability);
  meta.recipe.seed = rng.next_u64();
  meta.recipe.n_structures = static_cast<int>(
      rng.uniform_int(config.min_structures, config.max_structures));
  meta.recipe.latitude_band_bias = config.latitude_band_bias;
  meta.recipe.channel_response = response;
  meta.recipe.timestamp = to_unix_seconds(c);
  meta.recipe.center_lat = rng.uniform(-41.5, 41.5);
  meta.recipe.center_lon = rng.uniform(-41.5, 41.5);
  meta.recipe.class_prior = config.class_prior;
  return meta;
}

}  // namespace

void build_dataset(const GeneratorConfig& config, const std::filesystem::path& out_root) {
  if (std::filesystem::exists(out_root / "manifests"))
    throw std::runtime_error("dataset already exists at " + out_root.string());
  std::filesystem::create_directories(out_root);

  torch::Tensor response = default_channel_response();
  std::map<Split, DatasetManifest> manifests;
  for (Split s : {Split::pretrain_train, Split::pretrain_val, Split::pretrain_test,
                  Split::finetune_train, Split::finetune_val, Split::finetune_test}) {
    manifests[s].split = s;
    manifests[s].seed = config.seed;
  }

  auto emit = [&](const SceneSample& sample, int day) {
    if (auto ps = split_by_day_groups(day, Stage::pretrain)) {
      write_sample(sample, out_root / split_name(*ps));
      manifests[*ps].sample_ids.push_back(sample.id);
      manifests[*ps].day_of_month.push_back(day);
    }
    auto fs = split_by_day_groups(day, Stage::finetune);
    if (fs && sample.track && sample.track->cloud_fraction >= kMinCloudFraction) {
      write_sample(sample, out_root / split_name(*fs));
      manifests[*fs].sample_ids.push_back(sample.id);
      manifests[*fs].day_of_month.push_back(day);
    }
  };

  char idbuf[32];
  int64_t index = 0;
  for (; index < config.n_scenes; ++index) {
    SceneMeta meta = scene_meta(config, index, 0, response);
    std::snprintf(idbuf, sizeof(idbuf), "scene_%05lld", static_cast<long long>(index));
    emit(generate_scene(meta.recipe, idbuf, config.noise_sigma, meta.with_track), meta.day);
  }

  // top up any split the day rotation + cloud filter left empty
  static const std::map<Split, int> kRepresentativeDay = {
      {Split::pretrain_train, 3},  {Split::pretrain_val, 21},
      {Split::pretrain_test, 26},  {Split::finetune_train, 15},
      {Split::finetune_val, 20},   {Split::finetune_test, 25}};
  for (const auto& [split, day] : kRepresentativeDay) {
    for (int attempt = 0; manifests[split].sample_ids.empty(); ++attempt) {
      if (attempt >= 200)
        throw std::runtime_error(std::string("could not populate split ") +
                                 split_name(split));
      SceneMeta meta = scene_meta(config, index, day, response);
      std::snprintf(idbuf, sizeof(idbuf), "scene_%05lld", static_cast<long long>(index));
      ++index;
      emit(generate_scene(meta.recipe, idbuf, config.noise_sigma, meta.with_track), meta.day);
    }
  }

  for (auto& [split, manifest] : manifests) write_manifest(manifest, out_root);

  json meta;
  meta["seed"] = config.seed;
  meta["n_scenes"] = index;
  meta["noise_sigma"] = config.noise_sigma;
  meta["latitude_band_bias"] = config.latitude_band_bias;
  meta["class_prior"] = config.class_prior;
  meta["track_probability"] = config.track_probability;
  meta["min_structures"] = config.min_structures;
  meta["max_structures"] = config.max_structures;
  meta["year"] = config.year;
  meta["dbz_min"] = kDbzMin;
  meta["dbz_max"] = kDbzMax;
  std::ofstream out(out_root / "dataset_meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace cloudmae
