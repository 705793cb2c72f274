#include "cloudmae/sample_store.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "cloudmae/blob_io.hpp"
#include "cloudmae/rng.hpp"
#include "cloudmae/timeutil.hpp"

namespace cloudmae {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::pretrain_train: return "pretrain_train";
    case Split::pretrain_val: return "pretrain_val";
    case Split::pretrain_test: return "pretrain_test";
    case Split::finetune_train: return "finetune_train";
    case Split::finetune_val: return "finetune_val";
    case Split::finetune_test: return "finetune_test";
  }
  throw std::logic_error("unknown split");
}

Split split_from_name(const std::string& name) {
  for (Split s : {Split::pretrain_train, Split::pretrain_val, Split::pretrain_test,
                  Split::finetune_train, Split::finetune_val, Split::finetune_test})
    if (name == split_name(s)) return s;
  throw std::invalid_argument("unknown split name: " + name);
}

Stage split_stage(Split s) {
  switch (s) {
    case Split::pretrain_train:
    case Split::pretrain_val:
    case Split::pretrain_test:
      return Stage::pretrain;
    default:
      return Stage::finetune;
  }
}

namespace {

void require(bool ok, const std::string& invariant) {
  if (!ok) throw std::invalid_argument(invariant);
}

bool all_in_unit_range(const torch::Tensor& t) {
  return torch::isfinite(t).all().item<bool>() && t.min().item<float>() >= 0.0f &&
         t.max().item<float>() <= 1.0f;
}

}  // namespace

void validate_sample(const SceneSample& sample) {
  require(!sample.id.empty(), "empty sample id");
  require(sample.image.dim() == 3 && sample.image.size(0) == kChannels &&
              sample.image.size(1) == kImageSize && sample.image.size(2) == kImageSize,
          "image shape must be [11, 256, 256]");
  require(all_in_unit_range(sample.image), "image values must be finite and in [0, 1]");
  require(sample.latlon.dim() == 3 && sample.latlon.size(0) == 2 &&
              sample.latlon.size(1) == kImageSize && sample.latlon.size(2) == kImageSize,
          "latlon shape must be [2, 256, 256]");
  require(torch::isfinite(sample.latlon).all().item<bool>(), "latlon must be finite");
  auto lat = sample.latlon[0];
  auto lon = sample.latlon[1];
  require(lat.abs().max().item<float>() <= kFieldOfViewDeg,
          "latitude outside [-45, 45]");
  require(lon.abs().max().item<float>() <= kFieldOfViewDeg,
          "longitude outside [-45, 45]");

  if (!sample.track) return;
  const OverpassTrack& tr = *sample.track;
  require(tr.pixel_path.dim() == 2 && tr.pixel_path.size(1) == 2,
          "track path shape must be [L, 2]");
  const int64_t L = tr.pixel_path.size(0);
  require(L >= 1, "empty track");
  require(tr.pixel_path.dtype() == torch::kInt32, "track path must be int32");
  auto path = tr.pixel_path.accessor<int32_t, 2>();
  for (int64_t j = 0; j < L; ++j) {
    require(path[j][0] >= 0 && path[j][0] < kImageSize && path[j][1] >= 0 &&
                path[j][1] < kImageSize,
            "track path out of image bounds");
    if (j > 0) {
      int dr = std::abs(path[j][0] - path[j - 1][0]);
      int dc = std::abs(path[j][1] - path[j - 1][1]);
      require(dr <= 1 && dc <= 1 && (dr + dc) > 0,
              "track path entries must be 8-neighbor adjacent");
    }
  }
  require(tr.reflectivity.dim() == 2 && tr.reflectivity.size(0) == kHeightBins &&
              tr.reflectivity.size(1) == L,
          "reflectivity shape must be [90, L]");
  require(all_in_unit_range(tr.reflectivity),
          "reflectivity must be finite and in [0, 1]");
  require(tr.cloud_type.dim() == 1 && tr.cloud_type.size(0) == L,
          "cloud_type shape must be [L]");
  require(tr.cloud_type.min().item<int32_t>() >= 0 &&
              tr.cloud_type.max().item<int32_t>() <= 8,
          "cloud_type codes must be in 0..8");
  require(std::isfinite(tr.cloud_fraction) && tr.cloud_fraction >= 0.0 &&
              tr.cloud_fraction <= 1.0,
          "cloud_fraction outside [0, 1]");
}

std::filesystem::path write_sample(const SceneSample& sample,
                                   const std::filesystem::path& root, bool overwrite) {
  validate_sample(sample);
  std::filesystem::path dir = root / sample.id;
  if (std::filesystem::exists(dir)) {
    if (!overwrite)
      throw std::invalid_argument("sample id already stored: " + sample.id);
    std::filesystem::remove_all(dir);
  }
  std::filesystem::create_directories(dir);

  json header;
  header["id"] = sample.id;
  header["timestamp"] = to_iso8601(sample.timestamp);
  header["dbz_min"] = kDbzMin;
  header["dbz_max"] = kDbzMax;
  json shapes;
  shapes["image"] = {kChannels, kImageSize, kImageSize};
  shapes["latlon"] = {2, kImageSize, kImageSize};
  if (sample.track) {
    const int64_t L = sample.track->length();
    shapes["track_path"] = {L, 2};
    shapes["reflectivity"] = {kHeightBins, L};
    shapes["cloud_type"] = {L};
    header["cloud_fraction"] = sample.track->cloud_fraction;
  }
  header["shapes"] = shapes;

  std::ofstream hout(dir / "header.json");
  hout << header.dump(2) << "\n";
  if (!hout) throw std::runtime_error("cannot write header: " + dir.string());

  write_f32_blob(dir / "image.f32", sample.image);
  write_f32_blob(dir / "latlon.f32", sample.latlon);
  if (sample.track) {
    write_i32_blob(dir / "track_path.i32", sample.track->pixel_path);
    write_f32_blob(dir / "reflectivity.f32", sample.track->reflectivity);
    write_i32_blob(dir / "cloud_type.i32", sample.track->cloud_type);
  }
  return dir;
}

SceneSample read_sample(const std::filesystem::path& dir) {
  std::ifstream hin(dir / "header.json");
  if (!hin) throw std::runtime_error("cannot read header: " + dir.string());
  json header = json::parse(hin);

  SceneSample s;
  s.id = header.at("id").get<std::string>();
  s.timestamp = parse_iso8601(header.at("timestamp").get<std::string>());
  s.image = read_f32_blob(dir / "image.f32", {kChannels, kImageSize, kImageSize});
  s.latlon = read_f32_blob(dir / "latlon.f32", {2, kImageSize, kImageSize});
  if (header["shapes"].contains("track_path")) {
    OverpassTrack tr;
    const int64_t L = header["shapes"]["track_path"][0].get<int64_t>();
    tr.pixel_path = read_i32_blob(dir / "track_path.i32", {L, 2});
    tr.reflectivity = read_f32_blob(dir / "reflectivity.f32", {kHeightBins, L});
    tr.cloud_type = read_i32_blob(dir / "cloud_type.i32", {L});
    tr.cloud_fraction = header.at("cloud_fraction").get<double>();
    s.track = std::move(tr);
  }
  return s;
}

std::optional<Split> split_by_day_groups(int day, Stage stage) {
  if (day < 1 || day > 31)
    throw std::invalid_argument("day of month outside 1..31: " + std::to_string(day));
  if (stage == Stage::pretrain) {
    if (day <= 10) return Split::pretrain_train;
    if (day == 21 || day == 22) return Split::pretrain_val;
    if (day >= 25 && day <= 27) return Split::pretrain_test;
    return std::nullopt;
  }
  if (day >= 20 && day <= 22) return Split::finetune_val;
  if (day >= 25 && day <= 27) return Split::finetune_test;
  return Split::finetune_train;  // 1-19, 23, 24, 28-31
}

std::vector<std::string> epoch_subsample(const DatasetManifest& manifest,
                                         double fraction, int64_t epoch,
                                         uint64_t seed) {
  if (manifest.sample_ids.empty())
    throw std::invalid_argument("epoch_subsample: empty manifest");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("epoch_subsample: fraction outside (0, 1]");
  const int64_t n = static_cast<int64_t>(manifest.sample_ids.size());
  const int64_t take =
      static_cast<int64_t>(std::ceil(fraction * static_cast<double>(n)));
  auto rng = CounterRng::keyed(seed, static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(manifest.split), 0xE70C5ULL);
  std::vector<int64_t> order = rng.permutation(n);
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(take));
  for (int64_t i = 0; i < take; ++i)
    out.push_back(manifest.sample_ids[static_cast<size_t>(order[static_cast<size_t>(i)])]);
  return out;
}

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& dataset_root) {
  json j;
  j["split"] = split_name(manifest.split);
  j["seed"] = manifest.seed;
  json samples = json::array();
  for (size_t i = 0; i < manifest.sample_ids.size(); ++i)
    samples.push_back({{"id", manifest.sample_ids[i]}, {"day_of_month", manifest.day_of_month[i]}});
  j["samples"] = samples;
  std::filesystem::create_directories(dataset_root / "manifests");
  std::ofstream out(dataset_root / "manifests" /
                    (std::string(split_name(manifest.split)) + ".json"));
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write manifest");
}

DatasetManifest read_manifest(const std::filesystem::path& dataset_root, Split split) {
  std::filesystem::path p =
      dataset_root / "manifests" / (std::string(split_name(split)) + ".json");
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read manifest: " + p.string());
  json j = json::parse(in);
  DatasetManifest m;
  m.split = split_from_name(j.at("split").get<std::string>());
  m.seed = j.at("seed").get<uint64_t>();
  for (const auto& s : j.at("samples")) {
    m.sample_ids.push_back(s.at("id").get<std::string>());
    m.day_of_month.push_back(s.at("day_of_month").get<int>());
  }
  return m;
}

}  // namespace cloudmae
