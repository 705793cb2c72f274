#include "cloudmae/eval_metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "cloudmae/blob_io.hpp"
#include "cloudmae/timeutil.hpp"

namespace cloudmae {

using nlohmann::json;

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.sizes().equals(b.sizes()))
    throw std::invalid_argument("metric inputs must have equal shapes");
}

torch::Tensor as_double(const torch::Tensor& t) {
  return t.to(torch::kFloat64).contiguous();
}

}  // namespace

double rmse_dbz(const torch::Tensor& pred, const torch::Tensor& target) {
  check_same_shape(pred, target);
  torch::Tensor d = (as_double(pred) - as_double(target)) * kDbzRange;
  return std::sqrt(d.square().mean().item<double>());
}

double percent_error(const torch::Tensor& pred, const torch::Tensor& target) {
  check_same_shape(pred, target);
  return 100.0 * (as_double(pred) - as_double(target)).abs().mean().item<double>();
}

double psnr(const torch::Tensor& pred, const torch::Tensor& target, double data_range) {
  check_same_shape(pred, target);
  double mse = (as_double(pred) - as_double(target)).square().mean().item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const torch::Tensor& pred, const torch::Tensor& target, double data_range) {
  check_same_shape(pred, target);
  if (pred.dim() != 2) throw std::invalid_argument("ssim expects 2D slices");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  const int64_t h = pred.size(0), w = pred.size(1);
  if (h < kWin || w < kWin)
    throw std::invalid_argument("slice smaller than the 11x11 ssim window");

  double window[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - (kWin - 1) / 2.0, dj = j - (kWin - 1) / 2.0;
      window[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      wsum += window[i][j];
    }
  for (auto& row : window)
    for (double& v : row) v /= wsum;

  torch::Tensor x64 = as_double(pred), y64 = as_double(target);
  auto x = x64.accessor<double, 2>();
  auto y = y64.accessor<double, 2>();
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);

  double total = 0.0;
  int64_t count = 0;
  for (int64_t r = 0; r + kWin <= h; ++r) {
    for (int64_t c = 0; c + kWin <= w; ++c) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          double wv = window[i][j];
          double xv = x[r + i][c + j], yv = y[r + i][c + j];
          mx += wv * xv;
          my += wv * yv;
          mxx += wv * xv * xv;
          myy += wv * yv * yv;
          mxy += wv * xv * yv;
        }
      }
      double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace {

double binary_f1(const torch::Tensor& pred_mask, const torch::Tensor& target_mask) {
  double tp = (pred_mask & target_mask).sum().item<int64_t>();
  double fp = (pred_mask & ~target_mask).sum().item<int64_t>();
  double fn = (~pred_mask & target_mask).sum().item<int64_t>();
  double denom = 2 * tp + fp + fn;
  if (denom == 0.0) return 1.0;  // both all-clear
  return 2 * tp / denom;
}

}  // namespace

F1Scores cloud_mask_f1(const torch::Tensor& pred, const torch::Tensor& target,
                       const torch::Tensor& cloud_type, double threshold) {
  check_same_shape(pred, target);
  if (cloud_type.dim() != 1 || cloud_type.size(0) != pred.size(1))
    throw std::invalid_argument("cloud_type must label every track column");
  torch::Tensor pm = pred > threshold;
  torch::Tensor tm = target > threshold;
  F1Scores scores;
  scores.f1 = binary_f1(pm, tm);

  double weighted = 0.0;
  int64_t support = 0;
  for (int t = 0; t <= 8; ++t) {
    torch::Tensor cols = (cloud_type == t).nonzero().squeeze(-1);
    if (cols.numel() == 0) continue;
    double f = binary_f1(pm.index_select(1, cols), tm.index_select(1, cols));
    weighted += f * static_cast<double>(cols.numel());
    support += cols.numel();
  }
  scores.f1_weighted = support > 0 ? weighted / static_cast<double>(support) : 1.0;
  return scores;
}

std::map<int, double> rmse_by_type(const torch::Tensor& pred,
                                   const torch::Tensor& target,
                                   const torch::Tensor& cloud_type) {
  check_same_shape(pred, target);
  std::map<int, double> out;
  for (int t = 0; t <= 8; ++t) {
    torch::Tensor cols = (cloud_type == t).nonzero().squeeze(-1);
    if (cols.numel() == 0) continue;
    out[t] = rmse_dbz(pred.index_select(1, cols), target.index_select(1, cols));
  }
  return out;
}

EvalRecord evaluate_slice(const std::string& sample_id, const torch::Tensor& pred,
                          const torch::Tensor& target, const OverpassTrack& track,
                          const torch::Tensor& latlon, int64_t timestamp) {
  EvalRecord rec;
  rec.sample_id = sample_id;
  torch::Tensor clipped = pred.clamp(0.0, 1.0);
  rec.rmse_dbz = rmse_dbz(pred, target);
  rec.percent_error = percent_error(pred, target);
  rec.psnr = psnr(clipped, target);
  rec.ssim = ssim(clipped, target);
  F1Scores f = cloud_mask_f1(pred, target, track.cloud_type);
  rec.f1 = f.f1;
  rec.f1_weighted = f.f1_weighted;
  rec.per_type_rmse = rmse_by_type(pred, target, track.cloud_type);
  const int64_t mid = track.length() / 2;
  auto path = track.pixel_path.accessor<int32_t, 2>();
  rec.lat = latlon[0][path[mid][0]][path[mid][1]].item<float>();
  rec.lon = latlon[1][path[mid][0]][path[mid][1]].item<float>();
  rec.month = month_utc(timestamp);
  return rec;
}

json EvalRecord::to_json() const {
  json j;
  j["sample_id"] = sample_id;
  j["rmse_dbz"] = rmse_dbz;
  j["percent_error"] = percent_error;
  j["psnr"] = std::isfinite(psnr) ? json(psnr) : json("inf");
  j["ssim"] = ssim;
  j["f1"] = f1;
  j["f1_weighted"] = f1_weighted;
  json per_type = json::object();
  for (const auto& [t, v] : per_type_rmse) per_type[std::to_string(t)] = v;
  j["per_type_rmse"] = per_type;
  j["lat"] = lat;
  j["lon"] = lon;
  j["month"] = month;
  return j;
}

EvalRecord EvalRecord::from_json(const json& j) {
  EvalRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.rmse_dbz = j.at("rmse_dbz").get<double>();
  r.percent_error = j.at("percent_error").get<double>();
  r.psnr = j.at("psnr").is_string() ? std::numeric_limits<double>::infinity()
                                    : j.at("psnr").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.f1_weighted = j.at("f1_weighted").get<double>();
  for (const auto& [key, value] : j.at("per_type_rmse").items())
    r.per_type_rmse[std::stoi(key)] = value.get<double>();
  r.lat = j.at("lat").get<double>();
  r.lon = j.at("lon").get<double>();
  r.month = j.at("month").get<int>();
  return r;
}

GeoGrid rmse_geo_aggregate(const std::vector<EvalRecord>& records, double cell_deg) {
  if (records.empty()) throw std::invalid_argument("no records to aggregate");
  if (cell_deg <= 0.0) throw std::invalid_argument("cell_deg must be positive");
  GeoGrid grid;
  grid.cell_deg = cell_deg;
  grid.rows = static_cast<int64_t>(std::ceil(2.0 * kFieldOfViewDeg / cell_deg));
  grid.cols = grid.rows;

  auto cell_of = [&](double lat, double lon) {
    auto clampi = [&](int64_t v) { return std::clamp<int64_t>(v, 0, grid.rows - 1); };
    int64_t r = clampi(static_cast<int64_t>((lat - grid.lat_min) / cell_deg));
    int64_t c = clampi(static_cast<int64_t>((lon - grid.lon_min) / cell_deg));
    return std::pair<int64_t, int64_t>{r, c};
  };

  auto make_acc = [&] {
    return std::pair<torch::Tensor, torch::Tensor>{
        torch::zeros({grid.rows, grid.cols}, torch::kFloat64),
        torch::zeros({grid.rows, grid.cols}, torch::kFloat64)};
  };
  auto [sum_all, cnt_all] = make_acc();
  std::map<int, std::pair<torch::Tensor, torch::Tensor>> monthly_acc;

  for (const EvalRecord& rec : records) {
    auto [r, c] = cell_of(rec.lat, rec.lon);
    sum_all[r][c] += rec.rmse_dbz;
    cnt_all[r][c] += 1.0;
    auto it = monthly_acc.find(rec.month);
    if (it == monthly_acc.end()) it = monthly_acc.emplace(rec.month, make_acc()).first;
    it->second.first[r][c] += rec.rmse_dbz;
    it->second.second[r][c] += 1.0;
  }

  auto finish = [](const torch::Tensor& sum, const torch::Tensor& cnt) {
    return torch::where(cnt > 0, sum / cnt,
                        torch::full_like(sum, std::numeric_limits<double>::quiet_NaN()))
        .to(torch::kFloat32);
  };
  grid.yearly = finish(sum_all, cnt_all);
  for (const auto& [month, acc] : monthly_acc)
    grid.monthly[month] = finish(acc.first, acc.second);
  return grid;
}

void write_geo_grid(const GeoGrid& grid, const std::filesystem::path& out_dir,
                    const std::string& name) {
  std::filesystem::create_directories(out_dir);
  write_f32_blob(out_dir / (name + "_yearly.f32"), grid.yearly);
  json legend;
  legend["rows"] = grid.rows;
  legend["cols"] = grid.cols;
  legend["cell_deg"] = grid.cell_deg;
  legend["lat_min"] = grid.lat_min;
  legend["lon_min"] = grid.lon_min;
  legend["empty_cell"] = "NaN";
  json months = json::array();
  for (const auto& [month, t] : grid.monthly) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "month_%02d", month);
    write_f32_blob(out_dir / (name + "_" + buf + ".f32"), t);
    months.push_back(month);
  }
  legend["months"] = months;
  std::ofstream out(out_dir / (name + "_legend.json"));
  out << legend.dump(2) << "\n";
}

void write_eval_records(const std::vector<EvalRecord>& records,
                        const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write eval records: " + path.string());
  for (const EvalRecord& r : records) out << r.to_json().dump() << "\n";
}

std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read eval records: " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(EvalRecord::from_json(json::parse(line)));
  }
  return out;
}

}  // namespace cloudmae
