#include "doctest_compat.hpp"

#include <algorithm>
#include <set>

#include "cloudmae/sample_store.hpp"
#include "helpers.hpp"

using namespace cloudmae;
using cloudmae::testing::TempDir;
using cloudmae::testing::make_valid_sample;

TEST_CASE("sample round-trip is bit-exact") {
  TempDir tmp("roundtrip");
  SceneSample s = make_valid_sample();
  auto dir = write_sample(s, tmp.path());
  SceneSample r = read_sample(dir);
  CHECK(r.id == s.id);
  CHECK(r.timestamp == s.timestamp);
  CHECK(torch::equal(r.image, s.image));
  CHECK(torch::equal(r.latlon, s.latlon));
  REQUIRE(r.track.has_value());
  CHECK(torch::equal(r.track->pixel_path, s.track->pixel_path));
  CHECK(torch::equal(r.track->reflectivity, s.track->reflectivity));
  CHECK(torch::equal(r.track->cloud_type, s.track->cloud_type));
  CHECK(r.track->cloud_fraction == s.track->cloud_fraction);
}

TEST_CASE("trackless sample round-trips") {
  TempDir tmp("notrack");
  SceneSample s = make_valid_sample();
  s.track.reset();
  SceneSample r = read_sample(write_sample(s, tmp.path()));
  CHECK_FALSE(r.track.has_value());
  CHECK(torch::equal(r.image, s.image));
}

TEST_CASE("empty track is rejected by name") {
  TempDir tmp("emptytrack");
  SceneSample s = make_valid_sample();
  s.track->pixel_path = torch::empty({0, 2}, torch::kInt32);
  s.track->reflectivity = torch::empty({kHeightBins, 0});
  s.track->cloud_type = torch::empty({0}, torch::kInt32);
  CHECK_THROWS_WITH_AS(write_sample(s, tmp.path()), "empty track",
                       std::invalid_argument);
}

TEST_CASE("invariant violations are rejected with named invariant") {
  TempDir tmp("badsample");
  SceneSample s = make_valid_sample();
  SUBCASE("image out of range") {
    s.image[0][0][0] = 1.5f;
    CHECK_THROWS_AS(write_sample(s, tmp.path()), std::invalid_argument);
  }
  SUBCASE("latitude outside field of view") {
    s.latlon[0][0][0] = 46.0f;
    CHECK_THROWS_AS(write_sample(s, tmp.path()), std::invalid_argument);
  }
  SUBCASE("non-adjacent track path") {
    s.track->pixel_path[1][0] = 200;
    CHECK_THROWS_AS(write_sample(s, tmp.path()), std::invalid_argument);
  }
  SUBCASE("wrong channel count") {
    s.image = torch::rand({10, kImageSize, kImageSize});
    CHECK_THROWS_AS(write_sample(s, tmp.path()), std::invalid_argument);
  }
}

TEST_CASE("existing id rejected unless overwrite") {
  TempDir tmp("overwrite");
  SceneSample s = make_valid_sample();
  write_sample(s, tmp.path());
  CHECK_THROWS_AS(write_sample(s, tmp.path()), std::invalid_argument);
  CHECK_NOTHROW(write_sample(s, tmp.path(), /*overwrite=*/true));
}

TEST_CASE("low cloud fraction still stores fine (pretrain-only eligibility)") {
  TempDir tmp("lowcf");
  SceneSample s = make_valid_sample();
  s.track->cloud_fraction = 0.19;
  CHECK_NOTHROW(write_sample(s, tmp.path()));
  CHECK(s.track->cloud_fraction < kMinCloudFraction);
}

TEST_CASE("day-group split rules") {
  CHECK(split_by_day_groups(5, Stage::pretrain) == Split::pretrain_train);
  CHECK(split_by_day_groups(26, Stage::finetune) == Split::finetune_test);
  CHECK(split_by_day_groups(15, Stage::pretrain) == std::nullopt);
  CHECK_THROWS_AS(split_by_day_groups(0, Stage::pretrain), std::invalid_argument);
  CHECK_THROWS_AS(split_by_day_groups(32, Stage::finetune), std::invalid_argument);

  // pretrain groups cover exactly {1-10, 21-22, 25-27}; finetune covers all days
  for (int day = 1; day <= 31; ++day) {
    auto ps = split_by_day_groups(day, Stage::pretrain);
    bool in_groups = day <= 10 || day == 21 || day == 22 || (day >= 25 && day <= 27);
    CHECK(ps.has_value() == in_groups);
    if (ps) {
      if (day <= 10) CHECK(*ps == Split::pretrain_train);
      if (day == 21 || day == 22) CHECK(*ps == Split::pretrain_val);
      if (day >= 25 && day <= 27) CHECK(*ps == Split::pretrain_test);
    }
    auto fs = split_by_day_groups(day, Stage::finetune);
    REQUIRE(fs.has_value());
    if (day >= 20 && day <= 22) CHECK(*fs == Split::finetune_val);
    else if (day >= 25 && day <= 27) CHECK(*fs == Split::finetune_test);
    else CHECK(*fs == Split::finetune_train);
  }
}

namespace {

DatasetManifest toy_manifest(size_t n) {
  DatasetManifest m;
  m.split = Split::pretrain_train;
  m.seed = 99;
  for (size_t i = 0; i < n; ++i) {
    m.sample_ids.push_back("id_" + std::to_string(i));
    m.day_of_month.push_back(static_cast<int>(i % 10) + 1);
  }
  return m;
}

}  // namespace

TEST_CASE("epoch subsample draws ceil(fraction*N) without replacement") {
  DatasetManifest m = toy_manifest(1000);
  auto ids = epoch_subsample(m, 0.10, 3, 42);
  CHECK(ids.size() == 100);
  std::set<std::string> uniq(ids.begin(), ids.end());
  CHECK(uniq.size() == ids.size());
}

TEST_CASE("epoch subsample with fraction 1 is a full permutation") {
  DatasetManifest m = toy_manifest(57);
  auto ids = epoch_subsample(m, 1.0, 0, 42);
  CHECK(ids.size() == 57);
  std::set<std::string> uniq(ids.begin(), ids.end());
  CHECK(uniq.size() == 57);
}

TEST_CASE("epoch subsample determinism and epoch sensitivity") {
  DatasetManifest m = toy_manifest(200);
  auto a = epoch_subsample(m, 0.25, 7, 1);
  auto b = epoch_subsample(m, 0.25, 7, 1);
  auto c = epoch_subsample(m, 0.25, 8, 1);
  auto d = epoch_subsample(m, 0.25, 7, 2);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
}

TEST_CASE("epoch subsample rejects empty manifest and bad fraction") {
  DatasetManifest empty;
  CHECK_THROWS_AS(epoch_subsample(empty, 0.5, 0, 0), std::invalid_argument);
  DatasetManifest m = toy_manifest(5);
  CHECK_THROWS_AS(epoch_subsample(m, 0.0, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(epoch_subsample(m, 1.5, 0, 0), std::invalid_argument);
}

TEST_CASE("manifest round-trips through json") {
  TempDir tmp("manifest");
  DatasetManifest m = toy_manifest(12);
  m.split = Split::finetune_val;
  write_manifest(m, tmp.path());
  DatasetManifest r = read_manifest(tmp.path(), Split::finetune_val);
  CHECK(r.split == m.split);
  CHECK(r.seed == m.seed);
  CHECK(r.sample_ids == m.sample_ids);
  CHECK(r.day_of_month == m.day_of_month);
}
