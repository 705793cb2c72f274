#include "doctest_compat.hpp"

#include "cloudmae/geo_encoding.hpp"
#include "cloudmae/synth_atmosphere.hpp"
#include "cloudmae/timeutil.hpp"

using namespace cloudmae;

TEST_CASE("positional embedding at the origin is the zero-phase pattern") {
  torch::Tensor e = posembed_sincos_grid(4, 4, 16);
  auto row0 = e[0];
  for (int64_t i = 0; i < 16; i += 2) {
    CHECK(row0[i].item<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(row0[i + 1].item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("positional embedding norm is position independent") {
  torch::Tensor e = posembed_sincos_grid(8, 8, 64);
  torch::Tensor norms = e.norm(2, 1);
  CHECK((norms - norms[0]).abs().max().item<double>() < 1e-9);
}

TEST_CASE("all 1024 grid embeddings are pairwise distinct") {
  torch::Tensor e = posembed_sincos_grid(32, 32, 256);
  torch::Tensor d = torch::cdist(e, e);
  d.fill_diagonal_(1.0);
  CHECK(d.min().item<double>() > 1e-6);
}

TEST_CASE("positional embedding requires d_pos divisible by 4") {
  CHECK_THROWS_AS(posembed_sincos_grid(4, 4, 18), std::invalid_argument);
}

TEST_CASE("noon encodes to the half-cycle time-of-day base pair") {
  int64_t noon = to_unix_seconds({2010, 6, 15, 12, 0, 0});
  torch::Tensor e = encode_timestamp(noon, 32);
  // layout: [annual 16 | diurnal 16]; base pair first within each half
  CHECK(e[16].item<double>() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(e[17].item<double>() == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("timestamp encoding is deterministic") {
  int64_t t = to_unix_seconds({2010, 2, 3, 4, 5, 6});
  CHECK(torch::equal(encode_timestamp(t, 64), encode_timestamp(t, 64)));
}

TEST_CASE("same clock time on different dates shares the diurnal half only") {
  int64_t jan1 = to_unix_seconds({2010, 1, 1, 0, 0, 0});
  int64_t jul2 = to_unix_seconds({2010, 7, 2, 0, 0, 0});
  torch::Tensor a = encode_timestamp(jan1, 32);
  torch::Tensor b = encode_timestamp(jul2, 32);
  using torch::indexing::Slice;
  CHECK(torch::equal(a.index({Slice(16, 32)}), b.index({Slice(16, 32)})));
  CHECK_FALSE(torch::equal(a.index({Slice(0, 16)}), b.index({Slice(0, 16)})));
}

TEST_CASE("midnight wraps the diurnal cycle exactly") {
  int64_t d1 = to_unix_seconds({2010, 5, 10, 0, 0, 0});
  int64_t d2 = to_unix_seconds({2010, 5, 11, 0, 0, 0});
  torch::Tensor a = encode_timestamp(d1, 32);
  torch::Tensor b = encode_timestamp(d2, 32);
  using torch::indexing::Slice;
  CHECK(torch::equal(a.index({Slice(16, 32)}), b.index({Slice(16, 32)})));
}

TEST_CASE("origin coordinates encode to zero-phase base pairs") {
  torch::Tensor centers = torch::zeros({1, 2}, torch::kFloat64);
  torch::Tensor e = encode_latlon(centers, 16);
  for (int64_t i = 0; i < 16; i += 2) {
    CHECK(e[0][i].item<double>() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e[0][i + 1].item<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("coordinate encoding rejects out-of-range input") {
  torch::Tensor bad = torch::tensor({{91.0, 0.0}}, torch::kFloat64);
  CHECK_THROWS_AS(encode_latlon(bad, 16), std::invalid_argument);
}

TEST_CASE("tokens 32 pixels apart encode distinctly") {
  torch::Tensor grid = latlon_grid(0.0, 0.0);
  torch::Tensor centers = token_latlon_centers(grid, 8);
  torch::Tensor e = encode_latlon(centers, 96);
  // two tokens four grid rows apart = 32 pixels
  CHECK((e[0] - e[4 * 32]).abs().max().item<double>() > 1e-8);
}

TEST_CASE("token centers depend only on the block mean") {
  torch::Tensor grid = latlon_grid(5.0, 5.0);
  torch::Tensor centers = token_latlon_centers(grid, 8);
  torch::Tensor shuffled = grid.clone();
  // swap two interior pixels of token (0, 0) in both planes
  for (int64_t plane = 0; plane < 2; ++plane) {
    auto a = shuffled[plane][1][2].item<float>();
    shuffled[plane][1][2] = shuffled[plane][6][5];
    shuffled[plane][6][5] = a;
  }
  CHECK(torch::allclose(token_latlon_centers(shuffled, 8), centers, 1e-6, 1e-6));
}

TEST_CASE("encoding config splits") {
  EncodingConfig both = make_encoding_config(384, true, true);
  CHECK(both.d_pos == 192);
  CHECK(both.d_time == 96);
  CHECK(both.d_coord == 96);
  EncodingConfig none = make_encoding_config(384, false, false);
  CHECK(none.d_pos == 384);
  EncodingConfig bad{384, true, false, 200, 100, 84};
  CHECK_THROWS_AS(validate_encoding_config(bad), std::invalid_argument);
}

TEST_CASE("composed embedding degenerates to pure positional") {
  EncodingConfig cfg = make_encoding_config(64, false, false);
  torch::Tensor e = compose_token_embedding(4, 4, cfg, 0, torch::Tensor());
  CHECK(torch::equal(e, posembed_sincos_grid(4, 4, 64)));
}

TEST_CASE("time segment broadcasts over tokens") {
  EncodingConfig cfg = make_encoding_config(64, true, false);
  int64_t t = to_unix_seconds({2010, 8, 1, 6, 0, 0});
  torch::Tensor e = compose_token_embedding(4, 4, cfg, t, torch::Tensor());
  using torch::indexing::Slice;
  torch::Tensor seg = e.index({Slice(), Slice(cfg.d_pos, cfg.embed_dim)});
  for (int64_t i = 1; i < seg.size(0); ++i) CHECK(torch::equal(seg[i], seg[0]));
}

TEST_CASE("location changes touch only the coordinate segment") {
  EncodingConfig cfg = make_encoding_config(64, true, true);
  int64_t t = to_unix_seconds({2010, 8, 1, 6, 0, 0});
  torch::Tensor ca = token_latlon_centers(latlon_grid(3.0, 7.0), 64);
  torch::Tensor cb = token_latlon_centers(latlon_grid(-21.0, 14.0), 64);
  torch::Tensor a = compose_token_embedding(4, 4, cfg, t, ca);
  torch::Tensor b = compose_token_embedding(4, 4, cfg, t, cb);
  using torch::indexing::Slice;
  int64_t coord_lo = cfg.d_pos + cfg.d_time;
  CHECK(torch::equal(a.index({Slice(), Slice(0, coord_lo)}),
                     b.index({Slice(), Slice(0, coord_lo)})));
  CHECK_FALSE(torch::equal(a.index({Slice(), Slice(coord_lo, cfg.embed_dim)}),
                           b.index({Slice(), Slice(coord_lo, cfg.embed_dim)})));
}

TEST_CASE("all encodings stay inside [-1, 1]") {
  torch::Tensor pos = posembed_sincos_grid(16, 16, 128);
  CHECK(pos.abs().max().item<double>() <= 1.0 + 1e-12);
  torch::Tensor t = encode_timestamp(to_unix_seconds({2010, 12, 31, 23, 45, 0}), 64);
  CHECK(t.abs().max().item<double>() <= 1.0 + 1e-12);
  torch::Tensor centers = token_latlon_centers(latlon_grid(40.0, -40.0), 16);
  CHECK(encode_latlon(centers, 64).abs().max().item<double>() <= 1.0 + 1e-12);
}
