#include "doctest_compat.hpp"

#include <algorithm>
#include <set>

#include "cloudmae/tokenizer.hpp"

using namespace cloudmae;

TEST_CASE("token counts match the published grid sizes") {
  torch::Tensor img = torch::rand({11, 256, 256});
  TokenGrid g8 = image_to_tokens(img, 8);
  CHECK(g8.count() == 1024);
  CHECK(g8.width() == 704);
  TokenGrid g16 = image_to_tokens(img, 16);
  CHECK(g16.count() == 256);
  CHECK(g16.width() == 2816);
}

TEST_CASE("tokenization is an exact bijection") {
  torch::manual_seed(11);
  for (int64_t p : {8, 16, 32}) {
    torch::Tensor img = torch::rand({11, 256, 256});
    CHECK(torch::equal(tokens_to_image(image_to_tokens(img, p)), img));
  }
}

TEST_CASE("token size must divide image size") {
  torch::Tensor img = torch::rand({11, 256, 256});
  CHECK_THROWS_AS(image_to_tokens(img, 7), std::invalid_argument);
  CHECK_THROWS_AS(image_to_tokens(img, 0), std::invalid_argument);
}

TEST_CASE("a single nonzero token maps to exactly its pixel block") {
  TokenGrid g;
  g.p = 8;
  g.grid_h = g.grid_w = 4;
  g.tokens = torch::zeros({16, 11 * 64});
  g.tokens[5] = 1.0;  // grid position (1, 1)
  torch::Tensor img = tokens_to_image(g);
  torch::Tensor block = img.index({torch::indexing::Slice(),
                                   torch::indexing::Slice(8, 16),
                                   torch::indexing::Slice(8, 16)});
  CHECK(block.min().item<float>() == 1.0f);
  CHECK(img.sum().item<double>() == 11 * 64);
}

TEST_CASE("only the identity token permutation reproduces the image") {
  // exhaustive over the 2x2 grid
  torch::manual_seed(3);
  torch::Tensor img = torch::rand({11, 16, 16});
  TokenGrid g = image_to_tokens(img, 8);
  std::array<int64_t, 4> perm = {0, 1, 2, 3};
  do {
    TokenGrid shuffled = g;
    shuffled.tokens = g.tokens.index({torch::tensor(
        std::vector<int64_t>(perm.begin(), perm.end()), torch::kInt64)});
    bool identity = std::is_sorted(perm.begin(), perm.end());
    CHECK(torch::equal(tokens_to_image(shuffled), img) == identity);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("mask plan sizes follow round-half-even") {
  CHECK(sample_mask(1024, 0.75, 1).masked_idx.size() == 768);
  CHECK(sample_mask(1024, 0.75, 1).visible_idx.size() == 256);
  CHECK(sample_mask(256, 0.75, 1).masked_idx.size() == 192);
  CHECK(sample_mask(5, 0.5, 1).masked_idx.size() == 2);   // 2.5 rounds to even
  CHECK(sample_mask(7, 0.5, 1).masked_idx.size() == 4);   // 3.5 rounds to even
}

TEST_CASE("mask plan partitions the token range") {
  MaskPlan plan = sample_mask(100, 0.3, 17);
  std::set<int64_t> all;
  all.insert(plan.masked_idx.begin(), plan.masked_idx.end());
  all.insert(plan.visible_idx.begin(), plan.visible_idx.end());
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);
}

TEST_CASE("mask plans are deterministic in seed and differ across seeds") {
  MaskPlan a = sample_mask(256, 0.75, 5);
  MaskPlan b = sample_mask(256, 0.75, 5);
  MaskPlan c = sample_mask(256, 0.75, 6);
  CHECK(a.masked_idx == b.masked_idx);
  CHECK(a.masked_idx != c.masked_idx);
}

TEST_CASE("mask ratio bounds are enforced") {
  CHECK_THROWS_AS(sample_mask(16, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_mask(16, 1.0, 0), std::invalid_argument);
}
