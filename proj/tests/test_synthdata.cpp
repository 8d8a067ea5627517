#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "oracle.hpp"
#include "vidstereo/synthdata.hpp"

using namespace vidstereo;

namespace {

SceneConfig small_config() {
  SceneConfig c;
  c.width = 64;
  c.height = 48;
  c.frames = 4;
  c.sprite_count = 3;
  c.d_min = 1.0;
  c.d_max = 9.0;
  c.max_motion = 3.0;
  return c;
}

// max / mean per-channel abs difference over mask==0 pixels
std::pair<double, double> masked_err(const Tensor& a, const Tensor& b, const Tensor& occ) {
  int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  double mx = 0, sum = 0;
  long n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (occ.at(y, x) > 0.5) continue;
      for (int ch = 0; ch < c; ++ch) {
        double e = std::fabs(a.at(ch, y, x) - b.at(ch, y, x));
        mx = std::max(mx, e);
        sum += e;
        ++n;
      }
    }
  REQUIRE(n > 0);
  return {mx, sum / n};
}

}  // namespace

TEST_CASE("static scene: constant disparity, zero flow, occlusion only at the stereo border") {
  SceneConfig c = small_config();
  c.sprite_count = 0;
  c.d_min = c.d_max = 4.0;
  GroundTruthBundle b = generate_sequence(c, 5);
  for (int t = 0; t < b.frames(); ++t)
    for (std::int64_t i = 0; i < b.disparity[t].numel(); ++i) CHECK(b.disparity[t][i] == 4.0);
  for (int t = 0; t + 1 < b.frames(); ++t) {
    for (std::int64_t i = 0; i < b.flow_fwd[t].numel(); ++i) {
      CHECK(b.flow_fwd[t][i] == 0.0);
      CHECK(b.flow_bwd[t][i] == 0.0);
    }
    for (std::int64_t i = 0; i < b.occ_temporal_fwd[t].numel(); ++i) {
      CHECK(b.occ_temporal_fwd[t][i] == 0.0);
      CHECK(b.occ_temporal_bwd[t][i] == 0.0);
    }
  }
  // the left d columns have their match outside the right frame
  for (int t = 0; t < b.frames(); ++t)
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) CHECK(b.occ_stereo[t].at(y, x) == (x < 4 ? 1.0 : 0.0));
}

TEST_CASE("determinism: same config and seed give bit-identical bundles") {
  SceneConfig c = small_config();
  GroundTruthBundle a = generate_sequence(c, 42);
  GroundTruthBundle b = generate_sequence(c, 42);
  for (int t = 0; t < a.frames(); ++t) {
    for (std::int64_t i = 0; i < a.left[t].numel(); ++i) {
      CHECK(a.left[t][i] == b.left[t][i]);
      CHECK(a.right[t][i] == b.right[t][i]);
    }
    for (std::int64_t i = 0; i < a.disparity[t].numel(); ++i) CHECK(a.disparity[t][i] == b.disparity[t][i]);
  }
  GroundTruthBundle other = generate_sequence(c, 43);
  bool same = true;
  for (std::int64_t i = 0; i < a.left[0].numel() && same; ++i) same = a.left[0][i] == other.left[0][i];
  CHECK(!same);
}

TEST_CASE("photometric stereo consistency: left equals disparity-warped right where visible") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    GroundTruthBundle b = generate_sequence(small_config(), seed);
    for (int t = 0; t < b.frames(); ++t) {
      Tensor warped = oracle::warp_disp(b.right[t], b.disparity[t]);
      auto [mx, mean] = masked_err(b.left[t], warped, b.occ_stereo[t]);
      CHECK(mx <= 0.02);
      CHECK(mean <= 0.02);
    }
  }
}

TEST_CASE("photometric temporal consistency in both directions") {
  for (std::uint64_t seed : {11ull, 12ull}) {
    GroundTruthBundle b = generate_sequence(small_config(), seed);
    for (int t = 0; t + 1 < b.frames(); ++t) {
      Tensor recon_t = oracle::warp_flow(b.left[t + 1], b.flow_fwd[t]);
      auto [mx1, mean1] = masked_err(b.left[t], recon_t, b.occ_temporal_fwd[t]);
      CHECK(mx1 <= 0.02);
      CHECK(mean1 <= 0.02);
      Tensor recon_next = oracle::warp_flow(b.left[t], b.flow_bwd[t]);
      auto [mx2, mean2] = masked_err(b.left[t + 1], recon_next, b.occ_temporal_bwd[t]);
      CHECK(mx2 <= 0.02);
      CHECK(mean2 <= 0.02);
    }
  }
}

TEST_CASE("flow inverse consistency: fwd composed with resampled bwd is below 0.5 px") {
  GroundTruthBundle b = generate_sequence(small_config(), 21);
  int h = b.config.height, w = b.config.width;
  for (int t = 0; t + 1 < b.frames(); ++t) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (b.occ_temporal_fwd[t].at(y, x) > 0.5) continue;
        double u = b.flow_fwd[t].at(0, y, x), v = b.flow_fwd[t].at(1, y, x);
        double bu = oracle::sample_clamped(b.flow_bwd[t], 0, x + u, y + v);
        double bv = oracle::sample_clamped(b.flow_bwd[t], 1, x + u, y + v);
        double res = std::hypot(u + bu, v + bv);
        CHECK(res <= 0.5);
      }
  }
}

TEST_CASE("single sprite: flow inside the sprite equals its velocity, background static") {
  SceneConfig c = small_config();
  c.sprite_count = 1;
  c.max_motion = 2.0;
  GroundTruthBundle b = generate_sequence(c, 7);
  REQUIRE(b.layers.size() == 2);
  const LayerInfo& sprite = b.layers[1];
  CHECK(std::fabs(sprite.vx) <= 2.0);
  int on_sprite = 0;
  for (int t = 0; t + 1 < b.frames(); ++t)
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        bool is_sprite = b.disparity[t].at(y, x) == sprite.disparity;
        double fu = b.flow_fwd[t].at(0, y, x), fv = b.flow_fwd[t].at(1, y, x);
        if (is_sprite) {
          CHECK(fu == sprite.vx);
          CHECK(fv == sprite.vy);
          ++on_sprite;
        } else {
          CHECK(fu == 0.0);
          CHECK(fv == 0.0);
        }
      }
  CHECK(on_sprite > 100);
}

TEST_CASE("disparities are non-negative and inside the configured range") {
  GroundTruthBundle b = generate_sequence(small_config(), 31);
  for (int t = 0; t < b.frames(); ++t)
    for (std::int64_t i = 0; i < b.disparity[t].numel(); ++i) {
      CHECK(b.disparity[t][i] >= small_config().d_min);
      CHECK(b.disparity[t][i] <= small_config().d_max);
    }
}

TEST_CASE("invalid configs are rejected with the violated bound named") {
  SceneConfig c = small_config();
  c.d_max = 20.0;  // >= width/4 = 16
  CHECK_THROWS_WITH_AS(generate_sequence(c, 1), doctest::Contains("width/4"), std::invalid_argument);
  c = small_config();
  c.frames = 1;
  CHECK_THROWS_WITH_AS(generate_sequence(c, 1), doctest::Contains("T >= 2"), std::invalid_argument);
  c = small_config();
  c.width = 60;
  CHECK_THROWS_WITH_AS(generate_sequence(c, 1), doctest::Contains("divisible by 16"), std::invalid_argument);
  c = small_config();
  c.d_min = -1.0;
  CHECK_THROWS_WITH_AS(generate_sequence(c, 1), doctest::Contains("d_min"), std::invalid_argument);
}

TEST_CASE("split_dataset: 80/20, deterministic, disjoint seeds") {
  DatasetSplit s = split_dataset(10, 99);
  CHECK(s.train.size() == 8);
  CHECK(s.eval.size() == 2);
  DatasetSplit s2 = split_dataset(10, 99);
  for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].seed == s2.train[i].seed);
  DatasetSplit tiny = split_dataset(2, 1);
  CHECK(tiny.train.size() == 1);
  CHECK(tiny.eval.size() == 1);
  CHECK_THROWS_AS(split_dataset(1, 1), std::invalid_argument);
  // all item seeds distinct
  std::vector<std::uint64_t> seeds;
  for (auto& it : s.train) seeds.push_back(it.seed);
  for (auto& it : s.eval) seeds.push_back(it.seed);
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("bundle save/load roundtrip preserves ground truth to format precision") {
  auto dir = (std::filesystem::temp_directory_path() / "vidstereo_bundle_test").string();
  SceneConfig c = small_config();
  c.frames = 3;
  GroundTruthBundle b = generate_sequence(c, 55);
  save_bundle(dir, b);
  GroundTruthBundle back = load_bundle(dir);
  CHECK(back.seed == b.seed);
  CHECK(back.config.width == c.width);
  CHECK(back.frames() == b.frames());
  REQUIRE(back.layers.size() == b.layers.size());
  for (int t = 0; t < b.frames(); ++t) {
    for (std::int64_t i = 0; i < b.left[t].numel(); ++i)
      CHECK(std::fabs(back.left[t][i] - b.left[t][i]) <= 0.5 / 255 + 1e-12);
    for (std::int64_t i = 0; i < b.disparity[t].numel(); ++i)
      CHECK(back.disparity[t][i] == doctest::Approx(b.disparity[t][i]).epsilon(1e-6));
    for (std::int64_t i = 0; i < b.occ_stereo[t].numel(); ++i)
      CHECK(back.occ_stereo[t][i] == b.occ_stereo[t][i]);
  }
  for (int t = 0; t + 1 < b.frames(); ++t)
    for (std::int64_t i = 0; i < b.flow_fwd[t].numel(); ++i)
      CHECK(back.flow_fwd[t][i] == doctest::Approx(b.flow_fwd[t][i]).epsilon(1e-6));
}
