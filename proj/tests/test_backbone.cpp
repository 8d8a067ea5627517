#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "testutil.hpp"
#include "vidstereo/backbone.hpp"
#include "vidstereo/io.hpp"

using namespace vidstereo;
using testutil::param_gradcheck;
using testutil::random_tensor;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.feat_channels = 12;
  m.motion_channels = 8;
  m.corr_width = 16;
  m.disp_width = 8;
  m.trunk_width = 16;
  return m;
}

}  // namespace

TEST_CASE("feature pyramid shapes: 64x96 image gives 16x24, 8x12, 4x6 maps") {
  ParamStore ps;
  Rng rng(1);
  ModelConfig cfg = tiny_model();
  FeatureExtractor fx(ps, rng, cfg);
  Graph g;
  Binder p(g, ps, false);
  auto maps = fx(g, p, g.leaf(random_tensor({3, 64, 96}, 2)));
  CHECK(g.val(maps.s4).shape() == Shape{12, 16, 24});
  CHECK(g.val(maps.s8).shape() == Shape{12, 8, 12});
  CHECK(g.val(maps.s16).shape() == Shape{12, 4, 6});
}

TEST_CASE("weight sharing is structural: one backbone bundle, identical maps for identical inputs") {
  ParamStore ps;
  Rng rng(1);
  FeatureExtractor fx(ps, rng, tiny_model());
  int backbone_params = 0;
  for (const auto& [k, v] : ps.values)
    if (k.rfind("backbone.", 0) == 0) ++backbone_params;
  CHECK(backbone_params > 0);
  CHECK(static_cast<std::int64_t>(ps.values.size()) == backbone_params);  // nothing else registered

  Tensor img = random_tensor({3, 32, 32}, 3);
  Graph g;
  Binder p(g, ps, false);
  auto a = fx(g, p, g.leaf(img));
  auto b = fx(g, p, g.leaf(img));  // "right view" with the same content
  for (std::int64_t i = 0; i < g.val(a.s4).numel(); ++i) CHECK(g.val(a.s4)[i] == g.val(b.s4)[i]);
  for (std::int64_t i = 0; i < g.val(a.s16).numel(); ++i) CHECK(g.val(a.s16)[i] == g.val(b.s16)[i]);
}

TEST_CASE("indivisible input dimensions are rejected with the required divisor") {
  ParamStore ps;
  Rng rng(1);
  FeatureExtractor fx(ps, rng, tiny_model());
  Graph g;
  Binder p(g, ps, false);
  CHECK_THROWS_WITH_AS(fx(g, p, g.leaf(Tensor({3, 30, 32}))), doctest::Contains("divisible by 16"),
                       std::invalid_argument);
}

TEST_CASE("backbone gradients match finite differences on a 16x16 crop") {
  ParamStore ps;
  Rng rng(4);
  ModelConfig cfg = tiny_model();
  cfg.feat_channels = 8;
  FeatureExtractor fx(ps, rng, cfg);
  Tensor img = random_tensor({3, 16, 16}, 5, 0.0, 1.0);
  Tensor wsum = random_tensor({8, 4, 4}, 6);
  auto build = [&](Graph& g, Binder& p) {
    auto maps = fx(g, p, g.leaf(img));
    return ops::sum(g, ops::mul(g, maps.s4, g.leaf(wsum)));
  };
  double err = param_gradcheck(ps, build,
                               {"backbone.stem.w", "backbone.block0.c1.w", "backbone.block2.skip.w",
                                "backbone.block5.c2.b", "backbone.tap4.w", "backbone.stem_n.g"},
                               6);
  CHECK(err < 1e-4);
}

TEST_CASE("provide_flow: ground-truth passthrough at full resolution, scaled caches") {
  SceneConfig sc;
  sc.width = 32;
  sc.height = 32;
  sc.frames = 3;
  sc.sprite_count = 1;
  sc.d_max = 6.0;
  GroundTruthBundle b = generate_sequence(sc, 9);
  StereoSequence seq = StereoSequence::from_bundle(b);
  FlowSet fs = provide_flow(seq, FlowSource::kGroundTruth);
  CHECK(fs.pairs() == 2);
  for (std::int64_t i = 0; i < b.flow_fwd[0].numel(); ++i) CHECK(fs.fwd(0, 1)[i] == b.flow_fwd[0][i]);
  CHECK(fs.fwd(0, 4).shape() == Shape{2, 8, 8});
  CHECK(fs.fwd(1, 16).shape() == Shape{2, 2, 2});
}

TEST_CASE("provide_flow: static scene gives zero flow at every scale") {
  SceneConfig sc;
  sc.width = 32;
  sc.height = 32;
  sc.frames = 3;
  sc.sprite_count = 0;
  sc.d_min = sc.d_max = 3.0;
  StereoSequence seq = StereoSequence::from_bundle(generate_sequence(sc, 10));
  FlowSet fs = provide_flow(seq, FlowSource::kGroundTruth);
  for (int denom : {1, 4, 8, 16})
    for (int pair = 0; pair < 2; ++pair)
      for (std::int64_t i = 0; i < fs.fwd(pair, denom).numel(); ++i) {
        CHECK(fs.fwd(pair, denom)[i] == 0.0);
        CHECK(fs.bwd(pair, denom)[i] == 0.0);
      }
}

TEST_CASE("provide_flow: external .flo files roundtrip bit-exactly, missing files error") {
  auto dir = std::filesystem::temp_directory_path() / "vidstereo_flow_test";
  std::filesystem::create_directories(dir);
  StereoSequence seq;
  for (int t = 0; t < 3; ++t) {
    seq.left.push_back(random_tensor({3, 16, 16}, 20 + t));
    seq.right.push_back(random_tensor({3, 16, 16}, 30 + t));
  }
  std::vector<Tensor> fwd, bwd;
  for (int i = 0; i < 2; ++i) {
    Tensor f = random_tensor({2, 16, 16}, 40 + i, -2.0, 2.0);
    Tensor b = random_tensor({2, 16, 16}, 50 + i, -2.0, 2.0);
    for (std::int64_t k = 0; k < f.numel(); ++k) {
      f[k] = static_cast<double>(static_cast<float>(f[k]));
      b[k] = static_cast<double>(static_cast<float>(b[k]));
    }
    std::string fp = (dir / ("f" + std::to_string(i) + ".flo")).string();
    std::string bp = (dir / ("b" + std::to_string(i) + ".flo")).string();
    write_flo(fp, f);
    write_flo(bp, b);
    seq.flow_fwd_files.push_back(fp);
    seq.flow_bwd_files.push_back(bp);
    fwd.push_back(f);
    bwd.push_back(b);
  }
  FlowSet fs = provide_flow(seq, FlowSource::kExternalFile);
  for (int i = 0; i < 2; ++i)
    for (std::int64_t k = 0; k < fwd[i].numel(); ++k) {
      CHECK(fs.fwd(i, 1)[k] == fwd[i][k]);
      CHECK(fs.bwd(i, 1)[k] == bwd[i][k]);
    }

  StereoSequence missing = seq;
  missing.flow_fwd_files.pop_back();
  CHECK_THROWS_WITH_AS(provide_flow(missing, FlowSource::kExternalFile), doctest::Contains(".flo"),
                       std::invalid_argument);
  StereoSequence no_gt = seq;
  no_gt.flow_fwd_files.clear();
  no_gt.flow_bwd_files.clear();
  CHECK_THROWS_WITH_AS(provide_flow(no_gt, FlowSource::kGroundTruth),
                       doctest::Contains("ground-truth flow"), std::invalid_argument);
}
