#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle.hpp"
#include "testutil.hpp"
#include "vidstereo/correlation.hpp"
#include "vidstereo/geometry.hpp"

using namespace vidstereo;
using testutil::gradcheck;
using testutil::random_tensor;

namespace {

Tensor zero_flow(int h, int w) { return Tensor({2, h, w}); }

Tensor const_flow(int h, int w, double u, double v) {
  Tensor f({2, h, w});
  for (int i = 0; i < h * w; ++i) {
    f[i] = u;
    f[h * w + i] = v;
  }
  return f;
}

}  // namespace

TEST_CASE("search ranges: 9 offsets each, center present, parity alternation") {
  SearchRange h = SearchRange::horizontal();
  SearchRange g3 = SearchRange::grid3x3();
  CHECK(h.size() == 9);
  CHECK(g3.size() == 9);
  CHECK(h.offsets[4] == std::make_pair(0, 0));
  CHECK(g3.offsets[4] == std::make_pair(0, 0));
  for (auto& o : h.offsets) CHECK(o.second == 0);
  CHECK(SearchRange::for_iteration(0).offsets == h.offsets);
  CHECK(SearchRange::for_iteration(1).offsets == g3.offsets);
  CHECK(SearchRange::for_iteration(2).offsets == h.offsets);
}

TEST_CASE("local_correlation: all-ones with C=4 scores 2 at every offset") {
  Tensor f({4, 3, 3});
  f.fill(1.0);
  Graph g;
  Var out = ops::local_correlation(g, g.leaf(f), g.leaf(f), SearchRange::horizontal());
  for (std::int64_t i = 0; i < g.val(out).numel(); ++i) CHECK(g.val(out)[i] == doctest::Approx(2.0));
}

TEST_CASE("local_correlation: orthogonal channel vectors score 0") {
  Tensor fl({2, 3, 4});
  Tensor fr({2, 3, 4});
  for (int i = 0; i < 12; ++i) {
    fl[i] = 1.0;        // (1, 0) everywhere
    fr[12 + i] = 1.0;   // (0, 1) everywhere
  }
  Graph g;
  Var out = ops::local_correlation(g, g.leaf(fl), g.leaf(fr), SearchRange::grid3x3());
  for (std::int64_t i = 0; i < g.val(out).numel(); ++i) CHECK(g.val(out)[i] == 0.0);
}

TEST_CASE("local_correlation: matches triple-loop oracle on random input") {
  Tensor fl = random_tensor({4, 3, 3}, 101);
  Tensor fr = random_tensor({4, 3, 3}, 102);
  SearchRange r = SearchRange::grid3x3();
  Tensor expect = oracle::correlate(fl, fr, r.offsets);
  Graph g;
  Var out = ops::local_correlation(g, g.leaf(fl), g.leaf(fr), r);
  for (std::int64_t i = 0; i < expect.numel(); ++i)
    CHECK(g.val(out)[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("local_correlation: shape mismatch and degenerate range rejected") {
  Graph g;
  Var a = g.leaf(Tensor({2, 3, 3}));
  Var b = g.leaf(Tensor({2, 4, 3}));
  CHECK_THROWS_AS(ops::local_correlation(g, a, b, SearchRange::horizontal()), std::invalid_argument);
  SearchRange empty;
  CHECK_THROWS_AS(ops::local_correlation(g, a, a, empty), std::invalid_argument);
  SearchRange no_center;
  no_center.offsets = {{1, 0}};
  CHECK_THROWS_AS(ops::local_correlation(g, a, a, no_center), std::invalid_argument);
}

TEST_CASE("local_correlation: scores scale as k^2 when both inputs scale by k") {
  Tensor fl = random_tensor({3, 4, 5}, 103);
  Tensor fr = random_tensor({3, 4, 5}, 104);
  Tensor fl2 = fl, fr2 = fr;
  const double k = 3.5;
  for (std::int64_t i = 0; i < fl.numel(); ++i) {
    fl2[i] *= k;
    fr2[i] *= k;
  }
  Graph g;
  Var s1 = ops::local_correlation(g, g.leaf(fl), g.leaf(fr), SearchRange::horizontal());
  Var s2 = ops::local_correlation(g, g.leaf(fl2), g.leaf(fr2), SearchRange::horizontal());
  for (std::int64_t i = 0; i < g.val(s1).numel(); ++i)
    CHECK(g.val(s2)[i] == doctest::Approx(k * k * g.val(s1)[i]).epsilon(1e-9));
}

TEST_CASE("align_neighbors: zero flows return the neighbors unchanged") {
  Tensor prev = random_tensor({3, 4, 6}, 105);
  Tensor next = random_tensor({3, 4, 6}, 106);
  Tensor center = random_tensor({3, 4, 6}, 107);
  Graph g;
  auto tri = ops::align_neighbors(g, g.leaf(prev), g.leaf(center), g.leaf(next), g.leaf(zero_flow(4, 6)),
                                  g.leaf(zero_flow(4, 6)));
  for (std::int64_t i = 0; i < prev.numel(); ++i) {
    CHECK(g.val(tri.prev)[i] == prev[i]);
    CHECK(g.val(tri.next)[i] == next[i]);
    CHECK(g.val(tri.center)[i] == center[i]);
  }
}

TEST_CASE("align_neighbors: translated neighbor snaps back onto the center") {
  // neighbor is the center translated by (-2, 0); center->neighbor flow (-2,0)
  int h = 5, w = 10;
  Tensor center({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) center.at(0, y, x) = std::sin(0.7 * x) + 0.3 * y;
  Tensor neighbor({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sx = std::min(w - 1, std::max(0, x + 2));
      neighbor.at(0, y, x) = center.at(0, y, sx);
    }
  Graph g;
  auto tri = ops::align_neighbors(g, g.leaf(neighbor), g.leaf(center), g.leaf(center),
                                  g.leaf(const_flow(h, w, -2.0, 0.0)), g.leaf(zero_flow(h, w)));
  // away from the clamped border the aligned neighbor equals the center
  for (int y = 0; y < h; ++y)
    for (int x = 2; x < w - 2; ++x)
      CHECK(g.val(tri.prev).at(0, y, x) == doctest::Approx(center.at(0, y, x)).epsilon(1e-12));
}

TEST_CASE("align_neighbors: replicated center with zero flow gives identical triple") {
  Tensor center = random_tensor({2, 4, 5}, 108);
  Graph g;
  Var c = g.leaf(center);
  auto tri = ops::align_neighbors(g, c, c, c, g.leaf(zero_flow(4, 5)), g.leaf(zero_flow(4, 5)));
  for (std::int64_t i = 0; i < center.numel(); ++i) {
    CHECK(g.val(tri.prev)[i] == center[i]);
    CHECK(g.val(tri.center)[i] == center[i]);
    CHECK(g.val(tri.next)[i] == center[i]);
  }
}

TEST_CASE("tfcl: 27 channels at even and odd iterations, 81 in multi-multi") {
  Tensor fl = random_tensor({4, 4, 6}, 109);
  Tensor fr = random_tensor({4, 4, 6}, 110);
  Tensor d({1, 4, 6});
  Graph g;
  Var l = g.leaf(fl), r = g.leaf(fr), dv = g.leaf(d);
  ops::AlignedTriple tri{r, r, r};
  CHECK(g.val(ops::tfcl(g, {l}, tri, dv, 0)).dim(0) == 27);
  CHECK(g.val(ops::tfcl(g, {l}, tri, dv, 1)).dim(0) == 27);
  CHECK(g.val(ops::tfcl(g, {l, l, l}, tri, dv, 0)).dim(0) == 81);
}

TEST_CASE("tfcl: matches the explicit-loop oracle on seeded 6x8 inputs") {
  int h = 6, w = 8, c = 8;
  Tensor fl = random_tensor({c, h, w}, 111);
  Tensor rp = random_tensor({c, h, w}, 112);
  Tensor rc = random_tensor({c, h, w}, 113);
  Tensor rn = random_tensor({c, h, w}, 114);
  Tensor f2p = random_tensor({2, h, w}, 115, -1.5, 1.5);
  Tensor f2n = random_tensor({2, h, w}, 116, -1.5, 1.5);
  Tensor d = random_tensor({1, h, w}, 117, 0.0, 2.0);

  for (int iter : {0, 1}) {
    SearchRange range = SearchRange::for_iteration(iter);
    Tensor expect = oracle::tfcl({fl}, rp, rc, rn, f2p, f2n, d.reshaped({h, w}), range.offsets);
    Graph g;
    auto tri = ops::align_neighbors(g, g.leaf(rp), g.leaf(rc), g.leaf(rn), g.leaf(f2p), g.leaf(f2n));
    Var cost = ops::tfcl(g, {g.leaf(fl)}, tri, g.leaf(d), iter);
    REQUIRE(g.val(cost).numel() == expect.numel());
    for (std::int64_t i = 0; i < expect.numel(); ++i)
      CHECK(g.val(cost)[i] == doctest::Approx(expect[i]).epsilon(1e-6));
  }
}

TEST_CASE("tfcl: correct disparity puts the peak at the center offset") {
  // left features are unit-normalized noise; right is the left shifted by an
  // integer disparity, so the disparity-warped right matches exactly and the
  // (0,0)-offset inner product dominates every other offset.
  int h = 6, w = 12, c = 8, d_true = 3;
  Tensor wide = random_tensor({c, h, w + d_true}, 118);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w + d_true; ++x) {
      double n = 0;
      for (int ch = 0; ch < c; ++ch) n += wide.at(ch, y, x) * wide.at(ch, y, x);
      n = std::sqrt(n);
      for (int ch = 0; ch < c; ++ch) wide.at(ch, y, x) /= n;
    }
  Tensor fl({c, h, w}), fr({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        fl.at(ch, y, x) = wide.at(ch, y, x);           // left content
        fr.at(ch, y, x) = wide.at(ch, y, x + d_true);  // right match sits at x - d
      }
  Tensor d({1, h, w});
  d.fill(static_cast<double>(d_true));
  Graph g;
  Var r = g.leaf(fr);
  ops::AlignedTriple tri{r, r, r};  // static scene: all three frames identical
  for (int iter : {0, 1}) {
    Var cost = ops::tfcl(g, {g.leaf(fl)}, tri, g.leaf(d), iter);
    const Tensor& cv = g.val(cost);
    for (int block = 0; block < 3; ++block)
      for (int y = 1; y < h - 1; ++y)
        for (int x = 5; x < w - 5; ++x) {  // stay away from clamp regions
          double center = cv.at(block * 9 + 4, y, x);
          for (int k = 0; k < 9; ++k) {
            if (k == 4) continue;
            CHECK(center > cv.at(block * 9 + k, y, x) - 1e-12);
          }
        }
  }
}

TEST_CASE("tfcl: differentiable through warps and correlation") {
  int h = 4, w = 6, c = 3;
  Tensor fl = random_tensor({c, h, w}, 119);
  Tensor rp = random_tensor({c, h, w}, 120);
  Tensor rc = random_tensor({c, h, w}, 121);
  Tensor rn = random_tensor({c, h, w}, 122);
  Tensor f2p = random_tensor({2, h, w}, 123, -0.8, 0.8);
  Tensor f2n = random_tensor({2, h, w}, 124, -0.8, 0.8);
  Tensor d = random_tensor({1, h, w}, 125, 0.2, 1.3);
  double err = gradcheck(
      [&](Graph& g, const std::vector<Var>& in) {
        auto tri = ops::align_neighbors(g, in[1], in[2], in[3], in[4], in[5]);
        return ops::tfcl(g, {in[0]}, tri, in[6], 0);
      },
      {fl, rp, rc, rn, f2p, f2n, d}, {0, 1, 2, 3, 4, 5, 6}, 20);
  CHECK(err < 1e-4);
}
