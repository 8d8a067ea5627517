#pragma once

// Independent brute-force references used by the test suites. These are
// written as plain triple loops with their own sampling code on purpose; they
// must not share implementation with the library paths they check.

#include <cmath>
#include <utility>
#include <vector>

#include "vidstereo/tensor.hpp"

namespace vidstereo::oracle {

inline double sample_clamped(const Tensor& img, int c, double x, double y) {
  int nd = img.ndim();
  int h = img.dim(nd - 2), w = img.dim(nd - 1);
  if (x < 0) x = 0;
  if (x > w - 1) x = w - 1;
  if (y < 0) y = 0;
  if (y > h - 1) y = h - 1;
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 > w - 2) x0 = w >= 2 ? w - 2 : 0;
  if (y0 > h - 2) y0 = h >= 2 ? h - 2 : 0;
  int x1 = w >= 2 ? x0 + 1 : x0;
  int y1 = h >= 2 ? y0 + 1 : y0;
  double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) {
    return img.data()[(static_cast<std::int64_t>(c) * h + yy) * w + xx];
  };
  return px(y0, x0) * (1 - fx) * (1 - fy) + px(y0, x1) * fx * (1 - fy) + px(y1, x0) * (1 - fx) * fy +
         px(y1, x1) * fx * fy;
}

inline Tensor warp_flow(const Tensor& img, const Tensor& flow) {
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(ch, y, x) = sample_clamped(img, ch, x + flow.at(0, y, x), y + flow.at(1, y, x));
  return out;
}

inline Tensor warp_disp(const Tensor& img, const Tensor& disp) {
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ch, y, x) = sample_clamped(img, ch, x - disp.at(y, x), y);
  return out;
}

inline Tensor correlate(const Tensor& fl, const Tensor& fr,
                        const std::vector<std::pair<int, int>>& offsets) {
  int c = fl.dim(0), h = fl.dim(1), w = fl.dim(2);
  int nr = static_cast<int>(offsets.size());
  Tensor out({nr, h, w});
  for (int k = 0; k < nr; ++k) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int sy = y + offsets[k].second;
        int sx = x + offsets[k].first;
        sy = sy < 0 ? 0 : (sy > h - 1 ? h - 1 : sy);
        sx = sx < 0 ? 0 : (sx > w - 1 ? w - 1 : sx);
        double s = 0;
        for (int ch = 0; ch < c; ++ch) s += fl.at(ch, y, x) * fr.at(ch, sy, sx);
        out.at(k, y, x) = s / std::sqrt(static_cast<double>(c));
      }
    }
  }
  return out;
}

// Full triple-frame cost volume: flow-align the right neighbors, shift all
// three by the disparity, correlate against the left reference(s).
inline Tensor tfcl(const std::vector<Tensor>& left_refs, const Tensor& r_prev, const Tensor& r_center,
                   const Tensor& r_next, const Tensor& flow_to_prev, const Tensor& flow_to_next,
                   const Tensor& disp, const std::vector<std::pair<int, int>>& offsets) {
  int h = r_center.dim(1), w = r_center.dim(2);
  Tensor aligned_prev = warp_flow(r_prev, flow_to_prev);
  Tensor aligned_next = warp_flow(r_next, flow_to_next);
  auto dwarp = [&](const Tensor& img) {
    int c = img.dim(0);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(ch, y, x) = sample_clamped(img, ch, x - disp.at(y, x), y);
    return out;
  };
  Tensor wp = dwarp(aligned_prev), wc = dwarp(r_center), wn = dwarp(aligned_next);
  int nr = static_cast<int>(offsets.size());
  int blocks = static_cast<int>(left_refs.size()) * 3;
  Tensor out({blocks * nr, h, w});
  int bi = 0;
  for (const Tensor& ref : left_refs) {
    for (const Tensor* src : {&wp, &wc, &wn}) {
      Tensor block = correlate(ref, *src, offsets);
      for (std::int64_t i = 0; i < block.numel(); ++i) out[bi * nr * h * w + i] = block[i];
      ++bi;
    }
  }
  return out;
}

}  // namespace vidstereo::oracle
