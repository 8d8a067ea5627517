#pragma once

#include "vidstereo/graph.hpp"

namespace vidstereo {

// Pyramid level, expressed as the downsampling denominator: 16, 8, 4 or 1.
inline bool valid_scale_denom(int d) { return d == 16 || d == 8 || d == 4 || d == 1; }

// Optical flow at one pyramid level. values: (2,H,W), channel 0 = x
// displacement, channel 1 = y displacement, in level-local pixels.
struct FlowField {
  Tensor values;
  int denom = 1;
  int height() const { return values.dim(1); }
  int width() const { return values.dim(2); }
};

// Disparity at one pyramid level, (H,W), level-local pixel units.
// Intermediate iterates may dip below zero; only final reported outputs are
// clamped non-negative (clamping inside the loop would kill gradients).
struct DisparityField {
  Tensor values;
  int denom = 1;
  int height() const { return values.dim(0); }
  int width() const { return values.dim(1); }
};

namespace ops {

// out(p) = field sampled at p + flow(p), bilinear, edge-clamped.
// field: (C,H,W), flow: (2,H,W). Differentiable in both.
Var bilinear_warp(Graph& g, Var field, Var flow);

// out(x,y) = field sampled at (x - disp(x,y), y). field: (C,H,W),
// disp: (1,H,W). Differentiable in both.
Var warp_by_disparity(Graph& g, Var field, Var disp);

// Doubles resolution and disparity values (resolution-local units).
Var upscale_disparity(Graph& g, Var disp, int factor = 2);

// Full-resolution reconstruction from a 1/4-scale disparity. Each fine pixel
// is a convex combination (softmax over the 9 logits of its subpixel slot) of
// the 3x3 coarse neighborhood, times 4. disp: (1,H,W), logits: (144,H,W),
// channel = neighbor * 16 + (sy*4+sx). Output (1,4H,4W).
Var convex_upsample(Graph& g, Var disp, Var logits);

}  // namespace ops

// Plain-tensor resampling used outside the autograd path.
FlowField resample_flow(const FlowField& flow, int target_denom, int target_h, int target_w);
DisparityField upscale_disparity_t(const DisparityField& d, int factor = 2);

// Edge-clamped bilinear sample of channel c at real coordinates (x, y).
double bilinear_at(const Tensor& img, int c, double x, double y);

// Plain warps (no gradients) for oracles, the data generator and metrics.
Tensor warp_image(const Tensor& img, const Tensor& flow);
Tensor warp_image_by_disparity(const Tensor& img, const Tensor& disp);

}  // namespace vidstereo
