#pragma once

#include "vidstereo/graph.hpp"

namespace vidstereo {

// Global cap on kernel worker threads. Defaults to the hardware count,
// overridable by the VIDSTEREO_WORKERS environment variable or at runtime.
// Results are bit-identical for any thread count: every output element is
// computed by exactly one thread with a fixed-order inner loop.
void set_max_threads(int n);
int max_threads();

namespace ops {

// 2D convolution on CHW input, zero padding. w: (Co,Ci,kh,kw), b: (Co).
Var conv2d(Graph& g, Var x, Var w, Var b, int stride = 1, int pad = -1);

// 3D convolution on (C,T,H,W) input, stride 1. Spatial axes use zero
// padding; the time axis uses edge replication, matching the sequence
// boundary convention (a missing neighbor behaves as a repeated frame).
// w: (Co,Ci,kt,kh,kw), b: (Co).
Var conv3d(Graph& g, Var x, Var w, Var b);

// Per-channel instance normalization over the spatial axes of CHW.
Var instance_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);

// Bilinear resize of a CHW map to (C,h2,w2); sampled values are multiplied
// by value_scale (used to rescale disparities/flows across pyramid levels).
Var resize_bilinear(Graph& g, Var x, int h2, int w2, double value_scale = 1.0);

}  // namespace ops

// Plain-tensor variants for code paths that never need gradients.
Tensor resize_bilinear_t(const Tensor& x, int h2, int w2, double value_scale = 1.0);

}  // namespace vidstereo
