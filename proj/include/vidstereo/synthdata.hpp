#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidstereo/tensor.hpp"

namespace vidstereo {

struct SceneConfig {
  int width = 96;
  int height = 64;
  int frames = 5;
  int sprite_count = 3;
  double d_min = 1.0;   // background sits near d_min
  double d_max = 10.0;  // nearest sprite stays below d_max
  double max_motion = 3.0;  // per-axis sprite speed bound, px/frame
  std::uint64_t texture_seed = 0;
  double baseline_focal_product = 1024.0;  // disparity * depth, fixes the depth scale

  // Throws std::invalid_argument naming the violated bound.
  void validate() const;
};

// A generated clip with exact ground truth. Masks use 1 = occluded or
// otherwise unreconstructible (out-of-frame match, depth discontinuity under
// the bilinear footprint); photometric invariants hold where the mask is 0.
struct LayerInfo {
  double disparity = 0.0;
  double vx = 0.0, vy = 0.0;
};

struct GroundTruthBundle {
  SceneConfig config;
  std::uint64_t seed = 0;
  std::vector<LayerInfo> layers;  // [0] = background, then sprites far-to-near
  std::vector<Tensor> left, right;         // T x (3,H,W), intensities in [0,1]
  std::vector<Tensor> disparity;           // T x (H,W), left-aligned, >= 0
  std::vector<Tensor> flow_fwd;            // (T-1) x (2,H,W) on frame t's grid, t -> t+1
  std::vector<Tensor> flow_bwd;            // (T-1) x (2,H,W) on frame t+1's grid, t+1 -> t
  std::vector<Tensor> occ_stereo;          // T x (H,W)
  std::vector<Tensor> occ_temporal_fwd;    // (T-1) x (H,W) on frame t's grid
  std::vector<Tensor> occ_temporal_bwd;    // (T-1) x (H,W) on frame t+1's grid

  int frames() const { return static_cast<int>(left.size()); }
};

// Deterministic for a fixed (config, seed): sprites translate with constant
// per-sprite velocity over planar constant-disparity layers in front of a
// static textured background plane.
GroundTruthBundle generate_sequence(const SceneConfig& config, std::uint64_t seed);

struct DatasetItem {
  SceneConfig config;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  std::vector<DatasetItem> train, eval;
};

// Deterministic disjoint 80/20 split of n procedurally varied scenes built
// from the base config (sprite count and motion are jittered per item).
DatasetSplit split_dataset(int n_sequences, std::uint64_t seed, const SceneConfig& base = SceneConfig{});

// Directory layout: PNG images, PFM disparity, .flo flows, PNG masks and a
// JSON manifest of the SceneConfig and seed.
void save_bundle(const std::string& dir, const GroundTruthBundle& bundle);
GroundTruthBundle load_bundle(const std::string& dir);

}  // namespace vidstereo
