#pragma once

#include <array>

#include "vidstereo/config.hpp"
#include "vidstereo/geometry.hpp"
#include "vidstereo/params.hpp"
#include "vidstereo/synthdata.hpp"

namespace vidstereo {

// A rectified stereo clip plus whatever ground truth travels with it.
struct StereoSequence {
  std::vector<Tensor> left, right;  // T x (3,H,W)
  std::vector<Tensor> gt_disparity;                 // optional, T x (H,W)
  std::vector<Tensor> gt_flow_fwd, gt_flow_bwd;     // optional, (T-1) x (2,H,W)
  std::vector<std::string> flow_fwd_files, flow_bwd_files;  // optional .flo paths

  int frames() const { return static_cast<int>(left.size()); }
  int height() const { return left.empty() ? 0 : left[0].dim(1); }
  int width() const { return left.empty() ? 0 : left[0].dim(2); }

  static StereoSequence from_bundle(const GroundTruthBundle& b);
};

// Bidirectional flows for every adjacent pair, cached at full resolution and
// the three pyramid levels.
class FlowSet {
 public:
  static FlowSet from_tensors(std::vector<Tensor> fwd, std::vector<Tensor> bwd);
  static FlowSet zeros(int pairs, int h, int w);

  int pairs() const { return static_cast<int>(fwd_[1].size()); }
  // denom in {1, 4, 8, 16}
  const Tensor& fwd(int pair, int denom) const { return fwd_.at(key(denom)).at(pair); }
  const Tensor& bwd(int pair, int denom) const { return bwd_.at(key(denom)).at(pair); }

 private:
  static int key(int denom);
  std::array<std::vector<Tensor>, 4> fwd_, bwd_;  // index by key(denom)
};

// Ground-truth passthrough or .flo files; the learned flow estimator sits
// behind this seam and is intentionally out of the build.
FlowSet provide_flow(const StereoSequence& seq, FlowSource source);

// Shared-weight residual encoder emitting C-channel maps at 1/4, 1/8, 1/16.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(ParamStore& ps, Rng& rng, const ModelConfig& cfg, const std::string& prefix = "backbone");

  struct Maps {
    Var s4, s8, s16;  // quarter, eighth, sixteenth resolution
    Var at(int denom) const {
      if (denom == 4) return s4;
      if (denom == 8) return s8;
      return s16;
    }
  };
  // image: (3,H,W), H and W divisible by 16.
  Maps operator()(Graph& g, Binder& p, Var image) const;

 private:
  struct ResBlock {
    Conv2dM c1, c2, skip;
    InstanceNormM n1, n2, ns;
    bool has_skip = false;
    Var operator()(Graph& g, Binder& p, Var x) const;
  };
  Conv2dM stem_;
  InstanceNormM stem_norm_;
  std::array<ResBlock, 6> blocks_;
  Conv2dM tap4_, tap8_, tap16_;
};

}  // namespace vidstereo
