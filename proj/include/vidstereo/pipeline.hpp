#pragma once

#include "vidstereo/backbone.hpp"
#include "vidstereo/metrics.hpp"
#include "vidstereo/mru.hpp"

namespace vidstereo {

struct DisparityPrediction {
  std::vector<Tensor> final_disparity;  // T x (H,W), clamped non-negative
};

// The full model: one shared backbone, one update module (or three when
// stage weights are separated), and the learnable motion-state seed vector.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const FeatureExtractor& backbone() const { return backbone_; }
  const UpdateModule& update_module(int stage) const {
    return cfg_.stage_weights == StageWeights::kShared ? update_[0] : update_[stage];
  }
  const std::string& motion_init_name() const { return m0_name_; }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  FeatureExtractor backbone_;
  std::vector<UpdateModule> update_;
  std::string m0_name_;
};

// Per-frame, per-view feature tensors at the three pyramid levels.
struct FeaturePyramid {
  std::vector<Tensor> l4, l8, l16, r4, r8, r16;
  const std::vector<Tensor>& left(int denom) const { return denom == 4 ? l4 : denom == 8 ? l8 : l16; }
  const std::vector<Tensor>& right(int denom) const { return denom == 4 ? r4 : denom == 8 ? r8 : r16; }
};

struct StageResult {
  std::vector<std::vector<Tensor>> iterates;  // [iteration][frame] (H_s, W_s)
  std::vector<Tensor> final_m, final_h;       // per frame
  std::vector<Tensor> final_up_logits;        // per frame, only at the 1/4 stage
};

struct TrainStepStats {
  double loss = 0.0;
  double epe = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<TrainStepStats> curve;
  std::string checkpoint_path;
  bool diverged = false;
  std::int64_t steps_done = 0;
};

class Pipeline {
 public:
  Pipeline(const PipelineConfig& cfg, std::uint64_t init_seed);

  const PipelineConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  AdamW& optimizer() { return opt_; }

  // Gradient-free inference: features once, then one short-lived graph per
  // iteration so long clips stay in memory. The whole clip is processed
  // jointly; there is no sliding window.
  DisparityPrediction infer_sequence(const StereoSequence& seq, int iterations = 0) const;

  FeaturePyramid extract_features(const StereoSequence& seq) const;

  // One cascade stage on plain tensors (evaluation path).
  StageResult run_stage(int denom, const FeaturePyramid& feats, const FlowSet& flows,
                        const std::vector<Tensor>& init_disp, const std::vector<Tensor>& init_m,
                        const std::vector<Tensor>& init_h, int iterations, int t_frames) const;

  // Training-mode forward inside the caller's graph: returns per-frame lists
  // of full-resolution iterates (bilinear for the coarse stages, convex
  // upsampling for the quarter stage) in emission order.
  std::vector<std::vector<Var>> forward_train(Graph& g, Binder& p, const StereoSequence& seq,
                                              int iterations) const;

  // Deterministic training loop with the one-cycle schedule and random-crop
  // augmentation; writes checkpoint and loss/metric CSV under out_dir.
  // run_steps > 0 stops early after that many steps (the schedule horizon
  // stays train.steps, so an interrupted run resumes bit-identically).
  TrainResult train(const std::vector<GroundTruthBundle>& dataset, const std::string& out_dir,
                    std::uint64_t seed, const std::string& resume_checkpoint = "", int run_steps = 0);

  void load(const std::string& checkpoint_path);

 private:
  FlowSet flows_for(const StereoSequence& seq) const;

  PipelineConfig cfg_;
  Model model_;
  AdamW opt_;
};

}  // namespace vidstereo
