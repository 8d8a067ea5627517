#include "vidstereo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vidstereo/io.hpp"

namespace vidstereo {

namespace {

constexpr int kDenoms[3] = {16, 8, 4};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
  a *= 0xff51afd7ed558ccdull;
  return a ^ (a >> 33);
}

Tensor clamp_nonneg(const Tensor& t) {
  Tensor out = t;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  return out;
}

Tensor crop3(const Tensor& t, int y0, int x0, int ch, int cw) {
  Tensor out({t.dim(0), ch, cw});
  for (int c = 0; c < t.dim(0); ++c)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) out.at(c, y, x) = t.at(c, y0 + y, x0 + x);
  return out;
}

Tensor crop2(const Tensor& t, int y0, int x0, int ch, int cw) {
  Tensor out({ch, cw});
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) out.at(y, x) = t.at(y0 + y, x0 + x);
  return out;
}

// Random temporal window plus optional random spatial crop (the only
// augmentation in use).
void crop_window(const GroundTruthBundle& bundle, Rng& rng, const TrainConfig& tc, StereoSequence& seq,
                 std::vector<Tensor>& gt) {
  int T = bundle.frames();
  int tw = std::min(tc.t_train, T);
  int t0 = T > tw ? static_cast<int>(rng.bits() % static_cast<std::uint64_t>(T - tw + 1)) : 0;
  int H = bundle.config.height, W = bundle.config.width;
  int ch = tc.crop_h > 0 && tc.crop_h < H ? tc.crop_h : H;
  int cw = tc.crop_w > 0 && tc.crop_w < W ? tc.crop_w : W;
  int y0 = ch < H ? static_cast<int>(rng.bits() % static_cast<std::uint64_t>(H - ch + 1)) : 0;
  int x0 = cw < W ? static_cast<int>(rng.bits() % static_cast<std::uint64_t>(W - cw + 1)) : 0;
  bool whole = ch == H && cw == W;
  for (int t = t0; t < t0 + tw; ++t) {
    seq.left.push_back(whole ? bundle.left[t] : crop3(bundle.left[t], y0, x0, ch, cw));
    seq.right.push_back(whole ? bundle.right[t] : crop3(bundle.right[t], y0, x0, ch, cw));
    gt.push_back(whole ? bundle.disparity[t] : crop2(bundle.disparity[t], y0, x0, ch, cw));
    if (t + 1 < t0 + tw) {
      seq.gt_flow_fwd.push_back(whole ? bundle.flow_fwd[t] : crop3(bundle.flow_fwd[t], y0, x0, ch, cw));
      seq.gt_flow_bwd.push_back(whole ? bundle.flow_bwd[t] : crop3(bundle.flow_bwd[t], y0, x0, ch, cw));
    }
  }
}

void check_sequence(const StereoSequence& seq, const ModelConfig& cfg) {
  if (seq.frames() < 1) throw std::invalid_argument("infer_sequence: empty sequence");
  if (seq.frames() < 2 && cfg.correlation != CorrelationMode::kPerFrame)
    throw std::invalid_argument(
        "infer_sequence: T must be >= 2; for single frames switch correlation_mode to per_frame");
  if (seq.height() % 16 != 0 || seq.width() % 16 != 0)
    throw std::invalid_argument("infer_sequence: height and width must be divisible by 16, got " +
                                std::to_string(seq.height()) + "x" + std::to_string(seq.width()));
  if (static_cast<int>(seq.right.size()) != seq.frames())
    throw std::invalid_argument("infer_sequence: left/right frame counts differ");
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  Rng rng(mix(init_seed, 0x90de1u));
  backbone_ = FeatureExtractor(params_, rng, cfg, "backbone");
  if (cfg.stage_weights == StageWeights::kShared) {
    update_.emplace_back(params_, rng, cfg, "update");
  } else {
    for (int s = 0; s < 3; ++s)
      update_.emplace_back(params_, rng, cfg, "update.s" + std::to_string(s));
  }
  m0_name_ = "mru.m0";
  Tensor& m0 = params_.declare(m0_name_, {cfg.motion_channels});
  rng.fill_uniform(m0, -0.1, 0.1);
}

Pipeline::Pipeline(const PipelineConfig& cfg, std::uint64_t init_seed) : cfg_(cfg), model_(cfg.model, init_seed) {
  cfg_.validate();
  opt_.weight_decay = cfg.train.weight_decay;
}

FlowSet Pipeline::flows_for(const StereoSequence& seq) const {
  int pairs = seq.frames() - 1;
  if (!cfg_.model.alignment || pairs == 0) return FlowSet::zeros(pairs, seq.height(), seq.width());
  FlowSource src = seq.gt_flow_fwd.empty() && !seq.flow_fwd_files.empty() ? FlowSource::kExternalFile
                                                                          : FlowSource::kGroundTruth;
  return provide_flow(seq, src);
}

FeaturePyramid Pipeline::extract_features(const StereoSequence& seq) const {
  FeaturePyramid out;
  // Throwaway graph: only feature values are kept.
  for (int t = 0; t < seq.frames(); ++t) {
    Graph g;
    Binder p(g, const_cast<ParamStore&>(model_.params()), false);
    auto ml = model_.backbone()(g, p, g.leaf(seq.left[t]));
    auto mr = model_.backbone()(g, p, g.leaf(seq.right[t]));
    out.l4.push_back(g.val(ml.s4));
    out.l8.push_back(g.val(ml.s8));
    out.l16.push_back(g.val(ml.s16));
    out.r4.push_back(g.val(mr.s4));
    out.r8.push_back(g.val(mr.s8));
    out.r16.push_back(g.val(mr.s16));
  }
  return out;
}

StageResult Pipeline::run_stage(int denom, const FeaturePyramid& feats, const FlowSet& flows,
                                const std::vector<Tensor>& init_disp, const std::vector<Tensor>& init_m,
                                const std::vector<Tensor>& init_h, int iterations, int t_frames) const {
  if (iterations < 1) throw std::invalid_argument("run_stage: iterations must be >= 1");
  int stage_idx = denom == 16 ? 0 : denom == 8 ? 1 : 2;
  const UpdateModule& mod = model_.update_module(stage_idx);
  int hs = feats.left(denom)[0].dim(1), ws = feats.left(denom)[0].dim(2);

  std::vector<Tensor> d = init_disp, m = init_m, h = init_h;
  StageResult res;
  for (int iter = 0; iter < iterations; ++iter) {
    Graph g;
    Binder p(g, const_cast<ParamStore&>(model_.params()), false);
    StageInputs in;
    in.zero_flow = g.leaf(Tensor({2, hs, ws}));
    for (int t = 0; t < t_frames; ++t) {
      in.fl.push_back(g.leaf(feats.left(denom)[t]));
      in.fr.push_back(g.leaf(feats.right(denom)[t]));
      in.flow_to_prev.push_back(t > 0 ? g.leaf(flows.bwd(t - 1, denom)) : in.zero_flow);
      in.flow_to_next.push_back(t + 1 < t_frames ? g.leaf(flows.fwd(t, denom)) : in.zero_flow);
    }
    UpdateState st;
    st.n = iter;
    st.denom = denom;
    for (int t = 0; t < t_frames; ++t) {
      st.d.push_back(g.leaf(d[t].reshaped({1, hs, ws})));
      st.h.push_back(g.leaf(h[t]));
      st.M.push_back(g.leaf(m[t]));
    }
    bool last = iter + 1 == iterations;
    std::vector<Var> logits = mru_iteration(g, p, mod, st, in, denom == 4 && last);
    std::vector<Tensor> iter_d;
    for (int t = 0; t < t_frames; ++t) {
      iter_d.push_back(g.val(st.d[t]).reshaped({hs, ws}));
      d[t] = iter_d.back();
      h[t] = g.val(st.h[t]);
      m[t] = g.val(st.M[t]);
    }
    res.iterates.push_back(std::move(iter_d));
    if (denom == 4 && last)
      for (int t = 0; t < t_frames; ++t) res.final_up_logits.push_back(g.val(logits[t]));
  }
  res.final_m = std::move(m);
  res.final_h = std::move(h);
  return res;
}

DisparityPrediction Pipeline::infer_sequence(const StereoSequence& seq, int iterations) const {
  check_sequence(seq, cfg_.model);
  int iters = iterations > 0 ? iterations : cfg_.iterations_eval;
  int T = seq.frames();
  FeaturePyramid feats = extract_features(seq);
  FlowSet flows = flows_for(seq);

  const Tensor& m0 = model_.params().values.at(model_.motion_init_name());
  int c0 = cfg_.model.motion_channels, c = cfg_.model.feat_channels;

  std::vector<Tensor> d, m, h;
  StageResult stage;
  for (int si = 0; si < 3; ++si) {
    int denom = kDenoms[si];
    int hs = seq.height() / denom, ws = seq.width() / denom;
    std::vector<Tensor> init_d, init_m, init_h;
    for (int t = 0; t < T; ++t) {
      init_h.push_back(Tensor({c, hs, ws}));
      if (si == 0) {
        init_d.push_back(Tensor({hs, ws}));  // blank disparity
      } else {
        DisparityField df{stage.iterates.back()[t], denom * 2};
        init_d.push_back(upscale_disparity_t(df).values);
      }
      if (si == 0 || cfg_.model.motion_state == MotionState::kSeparated) {
        Tensor mt({c0, hs, ws});
        for (int ch = 0; ch < c0; ++ch)
          for (int i = 0; i < hs * ws; ++i) mt[ch * hs * ws + i] = m0[ch];
        init_m.push_back(std::move(mt));
      } else {
        // carried across stages: bilinear x2, values unscaled
        init_m.push_back(resize_bilinear_t(stage.final_m[t], hs, ws, 1.0));
      }
    }
    stage = run_stage(denom, feats, flows, init_d, init_m, init_h, iters, T);
  }

  // convex upsampling of the last quarter-resolution iterate
  DisparityPrediction out;
  for (int t = 0; t < T; ++t) {
    Graph g;
    const Tensor& dq = stage.iterates.back()[t];
    Var up = ops::convex_upsample(g, g.leaf(dq.reshaped({1, dq.dim(0), dq.dim(1)})),
                                  g.leaf(stage.final_up_logits[t]));
    out.final_disparity.push_back(clamp_nonneg(g.val(up).reshaped({seq.height(), seq.width()})));
  }
  return out;
}

std::vector<std::vector<Var>> Pipeline::forward_train(Graph& g, Binder& p, const StereoSequence& seq,
                                                      int iterations) const {
  check_sequence(seq, cfg_.model);
  int T = seq.frames();
  int fh = seq.height(), fw = seq.width();
  FlowSet flows = flows_for(seq);

  // features, with gradients, once per frame/view
  std::vector<FeatureExtractor::Maps> fl(T), fr(T);
  for (int t = 0; t < T; ++t) {
    fl[t] = model_.backbone()(g, p, g.leaf(seq.left[t]));
    fr[t] = model_.backbone()(g, p, g.leaf(seq.right[t]));
  }

  std::vector<std::vector<Var>> full_res(T);
  std::vector<Var> d(T), h(T), m(T);
  for (int si = 0; si < 3; ++si) {
    int denom = kDenoms[si];
    int hs = fh / denom, ws = fw / denom;
    const UpdateModule& mod = model_.update_module(si);

    StageInputs in;
    in.zero_flow = g.leaf(Tensor({2, hs, ws}));
    for (int t = 0; t < T; ++t) {
      in.fl.push_back(fl[t].at(denom));
      in.fr.push_back(fr[t].at(denom));
      in.flow_to_prev.push_back(t > 0 ? g.leaf(flows.bwd(t - 1, denom)) : in.zero_flow);
      in.flow_to_next.push_back(t + 1 < T ? g.leaf(flows.fwd(t, denom)) : in.zero_flow);
    }

    UpdateState st;
    st.denom = denom;
    st.n = 0;
    for (int t = 0; t < T; ++t) {
      st.d.push_back(si == 0 ? g.leaf(Tensor({1, hs, ws}))
                             : ops::upscale_disparity(g, d[t], 2));
      st.h.push_back(g.leaf(Tensor({cfg_.model.feat_channels, hs, ws})));
      if (si == 0 || cfg_.model.motion_state == MotionState::kSeparated)
        st.M.push_back(ops::broadcast_chw(g, p(model_.motion_init_name()), hs, ws));
      else
        st.M.push_back(ops::resize_bilinear(g, m[t], hs, ws, 1.0));
    }

    for (int iter = 0; iter < iterations; ++iter) {
      std::vector<Var> logits = mru_iteration(g, p, mod, st, in, denom == 4);
      for (int t = 0; t < T; ++t) {
        if (denom == 4)
          full_res[t].push_back(ops::convex_upsample(g, st.d[t], logits[t]));
        else
          full_res[t].push_back(ops::resize_bilinear(g, st.d[t], fh, fw, static_cast<double>(denom)));
      }
    }
    d = st.d;
    h = st.h;
    m = st.M;
  }
  return full_res;
}

void Pipeline::load(const std::string& checkpoint_path) {
  load_checkpoint(checkpoint_path, model_.params(), &opt_);
}

TrainResult Pipeline::train(const std::vector<GroundTruthBundle>& dataset, const std::string& out_dir,
                            std::uint64_t seed, const std::string& resume_checkpoint, int run_steps) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const TrainConfig& tc = cfg_.train;
  std::int64_t start_step = 0;
  if (!resume_checkpoint.empty()) start_step = load_checkpoint(resume_checkpoint, model_.params(), &opt_).step;
  std::int64_t end_step = run_steps > 0 ? std::min<std::int64_t>(tc.steps, start_step + run_steps) : tc.steps;

  TrainResult result;
  std::ofstream curve_csv(fs::path(out_dir) / "curve.csv");
  curve_csv << "step,loss,epe,grad_norm,lr\n";

  for (std::int64_t step = start_step; step < end_step; ++step) {
    Rng step_rng(mix(seed, 0xabcd0000ull + static_cast<std::uint64_t>(step)));
    double lr = one_cycle_lr(tc.lr, step, tc.steps);

    Graph g;
    Binder p(g, model_.params(), true);
    Var total_loss;
    double epe_acc = 0.0;
    int batch = std::min<int>(tc.batch, static_cast<int>(dataset.size()));
    for (int b = 0; b < batch; ++b) {
      const GroundTruthBundle& bundle = dataset[step_rng.bits() % dataset.size()];
      StereoSequence seq;
      std::vector<Tensor> gt;
      crop_window(bundle, step_rng, tc, seq, gt);
      auto iterates = forward_train(g, p, seq, cfg_.iterations_train);
      Var loss = sequence_loss(g, iterates, gt, tc.loss_gamma);
      total_loss = total_loss.valid() ? ops::add(g, total_loss, loss) : loss;
      // EPE of the final iterate, for the metric curve
      double e = 0;
      for (std::size_t t = 0; t < iterates.size(); ++t) {
        Tensor fin = clamp_nonneg(g.val(iterates[t].back()).reshaped({gt[t].dim(0), gt[t].dim(1)}));
        e += epe(fin, gt[t]);
      }
      epe_acc += e / static_cast<double>(iterates.size());
    }
    total_loss = ops::scale(g, total_loss, 1.0 / batch);
    double loss_val = g.val(total_loss)[0];
    if (!std::isfinite(loss_val)) {
      // diagnostic snapshot, then bail out
      save_checkpoint((fs::path(out_dir) / "diverged.ckpt").string(), model_.params(), opt_, step,
                      config_to_json(cfg_));
      result.diverged = true;
      result.steps_done = step;
      result.checkpoint_path = (fs::path(out_dir) / "diverged.ckpt").string();
      return result;
    }
    g.backward(total_loss);
    auto grads = p.collect_grads();
    double gnorm = clip_grad_norm(grads, tc.clip);
    opt_.step(model_.params(), grads, lr);

    TrainStepStats stats{loss_val, epe_acc / batch, gnorm, lr};
    result.curve.push_back(stats);
    curve_csv << step << "," << stats.loss << "," << stats.epe << "," << stats.grad_norm << "," << stats.lr
              << "\n";
    if (tc.log_every > 0 && step % tc.log_every == 0) {
      std::cout << "step " << step << " loss " << stats.loss << " epe " << stats.epe << " lr " << lr
                << std::endl;
    }
  }
  result.steps_done = end_step;
  result.checkpoint_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
  save_checkpoint(result.checkpoint_path, model_.params(), opt_, end_step, config_to_json(cfg_));
  return result;
}

}  // namespace vidstereo
