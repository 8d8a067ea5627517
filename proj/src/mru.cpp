#include "vidstereo/mru.hpp"

namespace vidstereo {

namespace {

int cost_channels(const ModelConfig& cfg) {
  return cfg.correlation == CorrelationMode::kMultiMulti ? 81 : 27;
}

void gate_kernel_dims(UpdaterConv v, int& kt, int& kh, int& kw) {
  switch (v) {
    case UpdaterConv::k2D: kt = 1; kh = 1; kw = 5; break;
    case UpdaterConv::k3D: kt = 3; kh = 1; kw = 5; break;
    case UpdaterConv::k3DTemporal5: kt = 5; kh = 1; kw = 1; break;
  }
}

}  // namespace

UpdateModule::UpdateModule(ParamStore& ps, Rng& rng, const ModelConfig& cfg, const std::string& prefix)
    : cfg_(cfg) {
  int c = cfg.feat_channels, c0 = cfg.motion_channels;
  int cw = cfg.corr_width, dw = cfg.disp_width, tw = cfg.trunk_width;

  mop1_ = Conv2dM(ps, rng, prefix + ".mop1", 3 * c0, c0, 3);
  mop2_ = Conv2dM(ps, rng, prefix + ".mop2", c0, c0, 3);
  corr1_ = Conv2dM(ps, rng, prefix + ".corr1", cost_channels(cfg), cw, 1, 1, 0);
  corr2_ = Conv2dM(ps, rng, prefix + ".corr2", cw, cw, 3);
  disp1_ = Conv2dM(ps, rng, prefix + ".disp1", 1, dw, 3);
  disp2_ = Conv2dM(ps, rng, prefix + ".disp2", dw, dw, 1, 1, 0);
  mot1_ = Conv2dM(ps, rng, prefix + ".mot1", cw + dw + c0, tw, 1, 1, 0);
  mot2_ = Conv2dM(ps, rng, prefix + ".mot2", tw, tw, 3);
  mot_heads_ = Conv2dM(ps, rng, prefix + ".mot_heads", tw, c + c + c0, 1, 1, 0);

  int kt, kh, kw;
  gate_kernel_dims(cfg.updater_conv, kt, kh, kw);
  gru_z_ = Conv3dM(ps, rng, prefix + ".gru_z", 2 * c, c, kt, kh, kw);
  gru_r_ = Conv3dM(ps, rng, prefix + ".gru_r", 2 * c, c, kt, kh, kw);
  gru_q_ = Conv3dM(ps, rng, prefix + ".gru_q", 2 * c, c, kt, kh, kw);
  if (cfg.super_kernel != SuperKernel::kNone) {
    bool wide = cfg.super_kernel == SuperKernel::k1x1x15;
    super_ = Conv3dM(ps, rng, prefix + ".super", c, c, 1, wide ? 1 : 3, wide ? 15 : 3);
  }
  head_d1_ = Conv2dM(ps, rng, prefix + ".head_d1", c, c, 3);
  head_d2_ = Conv2dM(ps, rng, prefix + ".head_d2", c, 1, 3);
  head_w1_ = Conv2dM(ps, rng, prefix + ".head_w1", c, c, 3);
  head_w2_ = Conv2dM(ps, rng, prefix + ".head_w2", c, 144, 1, 1, 0);
}

Var UpdateModule::motion_propagate(Graph& g, Binder& p, Var m_prev, Var m_center, Var m_next,
                                   Var flow_to_prev, Var flow_to_next) const {
  Var aligned_prev = ops::bilinear_warp(g, m_prev, flow_to_prev);
  Var aligned_next = ops::bilinear_warp(g, m_next, flow_to_next);
  Var fused = ops::concat(g, {aligned_prev, m_center, aligned_next});
  return mop2_(g, p, ops::relu(g, mop1_(g, p, fused)));
}

Var UpdateModule::encode_correlation(Graph& g, Binder& p, Var cost) const {
  const Tensor& t = g.val(cost);
  if (t.dim(0) != cost_channels(cfg_))
    throw std::invalid_argument("encode_correlation: expected " + std::to_string(cost_channels(cfg_)) +
                                " cost channels, got " + std::to_string(t.dim(0)));
  return ops::relu(g, corr2_(g, p, ops::relu(g, corr1_(g, p, cost))));
}

Var UpdateModule::encode_disparity(Graph& g, Binder& p, Var d) const {
  const Tensor& t = g.val(d);
  if (t.ndim() != 3 || t.dim(0) != 1) throw std::invalid_argument("encode_disparity: disparity must be (1,H,W)");
  return ops::relu(g, disp2_(g, p, ops::relu(g, disp1_(g, p, d))));
}

UpdateModule::MotEncOut UpdateModule::motion_encode(Graph& g, Binder& p, Var f_corr, Var f_disp,
                                                    Var f_mop) const {
  Var trunk = ops::relu(g, mot2_(g, p, ops::relu(g, mot1_(g, p, ops::concat(g, {f_corr, f_disp, f_mop})))));
  Var heads = mot_heads_(g, p, trunk);
  int c = cfg_.feat_channels, c0 = cfg_.motion_channels;
  MotEncOut out;
  out.f_mot = ops::slice(g, heads, 0, c);
  out.context = ops::slice(g, heads, c, 2 * c);
  out.m_new = ops::slice(g, heads, 2 * c, 2 * c + c0);
  return out;
}

UpdateModule::UpdaterOut UpdateModule::super_kernel_update(Graph& g, Binder& p, Var h_stack, Var mot_stack,
                                                           Var ctx_stack, bool emit_upsample) const {
  Var hx = ops::concat(g, {h_stack, mot_stack});
  Var z = ops::sigmoid(g, gru_z_(g, p, hx));
  Var r = ops::sigmoid(g, gru_r_(g, p, hx));
  Var rh = ops::mul(g, r, h_stack);
  Var q = ops::tanh_(g, ops::add(g, gru_q_(g, p, ops::concat(g, {rh, mot_stack})), ctx_stack));
  // h' = (1 - z) * h + z * q
  Var one_minus_z = ops::add_scalar(g, ops::scale(g, z, -1.0), 1.0);
  Var h_new = ops::add(g, ops::mul(g, one_minus_z, h_stack), ops::mul(g, z, q));

  Var u = h_new;
  if (cfg_.super_kernel != SuperKernel::kNone) u = ops::relu(g, super_(g, p, u));

  UpdaterOut out;
  out.h_new = h_new;
  int T = g.val(h_stack).dim(1);
  for (int t = 0; t < T; ++t) {
    Var ut = ops::unstack_time(g, u, t);
    out.delta_d.push_back(head_d2_(g, p, ops::relu(g, head_d1_(g, p, ut))));
    if (emit_upsample) out.up_logits.push_back(head_w2_(g, p, ops::relu(g, head_w1_(g, p, ut))));
  }
  return out;
}

std::vector<Var> mru_iteration(Graph& g, Binder& p, const UpdateModule& mod, UpdateState& state,
                               const StageInputs& in, bool emit_upsample) {
  const ModelConfig& cfg = mod.config();
  int T = static_cast<int>(in.fl.size());
  if (static_cast<int>(state.d.size()) != T || static_cast<int>(state.h.size()) != T ||
      static_cast<int>(state.M.size()) != T)
    throw std::invalid_argument("mru_iteration: state/input frame count mismatch");
  bool per_frame = cfg.correlation == CorrelationMode::kPerFrame;

  std::vector<Var> f_mot(T), ctx(T), m_new(T);
  for (int t = 0; t < T; ++t) {
    // boundary frames substitute themselves with zero flow
    bool has_prev = t > 0 && !per_frame;
    bool has_next = t + 1 < T && !per_frame;
    Var fr_prev = has_prev ? in.fr[t - 1] : in.fr[t];
    Var fr_next = has_next ? in.fr[t + 1] : in.fr[t];
    Var flow_p = has_prev ? in.flow_to_prev[t] : in.zero_flow;
    Var flow_n = has_next ? in.flow_to_next[t] : in.zero_flow;

    auto tri = ops::align_neighbors(g, fr_prev, in.fr[t], fr_next, flow_p, flow_n);
    std::vector<Var> refs;
    if (cfg.correlation == CorrelationMode::kMultiMulti) {
      Var fl_prev = has_prev ? ops::bilinear_warp(g, in.fl[t - 1], flow_p) : in.fl[t];
      Var fl_next = has_next ? ops::bilinear_warp(g, in.fl[t + 1], flow_n) : in.fl[t];
      refs = {fl_prev, in.fl[t], fl_next};
    } else {
      refs = {in.fl[t]};
    }
    Var cost = ops::tfcl(g, refs, tri, state.d[t], state.n);

    Var f_corr = mod.encode_correlation(g, p, cost);
    Var f_disp = mod.encode_disparity(g, p, state.d[t]);
    Var m_prev = has_prev ? state.M[t - 1] : state.M[t];
    Var m_next = has_next ? state.M[t + 1] : state.M[t];
    Var f_mop = mod.motion_propagate(g, p, m_prev, state.M[t], m_next, flow_p, flow_n);

    auto enc = mod.motion_encode(g, p, f_corr, f_disp, f_mop);
    f_mot[t] = enc.f_mot;
    ctx[t] = enc.context;
    m_new[t] = enc.m_new;
  }

  Var h_stack = ops::stack_time(g, state.h);
  Var mot_stack = ops::stack_time(g, f_mot);
  Var ctx_stack = ops::stack_time(g, ctx);
  auto up = mod.super_kernel_update(g, p, h_stack, mot_stack, ctx_stack, emit_upsample);

  for (int t = 0; t < T; ++t) {
    state.d[t] = ops::add(g, state.d[t], up.delta_d[t]);
    state.h[t] = ops::unstack_time(g, up.h_new, t);
    state.M[t] = m_new[t];
  }
  state.n += 1;
  return up.up_logits;
}

}  // namespace vidstereo
