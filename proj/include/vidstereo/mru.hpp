#pragma once

#include "vidstereo/backbone.hpp"
#include "vidstereo/config.hpp"
#include "vidstereo/correlation.hpp"
#include "vidstereo/params.hpp"

namespace vidstereo {

// Per-stage mutable state. Everything lives at one pyramid level; h stays in
// (-1,1) through the gated update, M persists across iterations and stages.
struct UpdateState {
  std::vector<Var> d;  // (1,H,W) per frame
  std::vector<Var> h;  // (C,H,W) per frame
  std::vector<Var> M;  // (C0,H,W) per frame
  int n = 0;           // iteration counter; even -> horizontal search range
  int denom = 16;
};

// Inputs that stay fixed across the iterations of one stage.
struct StageInputs {
  std::vector<Var> fl, fr;           // per-frame left/right features at this level
  std::vector<Var> flow_to_prev;     // [t] center->previous correspondences, t>=1
  std::vector<Var> flow_to_next;     // [t] center->next, t<T-1
  Var zero_flow;                     // shared zero field for boundary frames
};

// One parameter bundle of the update module: MoP/Corr/Disp/Mot encoders plus
// the gated 3D-conv updater with the optional wide horizontal layer.
class UpdateModule {
 public:
  UpdateModule() = default;
  UpdateModule(ParamStore& ps, Rng& rng, const ModelConfig& cfg, const std::string& prefix = "update");

  // Eq-by-eq single-op entry points; mru_iteration composes them.
  Var motion_propagate(Graph& g, Binder& p, Var m_prev, Var m_center, Var m_next, Var flow_to_prev,
                       Var flow_to_next) const;
  Var encode_correlation(Graph& g, Binder& p, Var cost) const;
  Var encode_disparity(Graph& g, Binder& p, Var d) const;
  struct MotEncOut {
    Var f_mot, context, m_new;
  };
  MotEncOut motion_encode(Graph& g, Binder& p, Var f_corr, Var f_disp, Var f_mop) const;

  struct UpdaterOut {
    Var h_new;                  // (C,T,H,W), bounded in (-1,1)
    std::vector<Var> delta_d;   // per frame (1,H,W)
    std::vector<Var> up_logits; // per frame (144,H,W); only when emit_upsample
  };
  UpdaterOut super_kernel_update(Graph& g, Binder& p, Var h_stack, Var mot_stack, Var ctx_stack,
                                 bool emit_upsample) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  Conv2dM mop1_, mop2_;
  Conv2dM corr1_, corr2_;
  Conv2dM disp1_, disp2_;
  Conv2dM mot1_, mot2_, mot_heads_;
  Conv3dM gru_z_, gru_r_, gru_q_;
  Conv3dM super_;
  Conv2dM head_d1_, head_d2_;
  Conv2dM head_w1_, head_w2_;
};

// One full MRU iteration over every frame: cost volumes via the alternating
// search range, encoder fusion, motion propagation, the time-coupled gated
// update, and the residual disparity step. Returns per-frame convex-upsample
// logits when requested (the quarter-resolution stage).
std::vector<Var> mru_iteration(Graph& g, Binder& p, const UpdateModule& mod, UpdateState& state,
                               const StageInputs& in, bool emit_upsample);

}  // namespace vidstereo
