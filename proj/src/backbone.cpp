#include "vidstereo/backbone.hpp"

#include "vidstereo/io.hpp"

namespace vidstereo {

StereoSequence StereoSequence::from_bundle(const GroundTruthBundle& b) {
  StereoSequence s;
  s.left = b.left;
  s.right = b.right;
  s.gt_disparity = b.disparity;
  s.gt_flow_fwd = b.flow_fwd;
  s.gt_flow_bwd = b.flow_bwd;
  return s;
}

int FlowSet::key(int denom) {
  switch (denom) {
    case 1: return 0;
    case 4: return 1;
    case 8: return 2;
    case 16: return 3;
  }
  throw std::invalid_argument("FlowSet: scale denominator must be 1, 4, 8 or 16");
}

FlowSet FlowSet::from_tensors(std::vector<Tensor> fwd, std::vector<Tensor> bwd) {
  if (fwd.size() != bwd.size()) throw std::invalid_argument("FlowSet: fwd/bwd pair count mismatch");
  FlowSet fs;
  for (int denom : {4, 8, 16}) {
    int k = key(denom);
    for (const Tensor& t : fwd) {
      FlowField f{t, 1};
      fs.fwd_[k].push_back(resample_flow(f, denom, t.dim(1) / denom, t.dim(2) / denom).values);
    }
    for (const Tensor& t : bwd) {
      FlowField f{t, 1};
      fs.bwd_[k].push_back(resample_flow(f, denom, t.dim(1) / denom, t.dim(2) / denom).values);
    }
  }
  fs.fwd_[0] = std::move(fwd);
  fs.bwd_[0] = std::move(bwd);
  return fs;
}

FlowSet FlowSet::zeros(int pairs, int h, int w) {
  std::vector<Tensor> fwd, bwd;
  for (int i = 0; i < pairs; ++i) {
    fwd.push_back(Tensor({2, h, w}));
    bwd.push_back(Tensor({2, h, w}));
  }
  return from_tensors(std::move(fwd), std::move(bwd));
}

FlowSet provide_flow(const StereoSequence& seq, FlowSource source) {
  int pairs = seq.frames() - 1;
  if (pairs < 1) throw std::invalid_argument("provide_flow: need at least 2 frames");
  if (source == FlowSource::kGroundTruth) {
    if (static_cast<int>(seq.gt_flow_fwd.size()) != pairs || static_cast<int>(seq.gt_flow_bwd.size()) != pairs)
      throw std::invalid_argument("provide_flow: sequence carries no ground-truth flow for " +
                                  std::to_string(pairs) + " frame pairs");
    return FlowSet::from_tensors(seq.gt_flow_fwd, seq.gt_flow_bwd);
  }
  if (static_cast<int>(seq.flow_fwd_files.size()) != pairs ||
      static_cast<int>(seq.flow_bwd_files.size()) != pairs)
    throw std::invalid_argument("provide_flow: need " + std::to_string(pairs) +
                                " forward and backward .flo files, got " +
                                std::to_string(seq.flow_fwd_files.size()) + "/" +
                                std::to_string(seq.flow_bwd_files.size()));
  std::vector<Tensor> fwd, bwd;
  for (int i = 0; i < pairs; ++i) {
    fwd.push_back(read_flo(seq.flow_fwd_files[i]));
    bwd.push_back(read_flo(seq.flow_bwd_files[i]));
  }
  return FlowSet::from_tensors(std::move(fwd), std::move(bwd));
}

Var FeatureExtractor::ResBlock::operator()(Graph& g, Binder& p, Var x) const {
  Var y = ops::relu(g, n1(g, p, c1(g, p, x)));
  y = n2(g, p, c2(g, p, y));
  Var s = has_skip ? ns(g, p, skip(g, p, x)) : x;
  return ops::relu(g, ops::add(g, y, s));
}

FeatureExtractor::FeatureExtractor(ParamStore& ps, Rng& rng, const ModelConfig& cfg, const std::string& prefix) {
  int c = cfg.feat_channels;
  stem_ = Conv2dM(ps, rng, prefix + ".stem", 3, c, 7, 2);
  stem_norm_ = InstanceNormM(ps, rng, prefix + ".stem_n", c);
  // six residual blocks; strided ones re-project the skip path
  int strides[6] = {2, 1, 2, 1, 2, 1};
  for (int i = 0; i < 6; ++i) {
    std::string name = prefix + ".block" + std::to_string(i);
    ResBlock& b = blocks_[i];
    b.c1 = Conv2dM(ps, rng, name + ".c1", c, c, 3, strides[i]);
    b.c2 = Conv2dM(ps, rng, name + ".c2", c, c, 3, 1);
    b.n1 = InstanceNormM(ps, rng, name + ".n1", c);
    b.n2 = InstanceNormM(ps, rng, name + ".n2", c);
    b.has_skip = strides[i] != 1;
    if (b.has_skip) {
      b.skip = Conv2dM(ps, rng, name + ".skip", c, c, 1, strides[i], 0);
      b.ns = InstanceNormM(ps, rng, name + ".skip_n", c);
    }
  }
  tap4_ = Conv2dM(ps, rng, prefix + ".tap4", c, c, 1, 1, 0);
  tap8_ = Conv2dM(ps, rng, prefix + ".tap8", c, c, 1, 1, 0);
  tap16_ = Conv2dM(ps, rng, prefix + ".tap16", c, c, 1, 1, 0);
}

FeatureExtractor::Maps FeatureExtractor::operator()(Graph& g, Binder& p, Var image) const {
  const Tensor& t = g.val(image);
  if (t.ndim() != 3 || t.dim(0) != 3) throw std::invalid_argument("extract_features: image must be (3,H,W)");
  if (t.dim(1) % 16 != 0 || t.dim(2) % 16 != 0)
    throw std::invalid_argument("extract_features: height and width must be divisible by 16, got " +
                                t.shape().str());
  Var x = ops::relu(g, stem_norm_(g, p, stem_(g, p, image)));  // 1/2
  x = blocks_[0](g, p, x);                                     // 1/4
  x = blocks_[1](g, p, x);
  Maps m;
  m.s4 = tap4_(g, p, x);
  x = blocks_[2](g, p, x);  // 1/8
  x = blocks_[3](g, p, x);
  m.s8 = tap8_(g, p, x);
  x = blocks_[4](g, p, x);  // 1/16
  x = blocks_[5](g, p, x);
  m.s16 = tap16_(g, p, x);
  return m;
}

}  // namespace vidstereo
