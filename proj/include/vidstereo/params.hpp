#pragma once

#include <map>
#include <string>

#include "vidstereo/graph.hpp"
#include "vidstereo/nn.hpp"

namespace vidstereo {

// Named parameter tensors. One store per model; weight sharing is structural:
// two call sites share weights exactly when they bind the same name.
struct ParamStore {
  std::map<std::string, Tensor> values;

  Tensor& declare(const std::string& name, Shape shape) {
    auto [it, inserted] = values.emplace(name, Tensor(shape));
    if (!inserted) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return values.count(name) != 0; }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : values) n += v.numel();
    return n;
  }
  std::int64_t count_prefix(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& [k, v] : values)
      if (k.rfind(prefix, 0) == 0) n += v.numel();
    return n;
  }
};

// Per-step bridge from the store into a graph. Each parameter becomes one
// leaf per step no matter how many modules use it, so gradients from all
// uses accumulate on that single node.
class Binder {
 public:
  Binder(Graph& g, ParamStore& store, bool trainable) : g_(&g), store_(&store), trainable_(trainable) {}

  Var operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    auto pit = store_->values.find(name);
    if (pit == store_->values.end()) throw std::invalid_argument("Binder: unknown parameter '" + name + "'");
    Var v = g_->leaf(pit->second, trainable_);
    cache_.emplace(name, v);
    return v;
  }

  // Gradients of every bound parameter after backward(); missing -> zeros.
  std::map<std::string, Tensor> collect_grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : cache_) {
      out[name] = g_->has_grad(var) ? g_->grad(var) : Tensor::zeros(g_->val(var).shape());
    }
    return out;
  }

 private:
  Graph* g_;
  ParamStore* store_;
  bool trainable_;
  std::map<std::string, Var> cache_;
};

// Convolution module with PyTorch-style fan-in uniform init.
struct Conv2dM {
  std::string w, b;
  int stride = 1, pad = -1;

  Conv2dM() = default;
  Conv2dM(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout, int k, int stride_ = 1,
          int pad_ = -1)
      : w(name + ".w"), b(name + ".b"), stride(stride_), pad(pad_) {
    Tensor& wt = ps.declare(w, {cout, cin, k, k});
    double bound = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
    rng.fill_uniform(wt, -bound, bound);
    rng.fill_uniform(ps.declare(b, {cout}), -bound, bound);
  }

  Var operator()(Graph& g, Binder& p, Var x) const { return ops::conv2d(g, x, p(w), p(b), stride, pad); }
};

struct Conv3dM {
  std::string w, b;

  Conv3dM() = default;
  Conv3dM(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout, int kt, int kh, int kw)
      : w(name + ".w"), b(name + ".b") {
    Tensor& wt = ps.declare(w, {cout, cin, kt, kh, kw});
    double bound = 1.0 / std::sqrt(static_cast<double>(cin) * kt * kh * kw);
    rng.fill_uniform(wt, -bound, bound);
    rng.fill_uniform(ps.declare(b, {cout}), -bound, bound);
  }

  Var operator()(Graph& g, Binder& p, Var x) const { return ops::conv3d(g, x, p(w), p(b)); }
};

struct InstanceNormM {
  std::string gamma, beta;

  InstanceNormM() = default;
  InstanceNormM(ParamStore& ps, Rng&, const std::string& name, int c) : gamma(name + ".g"), beta(name + ".b") {
    ps.declare(gamma, {c}).fill(1.0);
    ps.declare(beta, {c});
  }

  Var operator()(Graph& g, Binder& p, Var x) const { return ops::instance_norm(g, x, p(gamma), p(beta)); }
};

// AdamW: decoupled weight decay, bias-corrected moments.
class AdamW {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-5;

  void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr);
  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

  std::int64_t t() const { return t_; }
  const std::map<std::string, Tensor>& m() const { return m_; }
  const std::map<std::string, Tensor>& v() const { return v_; }
  void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v, std::int64_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  std::map<std::string, Tensor> m_, v_;
  std::int64_t t_ = 0;
};

// One-cycle schedule: linear warmup to lr_max, cosine anneal to ~0.
double one_cycle_lr(double lr_max, std::int64_t step, std::int64_t total_steps, double warmup_frac = 0.05);

// Global L2-norm gradient clip; returns the pre-clip norm.
double clip_grad_norm(std::map<std::string, Tensor>& grads, double max_norm);

// Checkpoints: parameters + optimizer moments + step counter + config JSON.
void save_checkpoint(const std::string& path, const ParamStore& params, const AdamW& opt, std::int64_t step,
                     const std::string& config_json);
struct LoadedCheckpoint {
  std::int64_t step = 0;
  std::string config_json;
};
LoadedCheckpoint load_checkpoint(const std::string& path, ParamStore& params, AdamW* opt);

}  // namespace vidstereo
