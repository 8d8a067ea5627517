#pragma once

#include <functional>
#include <vector>

#include "vidstereo/graph.hpp"

namespace vidstereo::testutil {

// Central finite-difference check of reverse-mode gradients.
//
// `build` maps graph leaves (one per entry of `inputs`, in order) to an
// output Var of any shape; the check reduces it to a scalar with a fixed
// random weighting so every output element influences the result. Returns
// the maximum relative error over `samples` coordinates of each input listed
// in `check`, comparing tape gradients against (f(x+e) - f(x-e)) / 2e.
inline double gradcheck(const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                        std::vector<Tensor> inputs, const std::vector<int>& check, int samples = 24,
                        std::uint64_t seed = 7, double base_eps = 1e-6) {
  auto eval = [&](const std::vector<Tensor>& ins, Tensor* grads_out) -> double {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(ins.size());
    for (const Tensor& t : ins) vars.push_back(g.leaf(t, grads_out != nullptr));
    Var out = build(g, vars);
    Rng wrng(seed * 1315423911ull + 17);
    Tensor w(g.val(out).shape());
    wrng.fill_uniform(w, -1.0, 1.0);
    Var s = ops::sum(g, ops::mul(g, out, g.leaf(w)));
    if (grads_out) {
      g.backward(s);
      for (std::size_t i = 0; i < ins.size(); ++i)
        grads_out[i] = g.has_grad(vars[i]) ? g.grad(vars[i]) : Tensor::zeros(ins[i].shape());
    }
    return g.val(s)[0];
  };

  std::vector<Tensor> grads(inputs.size());
  eval(inputs, grads.data());

  double max_rel = 0.0;
  Rng pick(seed);
  for (int idx : check) {
    std::int64_t n = inputs[idx].numel();
    int k = static_cast<int>(std::min<std::int64_t>(samples, n));
    for (int s = 0; s < k; ++s) {
      std::int64_t coord = static_cast<std::int64_t>(pick.bits() % static_cast<std::uint64_t>(n));
      double x0 = inputs[idx][coord];
      double eps = base_eps * std::max(1.0, std::fabs(x0));
      inputs[idx][coord] = x0 + eps;
      double fp = eval(inputs, nullptr);
      inputs[idx][coord] = x0 - eps;
      double fm = eval(inputs, nullptr);
      inputs[idx][coord] = x0;
      double fd = (fp - fm) / (2.0 * eps);
      double ad = grads[idx][coord];
      double rel = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1e-2});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  Rng r(seed);
  r.fill_uniform(t, lo, hi);
  return t;
}

}  // namespace vidstereo::testutil

#include "vidstereo/params.hpp"

namespace vidstereo::testutil {

// Finite-difference check of gradients w.r.t. named parameters in a store.
// `build` runs the model forward through a Binder and returns a scalar.
inline double param_gradcheck(ParamStore& store, const std::function<Var(Graph&, Binder&)>& build,
                              const std::vector<std::string>& names, int samples = 8,
                              std::uint64_t seed = 19, double base_eps = 1e-6) {
  auto eval = [&](std::map<std::string, Tensor>* grads) -> double {
    Graph g;
    Binder p(g, store, grads != nullptr);
    Var s = build(g, p);
    if (grads) {
      g.backward(s);
      *grads = p.collect_grads();
    }
    return g.val(s)[0];
  };
  std::map<std::string, Tensor> grads;
  eval(&grads);
  double max_rel = 0.0;
  Rng pick(seed);
  for (const std::string& name : names) {
    Tensor& pt = store.values.at(name);
    auto git = grads.find(name);
    Tensor g_ad = git != grads.end() ? git->second : Tensor::zeros(pt.shape());
    int k = static_cast<int>(std::min<std::int64_t>(samples, pt.numel()));
    for (int s = 0; s < k; ++s) {
      std::int64_t coord = static_cast<std::int64_t>(pick.bits() % static_cast<std::uint64_t>(pt.numel()));
      double x0 = pt[coord];
      double eps = base_eps * std::max(1.0, std::fabs(x0));
      pt[coord] = x0 + eps;
      double fp = eval(nullptr);
      pt[coord] = x0 - eps;
      double fm = eval(nullptr);
      pt[coord] = x0;
      double fd = (fp - fm) / (2.0 * eps);
      double rel = std::fabs(g_ad[coord] - fd) / std::max({std::fabs(g_ad[coord]), std::fabs(fd), 1e-2});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace vidstereo::testutil
