#include "vidstereo/params.hpp"

#include <cmath>

#include "vidstereo/io.hpp"

namespace vidstereo {

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.values) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;  // parameter unused this step
    const Tensor& g = git->second;
    Tensor& m = m_.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
  }
}

double one_cycle_lr(double lr_max, std::int64_t step, std::int64_t total_steps, double warmup_frac) {
  if (total_steps <= 1) return lr_max;
  double warm = std::max<double>(1.0, warmup_frac * static_cast<double>(total_steps));
  double s = static_cast<double>(step);
  if (s < warm) return lr_max * (0.05 + 0.95 * s / warm);
  double p = (s - warm) / std::max(1.0, static_cast<double>(total_steps) - warm);
  if (p > 1.0) p = 1.0;
  return lr_max * (0.5 * (1.0 + std::cos(3.14159265358979323846 * p))) * (1.0 - 1e-3) + lr_max * 1e-3;
}

double clip_grad_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (auto& [name, g] : grads)
    for (std::int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / (norm + 1e-12);
    for (auto& [name, g] : grads)
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
  }
  return norm;
}

void save_checkpoint(const std::string& path, const ParamStore& params, const AdamW& opt, std::int64_t step,
                     const std::string& config_json) {
  ArrayContainer c;
  for (const auto& [name, t] : params.values) c.arrays["param/" + name] = t;
  for (const auto& [name, t] : opt.m()) c.arrays["adam_m/" + name] = t;
  for (const auto& [name, t] : opt.v()) c.arrays["adam_v/" + name] = t;
  c.ints["step"] = step;
  c.ints["adam_t"] = opt.t();
  c.strings["config_json"] = config_json;
  c.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, ParamStore& params, AdamW* opt) {
  ArrayContainer c = ArrayContainer::load(path);
  std::map<std::string, Tensor> m, v;
  for (auto& [name, t] : c.arrays) {
    if (name.rfind("param/", 0) == 0) {
      std::string key = name.substr(6);
      auto it = params.values.find(key);
      if (it == params.values.end()) throw IoError(path + ": checkpoint has unknown parameter '" + key + "'");
      if (!(it->second.shape() == t.shape()))
        throw IoError(path + ": shape mismatch for '" + key + "': model " + it->second.shape().str() +
                      " vs checkpoint " + t.shape().str());
      it->second = t;
    } else if (name.rfind("adam_m/", 0) == 0) {
      m[name.substr(7)] = t;
    } else if (name.rfind("adam_v/", 0) == 0) {
      v[name.substr(7)] = t;
    }
  }
  for (const auto& [key, val] : params.values)
    if (!c.arrays.count("param/" + key)) throw IoError(path + ": checkpoint misses parameter '" + key + "'");
  LoadedCheckpoint lc;
  lc.step = c.ints.count("step") ? c.ints.at("step") : 0;
  if (opt) opt->restore(std::move(m), std::move(v), c.ints.count("adam_t") ? c.ints.at("adam_t") : 0);
  if (c.strings.count("config_json")) lc.config_json = c.strings.at("config_json");
  return lc;
}

}  // namespace vidstereo
