#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vidstereo/tensor.hpp"

namespace vidstereo {

// Handle into a Graph. Invalid until assigned.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order, so backward() is a single reverse sweep. Gradients are
// allocated lazily; ops skip the gradient paths of parents that do not
// require gradients (images, flows and other constants stay cheap).
class Graph {
 public:
  Var leaf(Tensor value, bool requires_grad = false) {
    return add_node(std::move(value), requires_grad, nullptr);
  }

  Var add_node(Tensor value, bool needs_grad, std::function<void(Graph&)> backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  Tensor& val(Var v) { return nodes_[v.id].value; }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

  // Gradient buffer, zero-initialized on first touch.
  Tensor& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
  }

  void backward(Var root) {
    if (val(root).numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    grad(root)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad;
    std::function<void(Graph&)> backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

inline Var add(Graph& g, Var a, Var b) {
  const Tensor& ta = g.val(a);
  const Tensor& tb = g.val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch " + ta.shape().str() + " vs " + tb.shape().str());
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
  bool ng = g.needs_grad(a) || g.needs_grad(b);
  Var v;
  v = g.add_node(std::move(out), ng, [a, b, v_out = g.size()](Graph& gg) {
    Var self{static_cast<int>(v_out)};
    const Tensor& go = gg.grad(self);
    if (gg.needs_grad(a)) {
      Tensor& ga = gg.grad(a);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (gg.needs_grad(b)) {
      Tensor& gb = gg.grad(b);
      for (std::int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i];
    }
  });
  return v;
}

inline Var sub(Graph& g, Var a, Var b) {
  const Tensor& ta = g.val(a);
  const Tensor& tb = g.val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
  bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.add_node(std::move(out), ng, [a, b, self_id = g.size()](Graph& gg) {
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    if (gg.needs_grad(a)) {
      Tensor& ga = gg.grad(a);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (gg.needs_grad(b)) {
      Tensor& gb = gg.grad(b);
      for (std::int64_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  });
}

inline Var mul(Graph& g, Var a, Var b) {
  const Tensor& ta = g.val(a);
  const Tensor& tb = g.val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
  bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.add_node(std::move(out), ng, [a, b, self_id = g.size()](Graph& gg) {
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    if (gg.needs_grad(a)) {
      Tensor& ga = gg.grad(a);
      const Tensor& vb = gg.val(b);
      for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * vb[i];
    }
    if (gg.needs_grad(b)) {
      Tensor& gb = gg.grad(b);
      const Tensor& va = gg.val(a);
      for (std::int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * va[i];
    }
  });
}

inline Var scale(Graph& g, Var a, double k) {
  Tensor out = g.val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= k;
  return g.add_node(std::move(out), g.needs_grad(a), [a, k, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += k * go[i];
  });
}

inline Var add_scalar(Graph& g, Var a, double k) {
  Tensor out = g.val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += k;
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
}

inline Var relu(Graph& g, Var a) {
  Tensor out = g.val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    Var self{static_cast<int>(self_id)};
    const Tensor& go = gg.grad(self);
    const Tensor& va = gg.val(a);
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += va[i] > 0.0 ? go[i] : 0.0;
  });
}

inline Var tanh_(Graph& g, Var a) {
  Tensor out = g.val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    Var self{static_cast<int>(self_id)};
    const Tensor& go = gg.grad(self);
    const Tensor& vo = gg.val(self);
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * (1.0 - vo[i] * vo[i]);
  });
}

inline Var sigmoid(Graph& g, Var a) {
  Tensor out = g.val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    Var self{static_cast<int>(self_id)};
    const Tensor& go = gg.grad(self);
    const Tensor& vo = gg.val(self);
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
  });
}

// |x| with subgradient 0 at x == 0.
inline Var abs_(Graph& g, Var a) {
  Tensor out = g.val(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    const Tensor& va = gg.val(a);
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i)
      ga[i] += va[i] > 0.0 ? go[i] : (va[i] < 0.0 ? -go[i] : 0.0);
  });
}

inline Var sum(Graph& g, Var a) {
  double s = 0.0;
  const Tensor& ta = g.val(a);
  for (std::int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
  Tensor out({1});
  out[0] = s;
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    double go = gg.grad(Var{static_cast<int>(self_id)})[0];
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += go;
  });
}

inline Var mean(Graph& g, Var a) {
  std::int64_t n = g.val(a).numel();
  return scale(g, sum(g, a), 1.0 / static_cast<double>(n));
}

// Weighted mean over an externally supplied 0/1 mask (constant).
inline Var masked_mean(Graph& g, Var a, const Tensor& mask) {
  const Tensor& ta = g.val(a);
  if (!ta.same_shape(mask)) throw std::invalid_argument("masked_mean: shape mismatch");
  double cnt = 0.0;
  for (std::int64_t i = 0; i < mask.numel(); ++i) cnt += mask[i];
  if (cnt <= 0.0) throw std::invalid_argument("masked_mean: empty mask");
  double s = 0.0;
  for (std::int64_t i = 0; i < ta.numel(); ++i) s += ta[i] * mask[i];
  Tensor out({1});
  out[0] = s / cnt;
  return g.add_node(std::move(out), g.needs_grad(a), [a, m = mask, cnt, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    double go = gg.grad(Var{static_cast<int>(self_id)})[0];
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += go * m[i] / cnt;
  });
}

// Concatenate along axis 0 (channel axis of CHW tensors).
inline Var concat(Graph& g, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input");
  Shape s0 = g.val(xs[0]).shape();
  int c_total = 0;
  bool ng = false;
  for (Var x : xs) {
    const Shape& s = g.val(x).shape();
    if (s.ndim() != s0.ndim()) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 1; d < s0.ndim(); ++d)
      if (s[d] != s0[d]) throw std::invalid_argument("concat: trailing dim mismatch");
    c_total += s[0];
    ng = ng || g.needs_grad(x);
  }
  Shape so = s0;
  so[0] = c_total;
  Tensor out(so);
  std::int64_t stride = s0.numel() / s0[0];
  std::int64_t off = 0;
  for (Var x : xs) {
    const Tensor& t = g.val(x);
    std::memcpy(out.data() + off, t.data(), sizeof(double) * static_cast<std::size_t>(t.numel()));
    off += t.numel();
  }
  return g.add_node(std::move(out), ng, [xs, stride, self_id = g.size()](Graph& gg) {
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    std::int64_t off = 0;
    for (Var x : xs) {
      std::int64_t n = gg.val(x).numel();
      if (gg.needs_grad(x)) {
        Tensor& gx = gg.grad(x);
        for (std::int64_t i = 0; i < n; ++i) gx[i] += go[off + i];
      }
      off += n;
    }
    (void)stride;
  });
}

// Slice channels [c0, c1) along axis 0.
inline Var slice(Graph& g, Var a, int c0, int c1) {
  const Tensor& ta = g.val(a);
  if (c0 < 0 || c1 > ta.dim(0) || c0 >= c1) throw std::invalid_argument("slice: bad channel range");
  Shape so = ta.shape();
  so[0] = c1 - c0;
  std::int64_t stride = ta.numel() / ta.dim(0);
  Tensor out(so);
  std::memcpy(out.data(), ta.data() + c0 * stride, sizeof(double) * static_cast<std::size_t>(out.numel()));
  return g.add_node(std::move(out), g.needs_grad(a), [a, c0, stride, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    Tensor& ga = gg.grad(a);
    double* dst = ga.data() + c0 * stride;
    for (std::int64_t i = 0; i < go.numel(); ++i) dst[i] += go[i];
  });
}

inline Var reshape(Graph& g, Var a, Shape s) {
  Tensor out = g.val(a).reshaped(s);
  return g.add_node(std::move(out), g.needs_grad(a), [a, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(a)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    Tensor& ga = gg.grad(a);
    for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
  });
}

// Stack T tensors of shape (C,H,W) into (C,T,H,W); the time axis sits between
// channels and space so 3D convolutions see (t,h,w) volumes per channel.
inline Var stack_time(Graph& g, const std::vector<Var>& frames) {
  if (frames.empty()) throw std::invalid_argument("stack_time: empty input");
  const Shape& s0 = g.val(frames[0]).shape();
  if (s0.ndim() != 3) throw std::invalid_argument("stack_time: frames must be CHW");
  int C = s0[0], H = s0[1], W = s0[2];
  int T = static_cast<int>(frames.size());
  bool ng = false;
  for (Var f : frames) {
    if (g.val(f).shape() != s0) throw std::invalid_argument("stack_time: frame shape mismatch");
    ng = ng || g.needs_grad(f);
  }
  Tensor out({C, T, H, W});
  std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (int t = 0; t < T; ++t) {
    const Tensor& f = g.val(frames[t]);
    for (int c = 0; c < C; ++c)
      std::memcpy(out.data() + (static_cast<std::int64_t>(c) * T + t) * hw, f.data() + c * hw,
                  sizeof(double) * static_cast<std::size_t>(hw));
  }
  return g.add_node(std::move(out), ng, [frames, C, H, W, self_id = g.size()](Graph& gg) {
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    int T = static_cast<int>(frames.size());
    std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int t = 0; t < T; ++t) {
      if (!gg.needs_grad(frames[t])) continue;
      Tensor& gf = gg.grad(frames[t]);
      for (int c = 0; c < C; ++c) {
        const double* src = go.data() + (static_cast<std::int64_t>(c) * T + t) * hw;
        double* dst = gf.data() + c * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
      }
    }
  });
}

// Broadcast a (C) vector over space to (C,H,W).
inline Var broadcast_chw(Graph& g, Var vec, int h, int w) {
  const Tensor& tv = g.val(vec);
  if (tv.ndim() != 1) throw std::invalid_argument("broadcast_chw: need a rank-1 tensor");
  int c = tv.dim(0);
  Tensor out({c, h, w});
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < hw; ++i) out[ch * hw + i] = tv[ch];
  return g.add_node(std::move(out), g.needs_grad(vec), [vec, c, hw, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(vec)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    Tensor& gv = gg.grad(vec);
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) s += go[ch * hw + i];
      gv[ch] += s;
    }
  });
}

// Extract frame t from a (C,T,H,W) stack as (C,H,W).
inline Var unstack_time(Graph& g, Var stacked, int t) {
  const Tensor& ts = g.val(stacked);
  if (ts.ndim() != 4) throw std::invalid_argument("unstack_time: need CTHW");
  int C = ts.dim(0), T = ts.dim(1), H = ts.dim(2), W = ts.dim(3);
  if (t < 0 || t >= T) throw std::invalid_argument("unstack_time: bad index");
  Tensor out({C, H, W});
  std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (int c = 0; c < C; ++c)
    std::memcpy(out.data() + c * hw, ts.data() + (static_cast<std::int64_t>(c) * T + t) * hw,
                sizeof(double) * static_cast<std::size_t>(hw));
  return g.add_node(std::move(out), g.needs_grad(stacked), [stacked, t, C, T, H, W, self_id = g.size()](Graph& gg) {
    if (!gg.needs_grad(stacked)) return;
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    Tensor& gs = gg.grad(stacked);
    std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
      const double* src = go.data() + c * hw;
      double* dst = gs.data() + (static_cast<std::int64_t>(c) * T + t) * hw;
      for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
    }
  });
}

}  // namespace ops
}  // namespace vidstereo
