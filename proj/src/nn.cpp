#include "vidstereo/nn.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vidstereo {

static std::atomic<int> g_max_threads{0};

void set_max_threads(int n) { g_max_threads.store(n > 0 ? n : 1); }

int max_threads() {
  int n = g_max_threads.load();
  if (n > 0) return n;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("VIDSTEREO_WORKERS")) {
    int cap = std::atoi(env);
    if (cap > 0 && cap < hw) hw = cap;
  }
  g_max_threads.store(hw);
  return hw;
}

namespace {

// C[M,N] (+)= A[M,K] * B[K,N], row-major. Parallel over column slices; each
// output element is owned by one thread, so results are thread-count
// independent.
void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C, bool accumulate) {
  int nt = max_threads();
  if (static_cast<std::int64_t>(M) * N * K < 32768) nt = 1;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int t = 0; t < nt; ++t) {
    int j0 = static_cast<int>(static_cast<std::int64_t>(N) * t / nt);
    int j1 = static_cast<int>(static_cast<std::int64_t>(N) * (t + 1) / nt);
    if (j0 == j1) continue;
    for (int i = 0; i < M; ++i) {
      double* c = C + static_cast<std::int64_t>(i) * N;
      if (!accumulate)
        for (int j = j0; j < j1; ++j) c[j] = 0.0;
      const double* a = A + static_cast<std::int64_t>(i) * K;
      for (int k = 0; k < K; ++k) {
        double av = a[k];
        const double* b = B + static_cast<std::int64_t>(k) * N;
        for (int j = j0; j < j1; ++j) c[j] += av * b[j];
      }
    }
  }
}

// C[M,K] += A[M,N] * B[K,N]^T  (dot products along N).
void gemm_nt_acc(int M, int K, int N, const double* A, const double* B, double* C) {
  int nt = max_threads();
  if (static_cast<std::int64_t>(M) * N * K < 32768) nt = 1;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int i = 0; i < M; ++i) {
    const double* a = A + static_cast<std::int64_t>(i) * N;
    double* c = C + static_cast<std::int64_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const double* b = B + static_cast<std::int64_t>(k) * N;
      double s = 0.0;
      for (int n = 0; n < N; ++n) s += a[n] * b[n];
      c[k] += s;
    }
  }
}

// C[K,N] = A[M,K]^T * B[M,N].
void gemm_tn(int K, int N, int M, const double* A, const double* B, double* C) {
  int nt = max_threads();
  if (static_cast<std::int64_t>(M) * N * K < 32768) nt = 1;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int k = 0; k < K; ++k) {
    double* c = C + static_cast<std::int64_t>(k) * N;
    for (int n = 0; n < N; ++n) c[n] = 0.0;
    for (int m = 0; m < M; ++m) {
      double av = A[static_cast<std::int64_t>(m) * K + k];
      const double* b = B + static_cast<std::int64_t>(m) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

void im2col_2d(const Tensor& x, int kh, int kw, int stride, int pad, int ho, int wo, Tensor& col) {
  int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const double* xs = x.data();
  double* cs = col.data();
  std::int64_t n = static_cast<std::int64_t>(ho) * wo;
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* row = cs + ((static_cast<std::int64_t>(c) * kh + ky) * kw + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<std::int64_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < wo; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = xs + (static_cast<std::int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_2d(const Tensor& col, int kh, int kw, int stride, int pad, int ho, int wo, Tensor& gx) {
  int ci = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
  const double* cs = col.data();
  double* xs = gx.data();
  std::int64_t n = static_cast<std::int64_t>(ho) * wo;
  int nt = max_threads();
  if (gx.numel() < 16384) nt = 1;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* row = cs + ((static_cast<std::int64_t>(c) * kh + ky) * kw + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::int64_t>(oy) * wo;
          double* dst = xs + (static_cast<std::int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Time axis uses edge replication; spatial axes zero padding.
void im2col_3d(const Tensor& x, int kt, int kh, int kw, Tensor& col) {
  int ci = x.dim(0), T = x.dim(1), h = x.dim(2), w = x.dim(3);
  int pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const double* xs = x.data();
  double* cs = col.data();
  std::int64_t n = static_cast<std::int64_t>(T) * h * w;
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int c = 0; c < ci; ++c) {
    for (int tk = 0; tk < kt; ++tk) {
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          double* row = cs + (((static_cast<std::int64_t>(c) * kt + tk) * kh + ky) * kw + kx) * n;
          for (int ot = 0; ot < T; ++ot) {
            int it = ot - pt + tk;
            it = it < 0 ? 0 : (it >= T ? T - 1 : it);  // edge clamp in time
            for (int oy = 0; oy < h; ++oy) {
              int iy = oy - ph + ky;
              double* dst = row + static_cast<std::int64_t>(ot) * hw + static_cast<std::int64_t>(oy) * w;
              if (iy < 0 || iy >= h) {
                for (int ox = 0; ox < w; ++ox) dst[ox] = 0.0;
                continue;
              }
              const double* src = xs + ((static_cast<std::int64_t>(c) * T + it) * h + iy) * w;
              for (int ox = 0; ox < w; ++ox) {
                int ix = ox - pw + kx;
                dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2im_3d(const Tensor& col, int kt, int kh, int kw, Tensor& gx) {
  int ci = gx.dim(0), T = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
  int pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const double* cs = col.data();
  double* xs = gx.data();
  std::int64_t n = static_cast<std::int64_t>(T) * h * w;
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  int nt = max_threads();
  if (gx.numel() < 16384) nt = 1;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int c = 0; c < ci; ++c) {
    for (int tk = 0; tk < kt; ++tk) {
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const double* row = cs + (((static_cast<std::int64_t>(c) * kt + tk) * kh + ky) * kw + kx) * n;
          for (int ot = 0; ot < T; ++ot) {
            int it = ot - pt + tk;
            it = it < 0 ? 0 : (it >= T ? T - 1 : it);
            for (int oy = 0; oy < h; ++oy) {
              int iy = oy - ph + ky;
              if (iy < 0 || iy >= h) continue;
              const double* src = row + static_cast<std::int64_t>(ot) * hw + static_cast<std::int64_t>(oy) * w;
              double* dst = xs + ((static_cast<std::int64_t>(c) * T + it) * h + iy) * w;
              for (int ox = 0; ox < w; ++ox) {
                int ix = ox - pw + kx;
                if (ix >= 0 && ix < w) dst[ix] += src[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

namespace ops {

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad) {
  const Tensor& tx = g.val(x);
  const Tensor& tw = g.val(w);
  const Tensor& tb = g.val(b);
  if (tx.ndim() != 3 || tw.ndim() != 4) throw std::invalid_argument("conv2d: need CHW input, 4D weight");
  int ci = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
  int co = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
  if (tw.dim(1) != ci)
    throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(ci) + ", weight expects " +
                                std::to_string(tw.dim(1)));
  if (tb.numel() != co) throw std::invalid_argument("conv2d: bias size mismatch");
  if (pad < 0) pad = kh / 2;
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");

  int K = ci * kh * kw;
  std::int64_t n = static_cast<std::int64_t>(ho) * wo;
  Tensor col({K, ho, wo});
  im2col_2d(tx, kh, kw, stride, pad, ho, wo, col);

  Tensor out({co, ho, wo});
  gemm_nn(co, static_cast<int>(n), K, tw.data(), col.data(), out.data(), false);
  for (int c = 0; c < co; ++c) {
    double bv = tb[c];
    double* o = out.data() + c * n;
    for (std::int64_t i = 0; i < n; ++i) o[i] += bv;
  }

  bool ng = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  // The column buffer is recomputed in backward when the weight gradient is
  // needed; cheaper than keeping it alive for every node of a long tape.
  return g.add_node(std::move(out), ng,
                    [x, w, b, stride, pad, kh, kw, ho, wo, K, n, self_id = g.size()](Graph& gg) {
                      Var self{static_cast<int>(self_id)};
                      const Tensor& go = gg.grad(self);
                      const Tensor& tw = gg.val(w);
                      int co = tw.dim(0);
                      if (gg.needs_grad(b)) {
                        Tensor& gb = gg.grad(b);
                        for (int c = 0; c < co; ++c) {
                          const double* src = go.data() + c * n;
                          double s = 0.0;
                          for (std::int64_t i = 0; i < n; ++i) s += src[i];
                          gb[c] += s;
                        }
                      }
                      if (gg.needs_grad(w)) {
                        Tensor col({K, ho, wo});
                        im2col_2d(gg.val(x), kh, kw, stride, pad, ho, wo, col);
                        gemm_nt_acc(co, K, static_cast<int>(n), go.data(), col.data(), gg.grad(w).data());
                      }
                      if (gg.needs_grad(x)) {
                        Tensor gcol({K, ho, wo});
                        gemm_tn(K, static_cast<int>(n), co, tw.data(), go.data(), gcol.data());
                        col2im_2d(gcol, kh, kw, stride, pad, ho, wo, gg.grad(x));
                      }
                    });
}

Var conv3d(Graph& g, Var x, Var w, Var b) {
  const Tensor& tx = g.val(x);
  const Tensor& tw = g.val(w);
  const Tensor& tb = g.val(b);
  if (tx.ndim() != 4 || tw.ndim() != 5) throw std::invalid_argument("conv3d: need CTHW input, 5D weight");
  int ci = tx.dim(0), T = tx.dim(1), h = tx.dim(2), wd = tx.dim(3);
  int co = tw.dim(0), kt = tw.dim(2), kh = tw.dim(3), kw = tw.dim(4);
  if (tw.dim(1) != ci) throw std::invalid_argument("conv3d: channel mismatch");
  if (tb.numel() != co) throw std::invalid_argument("conv3d: bias size mismatch");

  int K = ci * kt * kh * kw;
  std::int64_t n = static_cast<std::int64_t>(T) * h * wd;
  Tensor col({K, static_cast<int>(n)});
  im2col_3d(tx, kt, kh, kw, col);

  Tensor out({co, T, h, wd});
  gemm_nn(co, static_cast<int>(n), K, tw.data(), col.data(), out.data(), false);
  for (int c = 0; c < co; ++c) {
    double bv = tb[c];
    double* o = out.data() + c * n;
    for (std::int64_t i = 0; i < n; ++i) o[i] += bv;
  }

  bool ng = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  return g.add_node(std::move(out), ng, [x, w, b, kt, kh, kw, K, n, self_id = g.size()](Graph& gg) {
    Var self{static_cast<int>(self_id)};
    const Tensor& go = gg.grad(self);
    const Tensor& tw = gg.val(w);
    int co = tw.dim(0);
    if (gg.needs_grad(b)) {
      Tensor& gb = gg.grad(b);
      for (int c = 0; c < co; ++c) {
        const double* src = go.data() + c * n;
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += src[i];
        gb[c] += s;
      }
    }
    if (gg.needs_grad(w)) {
      Tensor col({K, static_cast<int>(n)});
      im2col_3d(gg.val(x), kt, kh, kw, col);
      gemm_nt_acc(co, K, static_cast<int>(n), go.data(), col.data(), gg.grad(w).data());
    }
    if (gg.needs_grad(x)) {
      Tensor gcol({K, static_cast<int>(n)});
      gemm_tn(K, static_cast<int>(n), co, tw.data(), go.data(), gcol.data());
      col2im_3d(gcol, kt, kh, kw, gg.grad(x));
    }
  });
}

Var instance_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Tensor& tx = g.val(x);
  if (tx.ndim() != 3) throw std::invalid_argument("instance_norm: need CHW");
  int c = tx.dim(0);
  std::int64_t n = static_cast<std::int64_t>(tx.dim(1)) * tx.dim(2);
  if (g.val(gamma).numel() != c || g.val(beta).numel() != c)
    throw std::invalid_argument("instance_norm: affine size mismatch");

  Tensor out(tx.shape());
  Tensor xhat(tx.shape());
  Tensor inv_sigma({c});
  const Tensor& tg = g.val(gamma);
  const Tensor& tbeta = g.val(beta);
  for (int ch = 0; ch < c; ++ch) {
    const double* xs = tx.data() + ch * n;
    double mu = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mu += xs[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double d = xs[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[ch] = is;
    double* xh = xhat.data() + ch * n;
    double* o = out.data() + ch * n;
    for (std::int64_t i = 0; i < n; ++i) {
      xh[i] = (xs[i] - mu) * is;
      o[i] = tg[ch] * xh[i] + tbeta[ch];
    }
  }

  bool ng = g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta);
  return g.add_node(std::move(out), ng,
                    [x, gamma, beta, xh = std::move(xhat), is = std::move(inv_sigma), c, n,
                     self_id = g.size()](Graph& gg) {
                      const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
                      const Tensor& tg = gg.val(gamma);
                      for (int ch = 0; ch < c; ++ch) {
                        const double* gos = go.data() + ch * n;
                        const double* xhs = xh.data() + ch * n;
                        if (gg.needs_grad(beta)) {
                          double s = 0.0;
                          for (std::int64_t i = 0; i < n; ++i) s += gos[i];
                          gg.grad(beta)[ch] += s;
                        }
                        if (gg.needs_grad(gamma)) {
                          double s = 0.0;
                          for (std::int64_t i = 0; i < n; ++i) s += gos[i] * xhs[i];
                          gg.grad(gamma)[ch] += s;
                        }
                        if (gg.needs_grad(x)) {
                          double m1 = 0.0, m2 = 0.0;
                          for (std::int64_t i = 0; i < n; ++i) {
                            m1 += gos[i];
                            m2 += gos[i] * xhs[i];
                          }
                          m1 /= static_cast<double>(n);
                          m2 /= static_cast<double>(n);
                          double a = tg[ch] * is[ch];
                          double* gx = gg.grad(x).data() + ch * n;
                          for (std::int64_t i = 0; i < n; ++i) gx[i] += a * (gos[i] - m1 - xhs[i] * m2);
                        }
                      }
                    });
}

Var resize_bilinear(Graph& g, Var x, int h2, int w2, double value_scale) {
  const Tensor& tx = g.val(x);
  if (tx.ndim() != 3) throw std::invalid_argument("resize_bilinear: need CHW");
  int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  Tensor out({c, h2, w2});
  double ry = static_cast<double>(h) / h2;
  double rx = static_cast<double>(w) / w2;
  // Precompute the sample lattice once per call.
  std::vector<int> y0(h2), x0(w2);
  std::vector<double> fy(h2), fx(w2);
  for (int oy = 0; oy < h2; ++oy) {
    double sy = (oy + 0.5) * ry - 0.5;
    sy = sy < 0 ? 0 : (sy > h - 1 ? h - 1 : sy);
    y0[oy] = static_cast<int>(sy) >= h - 1 ? h - 2 >= 0 ? h - 2 : 0 : static_cast<int>(sy);
    fy[oy] = h == 1 ? 0.0 : sy - y0[oy];
  }
  for (int ox = 0; ox < w2; ++ox) {
    double sx = (ox + 0.5) * rx - 0.5;
    sx = sx < 0 ? 0 : (sx > w - 1 ? w - 1 : sx);
    x0[ox] = static_cast<int>(sx) >= w - 1 ? (w - 2 >= 0 ? w - 2 : 0) : static_cast<int>(sx);
    fx[ox] = w == 1 ? 0.0 : sx - x0[ox];
  }
  for (int ch = 0; ch < c; ++ch) {
    const double* xs = tx.data() + static_cast<std::int64_t>(ch) * h * w;
    double* o = out.data() + static_cast<std::int64_t>(ch) * h2 * w2;
    for (int oy = 0; oy < h2; ++oy) {
      const double* r0 = xs + static_cast<std::int64_t>(y0[oy]) * w;
      const double* r1 = xs + static_cast<std::int64_t>(h == 1 ? y0[oy] : y0[oy] + 1) * w;
      for (int ox = 0; ox < w2; ++ox) {
        int xa = x0[ox], xb = w == 1 ? xa : xa + 1;
        double v0 = r0[xa] * (1 - fx[ox]) + r0[xb] * fx[ox];
        double v1 = r1[xa] * (1 - fx[ox]) + r1[xb] * fx[ox];
        o[static_cast<std::int64_t>(oy) * w2 + ox] = value_scale * (v0 * (1 - fy[oy]) + v1 * fy[oy]);
      }
    }
  }
  return g.add_node(std::move(out), g.needs_grad(x),
                    [x, h2, w2, value_scale, c, h, w, y0, x0, fy, fx, self_id = g.size()](Graph& gg) {
                      if (!gg.needs_grad(x)) return;
                      const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
                      Tensor& gx = gg.grad(x);
                      for (int ch = 0; ch < c; ++ch) {
                        double* gxs = gx.data() + static_cast<std::int64_t>(ch) * h * w;
                        const double* gos = go.data() + static_cast<std::int64_t>(ch) * h2 * w2;
                        for (int oy = 0; oy < h2; ++oy) {
                          int ya = y0[oy], yb = h == 1 ? ya : ya + 1;
                          for (int ox = 0; ox < w2; ++ox) {
                            int xa = x0[ox], xb = w == 1 ? xa : xa + 1;
                            double gval = value_scale * gos[static_cast<std::int64_t>(oy) * w2 + ox];
                            gxs[static_cast<std::int64_t>(ya) * w + xa] += gval * (1 - fx[ox]) * (1 - fy[oy]);
                            gxs[static_cast<std::int64_t>(ya) * w + xb] += gval * fx[ox] * (1 - fy[oy]);
                            gxs[static_cast<std::int64_t>(yb) * w + xa] += gval * (1 - fx[ox]) * fy[oy];
                            gxs[static_cast<std::int64_t>(yb) * w + xb] += gval * fx[ox] * fy[oy];
                          }
                        }
                      }
                    });
}

}  // namespace ops

Tensor resize_bilinear_t(const Tensor& x, int h2, int w2, double value_scale) {
  Graph g;
  Var v = g.leaf(x);
  return g.val(ops::resize_bilinear(g, v, h2, w2, value_scale));
}

}  // namespace vidstereo
