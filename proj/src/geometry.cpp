#include "vidstereo/geometry.hpp"

#include <cmath>

#include "vidstereo/nn.hpp"

namespace vidstereo {

namespace {

struct SampleWeights {
  int x0, x1, y0, y1;
  double wx, wy;    // fractional parts after clamping
  double ddx, ddy;  // d(clamped coord)/d(raw coord): 1 inside, 0 past the edge
};

inline SampleWeights sample_setup(double x, double y, int w, int h) {
  SampleWeights s;
  double xc = x, yc = y;
  s.ddx = 1.0;
  s.ddy = 1.0;
  if (xc <= 0.0) {
    xc = 0.0;
    s.ddx = 0.0;
  } else if (xc >= w - 1) {
    xc = w - 1;
    s.ddx = 0.0;
  }
  if (yc <= 0.0) {
    yc = 0.0;
    s.ddy = 0.0;
  } else if (yc >= h - 1) {
    yc = h - 1;
    s.ddy = 0.0;
  }
  s.x0 = static_cast<int>(xc);
  s.y0 = static_cast<int>(yc);
  if (s.x0 > w - 2) s.x0 = w >= 2 ? w - 2 : 0;
  if (s.y0 > h - 2) s.y0 = h >= 2 ? h - 2 : 0;
  s.x1 = w >= 2 ? s.x0 + 1 : s.x0;
  s.y1 = h >= 2 ? s.y0 + 1 : s.y0;
  s.wx = xc - s.x0;
  s.wy = yc - s.y0;
  return s;
}

// Horizontal-only variant: integer row, 1D interpolation along x.
struct RowSample {
  int x0, x1;
  double wx, ddx;
};

inline RowSample row_sample_setup(double x, int w) {
  RowSample s;
  double xc = x;
  s.ddx = 1.0;
  if (xc <= 0.0) {
    xc = 0.0;
    s.ddx = 0.0;
  } else if (xc >= w - 1) {
    xc = w - 1;
    s.ddx = 0.0;
  }
  s.x0 = static_cast<int>(xc);
  if (s.x0 > w - 2) s.x0 = w >= 2 ? w - 2 : 0;
  s.x1 = w >= 2 ? s.x0 + 1 : s.x0;
  s.wx = xc - s.x0;
  return s;
}

}  // namespace

double bilinear_at(const Tensor& img, int c, double x, double y) {
  int nd = img.ndim();
  int h = img.dim(nd - 2), w = img.dim(nd - 1);
  const double* p = img.data() + static_cast<std::int64_t>(c) * h * w;
  SampleWeights s = sample_setup(x, y, w, h);
  double v00 = p[static_cast<std::int64_t>(s.y0) * w + s.x0];
  double v01 = p[static_cast<std::int64_t>(s.y0) * w + s.x1];
  double v10 = p[static_cast<std::int64_t>(s.y1) * w + s.x0];
  double v11 = p[static_cast<std::int64_t>(s.y1) * w + s.x1];
  return (v00 * (1 - s.wx) + v01 * s.wx) * (1 - s.wy) + (v10 * (1 - s.wx) + v11 * s.wx) * s.wy;
}

namespace ops {

Var bilinear_warp(Graph& g, Var field, Var flow) {
  const Tensor& tf = g.val(field);
  const Tensor& tw = g.val(flow);
  if (tf.ndim() != 3 || tw.ndim() != 3 || tw.dim(0) != 2)
    throw std::invalid_argument("bilinear_warp: field must be CHW, flow (2,H,W)");
  if (tf.dim(1) != tw.dim(1) || tf.dim(2) != tw.dim(2))
    throw std::invalid_argument("bilinear_warp: spatial dims differ, field " + tf.shape().str() + " vs flow " +
                                tw.shape().str());
  int c = tf.dim(0), h = tf.dim(1), w = tf.dim(2);
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out(tf.shape());
  const double* u = tw.data();
  const double* v = tw.data() + hw;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      SampleWeights s = sample_setup(x + u[i], y + v[i], w, h);
      for (int ch = 0; ch < c; ++ch) {
        const double* p = tf.data() + ch * hw;
        double v00 = p[static_cast<std::int64_t>(s.y0) * w + s.x0];
        double v01 = p[static_cast<std::int64_t>(s.y0) * w + s.x1];
        double v10 = p[static_cast<std::int64_t>(s.y1) * w + s.x0];
        double v11 = p[static_cast<std::int64_t>(s.y1) * w + s.x1];
        out.data()[ch * hw + i] =
            (v00 * (1 - s.wx) + v01 * s.wx) * (1 - s.wy) + (v10 * (1 - s.wx) + v11 * s.wx) * s.wy;
      }
    }
  }
  bool ng = g.needs_grad(field) || g.needs_grad(flow);
  return g.add_node(std::move(out), ng, [field, flow, c, h, w, hw, self_id = g.size()](Graph& gg) {
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    const Tensor& tf = gg.val(field);
    const Tensor& tw = gg.val(flow);
    const double* u = tw.data();
    const double* v = tw.data() + hw;
    bool need_f = gg.needs_grad(field);
    bool need_w = gg.needs_grad(flow);
    Tensor* gf = need_f ? &gg.grad(field) : nullptr;
    Tensor* gw = need_w ? &gg.grad(flow) : nullptr;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::int64_t i = static_cast<std::int64_t>(y) * w + x;
        SampleWeights s = sample_setup(x + u[i], y + v[i], w, h);
        double gu = 0.0, gv = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          double gval = go.data()[ch * hw + i];
          if (gval == 0.0) continue;
          const double* p = tf.data() + ch * hw;
          double v00 = p[static_cast<std::int64_t>(s.y0) * w + s.x0];
          double v01 = p[static_cast<std::int64_t>(s.y0) * w + s.x1];
          double v10 = p[static_cast<std::int64_t>(s.y1) * w + s.x0];
          double v11 = p[static_cast<std::int64_t>(s.y1) * w + s.x1];
          if (need_f) {
            double* gp = gf->data() + ch * hw;
            gp[static_cast<std::int64_t>(s.y0) * w + s.x0] += gval * (1 - s.wx) * (1 - s.wy);
            gp[static_cast<std::int64_t>(s.y0) * w + s.x1] += gval * s.wx * (1 - s.wy);
            gp[static_cast<std::int64_t>(s.y1) * w + s.x0] += gval * (1 - s.wx) * s.wy;
            gp[static_cast<std::int64_t>(s.y1) * w + s.x1] += gval * s.wx * s.wy;
          }
          if (need_w) {
            gu += gval * ((v01 - v00) * (1 - s.wy) + (v11 - v10) * s.wy) * s.ddx;
            gv += gval * ((v10 - v00) * (1 - s.wx) + (v11 - v01) * s.wx) * s.ddy;
          }
        }
        if (need_w) {
          gw->data()[i] += gu;
          gw->data()[hw + i] += gv;
        }
      }
    }
  });
}

Var warp_by_disparity(Graph& g, Var field, Var disp) {
  const Tensor& tf = g.val(field);
  const Tensor& td = g.val(disp);
  if (tf.ndim() != 3 || td.ndim() != 3 || td.dim(0) != 1)
    throw std::invalid_argument("warp_by_disparity: field must be CHW, disp (1,H,W)");
  if (tf.dim(1) != td.dim(1) || tf.dim(2) != td.dim(2))
    throw std::invalid_argument("warp_by_disparity: spatial dims differ");
  int c = tf.dim(0), h = tf.dim(1), w = tf.dim(2);
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out(tf.shape());
  const double* d = td.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      RowSample s = row_sample_setup(x - d[i], w);
      for (int ch = 0; ch < c; ++ch) {
        const double* p = tf.data() + ch * hw + static_cast<std::int64_t>(y) * w;
        out.data()[ch * hw + i] = p[s.x0] * (1 - s.wx) + p[s.x1] * s.wx;
      }
    }
  }
  bool ng = g.needs_grad(field) || g.needs_grad(disp);
  return g.add_node(std::move(out), ng, [field, disp, c, h, w, hw, self_id = g.size()](Graph& gg) {
    const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
    const Tensor& tf = gg.val(field);
    const double* d = gg.val(disp).data();
    bool need_f = gg.needs_grad(field);
    bool need_d = gg.needs_grad(disp);
    Tensor* gf = need_f ? &gg.grad(field) : nullptr;
    Tensor* gd = need_d ? &gg.grad(disp) : nullptr;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::int64_t i = static_cast<std::int64_t>(y) * w + x;
        RowSample s = row_sample_setup(x - d[i], w);
        double gsum = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          double gval = go.data()[ch * hw + i];
          if (gval == 0.0) continue;
          const double* p = tf.data() + ch * hw + static_cast<std::int64_t>(y) * w;
          if (need_f) {
            double* gp = gf->data() + ch * hw + static_cast<std::int64_t>(y) * w;
            gp[s.x0] += gval * (1 - s.wx);
            gp[s.x1] += gval * s.wx;
          }
          // x decreases as d grows, hence the sign flip.
          if (need_d) gsum += gval * (p[s.x1] - p[s.x0]) * -s.ddx;
        }
        if (need_d) gd->data()[i] += gsum;
      }
    }
  });
}

Var upscale_disparity(Graph& g, Var disp, int factor) {
  const Tensor& td = g.val(disp);
  if (td.ndim() != 3 || td.dim(0) != 1) throw std::invalid_argument("upscale_disparity: disp must be (1,H,W)");
  return resize_bilinear(g, disp, td.dim(1) * factor, td.dim(2) * factor, static_cast<double>(factor));
}

Var convex_upsample(Graph& g, Var disp, Var logits) {
  const Tensor& td = g.val(disp);
  const Tensor& tl = g.val(logits);
  if (td.ndim() != 3 || td.dim(0) != 1) throw std::invalid_argument("convex_upsample: disp must be (1,H,W)");
  if (tl.ndim() != 3 || tl.dim(0) != 144)
    throw std::invalid_argument("convex_upsample: logits must be (144,H,W), got " + tl.shape().str());
  int h = td.dim(1), w = td.dim(2);
  if (tl.dim(1) != h || tl.dim(2) != w) throw std::invalid_argument("convex_upsample: spatial dims differ");
  std::int64_t hw = static_cast<std::int64_t>(h) * w;

  // Softmax over the 9 neighbor logits of each (subpixel, cell) slot.
  Tensor wts({144, h, w});
  for (int sub = 0; sub < 16; ++sub) {
    for (std::int64_t i = 0; i < hw; ++i) {
      double mx = -1e300;
      for (int j = 0; j < 9; ++j) mx = std::max(mx, tl.data()[(j * 16 + sub) * hw + i]);
      double z = 0.0;
      for (int j = 0; j < 9; ++j) {
        double e = std::exp(tl.data()[(j * 16 + sub) * hw + i] - mx);
        wts.data()[(j * 16 + sub) * hw + i] = e;
        z += e;
      }
      for (int j = 0; j < 9; ++j) wts.data()[(j * 16 + sub) * hw + i] /= z;
    }
  }

  Tensor out({1, 4 * h, 4 * w});
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int cy = 0; cy < h; ++cy) {
    for (int cx = 0; cx < w; ++cx) {
      std::int64_t i = static_cast<std::int64_t>(cy) * w + cx;
      for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
          int sub = sy * 4 + sx;
          double acc = 0.0;
          for (int j = 0; j < 9; ++j) {
            int ny = clampi(cy + j / 3 - 1, 0, h - 1);
            int nx = clampi(cx + j % 3 - 1, 0, w - 1);
            acc += wts.data()[(j * 16 + sub) * hw + i] * td.data()[static_cast<std::int64_t>(ny) * w + nx];
          }
          out.data()[static_cast<std::int64_t>(cy * 4 + sy) * (4 * w) + cx * 4 + sx] = 4.0 * acc;
        }
      }
    }
  }

  bool ng = g.needs_grad(disp) || g.needs_grad(logits);
  return g.add_node(std::move(out), ng,
                    [disp, logits, wt = std::move(wts), h, w, hw, self_id = g.size()](Graph& gg) {
                      const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
                      const Tensor& td = gg.val(disp);
                      bool need_d = gg.needs_grad(disp);
                      bool need_l = gg.needs_grad(logits);
                      Tensor* gd = need_d ? &gg.grad(disp) : nullptr;
                      Tensor* gl = need_l ? &gg.grad(logits) : nullptr;
                      auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
                      for (int cy = 0; cy < h; ++cy) {
                        for (int cx = 0; cx < w; ++cx) {
                          std::int64_t i = static_cast<std::int64_t>(cy) * w + cx;
                          for (int sub = 0; sub < 16; ++sub) {
                            int sy = sub / 4, sx = sub % 4;
                            double gval =
                                4.0 * go.data()[static_cast<std::int64_t>(cy * 4 + sy) * (4 * w) + cx * 4 + sx];
                            if (gval == 0.0) continue;
                            double dvals[9];
                            double wsum = 0.0;
                            for (int j = 0; j < 9; ++j) {
                              int ny = clampi(cy + j / 3 - 1, 0, h - 1);
                              int nx = clampi(cx + j % 3 - 1, 0, w - 1);
                              dvals[j] = td.data()[static_cast<std::int64_t>(ny) * w + nx];
                              wsum += wt.data()[(j * 16 + sub) * hw + i] * dvals[j];
                            }
                            for (int j = 0; j < 9; ++j) {
                              double wj = wt.data()[(j * 16 + sub) * hw + i];
                              if (need_d) {
                                int ny = clampi(cy + j / 3 - 1, 0, h - 1);
                                int nx = clampi(cx + j % 3 - 1, 0, w - 1);
                                gd->data()[static_cast<std::int64_t>(ny) * w + nx] += gval * wj;
                              }
                              if (need_l) gl->data()[(j * 16 + sub) * hw + i] += gval * wj * (dvals[j] - wsum);
                            }
                          }
                        }
                      }
                    });
}

}  // namespace ops

FlowField resample_flow(const FlowField& flow, int target_denom, int target_h, int target_w) {
  if (!valid_scale_denom(target_denom)) throw std::invalid_argument("resample_flow: bad target scale");
  double value_scale = static_cast<double>(flow.denom) / target_denom;
  FlowField out;
  out.denom = target_denom;
  out.values = resize_bilinear_t(flow.values, target_h, target_w, value_scale);
  return out;
}

DisparityField upscale_disparity_t(const DisparityField& d, int factor) {
  DisparityField out;
  out.denom = d.denom / factor;
  Tensor lifted = d.values.reshaped({1, d.values.dim(0), d.values.dim(1)});
  Tensor r = resize_bilinear_t(lifted, d.values.dim(0) * factor, d.values.dim(1) * factor,
                               static_cast<double>(factor));
  out.values = r.reshaped({r.dim(1), r.dim(2)});
  return out;
}

Tensor warp_image(const Tensor& img, const Tensor& flow) {
  Graph g;
  return g.val(ops::bilinear_warp(g, g.leaf(img), g.leaf(flow)));
}

Tensor warp_image_by_disparity(const Tensor& img, const Tensor& disp) {
  Graph g;
  Tensor d3 = disp.ndim() == 2 ? disp.reshaped({1, disp.dim(0), disp.dim(1)}) : disp;
  return g.val(ops::warp_by_disparity(g, g.leaf(img), g.leaf(d3)));
}

}  // namespace vidstereo
