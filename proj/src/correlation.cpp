#include "vidstereo/correlation.hpp"

#include <cmath>

#include "vidstereo/geometry.hpp"

namespace vidstereo {

SearchRange SearchRange::horizontal(int half) {
  SearchRange r;
  for (int dx = -half; dx <= half; ++dx) r.offsets.emplace_back(dx, 0);
  return r;
}

SearchRange SearchRange::grid3x3() {
  SearchRange r;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) r.offsets.emplace_back(dx, dy);
  return r;
}

namespace ops {

AlignedTriple align_neighbors(Graph& g, Var prev, Var center, Var next, Var flow_to_prev, Var flow_to_next) {
  AlignedTriple out;
  out.prev = bilinear_warp(g, prev, flow_to_prev);
  out.center = center;
  out.next = bilinear_warp(g, next, flow_to_next);
  return out;
}

Var local_correlation(Graph& g, Var fl, Var fr, const SearchRange& range) {
  const Tensor& tl = g.val(fl);
  const Tensor& tr = g.val(fr);
  if (!tl.same_shape(tr))
    throw std::invalid_argument("local_correlation: shape mismatch " + tl.shape().str() + " vs " + tr.shape().str());
  if (tl.ndim() != 3) throw std::invalid_argument("local_correlation: need CHW");
  if (range.offsets.empty()) throw std::invalid_argument("local_correlation: empty search range");
  bool has_center = false;
  for (auto& o : range.offsets) has_center = has_center || (o.first == 0 && o.second == 0);
  if (!has_center) throw std::invalid_argument("local_correlation: search range must contain (0,0)");

  int c = tl.dim(0), h = tl.dim(1), w = tl.dim(2);
  int nr = range.size();
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

  Tensor out({nr, h, w});
  for (int k = 0; k < nr; ++k) {
    int dx = range.offsets[k].first, dy = range.offsets[k].second;
    for (int y = 0; y < h; ++y) {
      int sy = clampi(y + dy, 0, h - 1);
      for (int x = 0; x < w; ++x) {
        int sx = clampi(x + dx, 0, w - 1);
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch)
          s += tl.data()[ch * hw + y * w + x] * tr.data()[ch * hw + sy * w + sx];
        out.data()[k * hw + y * w + x] = s * inv_sqrt_c;
      }
    }
  }

  bool ng = g.needs_grad(fl) || g.needs_grad(fr);
  auto offsets = range.offsets;
  return g.add_node(std::move(out), ng,
                    [fl, fr, offsets, c, h, w, hw, inv_sqrt_c, self_id = g.size()](Graph& gg) {
                      const Tensor& go = gg.grad(Var{static_cast<int>(self_id)});
                      const Tensor& tl = gg.val(fl);
                      const Tensor& tr = gg.val(fr);
                      bool need_l = gg.needs_grad(fl);
                      bool need_r = gg.needs_grad(fr);
                      Tensor* gl = need_l ? &gg.grad(fl) : nullptr;
                      Tensor* gr = need_r ? &gg.grad(fr) : nullptr;
                      auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
                      int nr = static_cast<int>(offsets.size());
                      for (int k = 0; k < nr; ++k) {
                        int dx = offsets[k].first, dy = offsets[k].second;
                        for (int y = 0; y < h; ++y) {
                          int sy = clampi(y + dy, 0, h - 1);
                          for (int x = 0; x < w; ++x) {
                            int sx = clampi(x + dx, 0, w - 1);
                            double gval = go.data()[k * hw + y * w + x] * inv_sqrt_c;
                            if (gval == 0.0) continue;
                            for (int ch = 0; ch < c; ++ch) {
                              if (need_l)
                                gl->data()[ch * hw + y * w + x] += gval * tr.data()[ch * hw + sy * w + sx];
                              if (need_r)
                                gr->data()[ch * hw + sy * w + sx] += gval * tl.data()[ch * hw + y * w + x];
                            }
                          }
                        }
                      }
                    });
}

Var tfcl(Graph& g, const std::vector<Var>& left_refs, const AlignedTriple& right, Var disp, int iteration) {
  if (left_refs.empty()) throw std::invalid_argument("tfcl: need at least one left reference");
  SearchRange range = SearchRange::for_iteration(iteration);
  Var warped_prev = warp_by_disparity(g, right.prev, disp);
  Var warped_center = warp_by_disparity(g, right.center, disp);
  Var warped_next = warp_by_disparity(g, right.next, disp);
  std::vector<Var> blocks;
  blocks.reserve(left_refs.size() * 3);
  for (Var ref : left_refs) {
    blocks.push_back(local_correlation(g, ref, warped_prev, range));
    blocks.push_back(local_correlation(g, ref, warped_center, range));
    blocks.push_back(local_correlation(g, ref, warped_next, range));
  }
  return concat(g, blocks);
}

}  // namespace ops
}  // namespace vidstereo
