#pragma once

#include <utility>
#include <vector>

#include "vidstereo/graph.hpp"

namespace vidstereo {

// Integer offset set a pixel is matched against. Always contains (0,0).
struct SearchRange {
  std::vector<std::pair<int, int>> offsets;  // (dx, dy)

  // {(dx,0) : dx in [-half, half]}, ascending dx.
  static SearchRange horizontal(int half = 4);
  // 3x3 grid {(dx,dy) : dx,dy in [-1,1]}, row-major by dy then dx.
  static SearchRange grid3x3();
  // Even iterations search along the epipolar line, odd iterations a 3x3
  // neighborhood; both have 9 offsets.
  static SearchRange for_iteration(int n) { return n % 2 == 0 ? horizontal() : grid3x3(); }

  int size() const { return static_cast<int>(offsets.size()); }
};

enum class CorrelationMode { kSingleMulti, kMultiMulti, kPerFrame };

namespace ops {

// Warps neighbor right-view features onto the center frame. flow_to_prev /
// flow_to_next carry center->neighbor correspondences; sequence boundaries
// are handled by the caller substituting the center map with zero flow.
struct AlignedTriple {
  Var prev, center, next;
};
AlignedTriple align_neighbors(Graph& g, Var prev, Var center, Var next, Var flow_to_prev, Var flow_to_next);

// score(p, r) = <fl(p), fr(p+r)> / sqrt(C), fr edge-clamped. Output (|R|,H,W)
// with channels in offset order.
Var local_correlation(Graph& g, Var fl, Var fr, const SearchRange& range);

// Triple-frame cost volume for one center frame at iteration n: each aligned
// right map is warped by the current disparity, then correlated against the
// left reference(s). Blocks are concatenated (t-1, t, t+1) source-major; in
// multi-multi mode the three aligned left references each contribute a
// 3-source group, reference-major. 27 channels single/per-frame, 81
// multi-multi.
Var tfcl(Graph& g, const std::vector<Var>& left_refs, const AlignedTriple& right, Var disp, int iteration);

}  // namespace ops
}  // namespace vidstereo
