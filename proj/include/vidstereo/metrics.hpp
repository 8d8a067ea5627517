#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vidstereo/graph.hpp"

namespace vidstereo {

struct MetricReport {
  double epe = 0.0;
  double delta_1px = 0.0, delta_3px = 0.0;      // fraction with |err| > threshold
  double tepe = 0.0;
  double delta_t_1px = 0.0, delta_t_3px = 0.0;  // fraction with per-pixel TEPE > threshold
  std::int64_t valid_pixel_count = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row(const std::string& method, const std::string& sequence) const;
};

// mask: nullptr = all pixels valid; otherwise 1 = include. Occluded pixels
// are included on purpose; only non-finite / externally invalid ground truth
// is excluded.
double epe(const Tensor& d, const Tensor& d_gt, const Tensor* mask = nullptr);
double delta_npx(const Tensor& d, const Tensor& d_gt, double n, const Tensor* mask = nullptr);

// Per-pixel temporal end-point error: sqrt of the sum over adjacent pairs of
// squared errors of the temporal disparity differences. Not normalized by
// T-1; clip lengths must match when comparing sequences.
Tensor tepe_map(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt);
double tepe(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt, const Tensor* mask = nullptr);
double delta_t_npx(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt, double n,
                   const Tensor* mask = nullptr);

MetricReport compute_metrics(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt,
                             const Tensor* mask = nullptr);

// gamma-weighted multi-prediction l1 training loss. predictions[t] holds the
// N full-resolution iterates of frame t in emission order; weight of the
// n-th (1-based) is gamma^(N-n). Differentiable; masks are optional per
// frame (1 = valid).
Var sequence_loss(Graph& g, const std::vector<std::vector<Var>>& predictions, const std::vector<Tensor>& gt,
                  double gamma = 0.9, const std::vector<Tensor>* masks = nullptr);

}  // namespace vidstereo
