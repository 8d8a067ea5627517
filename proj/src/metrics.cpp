#include "vidstereo/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace vidstereo {

namespace {

void check_pair(const Tensor& d, const Tensor& gt, const Tensor* mask) {
  if (!d.same_shape(gt)) throw std::invalid_argument("metrics: prediction/gt shape mismatch");
  if (mask && !mask->same_shape(gt)) throw std::invalid_argument("metrics: mask shape mismatch");
}

std::int64_t mask_count(const Tensor& ref, const Tensor* mask) {
  if (!mask) return ref.numel();
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < mask->numel(); ++i) n += (*mask)[i] > 0.5 ? 1 : 0;
  if (n == 0) throw std::invalid_argument("metrics: empty mask");
  return n;
}

}  // namespace

double epe(const Tensor& d, const Tensor& d_gt, const Tensor* mask) {
  check_pair(d, d_gt, mask);
  std::int64_t n = mask_count(d_gt, mask);
  double s = 0.0;
  for (std::int64_t i = 0; i < d.numel(); ++i) {
    if (mask && (*mask)[i] <= 0.5) continue;
    s += std::fabs(d[i] - d_gt[i]);
  }
  return s / static_cast<double>(n);
}

double delta_npx(const Tensor& d, const Tensor& d_gt, double n_px, const Tensor* mask) {
  check_pair(d, d_gt, mask);
  std::int64_t n = mask_count(d_gt, mask);
  std::int64_t over = 0;
  for (std::int64_t i = 0; i < d.numel(); ++i) {
    if (mask && (*mask)[i] <= 0.5) continue;
    if (std::fabs(d[i] - d_gt[i]) > n_px) ++over;
  }
  return static_cast<double>(over) / static_cast<double>(n);
}

Tensor tepe_map(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt) {
  if (d.size() != d_gt.size()) throw std::invalid_argument("tepe: sequence length mismatch");
  if (d.size() < 2) throw std::invalid_argument("tepe: need at least 2 frames");
  Tensor acc(d[0].shape());
  for (std::size_t t = 0; t + 1 < d.size(); ++t) {
    check_pair(d[t], d_gt[t], nullptr);
    check_pair(d[t + 1], d_gt[t + 1], nullptr);
    for (std::int64_t i = 0; i < acc.numel(); ++i) {
      double e = (d[t][i] - d[t + 1][i]) - (d_gt[t][i] - d_gt[t + 1][i]);
      acc[i] += e * e;
    }
  }
  for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] = std::sqrt(acc[i]);
  return acc;
}

double tepe(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt, const Tensor* mask) {
  Tensor map = tepe_map(d, d_gt);
  std::int64_t n = mask_count(map, mask);
  double s = 0.0;
  for (std::int64_t i = 0; i < map.numel(); ++i) {
    if (mask && (*mask)[i] <= 0.5) continue;
    s += map[i];
  }
  return s / static_cast<double>(n);
}

double delta_t_npx(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt, double n_px,
                   const Tensor* mask) {
  Tensor map = tepe_map(d, d_gt);
  std::int64_t n = mask_count(map, mask);
  std::int64_t over = 0;
  for (std::int64_t i = 0; i < map.numel(); ++i) {
    if (mask && (*mask)[i] <= 0.5) continue;
    if (map[i] > n_px) ++over;
  }
  return static_cast<double>(over) / static_cast<double>(n);
}

MetricReport compute_metrics(const std::vector<Tensor>& d, const std::vector<Tensor>& d_gt,
                             const Tensor* mask) {
  MetricReport r;
  double e = 0, d1 = 0, d3 = 0;
  for (std::size_t t = 0; t < d.size(); ++t) {
    e += epe(d[t], d_gt[t], mask);
    d1 += delta_npx(d[t], d_gt[t], 1.0, mask);
    d3 += delta_npx(d[t], d_gt[t], 3.0, mask);
  }
  r.epe = e / d.size();
  r.delta_1px = d1 / d.size();
  r.delta_3px = d3 / d.size();
  if (d.size() >= 2) {
    r.tepe = tepe(d, d_gt, mask);
    r.delta_t_1px = delta_t_npx(d, d_gt, 1.0, mask);
    r.delta_t_3px = delta_t_npx(d, d_gt, 3.0, mask);
  }
  r.valid_pixel_count = mask_count(d_gt[0], mask) * static_cast<std::int64_t>(d.size());
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["epe"] = epe;
  j["delta_1px"] = delta_1px;
  j["delta_3px"] = delta_3px;
  j["tepe"] = tepe;
  j["delta_t_1px"] = delta_t_1px;
  j["delta_t_3px"] = delta_t_3px;
  j["valid_pixel_count"] = valid_pixel_count;
  return j.dump(2);
}

std::string MetricReport::csv_header() {
  return "method,sequence,epe,delta_1px,delta_3px,tepe,delta_t_1px,delta_t_3px,valid_pixel_count";
}

std::string MetricReport::csv_row(const std::string& method, const std::string& sequence) const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld", method.c_str(),
                sequence.c_str(), epe, delta_1px, delta_3px, tepe, delta_t_1px, delta_t_3px,
                static_cast<long long>(valid_pixel_count));
  return buf;
}

Var sequence_loss(Graph& g, const std::vector<std::vector<Var>>& predictions, const std::vector<Tensor>& gt,
                  double gamma, const std::vector<Tensor>* masks) {
  if (predictions.empty()) throw std::invalid_argument("sequence_loss: no frames");
  if (predictions.size() != gt.size()) throw std::invalid_argument("sequence_loss: frame count mismatch");
  Var total;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const auto& preds = predictions[t];
    if (preds.empty()) throw std::invalid_argument("sequence_loss: empty prediction list for frame " +
                                                   std::to_string(t));
    Tensor gt_t = gt[t].ndim() == 2 ? gt[t].reshaped({1, gt[t].dim(0), gt[t].dim(1)}) : gt[t];
    Var gt_leaf = g.leaf(gt_t);
    Tensor mask = masks ? (*masks)[t] : Tensor::full(gt_t.shape(), 1.0);
    if (mask.ndim() == 2) mask = mask.reshaped({1, mask.dim(0), mask.dim(1)});
    int n_preds = static_cast<int>(preds.size());
    for (int n = 1; n <= n_preds; ++n) {
      Var term = ops::masked_mean(g, ops::abs_(g, ops::sub(g, preds[n - 1], gt_leaf)), mask);
      Var weighted = ops::scale(g, term, std::pow(gamma, n_preds - n));
      total = total.valid() ? ops::add(g, total, weighted) : weighted;
    }
  }
  return total;
}

}  // namespace vidstereo
