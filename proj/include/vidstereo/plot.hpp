#pragma once

#include <string>
#include <vector>

#include "vidstereo/tensor.hpp"

namespace vidstereo {

// Minimal static line plots (loss/metric curves, sweep comparisons).
class LinePlot {
 public:
  LinePlot(int width = 720, int height = 420) : w_(width), h_(height) {}
  void add_series(std::vector<double> xs, std::vector<double> ys);
  void save(const std::string& path) const;

 private:
  int w_, h_;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> series_;
};

// Color-mapped disparity visualization, (H,W) -> (3,H,W). dmax <= 0 scales
// to the field maximum.
Tensor colorize_disparity(const Tensor& disp, double dmax = 0.0);

}  // namespace vidstereo
