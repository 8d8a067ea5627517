#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidstereo {

// Dense row-major shape, up to 5 dims (conv3d weights need 5).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() > kMaxDims) throw std::invalid_argument("Shape: too many dims");
    for (int d : dims) d_[nd_++] = d;
  }

  int ndim() const { return nd_; }
  int operator[](int i) const { return d_[i]; }
  int& operator[](int i) { return d_[i]; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int i = 0; i < nd_; ++i) n *= d_[i];
    return nd_ == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const {
    if (nd_ != o.nd_) return false;
    for (int i = 0; i < nd_; ++i)
      if (d_[i] != o.d_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < nd_; ++i) s += (i ? "," : "") + std::to_string(d_[i]);
    return s + ")";
  }

  static constexpr std::size_t kMaxDims = 5;

 private:
  std::array<int, kMaxDims> d_{{0, 0, 0, 0, 0}};
  int nd_ = 0;
};

// Owning dense double tensor. Value semantics; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape_(s), v_(static_cast<std::size_t>(s.numel()), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double x) { return Tensor(s, x); }

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[i]; }
  int ndim() const { return shape_.ndim(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

  // Indexed access; inlined hot path, no bounds checks in release.
  double& at(int i0) { return v_[static_cast<std::size_t>(i0)]; }
  double& at(int i0, int i1) { return v_[static_cast<std::size_t>(i0) * shape_[1] + i1]; }
  double& at(int i0, int i1, int i2) {
    return v_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2];
  }
  double& at(int i0, int i1, int i2, int i3) {
    return v_[((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
  }
  double& at(int i0, int i1, int i2, int i3, int i4) {
    return v_[(((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3) * shape_[4] +
              i4];
  }
  double at(int i0) const { return v_[static_cast<std::size_t>(i0)]; }
  double at(int i0, int i1) const { return v_[static_cast<std::size_t>(i0) * shape_[1] + i1]; }
  double at(int i0, int i1, int i2) const {
    return v_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2];
  }
  double at(int i0, int i1, int i2, int i3) const {
    return v_[((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
  }
  double at(int i0, int i1, int i2, int i3, int i4) const {
    return v_[(((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3) * shape_[4] +
              i4];
  }

  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

  Tensor reshaped(Shape s) const {
    if (s.numel() != numel()) throw std::invalid_argument("reshape: numel mismatch " + shape_.str() + " -> " + s.str());
    Tensor t = *this;
    t.shape_ = s;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<double> v_;
};

// Deterministic RNG. mt19937_64 is bit-stable across standard libraries; the
// distribution helpers below avoid std::*_distribution, whose output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive range, small spans only
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal() {  // Box-Muller, cached pair
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-15) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void fill_uniform(Tensor& t, double lo, double hi) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
  }
  void fill_normal(Tensor& t, double mean = 0.0, double stddev = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vidstereo
