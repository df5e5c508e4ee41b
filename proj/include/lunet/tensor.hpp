#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lunet {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense 4-D array in NCHW layout, double precision.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int64_t n, int64_t c, int64_t h, int64_t w, double value = 0.0)
      : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw ShapeError("Tensor: negative dimension");
    v_.assign(static_cast<size_t>(n * c * h * w), value);
  }

  static Tensor like(const Tensor& other, double value = 0.0) {
    return Tensor(other.n_, other.c_, other.h_, other.w_, value);
  }

  int64_t n() const { return n_; }
  int64_t c() const { return c_; }
  int64_t h() const { return h_; }
  int64_t w() const { return w_; }
  int64_t size() const { return static_cast<int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  double& operator()(int64_t n, int64_t c, int64_t y, int64_t x) {
    return v_[static_cast<size_t>(((n * c_ + c) * h_ + y) * w_ + x)];
  }
  double operator()(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return v_[static_cast<size_t>(((n * c_ + c) * h_ + y) * w_ + x)];
  }

  double* plane(int64_t n, int64_t c) {
    return v_.data() + static_cast<size_t>((n * c_ + c) * h_ * w_);
  }
  const double* plane(int64_t n, int64_t c) const {
    return v_.data() + static_cast<size_t>((n * c_ + c) * h_ * w_);
  }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_str() const;

  void fill(double value) { v_.assign(v_.size(), value); }

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double s);

 private:
  int64_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> v_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

double sum(const Tensor& t);
double mean(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
double min_value(const Tensor& t);
double max_value(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

Tensor hadamard(const Tensor& a, const Tensor& b);
/// Elementwise max of two tensors.
Tensor elementwise_max(const Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int64_t c0, int64_t c1);
/// Copies `src` (with c channels) into channels [c0, c0+src.c) of `dst`.
void insert_channels(Tensor& dst, const Tensor& src, int64_t c0);

}  // namespace lunet
