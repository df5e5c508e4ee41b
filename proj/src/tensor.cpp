#include "lunet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace lunet {

std::string Tensor::shape_str() const {
  return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," +
         std::to_string(h_) + "," + std::to_string(w_) + "]";
}

Tensor& Tensor::operator+=(const Tensor& o) {
  check_same_shape(*this, o, "Tensor::operator+=");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  check_same_shape(*this, o, "Tensor::operator-=");
  for (size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

double mean(const Tensor& t) {
  if (t.size() == 0) return 0.0;
  return sum(t) / static_cast<double>(t.size());
}

double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double min_value(const Tensor& t) {
  double m = t.size() ? t[0] : 0.0;
  for (int64_t i = 1; i < t.size(); ++i) m = std::min(m, t[i]);
  return m;
}

double max_value(const Tensor& t) {
  double m = t.size() ? t[0] : 0.0;
  for (int64_t i = 1; i < t.size(); ++i) m = std::max(m, t[i]);
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  Tensor out = Tensor::like(a);
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor elementwise_max(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "elementwise_max");
  Tensor out = Tensor::like(a);
  for (int64_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: incompatible shapes " + a.shape_str() +
                     " vs " + b.shape_str());
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  const int64_t hw = a.h() * a.w();
  for (int64_t n = 0; n < a.n(); ++n) {
    for (int64_t c = 0; c < a.c(); ++c)
      std::copy(a.plane(n, c), a.plane(n, c) + hw, out.plane(n, c));
    for (int64_t c = 0; c < b.c(); ++c)
      std::copy(b.plane(n, c), b.plane(n, c) + hw, out.plane(n, a.c() + c));
  }
  return out;
}

Tensor slice_channels(const Tensor& x, int64_t c0, int64_t c1) {
  if (c0 < 0 || c1 > x.c() || c0 >= c1)
    throw ShapeError("slice_channels: bad range");
  Tensor out(x.n(), c1 - c0, x.h(), x.w());
  const int64_t hw = x.h() * x.w();
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t c = c0; c < c1; ++c)
      std::copy(x.plane(n, c), x.plane(n, c) + hw, out.plane(n, c - c0));
  return out;
}

void insert_channels(Tensor& dst, const Tensor& src, int64_t c0) {
  if (src.n() != dst.n() || src.h() != dst.h() || src.w() != dst.w() ||
      c0 + src.c() > dst.c())
    throw ShapeError("insert_channels: incompatible shapes");
  const int64_t hw = src.h() * src.w();
  for (int64_t n = 0; n < src.n(); ++n)
    for (int64_t c = 0; c < src.c(); ++c)
      std::copy(src.plane(n, c), src.plane(n, c) + hw, dst.plane(n, c0 + c));
}

}  // namespace lunet
