#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace probe {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ArtifactError : Error {
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Dense row-major tensor of 64-bit reals.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape sh, double fill = 0.0)
      : shape(std::move(sh)), data(shape_numel(shape), fill) {}
  Tensor(Shape sh, std::vector<double> d) : shape(std::move(sh)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor vec(std::vector<double> d) {
    Shape sh{d.size()};
    return Tensor(std::move(sh), std::move(d));
  }

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::size_t rows() const { return shape.size() >= 1 ? shape[0] : 0; }
  std::size_t cols() const { return shape.size() >= 2 ? shape[1] : 1; }
  double& at2(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at2(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void fill(double v) {
    for (auto& x : data) x = v;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

inline void ensure_finite(const Tensor& t, const std::string& context) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.data[i]))
      throw NumericError("non-finite value at index " + std::to_string(i) + " in " + context);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& x : out.data) x *= s;
  return out;
}

inline void axpy(Tensor& y, double a, const Tensor& x) {
  require_same_shape(y, x, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += a * x.data[i];
}

// Left-to-right summation; reductions stay reproducible by contract.
inline double sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data) s += x;
  return s;
}

inline double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double mean_sq(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_sq: empty tensor");
  return dot(a, a) / static_cast<double>(a.size());
}

inline double cosine(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine");
  double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// 2-D matmul; (m x k) * (k x n) -> (m x n). A rank-1 rhs is treated as a column.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2) throw ShapeError("matmul: lhs must be rank-2, got " + shape_str(a.shape));
  const std::size_t m = a.shape[0], k = a.shape[1];
  const bool vec_rhs = b.shape.size() == 1;
  const std::size_t bk = vec_rhs ? b.shape[0] : b.shape[0];
  const std::size_t n = vec_rhs ? 1 : b.shape[1];
  if (b.shape.size() > 2 || bk != k)
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  Tensor out(vec_rhs ? Shape{m} : Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.data[i * k + p] * b.data[p * n + j];
      out.data[i * n + j] = s;
    }
  return out;
}

// y = A^T x for rank-2 A and vector x.
inline Tensor matvec_t(const Tensor& a, const Tensor& x) {
  if (a.shape.size() != 2 || x.shape.size() != 1 || x.shape[0] != a.shape[0])
    throw ShapeError("matvec_t: incompatible shapes " + shape_str(a.shape) + " vs " +
                     shape_str(x.shape));
  const std::size_t m = a.shape[0], k = a.shape[1];
  Tensor out(Shape{k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) out.data[p] += a.data[i * k + p] * x.data[i];
  return out;
}

// grad += x y^T (outer product accumulate into a rank-2 tensor).
inline void outer_acc(Tensor& grad, const Tensor& x, const Tensor& y) {
  if (grad.shape.size() != 2 || grad.shape[0] != x.size() || grad.shape[1] != y.size())
    throw ShapeError("outer_acc: incompatible shapes");
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) grad.data[i * y.size() + j] += x.data[i] * y.data[j];
}

}  // namespace probe
