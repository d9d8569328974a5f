#pragma once

// Dense multiway arrays and the handful of multilinear operations the rest of
// the library is written in terms of.
//
// Linearization convention: row-major (last index fastest). Every reshape,
// matricization, vectorization and Kronecker product in the library uses it,
// so grouped reshapes <T>_{n1,...,nk} are free (no data movement) and
//
//   <H>_{l,1}^T kron(x1, ..., xl) == H x_1 v1 x_2 v2 ... x_l vl
//
// holds with the textbook Kronecker product (first factor slowest).
//
// Modes are 0-based throughout.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tt2rnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream oss;
  oss << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << ',';
    oss << shape[i];
  }
  oss << ')';
  return oss.str();
}

class DenseTensor {
 public:
  /// Order-0 tensor holding the scalar 0.
  DenseTensor() : data_(1, 0.0) {}

  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)), data_(numel(shape_), 0.0) {
    check_dims();
  }

  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != numel(shape_)) {
      throw std::invalid_argument("DenseTensor: data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " +
                                  shape_string(shape_));
    }
  }

  static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }

  static DenseTensor scalar(double v) { return DenseTensor({}, {v}); }

  static DenseTensor from_vector(const Vector& v) {
    return DenseTensor({static_cast<std::size_t>(v.size())},
                       std::vector<double>(v.data(), v.data() + v.size()));
  }

  /// Row-major copy of a matrix as an order-2 tensor.
  static DenseTensor from_matrix(const Matrix& m) {
    DenseTensor t({static_cast<std::size_t>(m.rows()),
                   static_cast<std::size_t>(m.cols())});
    Eigen::Map<RowMatrix>(t.data_.data(), m.rows(), m.cols()) = m;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t mode) const {
    if (mode >= shape_.size()) {
      throw std::invalid_argument("DenseTensor::dim: mode out of range");
    }
    return shape_[mode];
  }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t linear) const { return data_[linear]; }
  double& operator[](std::size_t linear) { return data_[linear]; }

  std::size_t offset(std::span<const std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw std::invalid_argument("DenseTensor: index arity mismatch");
    }
    std::size_t off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= shape_[k]) {
        throw std::out_of_range("DenseTensor: index out of range");
      }
      off = off * shape_[k] + idx[k];
    }
    return off;
  }

  double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }
  double& at(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
  double at(std::initializer_list<std::size_t> idx) const {
    return at(std::span<const std::size_t>(idx.begin(), idx.size()));
  }
  double& at(std::initializer_list<std::size_t> idx) {
    return at(std::span<const std::size_t>(idx.begin(), idx.size()));
  }

  /// View of the data as a rows x cols row-major matrix (rows*cols == size()).
  Eigen::Map<const RowMatrix> as_matrix(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) {
      throw std::invalid_argument("DenseTensor::as_matrix: size mismatch");
    }
    return {data_.data(), static_cast<Eigen::Index>(rows),
            static_cast<Eigen::Index>(cols)};
  }
  Eigen::Map<RowMatrix> as_matrix(std::size_t rows, std::size_t cols) {
    if (rows * cols != data_.size()) {
      throw std::invalid_argument("DenseTensor::as_matrix: size mismatch");
    }
    return {data_.data(), static_cast<Eigen::Index>(rows),
            static_cast<Eigen::Index>(cols)};
  }

  Eigen::Map<const Vector> as_vector() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }
  Eigen::Map<Vector> as_vector() {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  double norm() const { return as_vector().norm(); }

  DenseTensor& operator+=(const DenseTensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseTensor& operator-=(const DenseTensor& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseTensor& operator*=(double c) {
    for (auto& v : data_) v *= c;
    return *this;
  }

  friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
  friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
  friend DenseTensor operator*(DenseTensor a, double c) { return a *= c; }
  friend DenseTensor operator*(double c, DenseTensor a) { return a *= c; }

  bool operator==(const DenseTensor&) const = default;

 private:
  void check_dims() const {
    for (auto d : shape_) {
      if (d == 0) throw std::invalid_argument("DenseTensor: zero-sized mode");
    }
  }
  void require_same_shape(const DenseTensor& o, const char* op) const {
    if (shape_ != o.shape_) {
      throw std::invalid_argument(std::string("DenseTensor ") + op +
                                  ": shape mismatch " + shape_string(shape_) +
                                  " vs " + shape_string(o.shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
inline double relative_error(const DenseTensor& a, const DenseTensor& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

inline DenseTensor reshape(const DenseTensor& t, Shape new_shape) {
  if (numel(new_shape) != t.size()) {
    throw std::invalid_argument("reshape: cannot reshape " +
                                shape_string(t.shape()) + " into " +
                                shape_string(new_shape));
  }
  return DenseTensor(std::move(new_shape), t.values());
}

/// <T>_{n1,...,nk}: merge consecutive groups of modes.
inline DenseTensor reshape_group(const DenseTensor& t,
                                 std::span<const std::size_t> groups) {
  std::size_t total = 0;
  for (auto g : groups) {
    if (g == 0) throw std::invalid_argument("reshape_group: empty group");
    total += g;
  }
  if (total != t.order()) {
    throw std::invalid_argument("reshape_group: groups sum to " +
                                std::to_string(total) + ", tensor order is " +
                                std::to_string(t.order()));
  }
  Shape merged;
  std::size_t mode = 0;
  for (auto g : groups) {
    std::size_t d = 1;
    for (std::size_t i = 0; i < g; ++i) d *= t.shape()[mode++];
    merged.push_back(d);
  }
  return reshape(t, std::move(merged));
}

inline DenseTensor reshape_group(const DenseTensor& t,
                                 std::initializer_list<std::size_t> groups) {
  return reshape_group(t, std::span<const std::size_t>(groups.begin(), groups.size()));
}

inline DenseTensor vectorize(const DenseTensor& t) {
  return reshape(t, {t.size()});
}

/// <T>_{k, order-k} as an Eigen matrix (copy).
inline Matrix unfold(const DenseTensor& t, std::size_t leading_modes) {
  if (leading_modes > t.order()) {
    throw std::invalid_argument("unfold: leading_modes exceeds tensor order");
  }
  std::size_t rows = 1;
  for (std::size_t i = 0; i < leading_modes; ++i) rows *= t.shape()[i];
  return t.as_matrix(rows, t.size() / rows);
}

/// Inverse of unfold: fold a matrix back into a tensor of the given shape.
inline DenseTensor fold(const Matrix& m, Shape shape) {
  if (static_cast<std::size_t>(m.size()) != numel(shape)) {
    throw std::invalid_argument("fold: matrix size does not match shape " +
                                shape_string(shape));
  }
  DenseTensor t(std::move(shape));
  t.as_matrix(m.rows(), m.cols()) = m;
  return t;
}

namespace detail {

struct ModeSplit {
  std::size_t left = 1;
  std::size_t mid = 1;
  std::size_t right = 1;
};

inline ModeSplit split_at(const Shape& s, std::size_t mode) {
  ModeSplit r;
  for (std::size_t i = 0; i < mode; ++i) r.left *= s[i];
  r.mid = s[mode];
  for (std::size_t i = mode + 1; i < s.size(); ++i) r.right *= s[i];
  return r;
}

inline void check_mode(const DenseTensor& t, std::size_t mode, const char* op) {
  if (mode >= t.order()) {
    throw std::invalid_argument(std::string(op) + ": mode " +
                                std::to_string(mode) +
                                " out of range for tensor of order " +
                                std::to_string(t.order()));
  }
}

}  // namespace detail

/// Mode-n matricization T_(n): shape (d_n, prod of the other dims). Column
/// index enumerates the remaining modes in canonical (row-major) order.
inline DenseTensor matricize(const DenseTensor& t, std::size_t mode) {
  detail::check_mode(t, mode, "matricize");
  const auto [left, mid, right] = detail::split_at(t.shape(), mode);
  DenseTensor out({mid, left * right});
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t a = 0; a < left; ++a)
    for (std::size_t i = 0; i < mid; ++i)
      for (std::size_t b = 0; b < right; ++b)
        dst[i * (left * right) + a * right + b] = src[(a * mid + i) * right + b];
  return out;
}

inline DenseTensor dematricize(const DenseTensor& m, std::size_t mode, Shape shape) {
  if (mode >= shape.size()) {
    throw std::invalid_argument("dematricize: mode out of range");
  }
  const auto [left, mid, right] = detail::split_at(shape, mode);
  if (m.order() != 2 || m.shape()[0] != mid || m.shape()[1] != left * right) {
    throw std::invalid_argument("dematricize: matrix shape " +
                                shape_string(m.shape()) +
                                " incompatible with target " +
                                shape_string(shape));
  }
  DenseTensor out(std::move(shape));
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t a = 0; a < left; ++a)
    for (std::size_t i = 0; i < mid; ++i)
      for (std::size_t b = 0; b < right; ++b)
        dst[(a * mid + i) * right + b] = src[i * (left * right) + a * right + b];
  return out;
}

/// Y = T x_n X, i.e. Y_(n) = X T_(n).
inline DenseTensor mode_matrix_product(const DenseTensor& t, const Matrix& x,
                                       std::size_t mode) {
  detail::check_mode(t, mode, "mode_matrix_product");
  const auto [left, mid, right] = detail::split_at(t.shape(), mode);
  if (static_cast<std::size_t>(x.cols()) != mid) {
    throw std::invalid_argument("mode_matrix_product: matrix has " +
                                std::to_string(x.cols()) +
                                " columns, mode has dimension " +
                                std::to_string(mid));
  }
  Shape out_shape = t.shape();
  out_shape[mode] = static_cast<std::size_t>(x.rows());
  DenseTensor out(out_shape);
  const std::size_t rows = out_shape[mode];
  for (std::size_t a = 0; a < left; ++a) {
    Eigen::Map<const RowMatrix> slab(t.data().data() + a * mid * right,
                                     static_cast<Eigen::Index>(mid),
                                     static_cast<Eigen::Index>(right));
    Eigen::Map<RowMatrix> dst(out.data().data() + a * rows * right,
                              static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(right));
    dst.noalias() = x * slab;
  }
  return out;
}

inline DenseTensor mode_matrix_product(const DenseTensor& t, const DenseTensor& x,
                                       std::size_t mode) {
  if (x.order() != 2) {
    throw std::invalid_argument("mode_matrix_product: expected an order-2 tensor");
  }
  return mode_matrix_product(t, Matrix(x.as_matrix(x.shape()[0], x.shape()[1])),
                             mode);
}

/// T •_n v = T x_n v^T with the singleton mode removed.
inline DenseTensor mode_vector_product(const DenseTensor& t, const Vector& v,
                                       std::size_t mode) {
  detail::check_mode(t, mode, "mode_vector_product");
  if (static_cast<std::size_t>(v.size()) != t.shape()[mode]) {
    throw std::invalid_argument("mode_vector_product: vector length " +
                                std::to_string(v.size()) +
                                " does not match mode dimension " +
                                std::to_string(t.shape()[mode]));
  }
  DenseTensor y = mode_matrix_product(t, Matrix(v.transpose()), mode);
  Shape squeezed = t.shape();
  squeezed.erase(squeezed.begin() + static_cast<std::ptrdiff_t>(mode));
  return reshape(y, std::move(squeezed));
}

/// Kronecker product of vectors, first factor slowest.
inline Vector kron(std::span<const Vector> vs) {
  if (vs.empty()) throw std::invalid_argument("kron: empty list");
  Vector out = vs[0];
  for (std::size_t k = 1; k < vs.size(); ++k) {
    const auto& v = vs[k];
    Vector next(out.size() * v.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      next.segment(i * v.size(), v.size()) = out[i] * v;
    }
    out = std::move(next);
  }
  return out;
}

inline Vector kron(std::initializer_list<Vector> vs) {
  return kron(std::span<const Vector>(vs.begin(), vs.size()));
}

/// Canonical basis vector e_i of R^d (0-based i).
inline Vector basis_vector(std::size_t d, std::size_t i) {
  if (i >= d) throw std::invalid_argument("basis_vector: index out of range");
  Vector e = Vector::Zero(static_cast<Eigen::Index>(d));
  e[static_cast<Eigen::Index>(i)] = 1.0;
  return e;
}

/// Shape (d, ..., d, p) with l input modes.
inline Shape hankel_shape(std::size_t d, std::size_t p, std::size_t l) {
  Shape s(l, d);
  s.push_back(p);
  return s;
}

inline std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace tt2rnn
