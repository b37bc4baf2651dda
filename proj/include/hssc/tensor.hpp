#pragma once

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hssc/errors.hpp"
#include "hssc/rng.hpp"

namespace hssc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense n-dimensional array, row-major with the last axis fastest.
//
// An empty shape denotes a scalar holding one element. A default-constructed
// tensor holds no data at all and reports empty().
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents();
    data_ = Vector::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
    check_extents();
    data_ = Vector::Constant(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    check_extents();
    if (static_cast<Index>(values.size()) != shape_size(shape_)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       to_string(shape_));
    }
    data_.resize(shape_size(shape_));
    Index i = 0;
    for (Scalar v : values) data_[i++] = v;
  }

  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " +
                       to_string(shape_));
    }
  }

  static Tensor uniform(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(Shape shape, CounterRng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(stddev * rng.normal());
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index c, Index h, Index w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  Scalar operator()(Index c, Index h, Index w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  Scalar& operator()(Index c, Index d, Index h, Index w) {
    return data_[((c * shape_[1] + d) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar operator()(Index c, Index d, Index h, Index w) const {
    return data_[((c * shape_[1] + d) * shape_[2] + h) * shape_[3] + w];
  }

  // View as [shape[0], size / shape[0]]: one row per leading-axis slice.
  MatrixMap matrix() { return MatrixMap(data_.data(), lead(), size() / lead()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), lead(), size() / lead()); }

  // Metadata-only change; the element order is untouched.
  void reshape(Shape shape) {
    if (shape_size(shape) != size()) {
      throw ShapeError("reshape: " + to_string(shape_) + " -> " + to_string(shape));
    }
    shape_ = std::move(shape);
  }
  Tensor reshaped(Shape shape) const {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  bool all_finite() const { return data_.allFinite(); }

  void set_zero() { data_.setZero(); }

 private:
  void check_extents() const {
    for (Index e : shape_) {
      if (e <= 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape_));
    }
  }
  Index lead() const { return shape_.empty() ? 1 : shape_[0]; }

  Shape shape_;
  Vector data_;
};

enum class BinaryOp { add, sub, mul, div, max };
enum class ReduceOp { sum, mean, max };

// Pointwise a (op) b. Shapes must match exactly; there is no broadcasting.
template <typename Scalar>
Tensor<Scalar> elementwise(BinaryOp op, const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> elementwise(BinaryOp op, const Tensor<Scalar>& a, Scalar b);

// Reduces over `axes` (each at most once). With keep_dims the reduced axes
// stay with extent 1; otherwise they are removed. No axes returns a copy.
template <typename Scalar>
Tensor<Scalar> reduce(ReduceOp op, const Tensor<Scalar>& a, const std::vector<Index>& axes,
                      bool keep_dims = false);

template <typename Scalar>
Scalar dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(BinaryOp::add, a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(BinaryOp::sub, a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(BinaryOp::mul, a, b);
}

void require_same_shape(const Shape& a, const Shape& b, const char* what);

// A trainable tensor with its gradient accumulator.
template <typename Scalar>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor<Scalar> init)
      : id(std::move(name)), value(std::move(init)), grad(value.shape()) {}

  void zero_grad() { grad.set_zero(); }

  std::string id;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
};

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
Index parameter_count(const ParamList<Scalar>& params) {
  Index n = 0;
  for (auto* p : params) n += p->value.size();
  return n;
}

}  // namespace hssc
