#include "hssc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hssc {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
}

namespace {

template <typename Scalar>
void check_finite(const Tensor<Scalar>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite result");
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> elementwise(BinaryOp op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "elementwise");
  Tensor<Scalar> out(a.shape());
  switch (op) {
    case BinaryOp::add: out.array() = a.array() + b.array(); break;
    case BinaryOp::sub: out.array() = a.array() - b.array(); break;
    case BinaryOp::mul: out.array() = a.array() * b.array(); break;
    case BinaryOp::div:
      if ((b.array() == Scalar(0)).any()) throw NumericError("elementwise: division by zero");
      out.array() = a.array() / b.array();
      break;
    case BinaryOp::max: out.array() = a.array().max(b.array()); break;
  }
  check_finite(out, "elementwise");
  return out;
}

template <typename Scalar>
Tensor<Scalar> elementwise(BinaryOp op, const Tensor<Scalar>& a, Scalar b) {
  Tensor<Scalar> out(a.shape());
  switch (op) {
    case BinaryOp::add: out.array() = a.array() + b; break;
    case BinaryOp::sub: out.array() = a.array() - b; break;
    case BinaryOp::mul: out.array() = a.array() * b; break;
    case BinaryOp::div:
      if (b == Scalar(0)) throw NumericError("elementwise: division by zero");
      out.array() = a.array() / b;
      break;
    case BinaryOp::max: out.array() = a.array().max(b); break;
  }
  check_finite(out, "elementwise");
  return out;
}

template <typename Scalar>
Tensor<Scalar> reduce(ReduceOp op, const Tensor<Scalar>& a, const std::vector<Index>& axes,
                      bool keep_dims) {
  if (a.empty()) throw ShapeError("reduce: empty tensor");
  const Index rank = a.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
  for (Index ax : axes) {
    if (ax < 0 || ax >= rank) {
      throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " +
                       to_string(a.shape()));
    }
    if (reduced[static_cast<std::size_t>(ax)]) {
      throw ShapeError("reduce: axis " + std::to_string(ax) + " repeated");
    }
    reduced[static_cast<std::size_t>(ax)] = true;
  }
  if (axes.empty()) return a;

  Shape out_shape;
  Shape kept_shape;
  Index count = 1;
  for (Index i = 0; i < rank; ++i) {
    const Index e = a.dim(i);
    if (reduced[static_cast<std::size_t>(i)]) {
      count *= e;
      if (keep_dims) out_shape.push_back(1);
    } else {
      out_shape.push_back(e);
      kept_shape.push_back(e);
    }
  }

  const Index out_size = shape_size(kept_shape);
  typename Tensor<Scalar>::Vector acc;
  if (op == ReduceOp::max) {
    acc = Tensor<Scalar>::Vector::Constant(out_size, -std::numeric_limits<Scalar>::infinity());
  } else {
    acc = Tensor<Scalar>::Vector::Zero(out_size);
  }

  // Walk the input in row-major order keeping a multi-index.
  std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
  for (Index flat = 0; flat < a.size(); ++flat) {
    Index o = 0;
    for (Index i = 0; i < rank; ++i) {
      if (!reduced[static_cast<std::size_t>(i)]) o = o * a.dim(i) + idx[static_cast<std::size_t>(i)];
    }
    const Scalar v = a[flat];
    if (op == ReduceOp::max) {
      acc[o] = std::max(acc[o], v);
    } else {
      acc[o] += v;
    }
    for (Index i = rank - 1; i >= 0; --i) {
      auto& k = idx[static_cast<std::size_t>(i)];
      if (++k < a.dim(i)) break;
      k = 0;
    }
  }
  if (op == ReduceOp::mean) acc /= static_cast<Scalar>(count);
  return Tensor<Scalar>(out_shape, std::move(acc));
}

template <typename Scalar>
Scalar dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  return a.data().dot(b.data());
}

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  if (a.empty()) return 0.0;
  return static_cast<double>((a.array() - b.array()).abs().maxCoeff());
}

#define HSSC_INSTANTIATE(S)                                                                 \
  template Tensor<S> elementwise(BinaryOp, const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> elementwise(BinaryOp, const Tensor<S>&, S);                            \
  template Tensor<S> reduce(ReduceOp, const Tensor<S>&, const std::vector<Index>&, bool);  \
  template S dot(const Tensor<S>&, const Tensor<S>&);                                       \
  template double max_abs_diff(const Tensor<S>&, const Tensor<S>&);

HSSC_INSTANTIATE(float)
HSSC_INSTANTIATE(double)

#undef HSSC_INSTANTIATE

}  // namespace hssc
