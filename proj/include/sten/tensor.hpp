#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace sten {

using Shape = std::vector<int64_t>;

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape " + shape_to_string(shape) +
                                  " has a non-positive dimension");
    }
    n *= d;
  }
  return n;
}

// Dense N-dimensional array of real values, row-major, value semantics.
// The scalar type is the dtype: TensorT<float> for compute, TensorT<double>
// inside the finite-difference gradient checker.
template <class T>
class TensorT {
  static_assert(std::is_floating_point_v<T>);

 public:
  TensorT() = default;

  explicit TensorT(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  TensorT(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    const int64_t want = shape_numel(shape_);
    if (want != static_cast<int64_t>(data_.size())) {
      throw std::invalid_argument(
          "tensor data length " + std::to_string(data_.size()) +
          " does not match shape " + shape_to_string(shape_) + " (expected " +
          std::to_string(want) + " elements)");
    }
  }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Row-major offset: element (i, j) of an [R, C] tensor lives at i*C + j.
  int64_t offset(std::initializer_list<int64_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw std::invalid_argument("index rank " + std::to_string(idx.size()) +
                                  " does not match tensor rank " +
                                  std::to_string(shape_.size()));
    }
    int64_t off = 0;
    size_t axis = 0;
    for (int64_t i : idx) {
      if (i < 0 || i >= shape_[axis]) {
        throw std::out_of_range("index " + std::to_string(i) + " out of range for axis " +
                                std::to_string(axis) + " with extent " +
                                std::to_string(shape_[axis]));
      }
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
  T at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(offset(idx))];
  }

  // New value with the same data and a different shape of equal element count.
  TensorT reshaped(Shape new_shape) const {
    const int64_t want = shape_numel(new_shape);
    if (want != size()) {
      throw std::invalid_argument("cannot reshape " + shape_to_string(shape_) + " (" +
                                  std::to_string(size()) + " elements) to " +
                                  shape_to_string(new_shape) + " (" + std::to_string(want) +
                                  " elements)");
    }
    return TensorT(std::move(new_shape), data_);
  }

  template <class U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Standard matrix product of two rank-2 tensors; accumulation in the operand
// precision with a fixed summation order.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul expects rank-2 tensors, got " +
                                shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()));
  }
  const int64_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
  if (inner != b.dim(0)) {
    throw std::invalid_argument("matmul inner dimensions mismatch: " +
                                shape_to_string(a.shape()) + " x " +
                                shape_to_string(b.shape()));
  }
  TensorT<T> y({rows, cols});
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t k = 0; k < inner; ++k) {
      const T aik = pa[i * inner + k];
      const T* brow = pb + k * cols;
      T* yrow = py + i * cols;
      for (int64_t j = 0; j < cols; ++j) yrow[j] += aik * brow[j];
    }
  }
  return y;
}

template <class T>
TensorT<T> transposed(const TensorT<T>& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose expects a rank-2 tensor, got " +
                                shape_to_string(a.shape()));
  }
  const int64_t rows = a.dim(0), cols = a.dim(1);
  TensorT<T> y({cols, rows});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) y[j * rows + i] = a[i * cols + j];
  return y;
}

}  // namespace sten
