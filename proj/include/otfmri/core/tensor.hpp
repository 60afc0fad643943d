#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "otfmri/core/error.hpp"

namespace otfmri {

// All tensors are rank 3: (batch, channels, length). Scalars are (1, 1, 1)
// and dense vectors are (batch, features, 1).
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t l = 1;

  constexpr std::size_t size() const { return n * c * l; }
  constexpr std::size_t operator[](int axis) const { return axis == 0 ? n : axis == 1 ? c : l; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << ", " << c << ", " << l << ")";
    return os.str();
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw ConfigError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                        shape_.str());
  }

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator()(std::size_t b, std::size_t ch, std::size_t i) { return data_[(b * shape_.c + ch) * shape_.l + i]; }
  const T& operator()(std::size_t b, std::size_t ch, std::size_t i) const {
    return data_[(b * shape_.c + ch) * shape_.l + i];
  }

  T item() const {
    if (data_.size() != 1) throw ConfigError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  Tensor reshaped(Shape s) const {
    if (s.size() != shape_.size()) throw ConfigError("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(s, data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_{0, 0, 0};
  std::vector<T> data_;
};

}  // namespace otfmri
