#pragma once

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vidctl/core/alloc.hpp"

namespace vidctl::core {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + "]";
}

// Dense row-major tensor. Copies are shallow (shared buffer); use clone() for
// a deep copy. All kernels assume contiguous storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), numel_(shape_numel(shape_)) {
    if (numel_ < 0) throw std::invalid_argument("Tensor: negative shape");
    const size_t bytes = sizeof(T) * static_cast<size_t>(numel_);
    data_ = std::shared_ptr<T[]>(static_cast<T*>(detail::pool_alloc(bytes)),
                                 [bytes](T* p) { detail::pool_free(p, bytes); });
  }

  static Tensor zeros(Shape shape) {
    Tensor t(std::move(shape));
    std::memset(t.data(), 0, sizeof(T) * static_cast<size_t>(t.numel()));
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = value;
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from_vector(Shape shape, const std::vector<T>& v) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(v.size()) != t.numel())
      throw std::invalid_argument("Tensor::from_vector: size mismatch");
    std::memcpy(t.data(), v.data(), sizeof(T) * v.size());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return numel_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int i) const {
    if (i < 0) i += static_cast<int>(shape_.size());
    return shape_.at(static_cast<size_t>(i));
  }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  Tensor clone() const {
    Tensor t(shape_);
    std::memcpy(t.data(), data(), sizeof(T) * static_cast<size_t>(numel_));
    return t;
  }

  // Shares the buffer under a new shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel_)
      throw std::invalid_argument("Tensor::reshaped: numel mismatch " + shape_str(shape_) +
                                  " -> " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (int64_t i = 0; i < numel_; ++i) t.data()[i] = static_cast<U>(data_[i]);
    return t;
  }

  void fill(T value) {
    for (int64_t i = 0; i < numel_; ++i) data_[i] = value;
  }

  // Convenience accessor for tests; index count must equal ndim.
  template <typename... Ix>
  T& at(Ix... ix) {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    if (sizeof...(ix) != shape_.size()) throw std::invalid_argument("Tensor::at: rank mismatch");
    int64_t off = 0;
    for (size_t i = 0; i < shape_.size(); ++i) off = off * shape_[i] + idx[i];
    return data_[off];
  }
  template <typename... Ix>
  T at(Ix... ix) const {
    return const_cast<Tensor*>(this)->at(ix...);
  }

 private:
  Shape shape_;
  int64_t numel_ = 0;
  std::shared_ptr<T[]> data_;
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace vidctl::core
