#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdsclip/core/rng.hpp"

namespace sdsclip {

template <typename S>
class TapeT;

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Dense immutable tensor. The payload is shared, never mutated after
// construction; copies are cheap and safe to hand across threads. A tensor
// may carry a handle into the tape that produced it (node >= 0).
template <typename S>
class TensorT {
 public:
  TensorT() = default;

  TensorT(Shape shape, std::vector<S> data) : shape_(std::move(shape)) {
    validate_shape(shape_);
    if (shape_numel(shape_) != data.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match data length " +
                                  std::to_string(data.size()));
    data_ = std::make_shared<const std::vector<S>>(std::move(data));
  }

  // Shares an existing payload (used by reshape, which must not copy).
  TensorT(Shape shape, std::shared_ptr<const std::vector<S>> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (!data_ || shape_numel(shape_) != data_->size())
      throw std::invalid_argument("tensor: shared payload does not match shape " + shape_str(shape_));
  }

  std::shared_ptr<const std::vector<S>> payload() const { return data_; }

  static TensorT zeros(Shape shape) {
    validate_shape(shape);
    std::vector<S> d(shape_numel(shape), S(0));
    return TensorT(std::move(shape), std::move(d));
  }

  static TensorT full(Shape shape, S value) {
    validate_shape(shape);
    std::vector<S> d(shape_numel(shape), value);
    return TensorT(std::move(shape), std::move(d));
  }

  static TensorT ones(Shape shape) { return full(std::move(shape), S(1)); }

  static TensorT scalar(S value) { return TensorT({1}, {value}); }

  static TensorT randn(Shape shape, Rng& rng, double stddev = 1.0) {
    validate_shape(shape);
    std::vector<S> d(shape_numel(shape));
    for (auto& v : d) v = static_cast<S>(rng.normal() * stddev);
    return TensorT(std::move(shape), std::move(d));
  }

  bool empty() const { return !data_; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  const std::vector<S>& data() const {
    if (!data_) throw std::runtime_error("tensor: access to empty tensor");
    return *data_;
  }

  S operator[](std::size_t flat) const { return data()[flat]; }

  S at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
      throw std::invalid_argument("tensor: index rank " + std::to_string(idx.size()) + " vs shape " +
                                  shape_str(shape_));
    std::size_t flat = 0;
    std::size_t i = 0;
    for (std::size_t v : idx) {
      if (v >= shape_[i]) throw std::out_of_range("tensor: index out of range");
      flat = flat * shape_[i] + v;
      ++i;
    }
    return data()[flat];
  }

  S scalar_value() const {
    if (numel() != 1) throw std::invalid_argument("tensor: scalar_value on shape " + shape_str(shape_));
    return data()[0];
  }

  bool all_finite() const {
    if (!data_) return true;
    for (S v : *data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  // Tape linkage. node() < 0 means the tensor is a plain constant.
  TapeT<S>* tape() const { return tape_; }
  int node() const { return node_; }
  TensorT with_node(TapeT<S>* tape, int node) const {
    TensorT t = *this;
    t.tape_ = tape;
    t.node_ = node;
    return t;
  }
  TensorT detached() const {
    TensorT t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
  }

  // Structural equality of shape and payload bits.
  bool same_values(const TensorT& o) const {
    if (shape_ != o.shape_) return false;
    if (!data_ || !o.data_) return data_ == o.data_;
    return *data_ == *o.data_;
  }

 private:
  static void validate_shape(const Shape& s) {
    if (s.empty()) throw std::invalid_argument("tensor: rank-0 shapes are not supported, use [1]");
    for (std::size_t d : s) {
      if (d == 0) throw std::invalid_argument("tensor: zero dimension in shape " + shape_str(s));
    }
  }

  Shape shape_;
  std::shared_ptr<const std::vector<S>> data_;
  TapeT<S>* tape_ = nullptr;
  int node_ = -1;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

}  // namespace sdsclip
