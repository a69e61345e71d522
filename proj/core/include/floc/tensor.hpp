// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace floc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
struct TensorImpl;

// One recorded op. `backward` reads the output gradient and accumulates
// into the gradients of `inputs`; it is dropped once replayed.
template <typename T>
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(std::span<const T>)> backward;
  bool consumed = false;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;

  // Gradient buffer, zero-filled on first use.
  std::span<T> grad_sink() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share storage and graph history,
/// like a reference; use clone() or detach() for an independent buffer.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return impl().shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl().data.size(); }

  std::span<const T> data() const { return impl().data; }
  std::span<T> mutable_data() { return impl().data; }
  T item() const;
  T operator[](std::size_t flat_index) const { return impl().data[flat_index]; }

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return impl().grad_fn == nullptr; }
  bool has_grad() const { return impl().grad.size() == impl().data.size(); }
  /// Gradient buffer; empty span when no gradient has been materialised.
  std::span<const T> grad() const;
  void zero_grad();

  /// Same values, no history, no gradient requirement.
  BasicTensor detach() const;
  BasicTensor clone() const { return detach(); }
  template <typename U>
  BasicTensor<U> cast() const;

  TensorImpl<T>& impl() const;
  const std::shared_ptr<TensorImpl<T>>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Ops recorded for one backward pass, in topological order (inputs before
/// the ops that consume them).
template <typename T>
class Tape {
 public:
  static Tape record(const BasicTensor<T>& root);

  std::size_t size() const { return order_.size(); }
  /// Op names in recorded order.
  std::vector<std::string> op_names() const;
  /// Runs every recorded op's backward once, in reverse order. Returns the
  /// number of ops touched.
  std::size_t replay();

 private:
  std::vector<std::shared_ptr<TensorImpl<T>>> order_;
};

/// Reverse-mode sweep from a scalar loss. A graph can be swept once; call
/// the forward again before a second backward.
template <typename T>
void backward(const BasicTensor<T>& loss);

template <typename T>
template <typename U>
BasicTensor<U> BasicTensor<T>::cast() const {
  std::vector<U> out(size());
  const auto src = data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
  return BasicTensor<U>::from(shape(), std::move(out), requires_grad());
}

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace floc
