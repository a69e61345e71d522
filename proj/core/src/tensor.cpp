// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace floc {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  if (numel(shape) != data.size())
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(data.size()) + " values");
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), T(0));
  return BasicTensor(std::move(impl));
}

template <typename T>
TensorImpl<T>& BasicTensor<T>::impl() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = impl().shape;
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl().data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool flag) {
  auto& t = impl();
  if (!is_leaf()) throw AutogradError("requires_grad can only be changed on leaf tensors");
  t.requires_grad = flag;
  if (flag && t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), T(0));
  if (!flag) t.grad.clear();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  const auto& t = impl();
  if (t.grad.size() != t.data.size()) return {};
  return t.grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  auto& t = impl();
  if (t.requires_grad)
    t.grad.assign(t.data.size(), T(0));
  else
    t.grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(shape(), impl().data, false);
}

template <typename T>
Tape<T> Tape<T>::record(const BasicTensor<T>& root) {
  Tape tape;
  std::unordered_set<const TensorImpl<T>*> seen;
  // Iterative post-order DFS; graphs from deep models overflow recursion.
  struct Frame {
    std::shared_ptr<TensorImpl<T>> t;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root.handle(), 0});
  seen.insert(root.handle().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    const auto& fn = top.t->grad_fn;
    if (fn && top.next < fn->inputs.size()) {
      auto child = fn->inputs[top.next++];
      if (child->grad_fn && !seen.count(child.get())) {
        seen.insert(child.get());
        stack.push_back({std::move(child), 0});
      }
      continue;
    }
    if (fn) tape.order_.push_back(top.t);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
std::vector<std::string> Tape<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& t : order_) names.push_back(t->grad_fn->op);
  return names;
}

template <typename T>
std::size_t Tape<T>::replay() {
  std::size_t touched = 0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& t = **it;
    auto& node = *t.grad_fn;
    if (node.consumed) throw AutogradError("op '" + node.op + "' was already back-propagated; run the forward again");
    if (t.grad.size() == t.data.size()) node.backward(t.grad);
    node.consumed = true;
    node.backward = nullptr;
    // Interior gradients are not needed after their op has been replayed.
    t.grad.clear();
    t.grad.shrink_to_fit();
    ++touched;
  }
  return touched;
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined()) throw AutogradError("backward on undefined tensor");
  if (loss.size() != 1) throw AutogradError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  auto& impl = loss.impl();
  if (!impl.grad_fn) throw AutogradError("backward on a tensor that was not produced through the tape");
  if (impl.grad_fn->consumed) throw AutogradError("backward called twice on the same graph");
  auto tape = Tape<T>::record(loss);
  impl.grad.assign(1, T(1));
  tape.replay();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace floc
