#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "s2i/common.hpp"

namespace s2i {

namespace detail {

template <class T>
struct TensorImpl;

// One recorded operation. Owned by its output tensor; inputs are held alive
// through shared pointers so a graph survives as long as any result does.
template <class T>
struct Node {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  TensorImpl<T>* output = nullptr;
  std::function<void()> backward;
};

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same element count as data
  bool requires_grad = false;
  std::shared_ptr<Node<T>> producer;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

// Thread-local gradient-recording switch (see NoGradGuard).
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording for its scope; used for evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Shared handle to an n-dimensional array with optional gradient tracking.
// Values are written once by their producing op and treated as immutable
// afterwards; only leaf tensors (parameters) are updated in place, between
// graph lifetimes.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return Tensor(std::move(shape), std::vector<T>{}, true);
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    return Tensor(std::move(shape), std::move(values), false);
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t extent(int64_t axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  const std::vector<T>& data() const { return impl_->data; }
  std::vector<T>& mutable_data() { return impl_->data; }
  const std::vector<T>& grad() const { return impl_->grad; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool is_leaf() const { return impl_ && impl_->producer == nullptr; }

  void zero_grad() {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  T item() const {
    check_shape(numel() == 1, "item() requires a single-element tensor, got " +
                                  shape_str(shape()));
    return impl_->data[0];
  }

  T at(std::initializer_list<int64_t> idx) const {
    return impl_->data[static_cast<size_t>(flat_index(idx))];
  }

  int64_t flat_index(std::initializer_list<int64_t> idx) const {
    check_shape(idx.size() == impl_->shape.size(), "index rank mismatch");
    int64_t flat = 0;
    size_t axis = 0;
    for (int64_t i : idx) {
      flat = flat * impl_->shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  bool has_nonfinite() const {
    for (T v : impl_->data)
      if (!std::isfinite(static_cast<double>(v))) return true;
    return false;
  }

  std::shared_ptr<detail::TensorImpl<T>> impl() const { return impl_; }

  // Reverse-mode backward from a scalar. Interior gradients are recomputed
  // from scratch on every call while leaf gradients accumulate, so two calls
  // double the leaf grads.
  void backward() const {
    check_shape(numel() == 1,
                "backward() requires a scalar, got " + shape_str(shape()));
    if (!impl_->producer && !impl_->requires_grad) return;

    std::vector<detail::Node<T>*> order;
    topo_sort(order);

    for (detail::Node<T>* node : order) {
      detail::TensorImpl<T>* out = node->output;
      out->grad.assign(out->data.size(), T(0));
    }
    impl_->ensure_grad();
    impl_->grad[0] += T(1);  // node outputs were just zeroed; leaves accumulate

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      (*it)->backward();
    }
  }

  // Internal: used by op implementations.
  static Tensor make(Shape shape, std::vector<T> data) {
    return Tensor(std::move(shape), std::move(data), false);
  }

  static void attach(Tensor& out, std::vector<Tensor> inputs,
                     std::function<void()> backward_fn) {
    if (!detail::grad_enabled()) return;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return;
    auto node = std::make_shared<detail::Node<T>>();
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.impl_);
    node->output = out.impl_.get();
    node->backward = std::move(backward_fn);
    out.impl_->producer = std::move(node);
    out.impl_->requires_grad = true;
  }

 private:
  Tensor(Shape shape, std::vector<T> data, bool zero_fill) {
    for (int64_t d : shape)
      check_shape(d > 0, "extents must be positive, got " + shape_str(shape));
    int64_t n = s2i::numel(shape);
    if (zero_fill) {
      data.assign(static_cast<size_t>(n), T(0));
    } else {
      check_shape(static_cast<int64_t>(data.size()) == n,
                  "element count " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
    }
    impl_ = std::make_shared<detail::TensorImpl<T>>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  void topo_sort(std::vector<detail::Node<T>*>& order) const {
    std::unordered_set<detail::Node<T>*> visited;
    // Iterative post-order DFS over producer nodes.
    struct Frame {
      detail::Node<T>* node;
      size_t next_input;
    };
    std::vector<Frame> stack;
    if (impl_->producer) {
      stack.push_back({impl_->producer.get(), 0});
      visited.insert(impl_->producer.get());
    }
    while (!stack.empty()) {
      Frame& top = stack.back();
      if (top.next_input < top.node->inputs.size()) {
        auto& in = top.node->inputs[top.next_input++];
        detail::Node<T>* child = in->producer.get();
        if (child && !visited.count(child)) {
          visited.insert(child);
          stack.push_back({child, 0});
        }
      } else {
        order.push_back(top.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

namespace detail {

// Accumulate src into the grad buffer of impl if it participates in the graph.
template <class T>
void accumulate_grad(const std::shared_ptr<TensorImpl<T>>& impl,
                     const std::vector<T>& src) {
  if (!impl->requires_grad) return;
  impl->ensure_grad();
  auto& dst = impl->grad;
  for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <class T>
bool wants_grad(const std::shared_ptr<TensorImpl<T>>& impl) {
  return impl->requires_grad;
}

}  // namespace detail

}  // namespace s2i
