#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "cephmark/common.hpp"

namespace cephmark::ag {

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Storage {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on first use
  bool requires_grad = false;
  const void* origin = nullptr;  // tape that produced this tensor; null for leaves
};

}  // namespace detail

// Dense row-major tensor with an optional gradient buffer. Copying a Tensor
// copies only the handle; the buffers are shared.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return build(std::move(shape), requires_grad, T{});
  }

  static Tensor full(std::vector<int> shape, T value, bool requires_grad = false) {
    return build(std::move(shape), requires_grad, value);
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    check_shape(shape);
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size()))
      throw ShapeError("Tensor::from_data: shape " + shape_str(shape) + " needs " +
                       std::to_string(n) + " values, got " + std::to_string(data.size()));
    Tensor t;
    t.s_ = std::make_shared<detail::Storage<T>>();
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(data);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }

  const std::vector<int>& shape() const { return s_->shape; }
  int dim(int i) const { return s_->shape.at(i); }
  int ndim() const { return static_cast<int>(s_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(s_->data.size()); }

  std::vector<T>& values() { return s_->data; }
  const std::vector<T>& values() const { return s_->data; }

  T item() const {
    if (numel() != 1) throw ShapeError("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
    return s_->data[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool rg) { s_->requires_grad = rg; }

  bool has_grad() const { return !s_->grad.empty(); }

  // zero-initialized on first access
  std::vector<T>& grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T{});
    return s_->grad;
  }
  const std::vector<T>& grad() const { return const_cast<Tensor*>(this)->grad(); }

  void zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T{});
  }

  bool all_finite() const {
    for (T v : s_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  detail::Storage<T>* storage() const { return s_.get(); }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  static void check_shape(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("Tensor: empty shape");
    for (int d : shape)
      if (d <= 0) throw ShapeError("Tensor: non-positive dimension in " + shape_str(shape));
  }

  static Tensor build(std::vector<int> shape, bool requires_grad, T fill) {
    check_shape(shape);
    Tensor t;
    t.s_ = std::make_shared<detail::Storage<T>>();
    t.s_->data.assign(static_cast<size_t>(shape_numel(shape)), fill);
    t.s_->shape = std::move(shape);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<detail::Storage<T>> s_;
};

// Eagerly recorded computation record. Operations append their adjoint
// closures in execution order, which is a valid topological order, so a
// single reverse sweep propagates gradients. Gradients accumulate additively
// into whatever is already in each tensor's grad buffer.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> adjoint) { steps_.push_back(std::move(adjoint)); }

  size_t size() const { return steps_.size(); }

  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (loss.storage()->origin != this)
      throw std::invalid_argument(
          "backward: loss was not produced through this computation record (detached graph)");
    if (replayed_)
      throw std::logic_error("backward: record already replayed; build a fresh record per pass");
    replayed_ = true;
    loss.grad()[0] += T{1};
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
  bool replayed_ = false;
};

namespace detail {

// Marks t as an output of the given tape (when recording) and decides whether
// an adjoint closure is needed at all.
template <typename T>
inline bool wants_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const Tensor<T>* in : inputs)
    if (in->requires_grad()) return true;
  return false;
}

template <typename T>
inline void mark_output(Tape<T>* tape, Tensor<T>& out, bool requires_grad) {
  if (tape) out.storage()->origin = tape;
  out.set_requires_grad(requires_grad);
}

}  // namespace detail

}  // namespace cephmark::ag
