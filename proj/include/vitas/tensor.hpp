#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vitas {

using Shape = std::vector<std::int64_t>;

/// Raised by every op whose operands violate its shape contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Thread-local switch for tape recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Multiply-add counters incremented by the product ops (elementwise mul and
/// matmul). Thread-local, so concurrent passes do not interfere.
struct OpCounters {
  std::uint64_t elementwise_mul = 0;
  std::uint64_t matmul_mac = 0;
  std::uint64_t total() const { return elementwise_mul + matmul_mac; }
};

OpCounters& op_counters();

class OpCounterScope {
 public:
  OpCounterScope();
  ~OpCounterScope();
  OpCounterScope(const OpCounterScope&) = delete;
  OpCounterScope& operator=(const OpCounterScope&) = delete;
  OpCounters counted() const;

 private:
  OpCounters saved_;
};

/// Dense row-major tensor participating in a reverse-mode tape.
///
/// Tensors are cheap handles onto shared immutable nodes. The only mutable
/// access is `mutable_values()` on leaves, used by parameter updates and
/// loaders; op results must not be modified in place.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const T> values() const;
  std::span<T> mutable_values();
  T item() const;
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  /// Accumulated gradient; all zeros when nothing flowed here.
  std::vector<T> grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and runs the tape. Requires numel() == 1.
  void backward() const;

  Tensor detach() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node<T>> node_;
  void check_defined() const;
};

namespace detail {

/// Builds an op result. The backward closure is attached only when the tape
/// is recording and at least one input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward);

}  // namespace detail

int normalize_axis(int axis, int rank);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vitas
