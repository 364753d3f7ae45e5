#include "vitas/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace vitas {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

namespace {
thread_local bool t_grad_enabled = true;
thread_local OpCounters t_counters;
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

OpCounters& op_counters() { return t_counters; }

OpCounterScope::OpCounterScope() : saved_(t_counters) { t_counters = {}; }
OpCounterScope::~OpCounterScope() {
  t_counters.elementwise_mul += saved_.elementwise_mul;
  t_counters.matmul_mac += saved_.matmul_mac;
}
OpCounters OpCounterScope::counted() const { return t_counters; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) {
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_string(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_string(shape));
  }
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->value = std::move(values);
  node_->shape = std::move(shape);
}

template <typename T>
void Tensor<T>::check_defined() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  check_defined();
  return node_->shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  return shape()[static_cast<std::size_t>(normalize_axis(axis, rank()))];
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  check_defined();
  return static_cast<std::int64_t>(node_->value.size());
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  check_defined();
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  check_defined();
  if (!node_->inputs.empty()) throw std::logic_error("mutable_values on a non-leaf tensor");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch");
  std::int64_t flat = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v < 0 || v >= s[i]) throw ShapeError("index out of range on axis " + std::to_string(i));
    flat = flat * s[i] + v;
    ++i;
  }
  return node_->value[static_cast<std::size_t>(flat)];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  check_defined();
  if (!node_->inputs.empty()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  check_defined();
  if (node_->grad.empty()) return std::vector<T>(node_->value.size(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  check_defined();
  node_->grad.clear();
}

template <typename T>
void Tensor<T>::backward() const {
  check_defined();
  if (numel() != 1) throw ShapeError("backward() needs a scalar, got " + shape_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior grads are scratch; only leaves keep accumulated gradients.
  for (auto* n : order) {
    if (!n->inputs.empty()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  check_defined();
  return Tensor(node_->shape, node_->value);
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template Tensor<float> make_result(Shape, std::vector<float>, std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace vitas
