#include "terraexpr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace terraexpr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

template <typename T>
BasicTensor<T> BasicTensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->sequence = detail::next_sequence();
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_string(s));
  return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  shape();
  return node_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!is_leaf()) throw std::logic_error("in-place write to non-leaf tensor " + op());
  return node_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  shape();
  return node_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool value) {
  if (!is_leaf()) throw std::logic_error("requires_grad can only be changed on leaves");
  node_->requires_grad = value;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  shape();
  return !node_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  shape();
  return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  shape();
  return node_->ensure_grad();
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  shape();
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
const std::string& BasicTensor<T>::op() const {
  shape();
  return node_->op;
}

template <typename T>
std::uint64_t BasicTensor<T>::sequence() const {
  shape();
  return node_->sequence;
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
  shape();
  return node_->parents.empty() && !node_->backward;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from_data(shape(), node_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone(bool requires_grad) const {
  return from_data(shape(), node_->data, requires_grad);
}

template <typename T>
std::vector<detail::Node<T>*> GradTape::schedule(const BasicTensor<T>& root) {
  std::vector<detail::Node<T>*> order;
  if (!root.defined() || !root.node()->requires_grad) return order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad && seen.insert(parent.get()).second) stack.push_back(parent.get());
    }
  }
  // Parents are always created before children, so descending sequence is a
  // valid reverse topological order and does not depend on traversal order.
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->sequence > b->sequence; });
  return order;
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a single-element loss, got " + shape_string(shape()));
  }
  if (!node_->requires_grad) {
    throw std::logic_error("backward() on a tensor with no recorded graph");
  }
  auto order = GradTape::schedule(*this);
  node_->ensure_grad()[0] += T(1);
  for (auto* node : order) {
    if (node->grad.empty()) continue;
    for (T g : node->grad) {
      if (!std::isfinite(g)) {
        throw NonFiniteError("non-finite gradient at node " + node->op + "#" +
                             std::to_string(node->sequence));
      }
    }
    if (node->backward) {
      node->backward(*node);
      // Intermediate gradients are consumed; leaves keep accumulating.
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

template class BasicTensor<double>;
template class BasicTensor<float>;
template std::vector<detail::Node<double>*> GradTape::schedule(const BasicTensor<double>&);
template std::vector<detail::Node<float>*> GradTape::schedule(const BasicTensor<float>&);

}  // namespace terraexpr
