#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace terraexpr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised when a primitive produces NaN/Inf. The message names the node.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

template <typename T>
struct dtype_traits;

template <>
struct dtype_traits<double> {
  static constexpr DType code = DType::f64;
  static constexpr const char* name = "f64";
};

template <>
struct dtype_traits<float> {
  static constexpr DType code = DType::f32;
  static constexpr const char* name = "f32";
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

std::uint64_t next_sequence();

}  // namespace detail

// Thread-local switch controlling whether primitives record the graph.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Handle to a node of the differentiation graph. Copies share the node.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // Only leaves may be written in place (parameter updates, test fixtures).
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  const std::string& op() const;
  std::uint64_t sequence() const;
  bool is_leaf() const;

  // Fresh leaf holding a copy of the values, detached from any graph.
  BasicTensor detach() const;
  BasicTensor clone(bool requires_grad) const;

  // Reverse-mode pass from a single-element tensor.
  void backward() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

// The recorded graph viewed as an append-only tape: each node carries a
// creation sequence number strictly greater than its parents'.
class GradTape {
 public:
  // Nodes reachable from root that require grad, root first, each once.
  template <typename T>
  static std::vector<detail::Node<T>*> schedule(const BasicTensor<T>& root);
};

}  // namespace terraexpr
