#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aquaseg {

/// (batch, channel, height, width). Every tensor in the library is 4-D.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::string str() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

namespace detail {

template <typename T>
struct Node {
  Shape4 shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const noexcept { return !backward_fn; }
  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_id() noexcept;

}  // namespace detail

/// Graph recording is on by default. Evaluation code disables it with NoGradGuard.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a dense (n, c, h, w) array that may participate in a
/// reverse-mode autodiff graph. Copies share the underlying node; use
/// `clone()` for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape4 shape, bool requires_grad = false);
  static Tensor full(Shape4 shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape4 shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape4& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// Writable view. Mutating a tensor that a live graph depends on invalidates that graph.
  std::span<T> mutable_data() { return node_->data; }

  T at(int n, int c, int h, int w) const;
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; empty span when nothing has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad();

  std::uint64_t node_id() const { return node_->id; }

  /// New leaf sharing no graph history; data is copied.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<detail::Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Creates the output node of a differentiable op. When recording is enabled
/// and any input requires grad, the node keeps its inputs and `backward`.
template <typename T>
Tensor<T> record_op(Shape4 shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                    std::function<void(detail::Node<T>&)> backward);

/// Populates `grad` of every requires-grad leaf reachable from `loss`.
/// Nodes are visited in exact reverse recording order. Leaf gradients
/// accumulate across calls; intermediate gradients are recomputed each call.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace aquaseg
