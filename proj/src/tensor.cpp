#include "aquaseg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "aquaseg/errors.hpp"

namespace aquaseg {

std::string Shape4::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

namespace detail {

std::uint64_t next_node_id() noexcept {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape4& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw ShapeError("tensor dimensions must be positive, got " + s.str());
  }
}
}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape4 shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape4 shape, T value, bool requires_grad) {
  check_shape(shape);
  return from_vector(shape, std::vector<T>(shape.numel(), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape4 shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor of shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->id = detail::next_node_id();
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return full(Shape4{1, 1, 1, 1}, value, requires_grad);
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  const auto& s = node_->shape;
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 || w >= s.w) {
    throw ShapeError("index out of range for shape " + s.str());
  }
  return node_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() requires a single-element tensor, shape is " + shape().str());
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_vector(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> record_op(Shape4 shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                    std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->data = std::move(values);
  node->id = detail::next_node_id();
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (grad_enabled() && any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.shape() != Shape4{1, 1, 1, 1}) {
    throw ContractError("backward() needs a scalar (1, 1, 1, 1) loss, got " +
                        (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not depend on any requires-grad tensor");

  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<NodeT*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    NodeT* cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (auto& in : cur->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const NodeT* a, const NodeT* b) { return a->id > b->id; });

  for (NodeT* n : order) {
    if (!n->is_leaf()) n->grad.clear();
  }
  loss.node()->ensure_grad()[0] += T(1);

  for (NodeT* n : order) {
    if (n->is_leaf()) continue;
    n->ensure_grad();
    n->backward_fn(*n);
    // Intermediate gradients are not needed once propagated.
    std::vector<T>().swap(n->grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> record_op(Shape4, std::vector<float>, std::vector<Tensor<float>>,
                                 std::function<void(detail::Node<float>&)>);
template Tensor<double> record_op(Shape4, std::vector<double>, std::vector<Tensor<double>>,
                                  std::function<void(detail::Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace aquaseg
