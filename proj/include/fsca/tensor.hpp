#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fsca {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the recorded computation graph. Leaves have no backward_fn.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty while absent
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// A Tensor is a shared handle: copies alias the same storage and graph
/// vertex. Operations on tensors that require gradients record themselves so
/// that `backward()` on a scalar result can propagate into every reachable
/// leaf.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds an op result. `backward_fn` is only kept when some input requires grad.
  static Tensor make_result(Shape shape, std::vector<double> data,
                            const std::vector<Tensor>& inputs,
                            std::function<void(detail::Node&)> backward_fn);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutable access is meant for leaves (initialisation, optimiser updates).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// New leaf holding a copy of the values, disconnected from the graph.
  Tensor detach() const;
  void backward() const;

  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each call.
void backward(const Tensor& root);

}  // namespace fsca
