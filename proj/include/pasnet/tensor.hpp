#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pasnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 tensor with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for
/// a deep copy. Values are treated as immutable once an op has produced them;
/// only the gradient buffer is mutated during backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient buffer, allocated (zero-filled) on first access. Writable
  /// through const handles: the buffer belongs to the shared storage.
  std::span<float> grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of executed differentiable ops.
///
/// Ops append a backward closure when at least one input requires a
/// gradient. backward() replays closures in reverse execution order, once
/// each. Leaf gradients accumulate across calls; intermediate gradients are
/// reset at the start of every backward().
class Graph {
 public:
  explicit Graph(bool enabled = true) : enabled_(enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool enabled() const { return enabled_; }

  /// Registers `out` as computed from `inputs`. `backward` must read
  /// out.grad() and accumulate into the grads of inputs that require them.
  /// Returns true if the op was recorded (and `out` now requires grad).
  bool record(Tensor& out, std::initializer_list<Tensor> inputs, std::function<void()> backward);

  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };
  bool enabled_ = true;
  std::vector<Node> nodes_;
};

}  // namespace pasnet
