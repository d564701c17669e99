#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lit4 {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class DType : unsigned char { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// Storage shared by every handle to the same tensor. The tape keeps nodes
// alive for as long as their saved values are needed by backward.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Dense row-major tensor with an optional gradient slot.
///
/// Copies are handles: they alias the same storage, so a parameter held by
/// a model and the same parameter seen by the optimizer are one object.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Direct write access is reserved for initialization and optimizer
  // updates of leaf tensors; recorded ops never mutate their inputs.
  std::span<T> mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  std::shared_ptr<Node> node_;

  template <typename U>
  friend Tensor<U> make_tensor(std::shared_ptr<TensorNode<U>> node);
};

template <typename T>
Tensor<T> make_tensor(std::shared_ptr<TensorNode<T>> node) {
  return Tensor<T>(std::move(node));
}

/// Throws NumericError when any element is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace lit4
