#include "lit4/tensor.hpp"

#include <cmath>
#include <sstream>

#include "lit4/error.hpp"

namespace lit4 {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto d : shape)
    if (d == 0)
      throw DimensionError("tensor shape " + lit4::to_string(shape) +
                           " has a zero-sized axis");
  if (lit4::numel(shape) != data.size())
    throw DimensionError("tensor shape " + lit4::to_string(shape) +
                         " does not match " + std::to_string(data.size()) +
                         " elements");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = lit4::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " +
                         lit4::to_string(shape()));
  return node_->shape[axis];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  return node_->grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " +
                        lit4::to_string(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank())
    throw DimensionError("index rank mismatch for shape " +
                         lit4::to_string(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis])
      throw DimensionError("index out of range for shape " +
                           lit4::to_string(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  for (auto v : t.data())
    if (!std::isfinite(v)) throw NumericError(what + " contains NaN/Inf");
}

template class Tensor<float>;
template class Tensor<double>;
template void require_finite(const Tensor<float>&, const std::string&);
template void require_finite(const Tensor<double>&, const std::string&);

}  // namespace lit4
