#include "lit4/params.hpp"

#include "lit4/error.hpp"

namespace lit4 {

template <typename T>
Tensor<T> ParamStore<T>::add(std::string name, Tensor<T> tensor,
                             TensorRole role) {
  if (find(name) != nullptr)
    throw InternalError("duplicate tensor name: " + name);
  tensor.set_requires_grad(role == TensorRole::parameter);
  entries_.push_back({std::move(name), tensor, role});
  return tensor;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.role == TensorRole::parameter) n += e.tensor.numel();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.role == TensorRole::parameter &&
        (e.name == prefix || e.name.rfind(prefix + ".", 0) == 0))
      n += e.tensor.numel();
  return n;
}

template <typename T>
const NamedTensor<T>* ParamStore<T>::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
ParamFactory<T> ParamFactory<T>::scope(const std::string& sub) const {
  ParamFactory child = *this;
  child.prefix_ = full_name(sub);
  return child;
}

template <typename T>
ParamFactory<T> ParamFactory<T>::scope(const std::string& sub,
                                       std::size_t index) const {
  return scope(sub + "." + std::to_string(index));
}

template <typename T>
std::string ParamFactory<T>::full_name(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

template <typename T>
Tensor<T> ParamFactory<T>::make(Shape shape, Init init, double value) {
  const auto n = numel(shape);
  std::vector<T> data(n);
  switch (init) {
    case Init::trunc_normal:
      for (auto& v : data) v = static_cast<T>(rng_->truncated_normal(init_std_));
      break;
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(data.begin(), data.end(), T(1));
      break;
    case Init::constant:
      std::fill(data.begin(), data.end(), static_cast<T>(value));
      break;
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> ParamFactory<T>::parameter(const std::string& name, Shape shape,
                                     Init init, double value) {
  return store_->add(full_name(name), make(std::move(shape), init, value),
                     TensorRole::parameter);
}

template <typename T>
Tensor<T> ParamFactory<T>::buffer(const std::string& name, Shape shape,
                                  Init init, double value) {
  return store_->add(full_name(name), make(std::move(shape), init, value),
                     TensorRole::buffer);
}

template class ParamStore<float>;
template class ParamStore<double>;
template class ParamFactory<float>;
template class ParamFactory<double>;

}  // namespace lit4
