#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lit4/rng.hpp"
#include "lit4/tensor.hpp"

namespace lit4 {

enum class TensorRole { parameter, buffer };

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  TensorRole role;
};

/// Ordered registry of a model's learnable parameters and non-learnable
/// buffers (batch-norm running statistics). Names are unique.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(std::string name, Tensor<T> tensor, TensorRole role);

  const std::vector<NamedTensor<T>>& entries() const { return entries_; }
  std::vector<NamedTensor<T>>& entries() { return entries_; }

  /// Learnable scalars, i.e. the sum of numel over parameters.
  std::size_t parameter_count() const;
  std::size_t parameter_count(const std::string& prefix) const;

  const NamedTensor<T>* find(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<NamedTensor<T>> entries_;
};

/// Initialization rules.
enum class Init { trunc_normal, zeros, ones, constant };

/// Creates named tensors inside a ParamStore, drawing initial values from a
/// counter-based RNG. `scope` returns a child factory whose names are
/// prefixed with "<prefix>.<sub>".
template <typename T>
class ParamFactory {
 public:
  static constexpr double kInitStd = 0.02;

  ParamFactory(ParamStore<T>& store, CounterRng& rng, std::string prefix = {},
               double init_std = kInitStd)
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)), init_std_(init_std) {}

  ParamFactory scope(const std::string& sub) const;
  ParamFactory scope(const std::string& sub, std::size_t index) const;

  Tensor<T> parameter(const std::string& name, Shape shape, Init init,
                      double value = 0.0);
  Tensor<T> buffer(const std::string& name, Shape shape, Init init,
                   double value = 0.0);

  const std::string& prefix() const { return prefix_; }
  /// Standard deviation of Init::trunc_normal draws (clipped at 2 std).
  double init_std() const { return init_std_; }

 private:
  std::string full_name(const std::string& name) const;
  Tensor<T> make(Shape shape, Init init, double value);

  ParamStore<T>* store_;
  CounterRng* rng_;
  std::string prefix_;
  double init_std_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class ParamFactory<float>;
extern template class ParamFactory<double>;

}  // namespace lit4
