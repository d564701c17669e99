#pragma once

#include "lit4/params.hpp"
#include "lit4/rng.hpp"

namespace testutil {

// Redraws every learnable tensor from N(mean, scale^2). Fresh models have
// zero biases and layer scales, which would make many checks vacuous.
template <typename T>
void randomize(lit4::ParamStore<T>& store, std::uint64_t seed, double scale = 0.3,
               double mean = 0.0) {
  lit4::CounterRng rng(seed, 1234);
  for (auto& e : store.entries()) {
    if (e.role != lit4::TensorRole::parameter) continue;
    for (auto& v : e.tensor.mutable_data()) v = static_cast<T>(mean + scale * rng.normal());
  }
}

template <typename T>
void fill(lit4::Tensor<T> t, double value) {
  for (auto& v : t.mutable_data()) v = static_cast<T>(value);
}

}  // namespace testutil
