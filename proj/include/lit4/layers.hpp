#pragma once

#include <cstdint>
#include <string>

#include "lit4/ops.hpp"
#include "lit4/params.hpp"

namespace lit4 {

using ops::Activation;

/// Per-call switches shared by every forward function.
struct ForwardMode {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out], may be undefined

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::linear(x, weight, bias);
  }
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
};

template <typename T>
Linear<T> make_linear(ParamFactory<T> f, std::size_t in, std::size_t out,
                      bool bias = true) {
  Linear<T> l;
  l.weight = f.parameter("weight", {in, out}, Init::trunc_normal);
  if (bias) l.bias = f.parameter("bias", {out}, Init::zeros);
  return l;
}

template <typename T>
struct LayerNorm {
  static constexpr double kEps = 1e-6;
  Tensor<T> gamma;
  Tensor<T> beta;

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::layer_norm(x, gamma, beta, static_cast<T>(kEps));
  }
};

template <typename T>
LayerNorm<T> make_layer_norm(ParamFactory<T> f, std::size_t dim) {
  return {f.parameter("weight", {dim}, Init::ones),
          f.parameter("bias", {dim}, Init::zeros)};
}

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  // Handles alias the stored buffers, so updates in training mode land in
  // the model's ParamStore.
  Tensor<T> running_mean;
  Tensor<T> running_var;

  Tensor<T> operator()(const Tensor<T>& x, bool training) const {
    auto mean = running_mean;
    auto var = running_var;
    return ops::batch_norm2d(x, gamma, beta, mean, var,
                             ops::BatchNormState{training, 0.1, 1e-5});
  }
};

template <typename T>
BatchNorm<T> make_batch_norm(ParamFactory<T> f, std::size_t channels) {
  BatchNorm<T> bn;
  bn.gamma = f.parameter("weight", {channels}, Init::ones);
  bn.beta = f.parameter("bias", {channels}, Init::zeros);
  bn.running_mean = f.buffer("running_mean", {channels}, Init::zeros);
  bn.running_var = f.buffer("running_var", {channels}, Init::ones);
  return bn;
}

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [out, in / groups, k, k]
  Tensor<T> bias;    // may be undefined
  ops::Conv2dOptions options;

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::conv2d(x, weight, bias, options);
  }
};

template <typename T>
Conv2d<T> make_conv(ParamFactory<T> f, std::size_t in, std::size_t out,
                    std::size_t kernel, std::size_t stride, std::size_t groups,
                    bool bias, bool same_padding = true) {
  Conv2d<T> c;
  c.weight = f.parameter("weight", {out, in / groups, kernel, kernel},
                         Init::trunc_normal);
  if (bias) c.bias = f.parameter("bias", {out}, Init::zeros);
  c.options = {stride, same_padding ? kernel / 2 : 0, groups};
  return c;
}

/// conv (no bias) -> batch norm -> activation
template <typename T>
struct ConvBnAct {
  Conv2d<T> conv;
  BatchNorm<T> bn;
  Activation act = Activation::identity;

  Tensor<T> operator()(const Tensor<T>& x, bool training) const {
    return ops::activate(bn(conv(x), training), act);
  }
};

template <typename T>
ConvBnAct<T> make_conv_bn(ParamFactory<T> f, std::size_t in, std::size_t out,
                          std::size_t kernel, std::size_t stride,
                          std::size_t groups, Activation act) {
  return {make_conv(f.scope("conv"), in, out, kernel, stride, groups, false),
          make_batch_norm(f.scope("bn"), out), act};
}

template <typename T>
struct FeedForward {
  Linear<T> fc1;
  Linear<T> fc2;
  Activation act = Activation::gelu;

  Tensor<T> operator()(const Tensor<T>& x) const {
    return fc2(ops::activate(fc1(x), act));
  }
};

template <typename T>
FeedForward<T> make_ffn(ParamFactory<T> f, std::size_t dim, std::size_t hidden,
                        Activation act) {
  return {make_linear(f.scope("fc1"), dim, hidden),
          make_linear(f.scope("fc2"), hidden, dim), act};
}

}  // namespace lit4
