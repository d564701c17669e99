#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lit4/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the active
// tape (see tape.hpp) when at least one input requires a gradient.
namespace lit4::ops {

// ---- shape manipulation -------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Generic axis permutation; output axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);

/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t length);

/// Pure reindexing: out[i] = x[map[i]], output laid out as `shape`.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, Shape shape, std::vector<std::size_t> map);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// ---- linear algebra -----------------------------------------------------

/// a[..., m, k] x b[..., k, n] -> [..., m, n] with broadcast batch axes.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., in] * weight[in, out] + bias[out]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

// ---- elementwise --------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> silu(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

enum class Activation { identity, relu, gelu, silu, tanh };

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act);

// ---- normalization and softmax -------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Softmax over the last axis of x[b, ..., keys] where keys with
/// valid[b * keys + j] == 0 get probability exactly 0 (the same result as
/// adding -inf to their logits).
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x,
                         std::span<const std::uint8_t> valid);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps);

/// x / max(||x||_2, eps) along `axis`.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis, T eps);

struct BatchNormState {
  bool training = false;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over (batch, h, w) of x[b, c, h, w]. In training mode
/// batch statistics are used and the running buffers are updated in place
/// (unbiased variance); in eval mode the running buffers are used.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, const BatchNormState& state);

// ---- convolution --------------------------------------------------------

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Cross-correlation of x[b, c_in, h, w] with w[c_out, c_in / g, kh, kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, const Conv2dOptions& options);

// ---- reductions, lookup, regularization ---------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis);

/// Rows of table[vocab, d] for ids laid out as `id_shape`; output shape is
/// id_shape + [d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids,
                    const Shape& id_shape);

/// Inverted dropout driven by a counter-based RNG keyed by `seed`.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training,
                  std::uint64_t seed);

/// Mean negative log-likelihood of `targets` under softmax(logits) for
/// logits[n] (one target) or logits[b, n] (b targets).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        std::span<const std::int32_t> targets);

}  // namespace lit4::ops
