#pragma once

#include <cstdint>
#include <vector>

#include "lit4/config.hpp"
#include "lit4/layers.hpp"

namespace lit4 {

template <typename T>
struct FusionParams {
  Linear<T> text_proj;   // d_t -> d_f
  Linear<T> image_proj;  // d_v -> d_f
  Activation act = Activation::tanh;
};

template <typename T>
FusionParams<T> make_fusion(ParamFactory<T> f, const FusionConfig& config);

/// act(text W_t + b_t) * act(image W_v + b_v), elementwise. Accepts single
/// vectors or [b, d] batches.
template <typename T>
Tensor<T> fuse(const Tensor<T>& text, const Tensor<T>& image,
               const FusionParams<T>& p);

template <typename T>
struct HeadParams {
  Linear<T> fc1;  // d_f -> hidden
  Linear<T> fc2;  // hidden -> n_A
  Activation act = Activation::gelu;
  double dropout = 0.25;
};

template <typename T>
HeadParams<T> make_head(ParamFactory<T> f, std::size_t fused_dim,
                        const HeadConfig& config);

/// Answer logits: fc2(dropout(act(fc1(fused)))).
template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const HeadParams<T>& p,
                   const ForwardMode& mode = {});

struct AnswerDistribution {
  std::vector<double> logits;

  std::vector<double> probabilities() const;
  std::size_t argmax() const;
};

/// Splits logits [n_A] or [b, n_A] into one distribution per row.
template <typename T>
std::vector<AnswerDistribution> to_distributions(const Tensor<T>& logits);

}  // namespace lit4
