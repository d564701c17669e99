#pragma once

#include <array>
#include <cstdint>

#include "lit4/fusion.hpp"
#include "lit4/image_encoders.hpp"
#include "lit4/text_encoder.hpp"

namespace lit4 {

/// Text encoder + image encoder + fusion + classification head. Parameter
/// names start with "text.", "image.", "fusion." and "head.".
template <typename T>
class VqaModel {
 public:
  /// Trunc-normal initializations use `init_std`.
  VqaModel(const ModelConfig& config, std::uint64_t seed,
           double init_std = ParamFactory<T>::kInitStd);

  VqaModel(const VqaModel&) = delete;
  VqaModel& operator=(const VqaModel&) = delete;
  VqaModel(VqaModel&&) = default;
  VqaModel& operator=(VqaModel&&) = default;

  /// images[b, 10, s, s] with b token sequences -> logits [b, n_A].
  Tensor<T> forward(const Tensor<T>& images, const TokenBatch& tokens,
                    const ForwardMode& mode = {}) const;
  /// Single triplet: image [10, s, s] -> logits [n_A].
  Tensor<T> forward(const Tensor<T>& image, const TokenSequence& tokens,
                    const ForwardMode& mode = {}) const;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  const TextEncoder<T>& text() const { return text_; }
  const ImageEncoder<T>& image() const { return image_; }
  const FusionParams<T>& fusion() const { return fusion_; }
  const HeadParams<T>& head() const { return head_; }

 private:
  // Members are initialized in declaration order: each component draws from
  // its own RNG stream, so text weights do not depend on the image config.
  ModelConfig config_;
  std::array<CounterRng, 4> rngs_;
  ParamStore<T> store_;
  TextEncoder<T> text_;
  ImageEncoder<T> image_;
  FusionParams<T> fusion_;
  HeadParams<T> head_;
};

extern template class VqaModel<float>;
extern template class VqaModel<double>;

}  // namespace lit4
