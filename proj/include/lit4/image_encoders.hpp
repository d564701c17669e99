#pragma once

#include <variant>
#include <vector>

#include "lit4/attention.hpp"
#include "lit4/config.hpp"

namespace lit4 {

template <typename T>
struct VitEncoder {
  VitConfig config;
  Conv2d<T> patch_embed;  // kernel = stride = patch, with bias
  Tensor<T> cls_token;    // [1, 1, d]
  Tensor<T> pos_embed;    // [1, 1 + patches, d]
  std::vector<BlockParams<T>> blocks;
  LayerNorm<T> norm;

  /// images[b, 10, s, s] -> class token [b, d]
  Tensor<T> encode(const Tensor<T>& images, bool training) const;
};

/// MobileNetV2 block: pointwise expansion, depthwise 3x3, linear pointwise
/// projection; residual when stride is 1 and widths match.
template <typename T>
struct InvertedResidual {
  ConvBnAct<T> expand;
  ConvBnAct<T> depthwise;
  ConvBnAct<T> project;
  bool residual = false;

  Tensor<T> operator()(const Tensor<T>& x, bool training) const;
};

template <typename T>
InvertedResidual<T> make_inverted_residual(ParamFactory<T> f, std::size_t in,
                                           std::size_t out, std::size_t stride,
                                           std::size_t expansion);

template <typename T>
struct MobileVitStage {
  InvertedResidual<T> down;  // stride 2
  MobileVitBlockParams<T> block;
};

template <typename T>
struct MobileVitEncoder {
  MobileVitConfig config;
  ConvBnAct<T> stem;  // 3x3 stride 2
  std::vector<InvertedResidual<T>> layer1;
  std::vector<InvertedResidual<T>> layer2;  // first one strided
  std::vector<MobileVitStage<T>> stages;
  ConvBnAct<T> expand;  // 1x1 to final_channels

  /// Pre-pool feature map [b, final_channels, s/32, s/32].
  Tensor<T> features(const Tensor<T>& images, bool training) const;
  /// Global average pool of features: [b, final_channels].
  Tensor<T> encode(const Tensor<T>& images, bool training) const;
};

template <typename T>
struct XcitLayer {
  LayerNorm<T> norm1;
  XcaParams<T> attn;
  Tensor<T> gamma1;
  LpiParams<T> lpi;
  LayerNorm<T> norm2;
  FeedForward<T> ffn;
  Tensor<T> gamma2;

  Tensor<T> operator()(const Tensor<T>& x, std::size_t grid, bool training) const;
};

template <typename T>
struct XcitEncoder {
  XcitConfig config;
  std::vector<ConvBnAct<T>> stem;  // stride-2 3x3 convs, GELU between
  std::vector<XcitLayer<T>> layers;
  Tensor<T> cls_token;  // [1, 1, d]
  std::vector<ClassAttentionParams<T>> class_blocks;
  LayerNorm<T> norm;

  Tensor<T> encode(const Tensor<T>& images, bool training) const;
};

/// One of the encoders above, selected by ImageEncoderConfig::kind.
template <typename T>
class ImageEncoder {
 public:
  using Variant = std::variant<VitEncoder<T>, MobileVitEncoder<T>, XcitEncoder<T>>;

  ImageEncoder(ImageEncoderConfig config, Variant impl)
      : config_(std::move(config)), impl_(std::move(impl)) {}

  /// images[b, 10, s, s] -> [b, d_v]; a single image [10, s, s] -> [d_v].
  Tensor<T> encode(const Tensor<T>& images, bool training = false) const;

  const ImageEncoderConfig& config() const { return config_; }
  std::size_t output_dim() const { return config_.output_dim(); }
  const Variant& impl() const { return impl_; }

 private:
  ImageEncoderConfig config_;
  Variant impl_;
};

template <typename T>
ImageEncoder<T> make_image_encoder(ParamFactory<T> f,
                                   const ImageEncoderConfig& config);

/// Throws ConfigError when images[b, c, h, w] cannot be fed to an encoder
/// built from `config`.
void check_image_geometry(const ImageEncoderConfig& config, const Shape& shape);

extern template class ImageEncoder<float>;
extern template class ImageEncoder<double>;

}  // namespace lit4
