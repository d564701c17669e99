#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <variant>

#include "lit4/ops.hpp"

namespace lit4 {

struct TextEncoderConfig {
  std::size_t vocab_size = 30522;
  std::size_t max_len = 128;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t dim = 128;
  std::size_t hidden_ratio = 4;

  void validate(const std::string& where = "text_encoder") const;
};

enum class ImageEncoderKind { vit_tiny, mobilevit_s, xcit_nano, vit_base };

std::string to_string(ImageEncoderKind kind);
ImageEncoderKind parse_image_encoder_kind(const std::string& name);

/// Patch-embedding vision transformer (DeiT-style).
struct VitConfig {
  std::size_t input_size = 128;
  std::size_t patch = 16;
  std::size_t layers = 12;
  std::size_t heads = 3;
  std::size_t dim = 192;
  std::size_t hidden_ratio = 4;

  static VitConfig tiny() { return {}; }
  static VitConfig base() { return {128, 16, 12, 12, 768, 4}; }
};

/// MobileViT: stem, two inverted-residual stages, then three stages of
/// [strided inverted residual, MobileViT block], a pointwise expansion and
/// global average pooling. Defaults are the "S" variant.
struct MobileVitConfig {
  std::size_t input_size = 128;
  std::size_t stem = 16;
  std::array<std::size_t, 5> channels{32, 64, 96, 128, 160};
  std::array<std::size_t, 2> mv2_depths{1, 3};
  std::array<std::size_t, 3> dims{144, 192, 240};
  std::array<std::size_t, 3> depths{2, 4, 3};
  std::size_t heads = 4;
  std::size_t ffn_ratio = 2;
  std::size_t expansion = 4;
  std::size_t final_channels = 640;
  std::size_t patch = 2;

  static constexpr std::size_t kTotalStride = 32;
};

/// Cross-covariance image transformer with a strided convolutional stem
/// (one stride-2 3x3 conv per factor of two in `patch`). Defaults are
/// the "Nano" variant.
struct XcitConfig {
  std::size_t input_size = 128;
  std::size_t patch = 8;
  std::size_t layers = 12;
  std::size_t heads = 4;
  std::size_t dim = 128;
  std::size_t hidden_ratio = 4;
  std::size_t class_layers = 2;

  std::size_t stem_convs() const;
};

struct ImageEncoderConfig {
  ImageEncoderKind kind = ImageEncoderKind::xcit_nano;
  std::size_t channels = 10;
  std::variant<VitConfig, MobileVitConfig, XcitConfig> arch = XcitConfig{};

  static ImageEncoderConfig defaults(ImageEncoderKind kind);

  std::size_t input_size() const;
  void set_input_size(std::size_t size);
  std::size_t output_dim() const;
  void validate(const std::string& where = "image_encoder") const;
};

struct FusionConfig {
  std::size_t text_dim = 128;   // d_t
  std::size_t image_dim = 128;  // d_v
  std::size_t dim = 512;        // d_f
  ops::Activation activation = ops::Activation::tanh;

  void validate(const std::string& where = "fusion") const;
};

struct HeadConfig {
  std::size_t hidden = 512;
  std::size_t answers = 1000;  // n_A
  double dropout = 0.25;
  ops::Activation activation = ops::Activation::gelu;

  void validate(const std::string& where = "head") const;
};

struct ModelConfig {
  TextEncoderConfig text;
  ImageEncoderConfig image;
  FusionConfig fusion;
  HeadConfig head;

  /// Full-size model with the given image encoder.
  static ModelConfig defaults(ImageEncoderKind kind);

  /// Re-derives fusion.text_dim / fusion.image_dim from the encoders.
  void sync_dims();
  void validate() const;
};

std::string to_string(ops::Activation act);
ops::Activation parse_activation(const std::string& name);

}  // namespace lit4
