#include "lit4/config.hpp"

#include "lit4/error.hpp"

namespace lit4 {

namespace {

void require_positive(std::size_t v, const std::string& field) {
  if (v == 0) throw ConfigError(field + ": must be positive");
}

void require_divisible(std::size_t dim, const std::string& dim_field,
                       std::size_t heads, const std::string& heads_field) {
  require_positive(heads, heads_field);
  if (dim % heads != 0)
    throw ConfigError(dim_field + " (" + std::to_string(dim) +
                      ") not divisible by " + heads_field + " (" +
                      std::to_string(heads) + ")");
}

}  // namespace

void TextEncoderConfig::validate(const std::string& where) const {
  require_positive(vocab_size, where + ".vocab_size");
  if (vocab_size < 3)
    throw ConfigError(where + ".vocab_size: needs PAD, CLS and UNK entries");
  if (max_len < 2)
    throw ConfigError(where + ".max_len: must be >= 2 (CLS + one token)");
  require_positive(dim, where + ".dim");
  require_positive(hidden_ratio, where + ".hidden_ratio");
  require_divisible(dim, where + ".dim", heads, where + ".heads");
}

std::string to_string(ImageEncoderKind kind) {
  switch (kind) {
    case ImageEncoderKind::vit_tiny:
      return "vit_tiny";
    case ImageEncoderKind::mobilevit_s:
      return "mobilevit_s";
    case ImageEncoderKind::xcit_nano:
      return "xcit_nano";
    case ImageEncoderKind::vit_base:
      return "vit_base";
  }
  return "?";
}

ImageEncoderKind parse_image_encoder_kind(const std::string& name) {
  for (auto k : {ImageEncoderKind::vit_tiny, ImageEncoderKind::mobilevit_s,
                 ImageEncoderKind::xcit_nano, ImageEncoderKind::vit_base})
    if (to_string(k) == name) return k;
  throw ConfigError("image_encoder.kind: unknown encoder '" + name + "'");
}

std::size_t XcitConfig::stem_convs() const {
  std::size_t n = 0;
  for (std::size_t p = patch; p > 1; p /= 2) ++n;
  return n;
}

ImageEncoderConfig ImageEncoderConfig::defaults(ImageEncoderKind kind) {
  ImageEncoderConfig c;
  c.kind = kind;
  switch (kind) {
    case ImageEncoderKind::vit_tiny:
      c.arch = VitConfig::tiny();
      break;
    case ImageEncoderKind::vit_base:
      c.arch = VitConfig::base();
      break;
    case ImageEncoderKind::mobilevit_s:
      c.arch = MobileVitConfig{};
      break;
    case ImageEncoderKind::xcit_nano:
      c.arch = XcitConfig{};
      break;
  }
  return c;
}

std::size_t ImageEncoderConfig::input_size() const {
  return std::visit([](const auto& a) { return a.input_size; }, arch);
}

void ImageEncoderConfig::set_input_size(std::size_t size) {
  std::visit([size](auto& a) { a.input_size = size; }, arch);
}

std::size_t ImageEncoderConfig::output_dim() const {
  if (const auto* v = std::get_if<VitConfig>(&arch)) return v->dim;
  if (const auto* m = std::get_if<MobileVitConfig>(&arch))
    return m->final_channels;
  return std::get<XcitConfig>(arch).dim;
}

void ImageEncoderConfig::validate(const std::string& where) const {
  if (channels != 10)
    throw ConfigError(where + ".channels: encoders take exactly 10 bands, got " +
                      std::to_string(channels));
  const bool vit_kind =
      kind == ImageEncoderKind::vit_tiny || kind == ImageEncoderKind::vit_base;
  if (vit_kind != std::holds_alternative<VitConfig>(arch) ||
      (kind == ImageEncoderKind::mobilevit_s) !=
          std::holds_alternative<MobileVitConfig>(arch))
    throw ConfigError(where + ".kind: architecture settings do not match kind " +
                      to_string(kind));
  if (const auto* v = std::get_if<VitConfig>(&arch)) {
    require_positive(v->input_size, where + ".input_size");
    require_positive(v->patch, where + ".patch");
    require_positive(v->dim, where + ".dim");
    require_positive(v->hidden_ratio, where + ".hidden_ratio");
    require_divisible(v->dim, where + ".dim", v->heads, where + ".heads");
    if (v->input_size % v->patch != 0)
      throw ConfigError(where + ".input_size (" + std::to_string(v->input_size) +
                        ") not divisible by " + where + ".patch (" +
                        std::to_string(v->patch) + ")");
  } else if (const auto* m = std::get_if<MobileVitConfig>(&arch)) {
    require_positive(m->input_size, where + ".input_size");
    require_positive(m->stem, where + ".stem");
    for (std::size_t i = 0; i < m->channels.size(); ++i)
      require_positive(m->channels[i], where + ".channels_per_stage[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < m->mv2_depths.size(); ++i)
      require_positive(m->mv2_depths[i], where + ".mv2_depths[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < m->dims.size(); ++i)
      require_divisible(m->dims[i], where + ".dims[" + std::to_string(i) + "]",
                        m->heads, where + ".heads");
    require_positive(m->ffn_ratio, where + ".ffn_ratio");
    require_positive(m->expansion, where + ".expansion");
    require_positive(m->final_channels, where + ".final_channels");
    require_positive(m->patch, where + ".patch");
    if (m->input_size % MobileVitConfig::kTotalStride != 0)
      throw ConfigError(where + ".input_size (" + std::to_string(m->input_size) +
                        ") not divisible by the total stride 32");
    // The MobileViT blocks see maps of input/8, input/16 and input/32.
    for (std::size_t s : {8u, 16u, 32u})
      if ((m->input_size / s) % m->patch != 0)
        throw ConfigError(where + ".patch (" + std::to_string(m->patch) +
                          ") does not tile the " +
                          std::to_string(m->input_size / s) + "px stage map");
  } else {
    const auto& x = std::get<XcitConfig>(arch);
    require_positive(x.input_size, where + ".input_size");
    require_positive(x.dim, where + ".dim");
    require_positive(x.hidden_ratio, where + ".hidden_ratio");
    require_divisible(x.dim, where + ".dim", x.heads, where + ".heads");
    if (x.patch < 2 || (x.patch & (x.patch - 1)) != 0)
      throw ConfigError(where + ".patch: must be a power of two >= 2, got " +
                        std::to_string(x.patch));
    if (x.input_size % x.patch != 0)
      throw ConfigError(where + ".input_size (" + std::to_string(x.input_size) +
                        ") not divisible by " + where + ".patch (" +
                        std::to_string(x.patch) + ")");
    const std::size_t stem_div = std::size_t{1} << (x.stem_convs() - 1);
    if (x.dim % stem_div != 0)
      throw ConfigError(where + ".dim (" + std::to_string(x.dim) +
                        ") must be divisible by " + std::to_string(stem_div) +
                        " for the convolutional stem");
  }
}

void FusionConfig::validate(const std::string& where) const {
  require_positive(text_dim, where + ".text_dim");
  require_positive(image_dim, where + ".image_dim");
  require_positive(dim, where + ".dim");
  if (activation != ops::Activation::identity &&
      activation != ops::Activation::tanh)
    throw ConfigError(where + ".activation: must be identity or tanh");
}

void HeadConfig::validate(const std::string& where) const {
  require_positive(hidden, where + ".hidden");
  if (answers < 2)
    throw ConfigError(where + ".answers: need at least 2 answer classes");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError(where + ".dropout: must lie in [0, 1)");
}

ModelConfig ModelConfig::defaults(ImageEncoderKind kind) {
  ModelConfig c;
  c.image = ImageEncoderConfig::defaults(kind);
  c.sync_dims();
  return c;
}

void ModelConfig::sync_dims() {
  fusion.text_dim = text.dim;
  fusion.image_dim = image.output_dim();
}

void ModelConfig::validate() const {
  text.validate();
  image.validate();
  fusion.validate();
  head.validate();
  if (fusion.text_dim != text.dim)
    throw ConfigError("fusion.text_dim (" + std::to_string(fusion.text_dim) +
                      ") must equal text_encoder.dim (" +
                      std::to_string(text.dim) + ")");
  if (fusion.image_dim != image.output_dim())
    throw ConfigError("fusion.image_dim (" + std::to_string(fusion.image_dim) +
                      ") must equal the image encoder output (" +
                      std::to_string(image.output_dim()) + ")");
}

std::string to_string(ops::Activation act) {
  switch (act) {
    case ops::Activation::identity:
      return "identity";
    case ops::Activation::relu:
      return "relu";
    case ops::Activation::gelu:
      return "gelu";
    case ops::Activation::silu:
      return "silu";
    case ops::Activation::tanh:
      return "tanh";
  }
  return "?";
}

ops::Activation parse_activation(const std::string& name) {
  for (auto a : {ops::Activation::identity, ops::Activation::relu,
                 ops::Activation::gelu, ops::Activation::silu,
                 ops::Activation::tanh})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown activation '" + name + "'");
}

}  // namespace lit4
