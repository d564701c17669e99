#include "lit4/image_encoders.hpp"

#include "lit4/error.hpp"

namespace lit4 {

namespace {

// [b, d, g, g] -> [b, g * g, d]
template <typename T>
Tensor<T> grid_to_tokens(const Tensor<T>& x) {
  const std::size_t b = x.dim(0), d = x.dim(1), n = x.dim(2) * x.dim(3);
  return ops::permute(ops::reshape(x, {b, d, n}), {0, 2, 1});
}

// Broadcasts a [1, 1, d] token to [b, 1, d] and puts it in front of x.
template <typename T>
Tensor<T> prepend_token(const Tensor<T>& token, const Tensor<T>& x) {
  const std::size_t b = x.dim(0), d = x.dim(2);
  auto expanded = ops::add(Tensor<T>::zeros({b, 1, d}), token);
  return ops::concat<T>({expanded, x}, 1);
}

template <typename T>
Tensor<T> first_token(const Tensor<T>& x) {
  return ops::reshape(ops::slice(x, 1, 0, 1), {x.dim(0), x.dim(2)});
}

}  // namespace

void check_image_geometry(const ImageEncoderConfig& config, const Shape& shape) {
  if (shape.size() != 4)
    throw DimensionError("images must be [b, bands, h, w], got " +
                         to_string(shape));
  if (shape[1] != config.channels)
    throw DimensionError("image has " + std::to_string(shape[1]) +
                         " bands, encoder expects " +
                         std::to_string(config.channels));
  if (shape[2] != shape[3])
    throw DimensionError("image must be square, got " + std::to_string(shape[2]) +
                         "x" + std::to_string(shape[3]));
  const std::size_t s = shape[2];
  if (const auto* v = std::get_if<VitConfig>(&config.arch)) {
    if (s != v->input_size)
      throw ConfigError("vit encoder is built for " +
                        std::to_string(v->input_size) + "px input, got " +
                        std::to_string(s));
  } else if (std::holds_alternative<MobileVitConfig>(config.arch)) {
    const auto& m = std::get<MobileVitConfig>(config.arch);
    if (s % MobileVitConfig::kTotalStride != 0 ||
        (s / MobileVitConfig::kTotalStride) % m.patch != 0)
      throw ConfigError("mobilevit input size " + std::to_string(s) +
                        " not divisible by the total stride 32 and patch");
  } else {
    const auto& x = std::get<XcitConfig>(config.arch);
    if (s % x.patch != 0)
      throw ConfigError("xcit input size " + std::to_string(s) +
                        " not divisible by patch " + std::to_string(x.patch));
  }
}

// ---- ViT ------------------------------------------------------------------

template <typename T>
Tensor<T> VitEncoder<T>::encode(const Tensor<T>& images, bool) const {
  auto x = prepend_token(cls_token, grid_to_tokens(patch_embed(images)));
  x = ops::add(x, pos_embed);
  for (const auto& blk : blocks) x = transformer_block(x, blk);
  return norm(first_token(x));
}

template <typename T>
VitEncoder<T> make_vit(ParamFactory<T> f, const VitConfig& c,
                       std::size_t channels) {
  VitEncoder<T> e;
  e.config = c;
  const std::size_t grid = c.input_size / c.patch;
  e.patch_embed = make_conv(f.scope("patch_embed"), channels, c.dim, c.patch,
                            c.patch, 1, true, false);
  e.cls_token = f.parameter("cls_token", {1, 1, c.dim}, Init::trunc_normal);
  e.pos_embed = f.parameter("pos_embed", {1, 1 + grid * grid, c.dim},
                            Init::trunc_normal);
  for (std::size_t i = 0; i < c.layers; ++i)
    e.blocks.push_back(make_block(f.scope("blocks", i), c.dim, c.heads,
                                  c.dim * c.hidden_ratio, Activation::gelu));
  e.norm = make_layer_norm(f.scope("norm"), c.dim);
  return e;
}

// ---- MobileViT --------------------------------------------------------------

template <typename T>
Tensor<T> InvertedResidual<T>::operator()(const Tensor<T>& x,
                                          bool training) const {
  auto y = expand.conv.weight.defined() ? expand(x, training) : x;
  y = project(depthwise(y, training), training);
  return residual ? ops::add(x, y) : y;
}

template <typename T>
InvertedResidual<T> make_inverted_residual(ParamFactory<T> f, std::size_t in,
                                           std::size_t out, std::size_t stride,
                                           std::size_t expansion) {
  InvertedResidual<T> r;
  const std::size_t hidden = in * expansion;
  if (expansion != 1)
    r.expand = make_conv_bn(f.scope("expand"), in, hidden, 1, 1, 1,
                            Activation::silu);
  r.depthwise = make_conv_bn(f.scope("depthwise"), hidden, hidden, 3, stride,
                             hidden, Activation::silu);
  r.project = make_conv_bn(f.scope("project"), hidden, out, 1, 1, 1,
                           Activation::identity);
  r.residual = stride == 1 && in == out;
  return r;
}

template <typename T>
Tensor<T> MobileVitEncoder<T>::features(const Tensor<T>& images,
                                        bool training) const {
  auto x = stem(images, training);
  for (const auto& r : layer1) x = r(x, training);
  for (const auto& r : layer2) x = r(x, training);
  for (const auto& s : stages) x = mobilevit_block(s.down(x, training), s.block, training);
  return expand(x, training);
}

template <typename T>
Tensor<T> MobileVitEncoder<T>::encode(const Tensor<T>& images,
                                      bool training) const {
  auto f = features(images, training);
  const std::size_t b = f.dim(0), c = f.dim(1), n = f.dim(2) * f.dim(3);
  return ops::mean(ops::reshape(f, {b, c, n}), 2);
}

template <typename T>
MobileVitEncoder<T> make_mobilevit(ParamFactory<T> f, const MobileVitConfig& c,
                                   std::size_t channels) {
  MobileVitEncoder<T> e;
  e.config = c;
  e.stem = make_conv_bn(f.scope("stem"), channels, c.stem, 3, 2, 1,
                        Activation::silu);
  std::size_t width = c.stem;
  for (std::size_t i = 0; i < c.mv2_depths[0]; ++i) {
    e.layer1.push_back(make_inverted_residual(f.scope("layer1", i), width,
                                              c.channels[0], 1, c.expansion));
    width = c.channels[0];
  }
  for (std::size_t i = 0; i < c.mv2_depths[1]; ++i) {
    e.layer2.push_back(make_inverted_residual(f.scope("layer2", i), width,
                                              c.channels[1], i == 0 ? 2 : 1,
                                              c.expansion));
    width = c.channels[1];
  }
  for (std::size_t s = 0; s < 3; ++s) {
    auto sf = f.scope("stages", s);
    MobileVitStage<T> st;
    st.down = make_inverted_residual(sf.scope("down"), width, c.channels[s + 2],
                                     2, c.expansion);
    width = c.channels[s + 2];
    st.block = make_mobilevit_block(
        sf.scope("block"),
        MobileVitBlockShape{width, c.dims[s], c.depths[s], c.heads,
                            c.dims[s] * c.ffn_ratio, c.patch, 3});
    e.stages.push_back(std::move(st));
  }
  e.expand = make_conv_bn(f.scope("expand"), width, c.final_channels, 1, 1, 1,
                          Activation::silu);
  return e;
}

// ---- XCiT -----------------------------------------------------------------

template <typename T>
Tensor<T> XcitLayer<T>::operator()(const Tensor<T>& x, std::size_t grid,
                                   bool training) const {
  auto y = ops::add(x, ops::mul(xca(norm1(x), attn), gamma1));
  y = lpi_block(y, lpi, grid, grid, training);
  return ops::add(y, ops::mul(ffn(norm2(y)), gamma2));
}

template <typename T>
Tensor<T> XcitEncoder<T>::encode(const Tensor<T>& images, bool training) const {
  auto g = images;
  for (const auto& conv : stem) g = conv(g, training);
  const std::size_t grid = g.dim(2);
  auto x = grid_to_tokens(g);
  for (const auto& layer : layers) x = layer(x, grid, training);
  x = prepend_token(cls_token, x);
  for (const auto& blk : class_blocks) x = class_attention_block(x, blk);
  return norm(first_token(x));
}

template <typename T>
XcitEncoder<T> make_xcit(ParamFactory<T> f, const XcitConfig& c,
                         std::size_t channels) {
  XcitEncoder<T> e;
  e.config = c;
  const std::size_t convs = c.stem_convs();
  std::size_t width = channels;
  for (std::size_t i = 0; i < convs; ++i) {
    const std::size_t out = c.dim >> (convs - 1 - i);
    const bool last = i + 1 == convs;
    e.stem.push_back(make_conv_bn(f.scope("stem", i), width, out, 3, 2, 1,
                                  last ? Activation::identity : Activation::gelu));
    width = out;
  }
  const std::size_t hidden = c.dim * c.hidden_ratio;
  for (std::size_t i = 0; i < c.layers; ++i) {
    auto lf = f.scope("layers", i);
    XcitLayer<T> l;
    l.norm1 = make_layer_norm(lf.scope("norm1"), c.dim);
    l.attn = make_xca(lf.scope("attn"), c.dim, c.heads);
    l.gamma1 = lf.parameter("gamma1", {c.dim}, Init::zeros);
    l.lpi = make_lpi(lf.scope("lpi"), c.dim);
    l.norm2 = make_layer_norm(lf.scope("norm2"), c.dim);
    l.ffn = make_ffn(lf.scope("mlp"), c.dim, hidden, Activation::gelu);
    l.gamma2 = lf.parameter("gamma2", {c.dim}, Init::zeros);
    e.layers.push_back(std::move(l));
  }
  e.cls_token = f.parameter("cls_token", {1, 1, c.dim}, Init::trunc_normal);
  for (std::size_t i = 0; i < c.class_layers; ++i)
    e.class_blocks.push_back(
        make_class_attention(f.scope("class_blocks", i), c.dim, c.heads, hidden));
  e.norm = make_layer_norm(f.scope("norm"), c.dim);
  return e;
}

// ---- dispatch ---------------------------------------------------------------

template <typename T>
Tensor<T> ImageEncoder<T>::encode(const Tensor<T>& images, bool training) const {
  const bool single = images.rank() == 3;
  auto batched = single ? ops::reshape(images, {1, images.dim(0), images.dim(1),
                                                images.dim(2)})
                        : images;
  check_image_geometry(config_, batched.shape());
  auto out = std::visit(
      [&](const auto& enc) { return enc.encode(batched, training); }, impl_);
  return single ? ops::reshape(out, {out.dim(1)}) : out;
}

template <typename T>
ImageEncoder<T> make_image_encoder(ParamFactory<T> f,
                                   const ImageEncoderConfig& config) {
  config.validate();
  if (const auto* v = std::get_if<VitConfig>(&config.arch))
    return {config, make_vit(f, *v, config.channels)};
  if (const auto* m = std::get_if<MobileVitConfig>(&config.arch))
    return {config, make_mobilevit(f, *m, config.channels)};
  return {config, make_xcit(f, std::get<XcitConfig>(config.arch), config.channels)};
}

#define LIT4_INSTANTIATE_IMAGE(T)                                              \
  template struct VitEncoder<T>;                                               \
  template struct InvertedResidual<T>;                                         \
  template struct MobileVitEncoder<T>;                                         \
  template struct XcitLayer<T>;                                                \
  template struct XcitEncoder<T>;                                              \
  template class ImageEncoder<T>;                                              \
  template InvertedResidual<T> make_inverted_residual(                         \
      ParamFactory<T>, std::size_t, std::size_t, std::size_t, std::size_t);    \
  template ImageEncoder<T> make_image_encoder(ParamFactory<T>,                 \
                                              const ImageEncoderConfig&);

LIT4_INSTANTIATE_IMAGE(float)
LIT4_INSTANTIATE_IMAGE(double)

#undef LIT4_INSTANTIATE_IMAGE

}  // namespace lit4
