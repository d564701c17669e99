#include "lit4/attention.hpp"

#include <cmath>

#include "lit4/error.hpp"

namespace lit4 {

namespace {

// Promotes [t, d] inputs to [1, t, d].
template <typename T>
Tensor<T> as_batched(const Tensor<T>& x, bool& squeezed) {
  squeezed = x.rank() == 2;
  if (squeezed) return ops::reshape(x, {1, x.dim(0), x.dim(1)});
  if (x.rank() != 3)
    throw DimensionError("expected tokens [t, d] or [b, t, d], got " +
                         to_string(x.shape()));
  return x;
}

template <typename T>
Tensor<T> restore_rank(const Tensor<T>& y, bool squeezed) {
  return squeezed ? ops::reshape(y, {y.dim(1), y.dim(2)}) : y;
}

// [b, t, d] -> [b, heads, t, d / heads]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  return ops::permute(ops::reshape(x, {b, t, heads, d / heads}), {0, 2, 1, 3});
}

// [b, heads, t, d_h] -> [b, t, heads * d_h]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), t = x.dim(2), dh = x.dim(3);
  return ops::reshape(ops::permute(x, {0, 2, 1, 3}), {b, t, h * dh});
}

void check_heads(std::size_t dim, std::size_t heads, const char* what) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError(std::string(what) + ": dim " + std::to_string(dim) +
                      " not divisible by heads " + std::to_string(heads));
}

}  // namespace

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k,
                            const KeyMask* mask) {
  if (q.rank() < 2 || k.rank() < 2 || q.shape().back() != k.shape().back())
    throw DimensionError("attention: query " + to_string(q.shape()) +
                         " and key " + to_string(k.shape()) +
                         " disagree on head dim");
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(q.shape().back()));
  auto scores = ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt);
  if (mask != nullptr) return ops::masked_softmax(scores, mask->valid);
  return ops::softmax(scores, scores.rank() - 1);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const KeyMask* mask) {
  if (k.shape() != v.shape())
    throw DimensionError("attention: key " + to_string(k.shape()) +
                         " and value " + to_string(v.shape()) + " differ");
  return ops::matmul(attention_weights(q, k, mask), v);
}

template <typename T>
AttentionParams<T> make_attention(ParamFactory<T> f, std::size_t dim,
                                  std::size_t heads) {
  check_heads(dim, heads, "attention");
  AttentionParams<T> p;
  p.q = make_linear(f.scope("q"), dim, dim);
  p.k = make_linear(f.scope("k"), dim, dim);
  p.v = make_linear(f.scope("v"), dim, dim);
  p.o = make_linear(f.scope("proj"), dim, dim);
  p.heads = heads;
  return p;
}

template <typename T>
Tensor<T> msa(const Tensor<T>& x, const AttentionParams<T>& p,
              const KeyMask* mask) {
  check_heads(p.dim(), p.heads, "msa");
  bool squeezed = false;
  const auto xb = as_batched(x, squeezed);
  if (xb.dim(2) != p.dim())
    throw DimensionError("msa: input " + to_string(x.shape()) +
                         " does not match dim " + std::to_string(p.dim()));
  auto q = split_heads(p.q(xb), p.heads);
  auto k = split_heads(p.k(xb), p.heads);
  auto v = split_heads(p.v(xb), p.heads);
  auto y = p.o(merge_heads(attention(q, k, v, mask)));
  return restore_rank(y, squeezed);
}

template <typename T>
XcaParams<T> make_xca(ParamFactory<T> f, std::size_t dim, std::size_t heads) {
  check_heads(dim, heads, "xca");
  XcaParams<T> p;
  p.q = make_linear(f.scope("q"), dim, dim);
  p.k = make_linear(f.scope("k"), dim, dim);
  p.v = make_linear(f.scope("v"), dim, dim);
  p.o = make_linear(f.scope("proj"), dim, dim);
  p.temperature = f.parameter("temperature", {heads}, Init::ones);
  p.heads = heads;
  return p;
}

namespace {

template <typename T>
Tensor<T> channel_weights(const Tensor<T>& q, const Tensor<T>& k,
                          const Tensor<T>& temperature) {
  // q, k: [b, heads, t, d_h]; normalize each channel over the token axis.
  constexpr T kEps = T(1e-12);
  auto qn = ops::l2_normalize(q, 2, kEps);
  auto kn = ops::l2_normalize(k, 2, kEps);
  auto tau = ops::reshape(temperature, {1, temperature.numel(), 1, 1});
  auto scores = ops::div(ops::matmul(ops::transpose(kn), qn), tau);
  return ops::softmax(scores, 2);
}

template <typename T>
void check_xca(const XcaParams<T>& p) {
  check_heads(p.dim(), p.heads, "xca");
  if (p.temperature.shape() != Shape{p.heads})
    throw DimensionError("xca: temperature shape " +
                         to_string(p.temperature.shape()) + " for " +
                         std::to_string(p.heads) + " heads");
  for (auto tau : p.temperature.data())
    if (tau == T(0) || !std::isfinite(tau))
      throw ParameterError("xca: temperature must be finite and non-zero");
}

}  // namespace

template <typename T>
Tensor<T> xca_weights(const Tensor<T>& x, const XcaParams<T>& p) {
  check_xca(p);
  bool squeezed = false;
  const auto xb = as_batched(x, squeezed);
  return channel_weights(split_heads(p.q(xb), p.heads),
                         split_heads(p.k(xb), p.heads), p.temperature);
}

template <typename T>
Tensor<T> xca(const Tensor<T>& x, const XcaParams<T>& p) {
  check_xca(p);
  bool squeezed = false;
  const auto xb = as_batched(x, squeezed);
  if (xb.dim(2) != p.dim())
    throw DimensionError("xca: input " + to_string(x.shape()) +
                         " does not match dim " + std::to_string(p.dim()));
  auto q = split_heads(p.q(xb), p.heads);
  auto k = split_heads(p.k(xb), p.heads);
  auto v = split_heads(p.v(xb), p.heads);
  auto mixed = ops::matmul(v, channel_weights(q, k, p.temperature));
  return restore_rank(p.o(merge_heads(mixed)), squeezed);
}

template <typename T>
BlockParams<T> make_block(ParamFactory<T> f, std::size_t dim, std::size_t heads,
                          std::size_t hidden, Activation act) {
  return {make_layer_norm(f.scope("norm1"), dim),
          make_attention(f.scope("attn"), dim, heads),
          make_layer_norm(f.scope("norm2"), dim),
          make_ffn(f.scope("mlp"), dim, hidden, act)};
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const BlockParams<T>& p,
                            const KeyMask* mask) {
  auto h = ops::add(x, msa(p.norm1(x), p.attn, mask));
  return ops::add(h, p.ffn(p.norm2(h)));
}

template <typename T>
Tensor<T> unfold(const Tensor<T>& x, std::size_t ph, std::size_t pw) {
  if (x.rank() != 4)
    throw DimensionError("unfold: expected [b, c, h, w], got " +
                         to_string(x.shape()));
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0)
    throw DimensionError("unfold: " + std::to_string(h) + "x" +
                         std::to_string(w) + " not divisible by patch " +
                         std::to_string(ph) + "x" + std::to_string(pw));
  const std::size_t nh = h / ph, nw = w / pw;
  const std::size_t pix = ph * pw, patches = nh * nw;
  std::vector<std::size_t> map(x.numel());
  std::size_t i = 0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t py = 0; py < ph; ++py)
      for (std::size_t px = 0; px < pw; ++px)
        for (std::size_t iy = 0; iy < nh; ++iy)
          for (std::size_t ix = 0; ix < nw; ++ix)
            for (std::size_t ch = 0; ch < c; ++ch)
              map[i++] = ((n * c + ch) * h + iy * ph + py) * w + ix * pw + px;
  return ops::gather(x, {b, pix, patches, c}, std::move(map));
}

template <typename T>
Tensor<T> fold(const Tensor<T>& tokens, std::size_t ph, std::size_t pw,
               std::size_t h, std::size_t w) {
  if (tokens.rank() != 4 || ph == 0 || pw == 0 || h % ph != 0 ||
      w % pw != 0 || tokens.dim(1) != ph * pw ||
      tokens.dim(2) != (h / ph) * (w / pw))
    throw DimensionError("fold: tokens " + to_string(tokens.shape()) +
                         " do not tile " + std::to_string(h) + "x" +
                         std::to_string(w) + " with patch " +
                         std::to_string(ph) + "x" + std::to_string(pw));
  const std::size_t b = tokens.dim(0), c = tokens.dim(3);
  const std::size_t nw = w / pw;
  const std::size_t pix = ph * pw, patches = tokens.dim(2);
  std::vector<std::size_t> map(tokens.numel());
  std::size_t i = 0;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const std::size_t p = (y % ph) * pw + xx % pw;
          const std::size_t patch = (y / ph) * nw + xx / pw;
          map[i++] = ((n * pix + p) * patches + patch) * c + ch;
        }
  return ops::gather(tokens, {b, c, h, w}, std::move(map));
}

template <typename T>
MobileVitBlockParams<T> make_mobilevit_block(ParamFactory<T> f,
                                             const MobileVitBlockShape& s) {
  MobileVitBlockParams<T> p;
  p.local = make_conv_bn(f.scope("conv_local"), s.channels, s.channels,
                         s.kernel, 1, 1, Activation::silu);
  p.project = make_conv(f.scope("conv_project"), s.channels, s.dim, 1, 1, 1,
                        false);
  for (std::size_t i = 0; i < s.depth; ++i)
    p.blocks.push_back(make_block(f.scope("blocks", i), s.dim, s.heads,
                                  s.ffn_hidden, Activation::silu));
  p.norm = make_layer_norm(f.scope("norm"), s.dim);
  p.restore = make_conv_bn(f.scope("conv_restore"), s.dim, s.channels, 1, 1, 1,
                           Activation::silu);
  p.fuse = make_conv_bn(f.scope("conv_fuse"), 2 * s.channels, s.channels,
                        s.kernel, 1, 1, Activation::silu);
  p.patch_h = p.patch_w = s.patch;
  return p;
}

template <typename T>
Tensor<T> mobilevit_block(const Tensor<T>& x, const MobileVitBlockParams<T>& p,
                          bool training) {
  if (x.rank() != 4)
    throw DimensionError("mobilevit_block: expected [b, c, h, w], got " +
                         to_string(x.shape()));
  const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  auto local = p.project(p.local(x, training));
  const std::size_t d = local.dim(1);
  auto tokens = unfold(local, p.patch_h, p.patch_w);
  const std::size_t pix = tokens.dim(1), patches = tokens.dim(2);
  auto seq = ops::reshape(tokens, {b * pix, patches, d});
  for (const auto& blk : p.blocks) seq = transformer_block(seq, blk);
  seq = p.norm(seq);
  auto global = fold(ops::reshape(seq, {b, pix, patches, d}), p.patch_h,
                     p.patch_w, h, w);
  auto restored = p.restore(global, training);
  return p.fuse(ops::concat<T>({x, restored}, 1), training);
}

template <typename T>
LpiParams<T> make_lpi(ParamFactory<T> f, std::size_t dim) {
  LpiParams<T> p;
  p.norm = make_layer_norm(f.scope("norm"), dim);
  p.conv1 = make_conv(f.scope("conv1"), dim, dim, 3, 1, dim, true);
  p.bn = make_batch_norm(f.scope("bn"), dim);
  p.conv2 = make_conv(f.scope("conv2"), dim, dim, 3, 1, dim, true);
  p.gamma = f.parameter("gamma", {dim}, Init::zeros);
  return p;
}

template <typename T>
Tensor<T> lpi_block(const Tensor<T>& x, const LpiParams<T>& p, std::size_t h,
                    std::size_t w, bool training) {
  bool squeezed = false;
  const auto xb = as_batched(x, squeezed);
  const std::size_t b = xb.dim(0), t = xb.dim(1), d = xb.dim(2);
  if (h * w != t)
    throw DimensionError("lpi_block: " + std::to_string(t) +
                         " tokens do not form a " + std::to_string(h) + "x" +
                         std::to_string(w) + " grid");
  auto grid = ops::permute(ops::reshape(p.norm(xb), {b, h, w, d}), {0, 3, 1, 2});
  auto branch = p.conv2(p.bn(ops::activate(p.conv1(grid), p.act), training));
  auto back = ops::reshape(ops::permute(branch, {0, 2, 3, 1}), {b, t, d});
  return restore_rank(ops::add(xb, ops::mul(back, p.gamma)), squeezed);
}

template <typename T>
Tensor<T> lpi_block(const Tensor<T>& x, const LpiParams<T>& p, bool training) {
  const std::size_t t = x.rank() >= 2 ? x.dim(x.rank() - 2) : 0;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(t))));
  if (side * side != t)
    throw DimensionError("lpi_block: " + std::to_string(t) +
                         " tokens are not a square grid");
  return lpi_block(x, p, side, side, training);
}

template <typename T>
ClassAttentionParams<T> make_class_attention(ParamFactory<T> f, std::size_t dim,
                                             std::size_t heads,
                                             std::size_t hidden) {
  ClassAttentionParams<T> p;
  p.norm1 = make_layer_norm(f.scope("norm1"), dim);
  p.attn = make_attention(f.scope("attn"), dim, heads);
  p.gamma1 = f.parameter("gamma1", {dim}, Init::zeros);
  p.norm2 = make_layer_norm(f.scope("norm2"), dim);
  p.ffn = make_ffn(f.scope("mlp"), dim, hidden, Activation::gelu);
  p.gamma2 = f.parameter("gamma2", {dim}, Init::zeros);
  return p;
}

template <typename T>
Tensor<T> class_attention_block(const Tensor<T>& x,
                                const ClassAttentionParams<T>& p) {
  if (x.rank() != 3 || x.dim(1) < 1)
    throw DimensionError("class_attention_block: expected [b, 1 + n, d], got " +
                         to_string(x.shape()));
  const std::size_t n = x.dim(1) - 1;
  const auto xn = p.norm1(x);
  auto q = split_heads(p.attn.q(ops::slice(xn, 1, 0, 1)), p.attn.heads);
  auto k = split_heads(p.attn.k(xn), p.attn.heads);
  auto v = split_heads(p.attn.v(xn), p.attn.heads);
  auto attended = p.attn.o(merge_heads(attention(q, k, v)));
  auto cls = ops::add(ops::slice(x, 1, 0, 1), ops::mul(attended, p.gamma1));
  cls = ops::add(cls, ops::mul(p.ffn(p.norm2(cls)), p.gamma2));
  if (n == 0) return cls;
  return ops::concat<T>({cls, ops::slice(x, 1, 1, n)}, 1);
}

#define LIT4_INSTANTIATE_ATTENTION(T)                                          \
  template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&,     \
                                       const KeyMask*);                        \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, const KeyMask*);              \
  template AttentionParams<T> make_attention(ParamFactory<T>, std::size_t,     \
                                             std::size_t);                     \
  template Tensor<T> msa(const Tensor<T>&, const AttentionParams<T>&,          \
                         const KeyMask*);                                      \
  template XcaParams<T> make_xca(ParamFactory<T>, std::size_t, std::size_t);   \
  template Tensor<T> xca_weights(const Tensor<T>&, const XcaParams<T>&);       \
  template Tensor<T> xca(const Tensor<T>&, const XcaParams<T>&);               \
  template BlockParams<T> make_block(ParamFactory<T>, std::size_t,             \
                                     std::size_t, std::size_t, Activation);    \
  template Tensor<T> transformer_block(const Tensor<T>&,                       \
                                       const BlockParams<T>&, const KeyMask*); \
  template Tensor<T> unfold(const Tensor<T>&, std::size_t, std::size_t);       \
  template Tensor<T> fold(const Tensor<T>&, std::size_t, std::size_t,          \
                          std::size_t, std::size_t);                           \
  template MobileVitBlockParams<T> make_mobilevit_block(                       \
      ParamFactory<T>, const MobileVitBlockShape&);                            \
  template Tensor<T> mobilevit_block(const Tensor<T>&,                         \
                                     const MobileVitBlockParams<T>&, bool);    \
  template LpiParams<T> make_lpi(ParamFactory<T>, std::size_t);                \
  template Tensor<T> lpi_block(const Tensor<T>&, const LpiParams<T>&,          \
                               std::size_t, std::size_t, bool);                \
  template Tensor<T> lpi_block(const Tensor<T>&, const LpiParams<T>&, bool);   \
  template ClassAttentionParams<T> make_class_attention(                       \
      ParamFactory<T>, std::size_t, std::size_t, std::size_t);                 \
  template Tensor<T> class_attention_block(const Tensor<T>&,                   \
                                           const ClassAttentionParams<T>&);

LIT4_INSTANTIATE_ATTENTION(float)
LIT4_INSTANTIATE_ATTENTION(double)

#undef LIT4_INSTANTIATE_ATTENTION

}  // namespace lit4
