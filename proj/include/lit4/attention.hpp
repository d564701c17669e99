#pragma once

#include <cstdint>
#include <vector>

#include "lit4/layers.hpp"

namespace lit4 {

/// Valid-key flags for masked attention: valid[b * keys + j] != 0 when key j
/// of batch item b may be attended to.
struct KeyMask {
  std::size_t batch = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> valid;
};

// ---- scaled dot-product attention ----------------------------------------

/// Row-stochastic weights softmax(q k^T / sqrt(d_h)) for q[..., tq, d_h] and
/// k[..., tk, d_h].
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k,
                            const KeyMask* mask = nullptr);

/// softmax(q k^T / sqrt(d_h)) v
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const KeyMask* mask = nullptr);

template <typename T>
struct AttentionParams {
  Linear<T> q, k, v, o;  // each d x d
  std::size_t heads = 1;

  std::size_t dim() const { return q.in_features(); }
  std::size_t head_dim() const { return dim() / heads; }
};

template <typename T>
AttentionParams<T> make_attention(ParamFactory<T> f, std::size_t dim,
                                  std::size_t heads);

/// Multi-head self-attention on x[t, d] or x[b, t, d].
template <typename T>
Tensor<T> msa(const Tensor<T>& x, const AttentionParams<T>& p,
              const KeyMask* mask = nullptr);

// ---- cross-covariance attention ------------------------------------------

template <typename T>
struct XcaParams {
  Linear<T> q, k, v, o;
  Tensor<T> temperature;  // [heads], one learnable scalar per head
  std::size_t heads = 1;

  std::size_t dim() const { return q.in_features(); }
  std::size_t head_dim() const { return dim() / heads; }
};

template <typename T>
XcaParams<T> make_xca(ParamFactory<T> f, std::size_t dim, std::size_t heads);

/// Per-head channel attention matrices softmax(K^T Q / tau) of shape
/// [b, heads, d_h, d_h], where K and Q are L2-normalized along the token
/// axis. The softmax runs over the key-channel axis (axis 2), so every
/// column sums to one.
template <typename T>
Tensor<T> xca_weights(const Tensor<T>& x, const XcaParams<T>& p);

/// Cross-covariance attention on x[t, d] or x[b, t, d]: per head
/// V * softmax(K^T Q / tau), heads concatenated, then the output projection.
template <typename T>
Tensor<T> xca(const Tensor<T>& x, const XcaParams<T>& p);

// ---- transformer block ---------------------------------------------------

template <typename T>
struct BlockParams {
  LayerNorm<T> norm1;
  AttentionParams<T> attn;
  LayerNorm<T> norm2;
  FeedForward<T> ffn;
};

template <typename T>
BlockParams<T> make_block(ParamFactory<T> f, std::size_t dim, std::size_t heads,
                          std::size_t hidden, Activation act);

/// Pre-norm residual block: x + MSA(LN(x)), then + FFN(LN(.)).
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const BlockParams<T>& p,
                            const KeyMask* mask = nullptr);

// ---- MobileViT unfold / fold ----------------------------------------------

/// x[b, c, h, w] -> [b, ph*pw, (h/ph)*(w/pw), c]. Axis 1 indexes the pixel
/// position inside a patch, axis 2 the patch. Pure reindexing.
template <typename T>
Tensor<T> unfold(const Tensor<T>& x, std::size_t ph, std::size_t pw);

/// Exact inverse of unfold.
template <typename T>
Tensor<T> fold(const Tensor<T>& tokens, std::size_t ph, std::size_t pw,
               std::size_t h, std::size_t w);

template <typename T>
struct MobileVitBlockParams {
  ConvBnAct<T> local;      // n x n, c -> c
  Conv2d<T> project;       // 1 x 1, c -> d, no bias
  std::vector<BlockParams<T>> blocks;
  LayerNorm<T> norm;
  ConvBnAct<T> restore;    // 1 x 1, d -> c
  ConvBnAct<T> fuse;       // n x n, 2c -> c
  std::size_t patch_h = 2;
  std::size_t patch_w = 2;
};

struct MobileVitBlockShape {
  std::size_t channels;
  std::size_t dim;
  std::size_t depth;
  std::size_t heads;
  std::size_t ffn_hidden;
  std::size_t patch = 2;
  std::size_t kernel = 3;
};

template <typename T>
MobileVitBlockParams<T> make_mobilevit_block(ParamFactory<T> f,
                                             const MobileVitBlockShape& s);

/// Local conv -> pointwise to d -> unfold -> transformer blocks over patches
/// for each in-patch pixel position -> norm -> fold -> pointwise back to c
/// -> concat with input -> n x n fusion conv.
template <typename T>
Tensor<T> mobilevit_block(const Tensor<T>& x, const MobileVitBlockParams<T>& p,
                          bool training);

// ---- local patch interaction ---------------------------------------------

template <typename T>
struct LpiParams {
  LayerNorm<T> norm;
  Conv2d<T> conv1;  // depthwise 3 x 3 with bias
  BatchNorm<T> bn;
  Conv2d<T> conv2;  // depthwise 3 x 3 with bias
  Tensor<T> gamma;  // [d] residual-branch scale
  Activation act = Activation::gelu;
};

template <typename T>
LpiParams<T> make_lpi(ParamFactory<T> f, std::size_t dim);

/// x + gamma * conv2(bn(act(conv1(LN(x))))) with the convolutions running
/// over the h x w token grid of x[b, h*w, d].
template <typename T>
Tensor<T> lpi_block(const Tensor<T>& x, const LpiParams<T>& p, std::size_t h,
                    std::size_t w, bool training);

/// Same, for a square grid inferred from the token count.
template <typename T>
Tensor<T> lpi_block(const Tensor<T>& x, const LpiParams<T>& p, bool training);

// ---- class attention ---------------------------------------------------

/// Class-attention block: only the class token (position 0) is updated.
/// Its query attends over all tokens, class token included; the patch
/// tokens pass through unchanged.
template <typename T>
struct ClassAttentionParams {
  LayerNorm<T> norm1;
  AttentionParams<T> attn;
  Tensor<T> gamma1;  // [d]
  LayerNorm<T> norm2;
  FeedForward<T> ffn;
  Tensor<T> gamma2;  // [d]
};

template <typename T>
ClassAttentionParams<T> make_class_attention(ParamFactory<T> f, std::size_t dim,
                                             std::size_t heads,
                                             std::size_t hidden);

/// x[b, 1 + n, d] -> same shape.
template <typename T>
Tensor<T> class_attention_block(const Tensor<T>& x,
                                const ClassAttentionParams<T>& p);

}  // namespace lit4
