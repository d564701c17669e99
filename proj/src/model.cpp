#include "lit4/model.hpp"

#include "lit4/error.hpp"

namespace lit4 {

namespace {

ModelConfig validated(ModelConfig config) {
  config.validate();
  return config;
}

}  // namespace

template <typename T>
VqaModel<T>::VqaModel(const ModelConfig& config, std::uint64_t seed,
                      double init_std)
    : config_(validated(config)),
      rngs_{CounterRng(seed, 1), CounterRng(seed, 2), CounterRng(seed, 3),
            CounterRng(seed, 4)},
      store_(),
      text_(make_text_encoder(ParamFactory<T>(store_, rngs_[0], "text", init_std),
                              config_.text)),
      image_(make_image_encoder(ParamFactory<T>(store_, rngs_[1], "image", init_std),
                                config_.image)),
      fusion_(make_fusion(ParamFactory<T>(store_, rngs_[2], "fusion", init_std),
                          config_.fusion)),
      head_(make_head(ParamFactory<T>(store_, rngs_[3], "head", init_std),
                      config_.fusion.dim, config_.head)) {}

template <typename T>
Tensor<T> VqaModel<T>::forward(const Tensor<T>& images, const TokenBatch& tokens,
                               const ForwardMode& mode) const {
  if (images.rank() != 4 || images.dim(0) != tokens.batch)
    throw DimensionError("forward: " + std::to_string(tokens.batch) +
                         " questions for images " + to_string(images.shape()));
  auto t = text_.encode(tokens);
  auto v = image_.encode(images, mode.training);
  return classify(fuse(t, v, fusion_), head_, mode);
}

template <typename T>
Tensor<T> VqaModel<T>::forward(const Tensor<T>& image, const TokenSequence& tokens,
                               const ForwardMode& mode) const {
  if (image.rank() != 3)
    throw DimensionError("forward: expected one image [bands, h, w], got " +
                         to_string(image.shape()));
  auto batch = ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  auto logits = forward(batch, TokenBatch::stack({tokens}), mode);
  return ops::reshape(logits, {logits.dim(1)});
}

template class VqaModel<float>;
template class VqaModel<double>;

}  // namespace lit4
