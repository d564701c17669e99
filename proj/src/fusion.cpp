#include "lit4/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "lit4/error.hpp"

namespace lit4 {

template <typename T>
FusionParams<T> make_fusion(ParamFactory<T> f, const FusionConfig& config) {
  config.validate();
  return {make_linear(f.scope("text_proj"), config.text_dim, config.dim),
          make_linear(f.scope("image_proj"), config.image_dim, config.dim),
          config.activation};
}

template <typename T>
Tensor<T> fuse(const Tensor<T>& text, const Tensor<T>& image,
               const FusionParams<T>& p) {
  const std::size_t dt = p.text_proj.in_features();
  const std::size_t dv = p.image_proj.in_features();
  if (text.shape().back() != dt)
    throw ConfigError("fuse: text feature has width " +
                      std::to_string(text.shape().back()) + ", fusion.text_dim is " +
                      std::to_string(dt));
  if (image.shape().back() != dv)
    throw ConfigError("fuse: image feature has width " +
                      std::to_string(image.shape().back()) +
                      ", fusion.image_dim is " + std::to_string(dv));
  return ops::mul(ops::activate(p.text_proj(text), p.act),
                  ops::activate(p.image_proj(image), p.act));
}

template <typename T>
HeadParams<T> make_head(ParamFactory<T> f, std::size_t fused_dim,
                        const HeadConfig& config) {
  config.validate();
  return {make_linear(f.scope("fc1"), fused_dim, config.hidden),
          make_linear(f.scope("fc2"), config.hidden, config.answers),
          config.activation, config.dropout};
}

template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const HeadParams<T>& p,
                   const ForwardMode& mode) {
  auto h = ops::activate(p.fc1(fused), p.act);
  h = ops::dropout(h, p.dropout, mode.training, mode.dropout_seed);
  return p.fc2(h);
}

std::vector<double> AnswerDistribution::probabilities() const {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

std::size_t AnswerDistribution::argmax() const {
  if (logits.empty()) throw ContractError("argmax of an empty distribution");
  return static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template <typename T>
std::vector<AnswerDistribution> to_distributions(const Tensor<T>& logits) {
  if (logits.rank() != 1 && logits.rank() != 2)
    throw DimensionError("logits must be [n] or [b, n], got " +
                         to_string(logits.shape()));
  const std::size_t rows = logits.rank() == 1 ? 1 : logits.dim(0);
  const std::size_t n = logits.shape().back();
  std::vector<AnswerDistribution> out(rows);
  auto data = logits.data();
  for (std::size_t r = 0; r < rows; ++r)
    out[r].logits.assign(data.begin() + r * n, data.begin() + (r + 1) * n);
  return out;
}

#define LIT4_INSTANTIATE_FUSION(T)                                             \
  template FusionParams<T> make_fusion(ParamFactory<T>, const FusionConfig&);  \
  template Tensor<T> fuse(const Tensor<T>&, const Tensor<T>&,                  \
                          const FusionParams<T>&);                             \
  template HeadParams<T> make_head(ParamFactory<T>, std::size_t,               \
                                   const HeadConfig&);                         \
  template Tensor<T> classify(const Tensor<T>&, const HeadParams<T>&,          \
                              const ForwardMode&);                             \
  template std::vector<AnswerDistribution> to_distributions(const Tensor<T>&);

LIT4_INSTANTIATE_FUSION(float)
LIT4_INSTANTIATE_FUSION(double)

#undef LIT4_INSTANTIATE_FUSION

}  // namespace lit4
