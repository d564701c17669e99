#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lit4/attention.hpp"
#include "lit4/config.hpp"

namespace lit4 {

/// Token list where line i of the vocabulary file has id i. The first three
/// entries are reserved for padding, the leading CLS token and unknowns.
class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kCls = 1;
  static constexpr std::int32_t kUnk = 2;

  explicit Vocab(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::int32_t id(std::string_view token) const;  // kUnk when absent
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Lowercased words, with every punctuation character split off as its own
/// word.
std::vector<std::string> split_words(std::string_view text);

struct TokenSequence {
  std::vector<std::int32_t> ids;  // [CLS, w..., PAD...], length max_len
};

TokenSequence tokenize(std::string_view question, const Vocab& vocab,
                       std::size_t max_len);

/// Equal-length sequences stacked row-major: ids[b * length + i].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;

  static TokenBatch stack(const std::vector<TokenSequence>& sequences);
  KeyMask key_mask() const;
};

template <typename T>
struct TextEncoder {
  TextEncoderConfig config;
  Tensor<T> token_embedding;     // [vocab, d]
  Tensor<T> position_embedding;  // [max_len, d]
  std::vector<BlockParams<T>> blocks;
  LayerNorm<T> norm;

  /// Final CLS state for each sequence: [batch, d].
  Tensor<T> encode(const TokenBatch& tokens) const;
  /// Single sequence: [d].
  Tensor<T> encode(const TokenSequence& seq) const;
};

template <typename T>
TextEncoder<T> make_text_encoder(ParamFactory<T> f,
                                 const TextEncoderConfig& config);

extern template struct TextEncoder<float>;
extern template struct TextEncoder<double>;

}  // namespace lit4
