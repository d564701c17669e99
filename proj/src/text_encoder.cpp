#include "lit4/text_encoder.hpp"

#include <cctype>
#include <fstream>

#include "lit4/error.hpp"

namespace lit4 {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3)
    throw InputError("vocabulary needs at least the PAD, CLS and UNK entries");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second)
      throw InputError("vocabulary: duplicate token '" + tokens_[i] +
                       "' at line " + std::to_string(i + 1));
  }
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::int32_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

TokenSequence tokenize(std::string_view question, const Vocab& vocab,
                       std::size_t max_len) {
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  TokenSequence seq;
  seq.ids.assign(max_len, Vocab::kPad);
  seq.ids[0] = Vocab::kCls;
  std::size_t pos = 1;
  for (const auto& w : split_words(question)) {
    if (pos == max_len) break;
    seq.ids[pos++] = vocab.id(w);
  }
  return seq;
}

TokenBatch TokenBatch::stack(const std::vector<TokenSequence>& sequences) {
  TokenBatch b;
  b.batch = sequences.size();
  if (b.batch == 0) throw InputError("empty token batch");
  b.length = sequences.front().ids.size();
  for (const auto& s : sequences) {
    if (s.ids.size() != b.length)
      throw DimensionError("token sequences have different lengths");
    b.ids.insert(b.ids.end(), s.ids.begin(), s.ids.end());
  }
  return b;
}

KeyMask TokenBatch::key_mask() const {
  KeyMask m{batch, length, {}};
  m.valid.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    m.valid[i] = ids[i] != Vocab::kPad;
  return m;
}

template <typename T>
Tensor<T> TextEncoder<T>::encode(const TokenBatch& tokens) const {
  if (tokens.length == 0 || tokens.length > config.max_len)
    throw DimensionError("token sequence length " +
                         std::to_string(tokens.length) + " outside [1, " +
                         std::to_string(config.max_len) + "]");
  const std::size_t d = config.dim;
  auto x = ops::embedding(token_embedding, tokens.ids,
                          {tokens.batch, tokens.length});
  x = ops::add(x, ops::slice(position_embedding, 0, 0, tokens.length));
  const KeyMask mask = tokens.key_mask();
  for (const auto& block : blocks) x = transformer_block(x, block, &mask);
  x = norm(ops::slice(x, 1, 0, 1));
  return ops::reshape(x, {tokens.batch, d});
}

template <typename T>
Tensor<T> TextEncoder<T>::encode(const TokenSequence& seq) const {
  auto out = encode(TokenBatch::stack({seq}));
  return ops::reshape(out, {config.dim});
}

template <typename T>
TextEncoder<T> make_text_encoder(ParamFactory<T> f,
                                 const TextEncoderConfig& config) {
  config.validate();
  TextEncoder<T> enc;
  enc.config = config;
  const std::size_t d = config.dim;
  enc.token_embedding = f.parameter("token_embedding", {config.vocab_size, d},
                                    Init::trunc_normal);
  enc.position_embedding = f.parameter("position_embedding",
                                       {config.max_len, d}, Init::trunc_normal);
  for (std::size_t i = 0; i < config.layers; ++i)
    enc.blocks.push_back(make_block(f.scope("blocks", i), d, config.heads,
                                    d * config.hidden_ratio, Activation::gelu));
  enc.norm = make_layer_norm(f.scope("norm"), d);
  return enc;
}

template struct TextEncoder<float>;
template struct TextEncoder<double>;
template TextEncoder<float> make_text_encoder(ParamFactory<float>,
                                              const TextEncoderConfig&);
template TextEncoder<double> make_text_encoder(ParamFactory<double>,
                                               const TextEncoderConfig&);

}  // namespace lit4
