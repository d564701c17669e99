#include <doctest.h>

#include <filesystem>

#include "lit4/error.hpp"
#include "lit4/text_encoder.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lit4;
using oracle::Vec;
namespace O = lit4::ops;

namespace {

Vocab small_vocab() {
  return Vocab({"[PAD]", "[CLS]", "[UNK]", "a", "b", "is", "water", "present"});
}

TextEncoderConfig small_config() {
  TextEncoderConfig c;
  c.vocab_size = 8;
  c.max_len = 8;
  c.layers = 2;
  c.heads = 2;
  c.dim = 16;
  c.hidden_ratio = 2;
  return c;
}

}  // namespace

TEST_CASE("split_words lowercases and isolates punctuation") {
  CHECK(split_words("Is  WATER present?") ==
        std::vector<std::string>{"is", "water", "present", "?"});
  CHECK(split_words("") .empty());
  CHECK(split_words("a,b") == std::vector<std::string>{"a", ",", "b"});
}

TEST_CASE("tokenize examples") {
  const auto v = small_vocab();
  REQUIRE(v.id("is") == 5);
  SUBCASE("empty question") {
    const auto s = tokenize("", v, 6);
    CHECK(s.ids == std::vector<std::int32_t>{1, 0, 0, 0, 0, 0});
  }
  SUBCASE("direct lookup") {
    const auto s = tokenize("is water present", v, 6);
    CHECK(s.ids == std::vector<std::int32_t>{1, 5, 6, 7, 0, 0});
  }
  SUBCASE("out-of-vocabulary word becomes UNK") {
    const auto s = tokenize("is xylophone present", v, 6);
    CHECK(s.ids[2] == Vocab::kUnk);
  }
  SUBCASE("long questions are truncated to max_len") {
    const auto s = tokenize("a b a b a b a b a b", v, 4);
    CHECK(s.ids == std::vector<std::int32_t>{1, 3, 4, 3});
  }
}

TEST_CASE("vocab rejects duplicates and round-trips through a file") {
  CHECK_THROWS_AS(Vocab({"[PAD]", "[CLS]", "[UNK]", "x", "x"}), InputError);
  const auto path = std::filesystem::temp_directory_path() / "lit4_vocab_test.txt";
  small_vocab().save(path);
  const auto back = Vocab::load(path);
  CHECK(back.tokens() == small_vocab().tokens());
  CHECK(back.token(6) == "water");
  std::filesystem::remove(path);
}

TEST_CASE("token batch key mask marks padding") {
  const auto v = small_vocab();
  const auto b = TokenBatch::stack({tokenize("is water", v, 5), tokenize("", v, 5)});
  CHECK(b.batch == 2);
  CHECK(b.length == 5);
  const auto m = b.key_mask();
  CHECK(m.valid == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1, 0, 0, 0, 0});
}

TEST_CASE("text encoder output is invariant to the PAD tail") {
  ParamStore<double> store;
  CounterRng rng(1);
  auto enc = make_text_encoder(ParamFactory<double>(store, rng, "text"), small_config());
  testutil::randomize(store, 2, 0.5);
  const auto v = small_vocab();
  for (const char* q : {"is water present", "a", "", "b b a water"}) {
    const auto full = tokenize(q, v, 8);
    // Same question with fewer padding slots (the sequence is shortened).
    const auto words = split_words(q).size();
    TokenBatch shorter{1, words + 1, {}};
    shorter.ids.assign(full.ids.begin(), full.ids.begin() + static_cast<long>(words + 1));
    const auto a = oracle::values(enc.encode(full));
    const auto b = oracle::values(enc.encode(shorter));
    REQUIRE(a.size() == 16);
    CHECK(oracle::max_abs_diff(a, b) <= 1e-6);
    // Batched next to a longer question.
    const auto batch = TokenBatch::stack({full, tokenize("a b a b a b a", v, 8)});
    const auto ab = oracle::values(enc.encode(batch));
    CHECK(oracle::max_abs_diff(Vec(ab.begin(), ab.begin() + 16), a) <= 1e-12);
  }
}

TEST_CASE("zero layers: output is the normalized CLS plus position embedding") {
  auto cfg = small_config();
  cfg.layers = 0;
  ParamStore<double> store;
  CounterRng rng(3);
  auto enc = make_text_encoder(ParamFactory<double>(store, rng, "text"), cfg);
  testutil::randomize(store, 4, 0.5);
  const auto out = enc.encode(tokenize("is water", small_vocab(), 8));
  const auto cls = O::slice(O::reshape(enc.token_embedding, {8, 16}), 0, Vocab::kCls, 1);
  const auto pos = O::slice(enc.position_embedding, 0, 0, 1);
  const auto want = O::reshape(enc.norm(O::add(cls, pos)), {16});
  CHECK(oracle::max_abs_diff(oracle::values(out), oracle::values(want)) < 1e-14);
}

TEST_CASE("text encoder parameter names and count") {
  ParamStore<float> store;
  CounterRng rng(5);
  (void)make_text_encoder(ParamFactory<float>(store, rng, "text"), small_config());
  CHECK(store.entries().front().name == "text.token_embedding");
  CHECK(store.find("text.blocks.1.attn.q.weight") != nullptr);
  CHECK(store.find("text.norm.weight") != nullptr);
  // Closed form: embeddings + L * (2 LN + 4 dxd linear + FFN) + final LN.
  const std::size_t d = 16, h = 32, L = 2;
  const std::size_t block = 2 * 2 * d + 4 * (d * d + d) + (d * h + h) + (h * d + d);
  CHECK(store.parameter_count() == 8 * d + 8 * d + L * block + 2 * d);
}

TEST_CASE("default text encoder has about 4.4 M parameters") {
  ParamStore<float> store;
  CounterRng rng(6);
  (void)make_text_encoder(ParamFactory<float>(store, rng, "text"), TextEncoderConfig{});
  const double n = static_cast<double>(store.parameter_count());
  CHECK(n == 4320000.0);
  CHECK(std::abs(n - 4.4e6) / 4.4e6 <= 0.10);
}

TEST_CASE("text encoder is deterministic for a fixed seed") {
  auto build = [] {
    auto store = std::make_unique<ParamStore<float>>();
    CounterRng rng(7);
    auto enc = make_text_encoder(ParamFactory<float>(*store, rng, "text"), small_config());
    return oracle::values(enc.encode(tokenize("is water present", small_vocab(), 8)));
  };
  CHECK(build() == build());
}

TEST_CASE("text encoder input errors") {
  ParamStore<float> store;
  CounterRng rng(8);
  auto enc = make_text_encoder(ParamFactory<float>(store, rng, "text"), small_config());
  CHECK_THROWS(enc.encode(TokenBatch{1, 9, std::vector<std::int32_t>(9, 1)}));
  CHECK_THROWS(enc.encode(TokenBatch{1, 2, {1, 99}}));
  auto bad = small_config();
  bad.dim = 15;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
